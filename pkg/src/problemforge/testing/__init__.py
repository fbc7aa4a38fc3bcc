"""Test doubles shipped with the package so fixtures can spawn them as subprocesses."""
