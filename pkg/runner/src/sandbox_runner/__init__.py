"""sandbox-runner: execute one untrusted program against one test input, bounded."""

__version__ = "0.1.0"
