"""Canonical form for program stdout.

Two programs whose output differs only in line endings, trailing spaces, or
trailing blank lines are considered to have produced the same answer. The
transform is idempotent: normalizing twice yields the same string.
"""

from __future__ import annotations


def normalize_output(raw: str) -> str:
    text = raw.replace("\r\n", "\n").replace("\r", "\n")
    lines = [line.rstrip() for line in text.split("\n")]
    while lines and lines[-1] == "":
        lines.pop()
    return "\n".join(lines)
