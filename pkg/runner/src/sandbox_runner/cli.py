"""Command line entry point.

Reads one request document from stdin, writes one result document to stdout.
Exit code 0 means the program was executed and classified, whatever the
classification; nonzero exits are reserved for faults of the runner itself.
"""

from __future__ import annotations

import sys

from .protocol import ProtocolError, decode_request, encode_result
from .runner import run

EXIT_OK = 0
EXIT_PROTOCOL = 2
EXIT_INTERNAL = 3


def main() -> int:
    raw = sys.stdin.read()
    try:
        request = decode_request(raw)
    except ProtocolError as exc:
        print(f"sandbox-runner: bad request: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    try:
        result = run(request)
    except Exception as exc:  # a runner fault, not a property of the program
        print(f"sandbox-runner: internal fault: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    sys.stdout.write(encode_result(result))
    sys.stdout.flush()
    return EXIT_OK


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
