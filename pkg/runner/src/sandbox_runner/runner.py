"""Isolated execution of untrusted candidate programs.

Each request runs in a fresh scratch directory with its own process group,
an address-space cap, a CPU-time backstop, and network primitives stubbed
out via an injected sitecustomize module. The child never sees the caller's
environment or working tree, and the scratch directory is removed whether
or not the program behaves.
"""

from __future__ import annotations

import math
import os
import resource
import shutil
import signal
import subprocess
import sys
import tempfile
import time

from .normalize import normalize_output
from .protocol import (
    STATUS_MEMORY_EXCEEDED,
    STATUS_NO_OUTPUT,
    STATUS_OK,
    STATUS_RUNTIME_ERROR,
    STATUS_TIMEOUT,
    RunRequest,
    RunResult,
)

STDERR_EXCERPT_LIMIT = 2000
KILL_GRACE_SEC = 0.5

# Imported automatically by the interpreter at startup because the scratch
# directory is the only PYTHONPATH entry.
_SITECUSTOMIZE = '''\
"""Injected into every sandboxed program: refuse network access."""
import socket


def _deny(*args, **kwargs):
    raise OSError("network access is disabled in this sandbox")


socket.socket = _deny
socket.socketpair = _deny
socket.create_connection = _deny
socket.getaddrinfo = _deny
socket.gethostbyname = _deny
'''


def _child_env(workdir: str) -> dict[str, str]:
    env = {
        "HOME": workdir,
        "PYTHONPATH": workdir,
        "PYTHONHASHSEED": "0",
        "PYTHONDONTWRITEBYTECODE": "1",
        "PYTHONIOENCODING": "utf-8",
        "LANG": "C.UTF-8",
        "LC_ALL": "C.UTF-8",
    }
    path = os.environ.get("PATH")
    if path:
        env["PATH"] = path
    return env


def _limits_hook(memory_limit_bytes: int, cpu_limit_sec: int):
    def apply() -> None:
        resource.setrlimit(resource.RLIMIT_AS, (memory_limit_bytes, memory_limit_bytes))
        resource.setrlimit(resource.RLIMIT_CPU, (cpu_limit_sec, cpu_limit_sec + 1))

    return apply


def _kill_group(proc: subprocess.Popen) -> None:
    # start_new_session makes the child its own group leader, so this also
    # reaps anything the program forked.
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except ProcessLookupError:
        pass


def run(request: RunRequest) -> RunResult:
    workdir = tempfile.mkdtemp(prefix="sandbox-runner-")
    try:
        with open(os.path.join(workdir, "main.py"), "w", encoding="utf-8") as handle:
            handle.write(request.program_source)
        with open(os.path.join(workdir, "sitecustomize.py"), "w", encoding="utf-8") as handle:
            handle.write(_SITECUSTOMIZE)

        # The CPU rlimit is a backstop one second past the wall clock limit;
        # the wall clock timeout below is the primary enforcement.
        cpu_limit = math.ceil(request.time_limit_sec) + 1
        started = time.perf_counter()
        proc = subprocess.Popen(
            [sys.executable, "main.py"],
            cwd=workdir,
            env=_child_env(workdir),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            start_new_session=True,
            preexec_fn=_limits_hook(request.memory_limit_bytes, cpu_limit),
        )
        timed_out = False
        try:
            out_bytes, err_bytes = proc.communicate(
                request.input_text.encode("utf-8"), timeout=request.time_limit_sec
            )
        except subprocess.TimeoutExpired:
            timed_out = True
            _kill_group(proc)
            try:
                out_bytes, err_bytes = proc.communicate(timeout=KILL_GRACE_SEC)
            except subprocess.TimeoutExpired:
                out_bytes, err_bytes = b"", b""
        wall = time.perf_counter() - started

        stdout_text = out_bytes.decode("utf-8", errors="replace")
        stderr_text = err_bytes.decode("utf-8", errors="replace")
        normalized = normalize_output(stdout_text)

        if timed_out or proc.returncode == -signal.SIGXCPU:
            status = STATUS_TIMEOUT
        elif proc.returncode == 0:
            status = STATUS_OK if normalized else STATUS_NO_OUTPUT
        elif "MemoryError" in stderr_text or proc.returncode == -signal.SIGKILL:
            # An uncaught MemoryError under the address-space cap, or the
            # kernel killing the group outright.
            status = STATUS_MEMORY_EXCEEDED
        else:
            status = STATUS_RUNTIME_ERROR

        return RunResult(
            status=status,
            stdout_normalized=normalized if status == STATUS_OK else None,
            stderr_excerpt=stderr_text[-STDERR_EXCERPT_LIMIT:],
            wall_time_sec=wall,
        )
    finally:
        shutil.rmtree(workdir, ignore_errors=True)
