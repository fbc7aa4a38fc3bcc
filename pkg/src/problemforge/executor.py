"""Fan solution×input executions across a bounded pool of runner subprocesses."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import shutil
import subprocess
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

logger = logging.getLogger(__name__)

DEFAULT_TIME_LIMIT_SEC = 10.0
DEFAULT_MEMORY_LIMIT_BYTES = 512 * 1024 * 1024
# extra slack on top of the runner's own timeout before we give up on the subprocess
RUNNER_HARD_TIMEOUT_SLACK = 10.0

_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


class ExecutorError(RuntimeError):
    """Runner pool misconfiguration."""


def extract_code(response: str) -> str | None:
    """Pull the program out of a model response.

    Last fenced code block wins; a fenceless response is accepted whole only if
    it compiles as Python. Returns None when no code can be found.
    """
    blocks = _FENCE_RE.findall(response)
    if blocks:
        code = blocks[-1].strip("\n")
        return code if code.strip() else None
    if not response.strip():
        return None
    try:
        compile(response, "<solution>", "exec")
    except SyntaxError:
        return None
    return response


@dataclass(frozen=True)
class ExecutionMatrix:
    """Outputs of M extracted programs on T inputs. None marks a failed cell."""

    problem_id: str
    inputs: tuple[str, ...]
    programs: tuple[str | None, ...]
    outputs: tuple[tuple[str | None, ...], ...]

    def __post_init__(self):
        if len(self.outputs) != len(self.programs):
            raise ValueError("output rows must match program count")
        for row in self.outputs:
            if len(row) != len(self.inputs):
                raise ValueError("output row length must match input count")

    @property
    def m(self) -> int:
        return len(self.programs)

    @property
    def t(self) -> int:
        return len(self.inputs)

    def column(self, t: int) -> tuple[str | None, ...]:
        return tuple(row[t] for row in self.outputs)

    def to_record(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "inputs": list(self.inputs),
            "programs": list(self.programs),
            "outputs": [list(row) for row in self.outputs],
        }

    @classmethod
    def from_record(cls, record: dict) -> "ExecutionMatrix":
        return cls(
            problem_id=record["problem_id"],
            inputs=tuple(record["inputs"]),
            programs=tuple(record["programs"]),
            outputs=tuple(tuple(row) for row in record["outputs"]),
        )


class RunnerPool:
    """Spawns one runner subprocess per cell, at most pool_size at a time.

    The runner speaks JSON over stdin/stdout and classifies every program
    failure itself; any runner-internal fault (nonzero exit, garbage output,
    hang past the hard deadline) is contained as an absent cell.
    """

    def __init__(
        self,
        command: list[str] | None = None,
        pool_size: int | None = None,
        time_limit_sec: float = DEFAULT_TIME_LIMIT_SEC,
        memory_limit_bytes: int = DEFAULT_MEMORY_LIMIT_BYTES,
    ):
        self.command = list(command) if command else ["sandbox-runner"]
        executable = self.command[0]
        if shutil.which(executable) is None and not Path(executable).exists():
            raise ExecutorError(f"runner executable not found: {executable}")
        self.pool_size = pool_size or os.cpu_count() or 1
        if self.pool_size < 1:
            raise ExecutorError(f"pool_size must be >= 1, got {self.pool_size}")
        self.time_limit_sec = time_limit_sec
        self.memory_limit_bytes = memory_limit_bytes
        self._limiter = threading.Semaphore(self.pool_size)
        self._gauge_lock = threading.Lock()
        self._running = 0
        self.max_running_seen = 0
        self._cache: dict[tuple, str | None] = {}
        self._cache_lock = threading.Lock()

    def _cache_key(self, program: str, input_text: str) -> tuple:
        return (
            hashlib.sha256(program.encode("utf-8")).hexdigest(),
            hashlib.sha256(input_text.encode("utf-8")).hexdigest(),
            self.time_limit_sec,
            self.memory_limit_bytes,
        )

    def run_cell(self, program: str, input_text: str) -> str | None:
        """Normalized stdout for an Ok run, None for any failure status."""
        key = self._cache_key(program, input_text)
        with self._cache_lock:
            if key in self._cache:
                return self._cache[key]

        result = self._spawn(program, input_text)
        with self._cache_lock:
            self._cache[key] = result
        return result

    def _spawn(self, program: str, input_text: str) -> str | None:
        request = json.dumps(
            {
                "program_source": program,
                "input_text": input_text,
                "time_limit_sec": self.time_limit_sec,
                "memory_limit_bytes": self.memory_limit_bytes,
            }
        )
        with self._limiter:
            with self._gauge_lock:
                self._running += 1
                self.max_running_seen = max(self.max_running_seen, self._running)
            try:
                proc = subprocess.run(
                    self.command,
                    input=request,
                    capture_output=True,
                    text=True,
                    timeout=self.time_limit_sec + RUNNER_HARD_TIMEOUT_SLACK,
                )
            except subprocess.TimeoutExpired:
                logger.error("runner hung past hard deadline; cell marked absent")
                return None
            except OSError as exc:
                logger.error("runner spawn failed: %s", exc)
                return None
            finally:
                with self._gauge_lock:
                    self._running -= 1

        if proc.returncode != 0:
            logger.error(
                "runner exited %d: %s", proc.returncode, proc.stderr.strip()[:200]
            )
            return None
        try:
            result = json.loads(proc.stdout)
        except json.JSONDecodeError:
            logger.error("runner produced unparseable output: %r", proc.stdout[:200])
            return None
        if result.get("status") == "ok":
            out = result.get("stdout_normalized")
            return out if isinstance(out, str) else None
        return None


def execute_matrix(
    problem_id: str,
    programs: list[str | None],
    inputs: list[str],
    pool: RunnerPool,
) -> ExecutionMatrix:
    """Resolve all M×T cells; aggregation is by index, never completion order."""
    if not programs:
        raise ValueError("at least one solution required")
    if not inputs:
        raise ValueError("at least one test input required")

    grid: list[list[str | None]] = [[None] * len(inputs) for _ in programs]
    cells = [
        (m, t)
        for m, program in enumerate(programs)
        if program is not None
        for t in range(len(inputs))
    ]

    def resolve(cell: tuple[int, int]) -> None:
        m, t = cell
        grid[m][t] = pool.run_cell(programs[m], inputs[t])

    if cells:
        with ThreadPoolExecutor(max_workers=pool.pool_size) as workers:
            list(workers.map(resolve, cells))

    return ExecutionMatrix(
        problem_id=problem_id,
        inputs=tuple(inputs),
        programs=tuple(programs),
        outputs=tuple(tuple(row) for row in grid),
    )


def fake_runner_command() -> list[str]:
    """Command for the scripted in-repo runner; keeps the primary test suite
    independent of the real sandbox runner."""
    return [sys.executable, "-m", "problemforge.testing.fake_runner"]
