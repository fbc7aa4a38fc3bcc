"""Difficulty estimation: majority voting over executed candidate solutions.

The disagreement score for a problem is
    delta = 1 - (1/T) * sum_t f_t / M
where f_t is how many of the M programs produced the column-t majority output.
Columns whose outputs are all absent contribute f_t = 0 (maximal disagreement);
pervasively broken problems are caught separately by the none-fraction filter.
"""

from __future__ import annotations

import hashlib
import logging
import re
from collections import Counter
from dataclasses import dataclass

from .executor import ExecutionMatrix, RunnerPool, execute_matrix, extract_code
from .gateway import DEFAULT_TEMPERATURE, CompletionRequest, Gateway, RoleTag
from .prompts import TEMPLATE_SOLUTION, TEMPLATE_TEST_INPUTS, render_template

logger = logging.getLogger(__name__)

DEFAULT_NUM_TESTS = 20
DEFAULT_NUM_SOLUTIONS = 8
DEFAULT_NONE_THRESHOLD = 0.5
TEST_INPUT_RETRIES = 3

_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class GeneratedProblem:
    problem_id: str
    prompt_id: str
    statement: str
    candidate_index: int

    @classmethod
    def create(cls, prompt_id: str, candidate_index: int, statement: str) -> "GeneratedProblem":
        if not statement.strip():
            raise ValueError("generated problem statement is empty")
        digest = hashlib.sha256(
            f"{prompt_id}\x00{candidate_index}\x00{statement}".encode("utf-8")
        ).hexdigest()[:16]
        return cls(
            problem_id=digest,
            prompt_id=prompt_id,
            statement=statement,
            candidate_index=candidate_index,
        )

    def to_record(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "prompt_id": self.prompt_id,
            "statement": self.statement,
            "candidate_index": self.candidate_index,
        }

    @classmethod
    def from_record(cls, record: dict) -> "GeneratedProblem":
        return cls(
            problem_id=record["problem_id"],
            prompt_id=record["prompt_id"],
            statement=record["statement"],
            candidate_index=record["candidate_index"],
        )


@dataclass(frozen=True)
class DifficultyReport:
    problem_id: str
    t: int
    m: int
    majority_outputs: tuple[str | None, ...]
    majority_counts: tuple[int, ...]
    none_fraction: float
    valid: bool
    delta: float
    reason: str | None = None

    def to_record(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "t": self.t,
            "m": self.m,
            "majority_outputs": list(self.majority_outputs),
            "majority_counts": list(self.majority_counts),
            "none_fraction": self.none_fraction,
            "valid": self.valid,
            "delta": self.delta,
            "reason": self.reason,
        }

    @classmethod
    def from_record(cls, record: dict) -> "DifficultyReport":
        return cls(
            problem_id=record["problem_id"],
            t=record["t"],
            m=record["m"],
            majority_outputs=tuple(record["majority_outputs"]),
            majority_counts=tuple(record["majority_counts"]),
            none_fraction=record["none_fraction"],
            valid=record["valid"],
            delta=record["delta"],
            reason=record.get("reason"),
        )


def parse_test_inputs(response: str) -> list[str]:
    """Each fenced block is one test input; duplicates are kept."""
    return [block.strip("\n") for block in _FENCE_RE.findall(response) if block.strip()]


def generate_test_inputs(
    problem: GeneratedProblem,
    gateway: Gateway,
    t: int = DEFAULT_NUM_TESTS,
    temperature: float = DEFAULT_TEMPERATURE,
    retries: int = TEST_INPUT_RETRIES,
) -> list[str]:
    """Up to `retries` extra prompts accumulate inputs until T are collected.

    Returns fewer than T (possibly zero) when the model keeps under-delivering;
    the caller decides usability.
    """
    if t < 1:
        raise ValueError(f"T must be >= 1, got {t}")
    prompt = render_template(TEMPLATE_TEST_INPUTS, count=str(t), statement=problem.statement)
    collected: list[str] = []
    for attempt in range(retries + 1):
        result = gateway.complete(
            CompletionRequest(
                role=RoleTag.TEST_INPUT_GEN,
                prompt_text=prompt,
                temperature=temperature,
                sample_index=attempt,
            )
        )
        if result.ok:
            collected.extend(parse_test_inputs(result.text))
        if len(collected) >= t:
            return collected[:t]
    if collected:
        logger.warning(
            "problem %s: only %d/%d test inputs after %d prompts",
            problem.problem_id, len(collected), t, retries + 1,
        )
    else:
        logger.warning("problem %s: no parseable test inputs", problem.problem_id)
    return collected


def generate_solutions(
    problem: GeneratedProblem,
    gateway: Gateway,
    m: int = DEFAULT_NUM_SOLUTIONS,
    temperature: float = DEFAULT_TEMPERATURE,
) -> list[str]:
    """M independent samples; a failed completion becomes an empty placeholder
    so row alignment survives."""
    if m < 2:
        raise ValueError(f"M must be >= 2, got {m}")
    prompt = render_template(TEMPLATE_SOLUTION, statement=problem.statement)
    requests = [
        CompletionRequest(
            role=RoleTag.SOLUTION_GEN,
            prompt_text=prompt,
            temperature=temperature,
            sample_index=i,
        )
        for i in range(m)
    ]
    return [result.text for result in gateway.complete_batch(requests)]


def majority_vote(
    matrix: ExecutionMatrix,
) -> tuple[tuple[str | None, ...], tuple[int, ...], float]:
    """Per-column plurality with lexicographic tie-break; absent cells never win
    but count toward none_fraction."""
    outputs: list[str | None] = []
    counts: list[int] = []
    absent = 0
    for t in range(matrix.t):
        column = matrix.column(t)
        present = [o for o in column if o is not None]
        absent += len(column) - len(present)
        if not present:
            outputs.append(None)
            counts.append(0)
            continue
        tally = Counter(present)
        best_count = max(tally.values())
        outputs.append(min(o for o, c in tally.items() if c == best_count))
        counts.append(best_count)
    none_fraction = absent / (matrix.m * matrix.t)
    return tuple(outputs), tuple(counts), none_fraction


def compute_delta(majority_counts: list[int] | tuple[int, ...], m: int, t_effective: int) -> float:
    if t_effective < 1:
        raise ValueError(f"t_effective must be >= 1, got {t_effective}")
    if len(majority_counts) != t_effective:
        raise ValueError("majority_counts length must equal t_effective")
    if any(c < 0 or c > m for c in majority_counts):
        raise ValueError(f"majority counts must lie in [0, {m}]")
    return 1.0 - (sum(c / m for c in majority_counts) / t_effective)


def assess(
    problem: GeneratedProblem,
    gateway: Gateway,
    pool: RunnerPool,
    t: int = DEFAULT_NUM_TESTS,
    m: int = DEFAULT_NUM_SOLUTIONS,
    temperature: float = DEFAULT_TEMPERATURE,
    none_threshold: float = DEFAULT_NONE_THRESHOLD,
) -> tuple[DifficultyReport, ExecutionMatrix | None]:
    """Full scoring pass for one generated problem.

    A problem without any usable test inputs is reported invalid with delta
    pinned to 1.0 so downstream ordering never prefers it.
    """
    inputs = generate_test_inputs(problem, gateway, t=t, temperature=temperature)
    if not inputs:
        report = DifficultyReport(
            problem_id=problem.problem_id,
            t=0,
            m=m,
            majority_outputs=(),
            majority_counts=(),
            none_fraction=1.0,
            valid=False,
            delta=1.0,
            reason="no_test_inputs",
        )
        return report, None

    responses = generate_solutions(problem, gateway, m=m, temperature=temperature)
    programs = [extract_code(text) for text in responses]
    matrix = execute_matrix(problem.problem_id, programs, inputs, pool)
    majority_outputs, majority_counts, none_fraction = majority_vote(matrix)
    delta = compute_delta(majority_counts, m, matrix.t)
    valid = none_fraction <= none_threshold
    report = DifficultyReport(
        problem_id=problem.problem_id,
        t=matrix.t,
        m=m,
        majority_outputs=majority_outputs,
        majority_counts=majority_counts,
        none_fraction=none_fraction,
        valid=valid,
        delta=delta,
        reason=None if valid else "high_none_fraction",
    )
    return report, matrix
