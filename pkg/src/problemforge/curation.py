"""Rejection curation: keep the hardest valid candidate per prompt, stratify by
disagreement, and export training datasets."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .corpus import normalize_statement
from .difficulty import DifficultyReport, GeneratedProblem
from .executor import ExecutionMatrix
from .gateway import DEFAULT_TEMPERATURE, CompletionRequest, Gateway, RoleTag
from .prompts import GenerationPrompt
from .storage import write_jsonl_atomic

logger = logging.getLogger(__name__)

DEFAULT_NUM_CANDIDATES = 8


class Stratum(str, Enum):
    HIGHEST = "highest"
    LOWEST = "lowest"
    MEDIAN_NEAREST = "median_nearest"
    RANDOM = "random"


@dataclass(frozen=True)
class CandidatePool:
    prompt: GenerationPrompt
    candidates: tuple[tuple[GeneratedProblem, DifficultyReport], ...]

    def __post_init__(self):
        indices = [p.candidate_index for p, _ in self.candidates]
        if len(set(indices)) != len(indices):
            raise ValueError("candidate_index values must be distinct within a pool")
        for problem, report in self.candidates:
            if problem.prompt_id != self.prompt.prompt_id:
                raise ValueError(f"candidate {problem.problem_id} belongs to another prompt")
            if report.problem_id != problem.problem_id:
                raise ValueError("report/problem id mismatch")


@dataclass(frozen=True)
class TrainingPair:
    prompt_text: str
    target_text: str
    delta: float
    prompt_id: str
    problem_id: str
    run_id: str

    def to_record(self) -> dict:
        return {
            "prompt": self.prompt_text,
            "completion": self.target_text,
            "delta": self.delta,
            "provenance": {
                "prompt_id": self.prompt_id,
                "problem_id": self.problem_id,
                "run_id": self.run_id,
            },
        }

    @classmethod
    def from_record(cls, record: dict) -> "TrainingPair":
        provenance = record["provenance"]
        return cls(
            prompt_text=record["prompt"],
            target_text=record["completion"],
            delta=record["delta"],
            prompt_id=provenance["prompt_id"],
            problem_id=provenance["problem_id"],
            run_id=provenance["run_id"],
        )


def sample_candidates(
    prompt: GenerationPrompt,
    gateway: Gateway,
    k: int = DEFAULT_NUM_CANDIDATES,
    temperature: float = DEFAULT_TEMPERATURE,
) -> list[GeneratedProblem]:
    """K statements from one prompt; failed or duplicate completions shrink the pool."""
    if k < 2:
        raise ValueError(f"K must be >= 2, got {k}")
    requests = [
        CompletionRequest(
            role=RoleTag.PROBLEM_GEN,
            prompt_text=prompt.rendered_text,
            temperature=temperature,
            sample_index=i,
        )
        for i in range(k)
    ]
    problems: list[GeneratedProblem] = []
    seen_statements: set[str] = set()
    dropped = 0
    for index, result in enumerate(gateway.complete_batch(requests)):
        statement = normalize_statement(result.text) if result.ok else ""
        if not statement:
            dropped += 1
            continue
        if statement in seen_statements:
            dropped += 1
            continue
        seen_statements.add(statement)
        problems.append(GeneratedProblem.create(prompt.prompt_id, index, statement))
    if dropped:
        logger.warning("prompt %s: %d/%d candidates dropped", prompt.prompt_id, dropped, k)
    if not problems:
        logger.warning("prompt %s: no usable candidates, pool skipped", prompt.prompt_id)
    return problems


def select_hardest(pool: CandidatePool, run_id: str) -> TrainingPair | None:
    """Argmax-delta among valid candidates; ties go to the lowest candidate_index."""
    valid = [(p, r) for p, r in pool.candidates if r.valid]
    if not valid:
        return None
    problem, report = min(valid, key=lambda pair: (-pair[1].delta, pair[0].candidate_index))
    return TrainingPair(
        prompt_text=pool.prompt.rendered_text,
        target_text=problem.statement,
        delta=report.delta,
        prompt_id=pool.prompt.prompt_id,
        problem_id=problem.problem_id,
        run_id=run_id,
    )


def stratify_by_delta(
    reports: list[DifficultyReport],
    n: int,
    stratum: Stratum,
    seed: int = 0,
) -> list[str]:
    """Problem ids for one selection stratum, deterministically tie-broken by id."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if any(not r.valid for r in reports):
        raise ValueError("stratify_by_delta expects only valid reports")
    if n > len(reports):
        logger.warning("requested %d of %d reports; returning all", n, len(reports))
        n = len(reports)

    if stratum is Stratum.HIGHEST:
        ranked = sorted(reports, key=lambda r: (-r.delta, r.problem_id))
    elif stratum is Stratum.LOWEST:
        ranked = sorted(reports, key=lambda r: (r.delta, r.problem_id))
    elif stratum is Stratum.MEDIAN_NEAREST:
        ranked = sorted(reports, key=lambda r: (abs(r.delta - 0.5), r.problem_id))
    else:
        ids = sorted(r.problem_id for r in reports)
        rng = np.random.Generator(np.random.PCG64(seed))
        picks = rng.choice(len(ids), size=n, replace=False)
        return [ids[int(i)] for i in picks]
    return [r.problem_id for r in ranked[:n]]


def export_sft(pairs: list[TrainingPair], path: str | Path) -> int:
    """Instruction-tuning JSONL ordered by (prompt_id, problem_id)."""
    if not pairs:
        logger.warning("exporting empty SFT dataset to %s", path)
    ordered = sorted(pairs, key=lambda p: (p.prompt_id, p.problem_id))
    return write_jsonl_atomic(path, (p.to_record() for p in ordered))


def export_rlvr(
    entries: list[tuple[GeneratedProblem, ExecutionMatrix, DifficultyReport]],
    path: str | Path,
) -> int:
    """Verifiable-reward records: per problem, the test columns that stayed
    majority-executable, labeled with their majority output."""
    records = []
    for problem, matrix, report in sorted(entries, key=lambda e: e[0].problem_id):
        if not report.valid:
            logger.debug("rlvr export skipping invalid problem %s", problem.problem_id)
            continue
        tests = []
        for t in range(matrix.t):
            column = matrix.column(t)
            absent = sum(1 for o in column if o is None)
            if absent / matrix.m > 0.5:
                continue
            tests.append({"input": matrix.inputs[t], "expected_output": report.majority_outputs[t]})
        if not tests:
            logger.info("rlvr export dropping %s: no surviving test case", problem.problem_id)
            continue
        records.append(
            {"problem_id": problem.problem_id, "statement": problem.statement, "tests": tests}
        )
    if not records:
        logger.warning("exporting empty RLVR dataset to %s", path)
    return write_jsonl_atomic(path, records)


def export_distill(problems: list[GeneratedProblem], path: str | Path) -> int:
    """Problem-only export for external teacher models to answer."""
    ordered = sorted(problems, key=lambda p: p.problem_id)
    return write_jsonl_atomic(
        path, ({"problem_id": p.problem_id, "statement": p.statement} for p in ordered)
    )
