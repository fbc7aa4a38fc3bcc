"""Seed corpus loading, validation, normalization, and deduplication."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .concepts import ConceptSet

logger = logging.getLogger(__name__)

CORPUS_SCHEMA_JSONL_V1 = "problems-jsonl-v1"
KNOWN_SCHEMAS = (CORPUS_SCHEMA_JSONL_V1,)

DIFFICULTY_MIN = 1
DIFFICULTY_MAX = 5


class CorpusError(ValueError):
    """Malformed corpus file or record."""


def normalize_statement(raw: str) -> str:
    """Canonicalize a problem statement.

    Line endings become ``\\n``, runs of blank lines collapse to a single
    blank line, and leading/trailing whitespace is trimmed. Idempotent.
    """
    text = raw.replace("\r\n", "\n").replace("\r", "\n")
    out: list[str] = []
    for line in text.split("\n"):
        if line.strip() == "":
            # blank line: keep at most one in a row, none at the start
            if out and out[-1] != "":
                out.append("")
        else:
            out.append(line)
    while out and out[-1] == "":
        out.pop()
    return "\n".join(out).strip()


@dataclass(frozen=True)
class Problem:
    """One coding problem, optionally carrying a human difficulty label and concepts."""

    id: str
    statement: str
    difficulty_label: int | None = None
    source_tags: tuple[str, ...] = ()
    concepts: "ConceptSet | None" = None

    def with_concepts(self, concepts: "ConceptSet") -> "Problem":
        return replace(self, concepts=concepts)


@dataclass(frozen=True)
class CorpusManifest:
    source: str
    schema: str
    sha256: str
    problem_count: int
    duplicates_dropped: int

    def to_record(self) -> dict:
        return {
            "source": self.source,
            "schema": self.schema,
            "sha256": self.sha256,
            "problem_count": self.problem_count,
            "duplicates_dropped": self.duplicates_dropped,
        }


@dataclass(frozen=True)
class Corpus:
    problems: tuple[Problem, ...]
    manifest: CorpusManifest
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {p.id: p for p in self.problems})

    def __len__(self) -> int:
        return len(self.problems)

    def get(self, problem_id: str) -> Problem | None:
        return self._by_id.get(problem_id)

    def with_concepts(self, concepts_by_id: dict) -> "Corpus":
        """Return a copy whose problems carry the given concept sets (missing ids stay bare)."""
        updated = tuple(
            p.with_concepts(concepts_by_id[p.id]) if p.id in concepts_by_id else p
            for p in self.problems
        )
        return Corpus(problems=updated, manifest=self.manifest)


def _parse_record(record: dict, line_no: int) -> Problem:
    def fail(fieldname: str, why: str) -> CorpusError:
        return CorpusError(f"line {line_no}: field '{fieldname}': {why}")

    raw_id = record.get("id")
    if not isinstance(raw_id, str) or not raw_id.strip():
        raise fail("id", "missing or empty")
    raw_statement = record.get("statement")
    if not isinstance(raw_statement, str):
        raise fail("statement", "missing or not a string")
    statement = normalize_statement(raw_statement)
    if not statement:
        raise fail("statement", "empty after normalization")

    difficulty = record.get("difficulty")
    if difficulty is not None:
        if isinstance(difficulty, bool) or not isinstance(difficulty, int):
            raise fail("difficulty", f"expected integer, got {difficulty!r}")
        if not DIFFICULTY_MIN <= difficulty <= DIFFICULTY_MAX:
            raise fail(
                "difficulty",
                f"{difficulty} outside [{DIFFICULTY_MIN}, {DIFFICULTY_MAX}] (record id {raw_id!r})",
            )

    tags = record.get("tags", [])
    if not isinstance(tags, list) or any(not isinstance(t, str) for t in tags):
        raise fail("tags", "expected list of strings")

    return Problem(
        id=raw_id.strip(),
        statement=statement,
        difficulty_label=difficulty,
        source_tags=tuple(tags),
    )


def load_corpus(path: str | Path, schema: str = CORPUS_SCHEMA_JSONL_V1) -> Corpus:
    """Load a line-delimited JSON corpus, enforcing record invariants.

    Duplicate statements keep the first occurrence; duplicate ids are fatal.
    Missing difficulty labels are allowed and stay absent.
    """
    if schema not in KNOWN_SCHEMAS:
        raise CorpusError(f"unknown corpus schema {schema!r}; known: {KNOWN_SCHEMAS}")
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")

    data = path.read_bytes()
    digest = hashlib.sha256(data).hexdigest()

    problems: list[Problem] = []
    seen_ids: set[str] = set()
    seen_statements: set[str] = set()
    duplicates = 0
    for line_no, line in enumerate(data.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"line {line_no}: invalid JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise CorpusError(f"line {line_no}: record is not an object")
        problem = _parse_record(record, line_no)
        if problem.id in seen_ids:
            raise CorpusError(f"line {line_no}: duplicate id {problem.id!r}")
        seen_ids.add(problem.id)
        if problem.statement in seen_statements:
            duplicates += 1
            continue
        seen_statements.add(problem.statement)
        problems.append(problem)

    if duplicates:
        logger.info("%d duplicate statement(s) dropped from %s", duplicates, path.name)

    manifest = CorpusManifest(
        source=path.name,
        schema=schema,
        sha256=digest,
        problem_count=len(problems),
        duplicates_dropped=duplicates,
    )
    return Corpus(problems=tuple(problems), manifest=manifest)
