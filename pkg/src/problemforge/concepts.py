"""Concept vocabulary: topics and knowledge points extracted from problems."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum

logger = logging.getLogger(__name__)

EXTRACTION_RETRIES = 3


class ConceptKind(str, Enum):
    TOPIC = "topic"
    KNOWLEDGE_POINT = "knowledge_point"


class ConceptParseError(ValueError):
    """Extraction response missing both concept sections."""


def normalize_concept_name(raw: str) -> str:
    """Lowercase, trim, and collapse internal whitespace. Idempotent."""
    return re.sub(r"\s+", " ", raw.strip().lower())


@dataclass(frozen=True, order=True)
class Concept:
    kind: ConceptKind
    name: str

    def __post_init__(self):
        if self.name != normalize_concept_name(self.name):
            raise ValueError(f"concept name not normalized: {self.name!r}")
        if not self.name:
            raise ValueError("empty concept name")

    @property
    def key(self) -> tuple[str, str]:
        return (self.kind.value, self.name)


@dataclass(frozen=True)
class ConceptSet:
    """Concepts attached to one problem. Topics are the coarse axis, knowledge points the fine one."""

    topics: tuple[Concept, ...]
    knowledge_points: tuple[Concept, ...]

    def __post_init__(self):
        for c in self.topics:
            if c.kind is not ConceptKind.TOPIC:
                raise ValueError(f"{c.name!r} is not a topic")
        for c in self.knowledge_points:
            if c.kind is not ConceptKind.KNOWLEDGE_POINT:
                raise ValueError(f"{c.name!r} is not a knowledge point")

    def all_concepts(self) -> tuple[Concept, ...]:
        return self.topics + self.knowledge_points

    def name_set(self) -> frozenset[str]:
        return frozenset(c.name for c in self.all_concepts())

    def is_empty(self) -> bool:
        return not self.topics and not self.knowledge_points

    def to_record(self) -> dict:
        return {
            "topics": [c.name for c in self.topics],
            "knowledge_points": [c.name for c in self.knowledge_points],
        }

    @classmethod
    def from_record(cls, record: dict) -> "ConceptSet":
        return cls.from_names(record["topics"], record["knowledge_points"])

    @classmethod
    def from_names(cls, topics: list[str], knowledge_points: list[str]) -> "ConceptSet":
        def dedup(names: list[str], kind: ConceptKind) -> tuple[Concept, ...]:
            seen: dict[str, Concept] = {}
            for raw in names:
                name = normalize_concept_name(raw)
                if name and name not in seen:
                    seen[name] = Concept(kind=kind, name=name)
            return tuple(sorted(seen.values()))

        return cls(
            topics=dedup(topics, ConceptKind.TOPIC),
            knowledge_points=dedup(knowledge_points, ConceptKind.KNOWLEDGE_POINT),
        )


_SECTION_RE = re.compile(r"^\s*(topics|knowledge\s*points)\s*:\s*(.*)$", re.IGNORECASE)
_ITEM_RE = re.compile(r"^\s*(?:[-*]|\d+[.)])\s*(.*)$")


def parse_extraction_response(text: str) -> ConceptSet:
    """Parse the two-section list format used by the concept extraction prompt.

    Section headers are ``Topics:`` and ``Knowledge points:`` (case-insensitive);
    items are dash/star/numbered bullets or comma-separated inline values.
    Raises ConceptParseError if neither section is present.
    """
    sections: dict[str, list[str]] = {"topics": [], "knowledge points": []}
    found: set[str] = set()
    current: str | None = None
    for line in text.splitlines():
        header = _SECTION_RE.match(line)
        if header:
            current = re.sub(r"\s+", " ", header.group(1).lower())
            found.add(current)
            inline = header.group(2).strip()
            if inline:
                sections[current].extend(part.strip() for part in inline.split(","))
            continue
        if current is None:
            continue
        item = _ITEM_RE.match(line)
        if item:
            value = item.group(1).strip()
            if "," in value:
                sections[current].extend(part.strip() for part in value.split(","))
            elif value:
                sections[current].append(value)

    if not found:
        raise ConceptParseError(f"no concept sections found in response: {text[:120]!r}")
    if found != {"topics", "knowledge points"}:
        missing = {"topics", "knowledge points"} - found
        logger.warning("extraction response missing section(s): %s", ", ".join(sorted(missing)))

    return ConceptSet.from_names(sections["topics"], sections["knowledge points"])


def render_concepts(concepts: ConceptSet) -> str:
    """Inverse of parse_extraction_response for canonical concept sets."""
    lines = ["Topics:"]
    lines.extend(f"- {c.name}" for c in concepts.topics)
    lines.append("")
    lines.append("Knowledge points:")
    lines.extend(f"- {c.name}" for c in concepts.knowledge_points)
    return "\n".join(lines)
