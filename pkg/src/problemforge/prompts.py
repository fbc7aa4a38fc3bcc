"""Few-shot prompt assembly: exemplar retrieval by Jaccard distance plus template rendering."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from string import Template
from typing import Iterable

from .concepts import Concept, ConceptKind, ConceptSet
from .corpus import Corpus, Problem

logger = logging.getLogger(__name__)

TEMPLATE_PROBLEM_GENERATION = "problem-generation-v1"
TEMPLATE_CONCEPT_EXTRACTION = "concept-extraction-v1"
TEMPLATE_TEST_INPUTS = "test-input-generation-v1"
TEMPLATE_SOLUTION = "solution-v1"

DEFAULT_SHOT_COUNT = 8


class PromptError(ValueError):
    """Template missing, placeholder unfilled, or exemplar pool unusable."""


@lru_cache(maxsize=None)
def _load_template(template_id: str) -> Template:
    try:
        text = (resources.files("problemforge") / "templates" / f"{template_id}.txt").read_text(
            encoding="utf-8"
        )
    except FileNotFoundError:
        raise PromptError(f"unknown template id {template_id!r}") from None
    return Template(text)


def render_template(template_id: str, **fields: str) -> str:
    """Fill a named template; any unfilled placeholder is fatal."""
    try:
        return _load_template(template_id).substitute(fields)
    except KeyError as exc:
        raise PromptError(f"template {template_id!r}: placeholder {exc} unfilled") from None
    except ValueError as exc:
        raise PromptError(f"template {template_id!r}: {exc}") from None


def _name_set(concepts: ConceptSet | Iterable[Concept]) -> frozenset[str]:
    if isinstance(concepts, ConceptSet):
        return concepts.name_set()
    return frozenset(c.name for c in concepts)


def jaccard_distance(a: ConceptSet | Iterable[Concept], b: ConceptSet | Iterable[Concept]) -> float:
    """1 - |A∩B|/|A∪B| over concept names, topics and knowledge points pooled together."""
    sa, sb = _name_set(a), _name_set(b)
    union = sa | sb
    if not union:
        return 0.0
    return 1.0 - len(sa & sb) / len(union)


def select_exemplars(
    combination: Iterable[Concept], corpus: Corpus, k: int = DEFAULT_SHOT_COUNT
) -> list[Problem]:
    """The k concept-bearing problems nearest to the combination; ties go to the lower id."""
    if k < 1:
        raise PromptError(f"shot count must be >= 1, got {k}")
    target = tuple(combination)
    candidates = [p for p in corpus.problems if p.concepts is not None and not p.concepts.is_empty()]
    if len(candidates) < k:
        logger.warning("only %d exemplar candidates for k=%d; returning all", len(candidates), k)
    ranked = sorted(candidates, key=lambda p: (jaccard_distance(target, p.concepts), p.id))
    return ranked[:k]


@dataclass(frozen=True)
class GenerationPrompt:
    prompt_id: str
    template_id: str
    concept_combination: tuple[Concept, ...]
    exemplar_ids: tuple[str, ...]
    rendered_text: str

    def to_record(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "template_id": self.template_id,
            "concepts": [[c.kind.value, c.name] for c in self.concept_combination],
            "exemplar_ids": list(self.exemplar_ids),
            "rendered_text": self.rendered_text,
        }

    @classmethod
    def from_record(cls, record: dict) -> "GenerationPrompt":
        return cls(
            prompt_id=record["prompt_id"],
            template_id=record["template_id"],
            concept_combination=tuple(
                Concept(kind=ConceptKind(k), name=n) for k, n in record["concepts"]
            ),
            exemplar_ids=tuple(record["exemplar_ids"]),
            rendered_text=record["rendered_text"],
        )


def _format_concepts(combination: tuple[Concept, ...]) -> str:
    topics = sorted(c.name for c in combination if c.kind is ConceptKind.TOPIC)
    points = sorted(c.name for c in combination if c.kind is ConceptKind.KNOWLEDGE_POINT)
    return "\n".join(f"- {name}" for name in topics + points)


def _format_exemplars(exemplars: list[Problem]) -> str:
    blocks = [f"Example {i}:\n{p.statement}" for i, p in enumerate(exemplars, start=1)]
    return "\n\n".join(blocks)


def render_prompt(
    combination: Iterable[Concept],
    exemplars: list[Problem],
    template_id: str = TEMPLATE_PROBLEM_GENERATION,
) -> GenerationPrompt:
    """Deterministic prompt text: concepts sorted, exemplars kept in rank order."""
    if not exemplars:
        raise PromptError("exemplar list is empty")
    ordered = tuple(sorted(set(combination)))
    if not ordered:
        raise PromptError("concept combination is empty")
    rendered = render_template(
        template_id,
        concepts=_format_concepts(ordered),
        exemplars=_format_exemplars(exemplars),
    )
    prompt_id = hashlib.sha256(f"{template_id}\x00{rendered}".encode("utf-8")).hexdigest()[:16]
    return GenerationPrompt(
        prompt_id=prompt_id,
        template_id=template_id,
        concept_combination=ordered,
        exemplar_ids=tuple(p.id for p in exemplars),
        rendered_text=rendered,
    )
