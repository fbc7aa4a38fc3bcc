"""Drive concept extraction over a corpus through the gateway, with parse retries."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .concepts import ConceptParseError, ConceptSet, parse_extraction_response
from .corpus import Corpus, Problem
from .gateway import DEFAULT_TEMPERATURE, CompletionRequest, Gateway, RoleTag
from .prompts import TEMPLATE_CONCEPT_EXTRACTION, render_template

logger = logging.getLogger(__name__)

PARSE_RETRIES = 3


@dataclass(frozen=True)
class ExtractionOutcome:
    """Audit record: what the model said and what we kept."""

    problem_id: str
    concepts: ConceptSet | None
    raw_response: str
    error: str | None = None

    def to_record(self) -> dict:
        record: dict = {"problem_id": self.problem_id, "raw_response": self.raw_response}
        if self.concepts is not None:
            record.update(self.concepts.to_record())
        if self.error is not None:
            record["error"] = self.error
        return record


def extract_concepts(
    problem: Problem,
    gateway: Gateway,
    template_id: str = TEMPLATE_CONCEPT_EXTRACTION,
    temperature: float = DEFAULT_TEMPERATURE,
    retries: int = PARSE_RETRIES,
) -> ExtractionOutcome:
    """One problem's concepts, or a failure outcome after exhausting parse retries.

    A parsed response without any topic counts as a failure: the walk sampler
    needs topics as start nodes, so a topic-less set is unusable.
    """
    prompt = render_template(template_id, statement=problem.statement)
    last_response = ""
    last_error = "no response"
    for attempt in range(retries + 1):
        result = gateway.complete(
            CompletionRequest(
                role=RoleTag.CONCEPT_EXTRACT,
                prompt_text=prompt,
                temperature=temperature,
                sample_index=attempt,
            )
        )
        if not result.ok:
            last_error = "gateway error result"
            continue
        last_response = result.text
        try:
            concepts = parse_extraction_response(result.text)
        except ConceptParseError as exc:
            last_error = str(exc)
            continue
        if not concepts.topics:
            last_error = "no topics in parsed response"
            logger.warning("problem %s attempt %d: %s", problem.id, attempt, last_error)
            continue
        return ExtractionOutcome(problem_id=problem.id, concepts=concepts, raw_response=result.text)
    logger.warning("problem %s: extraction failed (%s)", problem.id, last_error)
    return ExtractionOutcome(
        problem_id=problem.id, concepts=None, raw_response=last_response, error=last_error
    )


def extract_corpus(
    corpus: Corpus,
    gateway: Gateway,
    temperature: float = DEFAULT_TEMPERATURE,
) -> tuple[Corpus, list[ExtractionOutcome]]:
    """Extract every problem and return the concept-carrying corpus.

    Outcomes are merged in problem order, so the resulting vocabulary is
    independent of any request-level concurrency.
    """
    outcomes = [extract_concepts(p, gateway, temperature=temperature) for p in corpus.problems]
    mapping = {o.problem_id: o.concepts for o in outcomes if o.concepts is not None}
    failed = len(outcomes) - len(mapping)
    if failed:
        logger.warning("%d/%d problems failed concept extraction", failed, len(outcomes))
    return corpus.with_concepts(mapping), outcomes
