"""Overlap certification: hashed 50-token shingle Jaccard between generated
problems and benchmark corpora, via an inverted index instead of all-pairs."""

from __future__ import annotations

import hashlib
import logging
import re
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from .storage import read_jsonl

logger = logging.getLogger(__name__)

NGRAM_SIZE = 50
_TOKEN_RE = re.compile(r"[^\W_]+")
_SEP = "\x1f"


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens; punctuation and underscores are separators."""
    return _TOKEN_RE.findall(text.lower())


def _hash_window(window: tuple[str, ...]) -> int:
    digest = hashlib.blake2b(_SEP.join(window).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass(frozen=True)
class NGramProfile:
    doc_id: str
    grams: frozenset[int]


def build_profile(doc_id: str, text: str, n: int = NGRAM_SIZE) -> NGramProfile:
    """Hash every n-token window; documents shorter than n tokens get no grams."""
    tokens = tokenize(text)
    if len(tokens) < n:
        return NGramProfile(doc_id=doc_id, grams=frozenset())
    grams = frozenset(
        _hash_window(tuple(tokens[i : i + n])) for i in range(len(tokens) - n + 1)
    )
    return NGramProfile(doc_id=doc_id, grams=grams)


def jaccard_ngram(a: NGramProfile, b: NGramProfile) -> float:
    if not a.grams and not b.grams:
        return 0.0
    union = len(a.grams | b.grams)
    if union == 0:
        return 0.0
    return len(a.grams & b.grams) / union


@dataclass(frozen=True)
class DocScore:
    doc_id: str
    max_score: float
    matched_corpus: str | None
    matched_doc_id: str | None

    def to_record(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "max_score": self.max_score,
            "matched_corpus": self.matched_corpus,
            "matched_doc_id": self.matched_doc_id,
        }


@dataclass(frozen=True)
class ContaminationReport:
    global_max: float
    threshold: float
    generated_count: int
    benchmark_count: int
    doc_scores: tuple[DocScore, ...]
    flagged: tuple[DocScore, ...]

    def to_record(self) -> dict:
        return {
            "global_max": self.global_max,
            "threshold": self.threshold,
            "generated_count": self.generated_count,
            "benchmark_count": self.benchmark_count,
            "doc_scores": [d.to_record() for d in self.doc_scores],
            "flagged": [d.to_record() for d in self.flagged],
        }


def scan(
    generated: list[tuple[str, str]],
    benchmarks: list[tuple[str, list[tuple[str, str]]]],
    threshold: float = 0.0,
    n: int = NGRAM_SIZE,
) -> ContaminationReport:
    """Max shingle-Jaccard per generated doc against every benchmark doc.

    Ties between benchmark docs resolve to the lexicographically first
    (corpus, doc_id), so reports are stable across dict ordering.
    """
    bench_profiles: list[tuple[str, NGramProfile]] = []
    index: dict[int, list[int]] = defaultdict(list)
    for corpus_name, docs in benchmarks:
        for doc_id, text in docs:
            profile = build_profile(doc_id, text, n=n)
            slot = len(bench_profiles)
            bench_profiles.append((corpus_name, profile))
            for gram in profile.grams:
                index[gram].append(slot)

    doc_scores: list[DocScore] = []
    for doc_id, text in generated:
        profile = build_profile(doc_id, text, n=n)
        shared: dict[int, int] = defaultdict(int)
        for gram in profile.grams:
            for slot in index.get(gram, ()):
                shared[slot] += 1
        best = DocScore(doc_id=doc_id, max_score=0.0, matched_corpus=None, matched_doc_id=None)
        for slot, count in shared.items():
            corpus_name, bench = bench_profiles[slot]
            score = count / (len(profile.grams) + len(bench.grams) - count)
            key = (-score, corpus_name, bench.doc_id)
            best_key = (-best.max_score, best.matched_corpus or "", best.matched_doc_id or "")
            if best.matched_corpus is None or key < best_key:
                best = DocScore(
                    doc_id=doc_id,
                    max_score=score,
                    matched_corpus=corpus_name,
                    matched_doc_id=bench.doc_id,
                )
        doc_scores.append(best)

    flagged = tuple(d for d in doc_scores if d.max_score > threshold)
    global_max = max((d.max_score for d in doc_scores), default=0.0)
    if flagged:
        logger.warning("%d generated doc(s) overlap benchmarks above %.3f", len(flagged), threshold)
    return ContaminationReport(
        global_max=global_max,
        threshold=threshold,
        generated_count=len(generated),
        benchmark_count=len(bench_profiles),
        doc_scores=tuple(doc_scores),
        flagged=flagged,
    )


def load_documents(path: str | Path) -> list[tuple[str, str]]:
    """Benchmark loader: JSONL with id/statement-like fields, else one doc per file."""
    path = Path(path)
    if path.suffix == ".jsonl":
        docs = []
        for i, record in enumerate(read_jsonl(path)):
            doc_id = str(record.get("id") or record.get("problem_id") or f"{path.stem}#{i}")
            text = record.get("statement") or record.get("text") or record.get("question") or ""
            docs.append((doc_id, text))
        return docs
    return [(path.stem, path.read_text(encoding="utf-8"))]
