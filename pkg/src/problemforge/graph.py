"""Concept co-occurrence graph with difficulty-aware weights and softmax random walks."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Iterable

import numpy as np

from .concepts import Concept, ConceptKind
from .corpus import Problem
from .storage import write_text_atomic

logger = logging.getLogger(__name__)

GRAPH_FORMAT = "concept-graph"
GRAPH_VERSION = 1

DEFAULT_ALPHA = 0.2
DEFAULT_EPSILON = 1.0
DEFAULT_MAX_STEPS = 6


class GraphError(ValueError):
    """Graph construction or serialization failure."""


class IsolatedNodeError(GraphError):
    """Node has no neighbors to transition to."""


class WeightMode(str, Enum):
    CO_OCCURRENCE = "co_occurrence"
    DIFFICULTY_AWARE = "difficulty_aware"


@dataclass(frozen=True)
class EdgeStats:
    """Per-edge aggregates: co-occurrence count plus label mass for labeled problems."""

    freq: int
    diff_sum: int = 0
    diff_count: int = 0

    def __post_init__(self):
        if self.freq < 1:
            raise GraphError(f"edge freq must be >= 1, got {self.freq}")
        if self.diff_count > self.freq:
            raise GraphError("diff_count exceeds freq")
        if self.diff_sum > 5 * self.diff_count:
            raise GraphError("diff_sum exceeds 5 * diff_count")

    @property
    def mean_difficulty(self) -> float:
        # no labeled problem covers this edge: no evidence of difficulty
        return self.diff_sum / self.diff_count if self.diff_count else 0.0


def edge_weight(stats: EdgeStats, mode: WeightMode, alpha: float, epsilon: float) -> float:
    if mode is WeightMode.CO_OCCURRENCE:
        return math.log(stats.freq + epsilon)
    return math.log(alpha * stats.freq + (1.0 - alpha) * stats.mean_difficulty + epsilon)


@dataclass(frozen=True)
class WalkSample:
    start_topic: Concept
    path: tuple[int, ...]
    concept_combination: tuple[Concept, ...]

    def to_record(self) -> dict:
        return {
            "start_topic": self.start_topic.name,
            "path": list(self.path),
            "concepts": [[c.kind.value, c.name] for c in self.concept_combination],
        }


@dataclass(frozen=True)
class ConceptGraph:
    nodes: tuple[Concept, ...]
    edges: dict[tuple[int, int], EdgeStats]
    weight_mode: WeightMode
    alpha: float
    epsilon: float
    _adjacency: dict = field(default_factory=dict, repr=False, compare=False)
    _topic_indices: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        adjacency: dict[int, list[int]] = {i: [] for i in range(len(self.nodes))}
        for (u, v) in self.edges:
            if not (0 <= u < v < len(self.nodes)):
                raise GraphError(f"bad edge key ({u}, {v})")
            adjacency[u].append(v)
            adjacency[v].append(u)
        object.__setattr__(
            self, "_adjacency", {i: tuple(sorted(ns)) for i, ns in adjacency.items()}
        )
        object.__setattr__(
            self,
            "_topic_indices",
            tuple(i for i, c in enumerate(self.nodes) if c.kind is ConceptKind.TOPIC),
        )

    @property
    def topic_indices(self) -> tuple[int, ...]:
        return self._topic_indices

    def index_of(self, concept: Concept) -> int:
        # nodes are few enough that a linear scan never shows up in profiles;
        # kept simple to avoid a parallel index dict in the frozen dataclass
        try:
            return self.nodes.index(concept)
        except ValueError:
            raise GraphError(f"concept not in graph: {concept}") from None

    def neighbors(self, u: int) -> tuple[int, ...]:
        return self._adjacency[u]

    def edge_stats(self, u: int, v: int) -> EdgeStats | None:
        return self.edges.get((min(u, v), max(u, v)))

    def weight(self, u: int, v: int) -> float:
        stats = self.edge_stats(u, v)
        if stats is None:
            raise GraphError(f"no edge between nodes {u} and {v}")
        return edge_weight(stats, self.weight_mode, self.alpha, self.epsilon)

    def transition_distribution(self, u: int) -> tuple[tuple[int, ...], np.ndarray]:
        """Softmax over edge weights to u's neighbors, in ascending neighbor-index order."""
        neighbor_ids = self.neighbors(u)
        if not neighbor_ids:
            raise IsolatedNodeError(f"node {u} ({self.nodes[u].name!r}) has no neighbors")
        weights = np.array([self.weight(u, v) for v in neighbor_ids], dtype=np.float64)
        shifted = np.exp(weights - weights.max())
        return neighbor_ids, shifted / shifted.sum()

    def to_record(self) -> dict:
        return {
            "format": GRAPH_FORMAT,
            "version": GRAPH_VERSION,
            "weight_mode": self.weight_mode.value,
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "nodes": [[c.kind.value, c.name] for c in self.nodes],
            "edges": [
                [u, v, s.freq, s.diff_sum, s.diff_count]
                for (u, v), s in sorted(self.edges.items())
            ],
        }

    @classmethod
    def from_record(cls, record: dict) -> "ConceptGraph":
        if record.get("format") != GRAPH_FORMAT:
            raise GraphError(f"not a graph file: format={record.get('format')!r}")
        if record.get("version") != GRAPH_VERSION:
            raise GraphError(f"unsupported graph version {record.get('version')!r}")
        try:
            nodes = tuple(Concept(kind=ConceptKind(k), name=n) for k, n in record["nodes"])
            edges = {
                (u, v): EdgeStats(freq=f, diff_sum=ds, diff_count=dc)
                for u, v, f, ds, dc in record["edges"]
            }
            return cls(
                nodes=nodes,
                edges=edges,
                weight_mode=WeightMode(record["weight_mode"]),
                alpha=record["alpha"],
                epsilon=record["epsilon"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise GraphError(f"corrupted graph record: {exc}") from exc

    def content_hash(self) -> str:
        canonical = json.dumps(self.to_record(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_graph(
    problems: Iterable[Problem],
    mode: WeightMode = WeightMode.DIFFICULTY_AWARE,
    alpha: float = DEFAULT_ALPHA,
    epsilon: float = DEFAULT_EPSILON,
) -> ConceptGraph:
    """Aggregate concept co-occurrence and label statistics over problems with concepts."""
    if not 0.0 <= alpha <= 1.0:
        raise GraphError(f"alpha must be in [0, 1], got {alpha}")
    if epsilon <= 0.0:
        raise GraphError(f"epsilon must be positive, got {epsilon}")

    vocabulary: set[Concept] = set()
    usable: list[Problem] = []
    for problem in problems:
        if problem.concepts is None or problem.concepts.is_empty():
            continue
        usable.append(problem)
        vocabulary.update(problem.concepts.all_concepts())
    if not vocabulary:
        raise GraphError("empty concept vocabulary: no problem carries concepts")

    nodes = tuple(sorted(vocabulary))
    index = {c: i for i, c in enumerate(nodes)}

    freq: dict[tuple[int, int], int] = {}
    diff_sum: dict[tuple[int, int], int] = {}
    diff_count: dict[tuple[int, int], int] = {}
    for problem in usable:
        ids = sorted(index[c] for c in set(problem.concepts.all_concepts()))
        for u, v in combinations(ids, 2):
            key = (u, v)
            freq[key] = freq.get(key, 0) + 1
            if problem.difficulty_label is not None:
                diff_sum[key] = diff_sum.get(key, 0) + problem.difficulty_label
                diff_count[key] = diff_count.get(key, 0) + 1

    edges = {
        key: EdgeStats(freq=f, diff_sum=diff_sum.get(key, 0), diff_count=diff_count.get(key, 0))
        for key, f in freq.items()
    }
    graph = ConceptGraph(nodes=nodes, edges=edges, weight_mode=mode, alpha=alpha, epsilon=epsilon)
    if not graph.topic_indices:
        raise GraphError("no topic nodes in graph")
    logger.info(
        "graph built: %d nodes (%d topics), %d edges from %d problems",
        len(nodes), len(graph.topic_indices), len(edges), len(usable),
    )
    return graph


def serialize_graph(graph: ConceptGraph, path: str | Path) -> str:
    """Write the graph as canonical JSON; returns the content hash."""
    payload = json.dumps(graph.to_record(), sort_keys=True, separators=(",", ":")) + "\n"
    write_text_atomic(path, payload)
    return graph.content_hash()


def deserialize_graph(path: str | Path) -> ConceptGraph:
    try:
        record = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise GraphError(f"cannot read graph file {path}: {exc}") from exc
    return ConceptGraph.from_record(record)


def walk_rng(run_seed: int, walk_index: int) -> np.random.Generator:
    """Independent stream per walk so results ignore scheduling order."""
    return np.random.Generator(np.random.PCG64(run_seed ^ walk_index))


def sample_walk(
    graph: ConceptGraph, rng: np.random.Generator, max_steps: int = DEFAULT_MAX_STEPS
) -> WalkSample:
    """Uniform topic start, then up to max_steps softmax transitions."""
    if max_steps < 0:
        raise GraphError(f"max_steps must be >= 0, got {max_steps}")
    if not graph.topic_indices:
        raise GraphError("graph has no topics to start from")

    start = int(rng.choice(np.array(graph.topic_indices)))
    length = int(rng.integers(1, max_steps + 1)) if max_steps > 0 else 0
    path = [start]
    current = start
    for _ in range(length):
        neighbor_ids = graph.neighbors(current)
        if not neighbor_ids:
            logger.debug("walk hit dead end at node %d", current)
            break
        _, probs = graph.transition_distribution(current)
        current = int(neighbor_ids[int(rng.choice(len(neighbor_ids), p=probs))])
        path.append(current)

    combination = tuple(sorted({graph.nodes[i] for i in path}))
    return WalkSample(
        start_topic=graph.nodes[start],
        path=tuple(path),
        concept_combination=combination,
    )


def sample_walks(
    graph: ConceptGraph, run_seed: int, count: int, max_steps: int = DEFAULT_MAX_STEPS
) -> list[WalkSample]:
    return [sample_walk(graph, walk_rng(run_seed, i), max_steps) for i in range(count)]
