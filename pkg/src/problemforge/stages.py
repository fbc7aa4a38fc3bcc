"""Stage implementations behind the CLI: each consumes prior artifacts, writes
its own atomically, and records them in the run manifest."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .concepts import ConceptSet
from .config import RunConfig
from .corpus import Corpus, load_corpus
from .curation import (
    CandidatePool,
    TrainingPair,
    export_distill,
    export_rlvr,
    export_sft,
    sample_candidates,
    select_hardest,
)
from .decontam import load_documents, scan
from .difficulty import DifficultyReport, GeneratedProblem, assess
from .executor import ExecutionMatrix, RunnerPool
from .extraction import extract_corpus
from .gateway import Gateway, HttpBackend, MockBackend, RetryPolicy
from .graph import build_graph, deserialize_graph, sample_walks, serialize_graph
from .manifest import (
    STAGE_ORDER,
    RunLock,
    RunManifest,
    StageError,
    mark_stage,
    open_manifest,
    require_stage,
    save_manifest,
)
from .prompts import GenerationPrompt, render_prompt, select_exemplars
from .storage import read_json, read_jsonl, write_json_atomic, write_jsonl_atomic

logger = logging.getLogger(__name__)

STAGE_DEPENDENCIES: dict[str, tuple[str, ...]] = {
    "extract": (),
    "build-graph": ("extract",),
    "sample": ("extract", "build-graph"),
    "generate": ("sample",),
    "assess": ("generate",),
    "curate": ("sample", "generate", "assess"),
    "export": ("assess", "curate"),
    "decontaminate": ("export",),
}


def build_gateway(config: RunConfig) -> Gateway:
    backend_cfg = config.backend
    kind = backend_cfg["kind"]
    if kind == "mock":
        script = backend_cfg.get("script")
        if not script:
            raise StageError("mock backend requires backend.script")
        backend = MockBackend.from_script_file(script)
    else:
        backend = HttpBackend.from_config(backend_cfg)
    retry_cfg = backend_cfg.get("retry", {})
    policy = RetryPolicy(
        max_retries=int(retry_cfg.get("max_retries", 4)),
        base_delay=float(retry_cfg.get("base_delay", 1.0)),
        max_delay=float(retry_cfg.get("max_delay", 120.0)),
    )
    return Gateway(
        backend,
        cache_dir=config.cache_dir,
        retry_policy=policy,
        in_flight_limit=config.in_flight_limit,
    )


@dataclass
class RunContext:
    config: RunConfig
    manifest: RunManifest
    _gateway: Gateway | None = field(default=None, repr=False)
    _pool: RunnerPool | None = field(default=None, repr=False)

    @property
    def run_dir(self) -> Path:
        return self.config.run_dir

    def artifact(self, name: str) -> Path:
        return self.run_dir / name

    @property
    def gateway(self) -> Gateway:
        if self._gateway is None:
            self._gateway = build_gateway(self.config)
        return self._gateway

    @property
    def pool(self) -> RunnerPool:
        if self._pool is None:
            self._pool = RunnerPool(
                command=list(self.config.runner_command),
                pool_size=self.config.pool_size,
                time_limit_sec=self.config.time_limit_sec,
                memory_limit_bytes=self.config.memory_limit_bytes,
            )
        return self._pool


def load_extracted_corpus(ctx: RunContext) -> Corpus:
    """Corpus plus the concept sets recorded by the extract stage.

    Refuses to proceed if the corpus file changed since extraction: concept
    records would silently misalign otherwise.
    """
    summary = read_json(ctx.artifact("extract_summary.json"))
    corpus = load_corpus(ctx.config.corpus_path)
    if corpus.manifest.sha256 != summary["corpus"]["sha256"]:
        raise StageError(
            "corpus file changed since the extract stage; rerun extract (--force)"
        )
    mapping: dict[str, ConceptSet] = {}
    for record in read_jsonl(ctx.artifact("concepts.jsonl")):
        if "error" in record:
            continue
        mapping[record["problem_id"]] = ConceptSet.from_record(record)
    return corpus.with_concepts(mapping)


def stage_extract(ctx: RunContext) -> list[Path]:
    corpus = load_corpus(ctx.config.corpus_path)
    extracted, outcomes = extract_corpus(corpus, ctx.gateway, temperature=ctx.config.temperature)
    concepts_path = ctx.artifact("concepts.jsonl")
    write_jsonl_atomic(concepts_path, (o.to_record() for o in outcomes))
    failed = sum(1 for o in outcomes if o.concepts is None)
    summary_path = ctx.artifact("extract_summary.json")
    write_json_atomic(
        summary_path,
        {
            "corpus": corpus.manifest.to_record(),
            "extracted": len(outcomes) - failed,
            "failed": failed,
        },
    )
    return [concepts_path, summary_path]


def stage_build_graph(ctx: RunContext) -> list[Path]:
    corpus = load_extracted_corpus(ctx)
    graph = build_graph(
        corpus.problems,
        mode=ctx.config.weight_mode,
        alpha=ctx.config.alpha,
        epsilon=ctx.config.epsilon,
    )
    path = ctx.artifact("graph.json")
    content_hash = serialize_graph(graph, path)
    logger.info("graph content hash %s", content_hash[:12])
    return [path]


def stage_sample(ctx: RunContext) -> list[Path]:
    graph = deserialize_graph(ctx.artifact("graph.json"))
    corpus = load_extracted_corpus(ctx)
    walks = sample_walks(
        graph, run_seed=ctx.config.seed, count=ctx.config.num_walks,
        max_steps=ctx.config.max_steps,
    )
    walk_records = [{"walk_index": i, **w.to_record()} for i, w in enumerate(walks)]
    walks_path = ctx.artifact("walks.jsonl")
    write_jsonl_atomic(walks_path, walk_records)

    prompts: list[dict] = []
    seen: set[str] = set()
    for i, walk in enumerate(walks):
        exemplars = select_exemplars(walk.concept_combination, corpus, k=ctx.config.shot_count)
        prompt = render_prompt(walk.concept_combination, exemplars)
        if prompt.prompt_id in seen:
            continue
        seen.add(prompt.prompt_id)
        prompts.append({"walk_index": i, **prompt.to_record()})
    if len(prompts) < len(walks):
        logger.info("%d walks collapsed into %d distinct prompts", len(walks), len(prompts))
    prompts_path = ctx.artifact("prompts.jsonl")
    write_jsonl_atomic(prompts_path, prompts)
    return [walks_path, prompts_path]


def stage_generate(ctx: RunContext) -> list[Path]:
    candidates: list[dict] = []
    for record in read_jsonl(ctx.artifact("prompts.jsonl")):
        prompt = GenerationPrompt.from_record(record)
        problems = sample_candidates(
            prompt, ctx.gateway, k=ctx.config.k, temperature=ctx.config.temperature
        )
        candidates.extend(p.to_record() for p in problems)
    path = ctx.artifact("candidates.jsonl")
    write_jsonl_atomic(path, candidates)
    return [path]


def stage_assess(ctx: RunContext) -> list[Path]:
    reports: list[dict] = []
    matrices: list[dict] = []
    for record in read_jsonl(ctx.artifact("candidates.jsonl")):
        problem = GeneratedProblem.from_record(record)
        report, matrix = assess(
            problem,
            ctx.gateway,
            ctx.pool,
            t=ctx.config.t,
            m=ctx.config.m,
            temperature=ctx.config.temperature,
            none_threshold=ctx.config.none_threshold,
        )
        reports.append(report.to_record())
        if matrix is not None:
            matrices.append(matrix.to_record())
    reports_path = ctx.artifact("reports.jsonl")
    matrices_path = ctx.artifact("matrices.jsonl")
    write_jsonl_atomic(reports_path, reports)
    write_jsonl_atomic(matrices_path, matrices)
    return [reports_path, matrices_path]


def stage_curate(ctx: RunContext) -> list[Path]:
    prompts = {
        r["prompt_id"]: GenerationPrompt.from_record(r)
        for r in read_jsonl(ctx.artifact("prompts.jsonl"))
    }
    reports = {
        r["problem_id"]: DifficultyReport.from_record(r)
        for r in read_jsonl(ctx.artifact("reports.jsonl"))
    }
    by_prompt: dict[str, list[GeneratedProblem]] = {}
    for record in read_jsonl(ctx.artifact("candidates.jsonl")):
        problem = GeneratedProblem.from_record(record)
        by_prompt.setdefault(problem.prompt_id, []).append(problem)

    pairs: list[TrainingPair] = []
    for prompt_id, prompt in prompts.items():
        problems = by_prompt.get(prompt_id, [])
        if not problems:
            continue
        pool = CandidatePool(
            prompt=prompt,
            candidates=tuple(
                (p, reports[p.problem_id])
                for p in sorted(problems, key=lambda p: p.candidate_index)
            ),
        )
        pair = select_hardest(pool, run_id=ctx.config.run_id)
        if pair is None:
            logger.info("prompt %s: no valid candidate", prompt_id)
            continue
        if pair.delta < ctx.config.min_delta:
            logger.info("prompt %s: best delta %.3f below min_delta", prompt_id, pair.delta)
            continue
        pairs.append(pair)

    # exact-statement dedup across pools, keeping the first in provenance order
    pairs.sort(key=lambda p: (p.prompt_id, p.problem_id))
    seen_statements: set[str] = set()
    unique: list[TrainingPair] = []
    for pair in pairs:
        if pair.target_text in seen_statements:
            continue
        seen_statements.add(pair.target_text)
        unique.append(pair)
    if len(unique) < len(pairs):
        logger.info("%d duplicate selected statement(s) dropped", len(pairs) - len(unique))

    path = ctx.artifact("pairs.jsonl")
    write_jsonl_atomic(path, (p.to_record() for p in unique))
    return [path]


def stage_export(ctx: RunContext) -> list[Path]:
    pairs = [TrainingPair.from_record(r) for r in read_jsonl(ctx.artifact("pairs.jsonl"))]
    selected_ids = {p.problem_id for p in pairs}

    problems = {
        r["problem_id"]: GeneratedProblem.from_record(r)
        for r in read_jsonl(ctx.artifact("candidates.jsonl"))
    }
    reports = {
        r["problem_id"]: DifficultyReport.from_record(r)
        for r in read_jsonl(ctx.artifact("reports.jsonl"))
    }
    matrices = {
        r["problem_id"]: ExecutionMatrix.from_record(r)
        for r in read_jsonl(ctx.artifact("matrices.jsonl"))
    }

    sft_path = ctx.artifact("sft.jsonl")
    export_sft(pairs, sft_path)

    rlvr_entries = [
        (problems[pid], matrices[pid], reports[pid])
        for pid in sorted(selected_ids)
        if pid in matrices
    ]
    rlvr_path = ctx.artifact("rlvr.jsonl")
    export_rlvr(rlvr_entries, rlvr_path)

    distill_path = ctx.artifact("distill.jsonl")
    export_distill([problems[pid] for pid in sorted(selected_ids)], distill_path)
    return [sft_path, rlvr_path, distill_path]


def stage_decontaminate(ctx: RunContext, benchmark_paths: tuple[Path, ...] | None = None) -> list[Path]:
    generated = [
        (r["problem_id"], r["statement"]) for r in read_jsonl(ctx.artifact("distill.jsonl"))
    ]
    paths = benchmark_paths if benchmark_paths is not None else ctx.config.benchmark_paths
    benchmarks = [(p.name, load_documents(p)) for p in paths]
    if not benchmarks:
        logger.warning("no benchmark corpora configured; report will be trivially clean")
    report = scan(generated, benchmarks)
    path = ctx.artifact("decontamination.json")
    write_json_atomic(path, report.to_record())
    logger.info("global max overlap %.4f over %d docs", report.global_max, len(generated))
    return [path]


_STAGE_FUNCS = {
    "extract": stage_extract,
    "build-graph": stage_build_graph,
    "sample": stage_sample,
    "generate": stage_generate,
    "assess": stage_assess,
    "curate": stage_curate,
    "export": stage_export,
    "decontaminate": stage_decontaminate,
}


def run_stage(config: RunConfig, stage: str, force: bool = False, **stage_kwargs) -> bool:
    """Run one stage under the run lock. Returns False for a no-op rerun."""
    if stage not in _STAGE_FUNCS:
        raise ValueError(f"unknown stage {stage!r}")
    with RunLock(config.run_dir):
        manifest = open_manifest(config.run_dir, config.run_id, config.config_hash(), force)
        if manifest.stage_complete(stage) and not force:
            logger.info("stage %s already complete; nothing to do", stage)
            return False
        for dependency in STAGE_DEPENDENCIES[stage]:
            require_stage(config.run_dir, manifest, dependency)
        ctx = RunContext(config=config, manifest=manifest)
        artifacts = _STAGE_FUNCS[stage](ctx, **stage_kwargs)
        # a forced rerun of an early stage invalidates everything after it
        position = STAGE_ORDER.index(stage)
        for later in STAGE_ORDER[position + 1 :]:
            manifest.stages.pop(later, None)
        mark_stage(config.run_dir, manifest, stage, artifacts)
        return True


def run_all(config: RunConfig, force: bool = False) -> None:
    """End-to-end run; completed stages are skipped, so it doubles as resume."""
    if force:
        with RunLock(config.run_dir):
            manifest = open_manifest(config.run_dir, config.run_id, config.config_hash(), True)
            manifest.stages.clear()
            save_manifest(config.run_dir, manifest)
    for stage in STAGE_ORDER:
        run_stage(config, stage, force=False)
