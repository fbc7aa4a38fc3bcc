"""Run configuration: one YAML file with env-var interpolation and a stable hash
that names the run."""

from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .graph import WeightMode
from .storage import canonical_dumps

DEFAULT_POOL_SIZE = os.cpu_count() or 1

_ENV_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


class ConfigError(ValueError):
    """Unreadable, incomplete, or out-of-range configuration."""


def _interpolate(value):
    if isinstance(value, str):
        def lookup(match: re.Match) -> str:
            name = match.group(1)
            if name not in os.environ:
                raise ConfigError(f"environment variable {name} referenced but not set")
            return os.environ[name]

        return _ENV_RE.sub(lookup, value)
    if isinstance(value, dict):
        return {k: _interpolate(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate(v) for v in value]
    return value


@dataclass(frozen=True)
class RunConfig:
    corpus_path: Path
    run_dir: Path
    backend: dict
    seed: int = 0
    alpha: float = 0.2
    epsilon: float = 1.0
    weight_mode: WeightMode = WeightMode.DIFFICULTY_AWARE
    max_steps: int = 6
    num_walks: int = 10
    shot_count: int = 8
    k: int = 8
    m: int = 8
    t: int = 20
    temperature: float = 0.6
    none_threshold: float = 0.5
    min_delta: float = 0.0
    time_limit_sec: float = 10.0
    memory_limit_bytes: int = 512 * 1024 * 1024
    pool_size: int = DEFAULT_POOL_SIZE
    in_flight_limit: int = 8
    runner_command: tuple[str, ...] = ("sandbox-runner",)
    benchmark_paths: tuple[Path, ...] = ()
    cache_enabled: bool = True

    def __post_init__(self):
        checks = [
            (0.0 <= self.alpha <= 1.0, f"alpha must be in [0,1], got {self.alpha}"),
            (self.epsilon > 0.0, f"epsilon must be positive, got {self.epsilon}"),
            (self.max_steps >= 0, f"max_steps must be >= 0, got {self.max_steps}"),
            (self.num_walks >= 1, f"num_walks must be >= 1, got {self.num_walks}"),
            (self.shot_count >= 1, f"shot_count must be >= 1, got {self.shot_count}"),
            (self.k >= 2, f"k must be >= 2, got {self.k}"),
            (self.m >= 2, f"m must be >= 2, got {self.m}"),
            (self.t >= 1, f"t must be >= 1, got {self.t}"),
            (self.temperature >= 0.0, f"temperature must be >= 0, got {self.temperature}"),
            (0.0 <= self.none_threshold <= 1.0, "none_threshold must be in [0,1]"),
            (0.0 <= self.min_delta <= 1.0, "min_delta must be in [0,1]"),
            (self.time_limit_sec > 0, "time_limit_sec must be positive"),
            (self.memory_limit_bytes > 0, "memory_limit_bytes must be positive"),
            (self.pool_size >= 1, "pool_size must be >= 1"),
            (self.in_flight_limit >= 1, "in_flight_limit must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        if self.backend.get("kind") not in ("mock", "http"):
            raise ConfigError(f"backend.kind must be 'mock' or 'http', got {self.backend.get('kind')!r}")

    @property
    def cache_dir(self) -> Path | None:
        return self.run_dir / "cache" if self.cache_enabled else None

    def hash_material(self) -> dict:
        """Everything that determines artifact bytes, nothing that names files.

        Paths, pool sizes, and concurrency limits are deliberately absent:
        moving a run or resizing its pools must not change its identity.
        """
        return {
            "seed": self.seed,
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "weight_mode": self.weight_mode.value,
            "max_steps": self.max_steps,
            "num_walks": self.num_walks,
            "shot_count": self.shot_count,
            "k": self.k,
            "m": self.m,
            "t": self.t,
            "temperature": self.temperature,
            "none_threshold": self.none_threshold,
            "min_delta": self.min_delta,
            "time_limit_sec": self.time_limit_sec,
            "memory_limit_bytes": self.memory_limit_bytes,
        }

    def config_hash(self) -> str:
        return hashlib.sha256(canonical_dumps(self.hash_material()).encode("utf-8")).hexdigest()

    @property
    def run_id(self) -> str:
        return self.config_hash()[:12]

    def override(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    raw = _interpolate(raw)

    paths = raw.get("paths", {})
    params = raw.get("params", {})
    execution = raw.get("execution", {})
    backend = raw.get("backend")
    if backend is None:
        raise ConfigError("config missing 'backend' section")
    for required in ("corpus", "run_dir"):
        if required not in paths:
            raise ConfigError(f"config missing paths.{required}")

    base = path.parent

    def resolve(p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else base / candidate

    if "script" in backend:
        backend = {**backend, "script": str(resolve(backend["script"]))}

    known_params = {
        "alpha", "epsilon", "weight_mode", "max_steps", "num_walks", "shot_count",
        "k", "m", "t", "temperature", "none_threshold", "min_delta",
    }
    unknown = set(params) - known_params
    if unknown:
        raise ConfigError(f"unknown params keys: {sorted(unknown)}")
    if "weight_mode" in params:
        try:
            params = {**params, "weight_mode": WeightMode(params["weight_mode"])}
        except ValueError:
            raise ConfigError(
                f"params.weight_mode must be one of {[m.value for m in WeightMode]}"
            ) from None

    known_execution = {
        "time_limit_sec", "memory_limit_bytes", "pool_size", "in_flight_limit",
        "runner_command", "cache_enabled",
    }
    unknown = set(execution) - known_execution
    if unknown:
        raise ConfigError(f"unknown execution keys: {sorted(unknown)}")
    if "runner_command" in execution:
        command = execution["runner_command"]
        if not isinstance(command, list) or not command:
            raise ConfigError("execution.runner_command must be a non-empty list")
        execution = {**execution, "runner_command": tuple(command)}

    try:
        return RunConfig(
            corpus_path=resolve(paths["corpus"]),
            run_dir=resolve(paths["run_dir"]),
            benchmark_paths=tuple(resolve(p) for p in paths.get("benchmarks", [])),
            backend=backend,
            seed=int(raw.get("seed", 0)),
            **params,
            **execution,
        )
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def backend_script_path(config: RunConfig) -> Path | None:
    """Mock script location; load_config already resolved it against the config dir."""
    script = config.backend.get("script")
    return Path(script) if script else None
