"""Run manifest: which stages completed and the exact bytes they produced.

The manifest carries no timestamps; two runs of the same config over the same
inputs produce byte-identical manifests, which is what the golden-file and
crash-resume tests lean on.
"""

from __future__ import annotations

import fcntl
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .storage import read_json, sha256_file, write_json_atomic

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
LOCK_NAME = ".run.lock"

STAGE_ORDER = (
    "extract",
    "build-graph",
    "sample",
    "generate",
    "assess",
    "curate",
    "export",
    "decontaminate",
)


class StageError(RuntimeError):
    """Stage precondition violated: missing prior stage or corrupted artifacts."""


@dataclass
class RunManifest:
    run_id: str
    config_hash: str
    stages: dict[str, dict[str, str]] = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "run_id": self.run_id,
            "config_hash": self.config_hash,
            "stages": self.stages,
        }

    @classmethod
    def from_record(cls, record: dict) -> "RunManifest":
        return cls(
            run_id=record["run_id"],
            config_hash=record["config_hash"],
            stages=record.get("stages", {}),
        )

    def stage_complete(self, stage: str) -> bool:
        return stage in self.stages


def manifest_path(run_dir: Path) -> Path:
    return run_dir / MANIFEST_NAME


def load_manifest(run_dir: Path) -> RunManifest | None:
    path = manifest_path(run_dir)
    if not path.exists():
        return None
    return RunManifest.from_record(read_json(path))


def save_manifest(run_dir: Path, manifest: RunManifest) -> None:
    write_json_atomic(manifest_path(run_dir), manifest.to_record())


def open_manifest(run_dir: Path, run_id: str, config_hash: str, force: bool) -> RunManifest:
    """Load or create the manifest, refusing to mix configs in one run directory."""
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(run_dir)
    if manifest is None:
        return RunManifest(run_id=run_id, config_hash=config_hash)
    if manifest.config_hash != config_hash:
        if not force:
            raise StageError(
                f"run directory {run_dir} belongs to config {manifest.config_hash[:12]}, "
                f"current config is {config_hash[:12]}; pass --force to restart"
            )
        logger.warning("config hash changed; --force discards previous progress")
        return RunManifest(run_id=run_id, config_hash=config_hash)
    return manifest


def mark_stage(run_dir: Path, manifest: RunManifest, stage: str, artifacts: list[Path]) -> None:
    manifest.stages[stage] = {p.name: sha256_file(p) for p in sorted(artifacts)}
    save_manifest(run_dir, manifest)


def require_stage(run_dir: Path, manifest: RunManifest, stage: str) -> None:
    """Precondition gate: the stage must be complete and its artifacts unmodified."""
    if not manifest.stage_complete(stage):
        raise StageError(f"stage {stage} incomplete; run it first")
    for name, expected in manifest.stages[stage].items():
        path = run_dir / name
        if not path.exists():
            raise StageError(f"stage {stage} artifact missing: {name}")
        actual = sha256_file(path)
        if actual != expected:
            raise StageError(
                f"stage {stage} artifact {name} modified since completion "
                f"(expected {expected[:12]}, found {actual[:12]})"
            )


class RunLock:
    """One pipeline process per run directory, enforced via an advisory file lock."""

    def __init__(self, run_dir: Path):
        run_dir.mkdir(parents=True, exist_ok=True)
        self._path = run_dir / LOCK_NAME
        self._handle = None

    def __enter__(self) -> "RunLock":
        self._handle = open(self._path, "w")
        try:
            fcntl.flock(self._handle, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            self._handle.close()
            raise StageError(f"another run holds the lock on {self._path.parent}") from None
        return self

    def __exit__(self, *exc_info) -> None:
        if self._handle is not None:
            fcntl.flock(self._handle, fcntl.LOCK_UN)
            self._handle.close()
            self._handle = None
