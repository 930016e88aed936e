"""Run-time configuration that does not change results."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import UsageError
from .manifest import DIRECT, ExperimentManifest


@dataclass(frozen=True)
class Config:
    """Frozen configuration for a pipeline run."""

    workers: int | None = None  # None: take the manifest's value
    verbose: bool = False  # debug logging in pool workers too
    modes: tuple[str, ...] = ()  # restrict to these channel modes; empty = all declared
    output_dir: str = ""  # override the manifest's output_dir

    def effective_workers(self, manifest: ExperimentManifest) -> int:
        workers = self.workers if self.workers is not None else manifest.workers
        if workers < 1:
            raise UsageError(f"workers must be >= 1, got {workers}")
        return workers

    def effective_modes(self, manifest: ExperimentManifest) -> list[str]:
        if not self.modes:
            return list(manifest.channels)
        for mode in self.modes:
            if mode != DIRECT and mode not in manifest.channel_profiles:
                raise UsageError(f"mode {mode!r} is neither 'direct' nor a declared channel profile")
        return list(self.modes)

    def effective_output_dir(self, manifest: ExperimentManifest) -> Path:
        return Path(self.output_dir) if self.output_dir else manifest.output_dir
