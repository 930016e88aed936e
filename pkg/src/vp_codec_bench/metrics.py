"""Native PSNR, the external metric runner protocol, and noise-floor estimation."""

from __future__ import annotations

import json
import math
import shlex
import subprocess
import tempfile
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .align import build_alignment_map, pair_captures
from .errors import (
    DimensionError,
    EmptyInputError,
    MetricParseError,
    RangeError,
    RunnerError,
)
from .log import get_logger
from .marker import MarkerGeometry, marker_rects
from .media import common_format, convert_format
from .models import FrameBuffer, QualityRecord, RegionMask

PSNR_CAP = 99.0
PLANES = {"y": 0, "cb": 1, "cr": 2}
PLANE_METRICS = {"y": "psnr", "cb": "psnr_cb", "cr": "psnr_cr"}

# declared score ranges of the perceptual metrics we know about
DEFAULT_RANGES: dict[str, tuple[float, float]] = {
    "vmaf": (0.0, 100.0),
    "cvvdp": (0.0, 10.0),
    "psnr": (0.0, PSNR_CAP),
}
# lower bound is not itself a valid score
OPEN_LOWER_BOUND = frozenset({"psnr"})


@dataclass(frozen=True)
class MetricRunner:
    """An external metric tool driven by a {ref} {dist} {out} command template."""

    name: str
    command: str
    score_range: tuple[float, float] | None = None

    @property
    def bounds(self) -> tuple[float, float] | None:
        return self.score_range or DEFAULT_RANGES.get(self.name)

    @property
    def open_lower_bound(self) -> bool:
        return self.score_range is None and self.name in OPEN_LOWER_BOUND

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "command": self.command,
            "range": list(self.score_range) if self.score_range else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> MetricRunner:
        rng = d.get("range")
        return cls(
            name=str(d["name"]),
            command=str(d["command"]),
            score_range=(float(rng[0]), float(rng[1])) if rng else None,
        )


def _pair_planes(
    ref: FrameBuffer, dist: FrameBuffer, plane: str,
) -> tuple[np.ndarray, np.ndarray, int]:
    """The chosen plane of both frames at their common format, plus its peak."""
    chroma, depth = common_format(ref.spec, dist.spec)
    ref_c = convert_format(ref, chroma, depth)
    dist_c = convert_format(dist, chroma, depth)
    idx = PLANES[plane]
    return ref_c.planes[idx], dist_c.planes[idx], ref_c.spec.peak


def _plane_mask(mask: RegionMask, shape: tuple[int, int], luma: tuple[int, int]) -> np.ndarray:
    full = mask.to_array(*luma)
    if shape == luma:
        return full
    h, w = shape
    # a subsampled sample counts only when its whole 2x2 luma footprint is included
    return full.reshape(h, 2, w, 2).all(axis=(1, 3))


def psnr_frame(
    ref: FrameBuffer,
    dist: FrameBuffer,
    mask: RegionMask | None = None,
    plane: str = "y",
    cap: float = PSNR_CAP,
) -> float:
    """PSNR in dB over the samples selected by mask; zero MSE returns cap."""
    if plane not in PLANES:
        raise ValueError(f"unknown plane {plane!r}")
    a, b, peak = _pair_planes(ref, dist, plane)
    include = _plane_mask(mask or RegionMask.full(), a.shape, (ref.spec.height, ref.spec.width))
    if not include.any():
        raise DimensionError("region mask selects no samples")
    diff = a.astype(np.float64)[include] - b.astype(np.float64)[include]
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return cap
    return min(cap, 10.0 * math.log10(peak * peak / mse))


def pool(scores: Sequence[float]) -> float:
    """Arithmetic mean."""
    if not scores:
        raise EmptyInputError("nothing to pool")
    return float(np.mean(np.asarray(scores, dtype=np.float64)))


def psnr_sequence(
    pairs: Sequence[tuple[FrameBuffer, FrameBuffer]],
    mask: RegionMask | None = None,
    plane: str = "y",
) -> QualityRecord:
    if not pairs:
        raise EmptyInputError("psnr_sequence needs at least one frame pair")
    mask = mask or RegionMask.full()
    per_frame = [psnr_frame(r, d, mask, plane) for r, d in pairs]
    return QualityRecord(
        metric_name=PLANE_METRICS[plane],
        per_frame=per_frame,
        pooled=pool(per_frame),
        region_mask=mask,
    )


def _runner_argv(runner: MetricRunner, values: dict[str, str]) -> list[str]:
    try:
        return [token.format_map(values) for token in shlex.split(runner.command)]
    except (KeyError, ValueError) as e:
        raise RunnerError(f"bad command template for {runner.name}: {e}") from e


def parse_runner_output(text: str, runner: MetricRunner) -> list[float]:
    """Per-frame scores from {"metric": ..., "frames": [{"score": n}, ...]}."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise MetricParseError(f"{runner.name}: output is not JSON: {e}") from e
    if not isinstance(doc, dict) or not isinstance(doc.get("frames"), list):
        raise MetricParseError(f"{runner.name}: output lacks a 'frames' list")
    scores = []
    for i, frame in enumerate(doc["frames"]):
        score = frame.get("score") if isinstance(frame, dict) else None
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            raise MetricParseError(f"{runner.name}: frame {i} has no numeric score")
        if not math.isfinite(score):
            raise MetricParseError(f"{runner.name}: frame {i} score is not finite")
        scores.append(float(score))
    if not scores:
        raise MetricParseError(f"{runner.name}: output has no frames")
    bounds = runner.bounds
    if bounds is not None:
        lo, hi = bounds
        open_low = runner.open_lower_bound
        opening = "(" if open_low else "["
        for i, s in enumerate(scores):
            if s > hi or s < lo or (open_low and s == lo):
                raise RangeError(
                    f"{runner.name}: frame {i} score {s} outside "
                    f"{opening}{lo:g}, {hi:g}]"
                )
    return scores


def run_external_metric(
    runner: MetricRunner,
    ref_path: str | Path,
    dist_path: str | Path,
    timeout: float | None = None,
) -> QualityRecord:
    logger = get_logger()
    with tempfile.TemporaryDirectory(prefix="vpcb_metric_") as tmp:
        out_path = Path(tmp) / f"{runner.name}.json"
        argv = _runner_argv(runner, {
            "ref": str(ref_path), "dist": str(dist_path), "out": str(out_path),
        })
        logger.debug("Running metric %s: %s", runner.name, shlex.join(argv))
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
        except FileNotFoundError as e:
            raise RunnerError(f"{runner.name}: runner not found: {argv[0]}", stderr=str(e)) from e
        except subprocess.TimeoutExpired as e:
            raise RunnerError(f"{runner.name}: runner timed out after {timeout}s") from e
        if proc.returncode != 0:
            raise RunnerError(
                f"{runner.name}: runner exited with status {proc.returncode}: "
                f"{proc.stderr.strip()[-500:]}",
                stderr=proc.stderr,
            )
        if not out_path.exists():
            raise MetricParseError(f"{runner.name}: runner wrote no output file")
        scores = parse_runner_output(out_path.read_text(), runner)
    return QualityRecord(metric_name=runner.name, per_frame=scores, pooled=pool(scores))


@dataclass
class NoiseFloor:
    """Order statistics of repeated captures scored against one reference."""

    max: float
    min: float
    range: float
    mean: float
    scores: list[float]

    def to_dict(self) -> dict:
        return {
            "max": self.max,
            "min": self.min,
            "range": self.range,
            "mean": self.mean,
            "scores": list(self.scores),
        }


def noise_floor_from_scores(scores: Sequence[float]) -> NoiseFloor:
    if not scores:
        raise EmptyInputError("no capture scores")
    hi, lo = max(scores), min(scores)
    return NoiseFloor(max=hi, min=lo, range=hi - lo, mean=pool(scores), scores=list(scores))


def noise_floor(
    repeat_captures: Sequence[list[FrameBuffer]],
    reference_capture: list[FrameBuffer],
    clip_id: int | None = None,
    geometry: MarkerGeometry | None = None,
    mask: RegionMask | None = None,
) -> NoiseFloor:
    """Score every capture against the reference capture with PSNR.

    With clip_id set, frames are paired through their markers and marker
    footprints are excluded; otherwise frames pair by index.
    """

    if len(repeat_captures) < 2:
        raise EmptyInputError(f"noise floor needs >= 2 captures, got {len(repeat_captures)}")
    if not reference_capture:
        raise EmptyInputError("reference capture has no frames")

    ref_map = None
    if clip_id is not None:
        geometry = geometry or MarkerGeometry()
        ref_map = build_alignment_map(reference_capture, clip_id, geometry)
        if mask is None:
            spec = reference_capture[0].spec
            mask = RegionMask.exclude(marker_rects(spec.width, spec.height, geometry).values())

    scores = []
    for capture in repeat_captures:
        if ref_map is not None:
            cap_map = build_alignment_map(capture, clip_id, geometry)
            pairs = pair_captures(ref_map, reference_capture, cap_map, capture)
        else:
            if len(capture) != len(reference_capture):
                raise DimensionError(
                    f"capture has {len(capture)} frames, reference {len(reference_capture)}"
                )
            pairs = list(zip(reference_capture, capture))
        scores.append(psnr_sequence(pairs, mask).pooled)
    return noise_floor_from_scores(scores)
