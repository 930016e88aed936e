"""Rate-quality curves, threshold queries and bitrate-savings tables."""

from __future__ import annotations

from collections.abc import Iterable, Sequence

import numpy as np

from .errors import ConsistencyError, EmptyInputError, RangeError
from .log import get_logger
from .models import (
    LadderPoint,
    QualityRecord,
    RateQualityCurve,
    SavingsCell,
    SavingsTable,
    gop_label,
)


def pareto_front(points: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Non-dominated (bitrate, quality) points, ascending in both coordinates."""
    ordered = sorted(set(points), key=lambda p: (p[0], -p[1]))
    front: list[tuple[float, float]] = []
    for bitrate, quality in ordered:
        if front and quality <= front[-1][1]:
            continue
        front.append((bitrate, quality))
    return front


def build_curve(
    records: Sequence[tuple[LadderPoint, QualityRecord]],
    mode: str = "direct",
) -> RateQualityCurve:
    if not records:
        raise EmptyInputError("build_curve needs at least one record")
    first_point, first_quality = records[0]
    codec, clip = first_point.config.codec_name, first_point.clip_name
    gop, metric = first_point.gop, first_quality.metric_name
    for point, quality in records[1:]:
        if quality.metric_name != metric:
            raise ConsistencyError(f"mixed metrics in one curve: {metric} and {quality.metric_name}")
        if (point.config.codec_name, point.clip_name) != (codec, clip):
            raise ConsistencyError(
                f"mixed ladder points in one curve: {codec}/{clip} and "
                f"{point.config.codec_name}/{point.clip_name}"
            )
        if gop_label(point.gop) != gop_label(gop):
            raise ConsistencyError(
                f"mixed GOP modes in one curve: {gop_label(gop)} and {gop_label(point.gop)}"
            )
    points = pareto_front((p.bitrate_mbps, q.pooled) for p, q in records)
    return RateQualityCurve(codec, clip, gop, metric, points, mode=mode)


def min_bitrate_at_quality(curve: RateQualityCurve, threshold: float) -> float | None:
    """Lowest bitrate reaching threshold, interpolated in log10(bitrate); None if unreachable."""
    if not curve.points:
        return None
    bitrates, qualities = np.asarray(curve.points, dtype=np.float64).T
    if threshold > qualities[-1]:
        return None
    idx = int(np.searchsorted(qualities, threshold))
    if idx == 0 or qualities[idx] == threshold:
        return float(bitrates[idx])
    value = 10.0 ** np.interp(threshold, qualities, np.log10(bitrates))
    # kept inside the bracketing points against log/exp rounding
    return float(np.clip(value, bitrates[idx - 1], bitrates[idx]))


def savings_ratio(reference_min: float, candidate_min: float) -> float:
    if reference_min <= 0 or candidate_min <= 0:
        raise RangeError(
            f"bitrates must be > 0, got reference {reference_min} and candidate {candidate_min}"
        )
    return reference_min / candidate_min


def average_ratio(ratios: Iterable[float | None]) -> float | None:
    """Arithmetic mean of the available ratios; None if there are none."""
    available = [r for r in ratios if r is not None]
    if not available:
        return None
    return sum(available) / len(available)


def savings_table_from_bitrates(
    min_bitrates: dict[str, dict[str, float | None]],
    reference_codec: str,
    threshold: float,
    clips: Sequence[str] | None = None,
    metric_name: str = "",
    gop: str = "na",
    mode: str = "direct",
) -> SavingsTable:
    """Savings table from per-codec, per-clip minimum bitrates (None = unreachable)."""
    logger = get_logger()
    if reference_codec not in min_bitrates:
        raise ConsistencyError(f"reference codec {reference_codec} has no results")
    if clips is None:
        clips = []
        for per_clip in min_bitrates.values():
            for clip in per_clip:
                if clip not in clips:
                    clips.append(clip)

    reference = min_bitrates[reference_codec]
    included: list[str] = []
    for clip in clips:
        if reference.get(clip) is None:
            logger.warning(
                "Reference codec %s does not reach %g on %s; clip excluded",
                reference_codec, threshold, clip,
            )
            continue
        included.append(clip)

    table = SavingsTable(
        reference_codec=reference_codec,
        threshold=threshold,
        metric_name=metric_name,
        gop=gop,
        mode=mode,
        clips=included,
        reference_bitrates={c: reference[c] for c in included},
    )
    for codec, per_clip in min_bitrates.items():
        ratios = []
        for clip in included:
            bitrate = per_clip.get(clip)
            ratio = savings_ratio(reference[clip], bitrate) if bitrate is not None else None
            table.rows.append(SavingsCell(codec, clip, bitrate, ratio))
            ratios.append(ratio)
        table.averages[codec] = average_ratio(ratios)
    return table


def savings_table(
    curves: Sequence[RateQualityCurve],
    reference_codec: str,
    threshold: float,
    clips: Sequence[str] | None = None,
) -> SavingsTable:
    """One table over curves sharing a metric and mode; one curve per codec and clip."""
    if not curves:
        raise EmptyInputError("savings_table needs at least one curve")
    metric, mode = curves[0].metric_name, curves[0].mode
    gops = sorted({gop_label(c.gop) for c in curves if c.gop is not None})
    min_bitrates: dict[str, dict[str, float | None]] = {}
    for curve in curves:
        if curve.metric_name != metric:
            raise ConsistencyError(f"mixed metrics: {metric} and {curve.metric_name}")
        if curve.mode != mode:
            raise ConsistencyError(f"mixed modes: {mode} and {curve.mode}")
        per_clip = min_bitrates.setdefault(curve.codec_name, {})
        if curve.clip_name in per_clip:
            raise ConsistencyError(
                f"two curves for {curve.codec_name} on {curve.clip_name}"
            )
        per_clip[curve.clip_name] = min_bitrate_at_quality(curve, threshold)
    return savings_table_from_bitrates(
        min_bitrates, reference_codec, threshold, clips,
        metric_name=metric, gop=",".join(gops) or "na", mode=mode,
    )
