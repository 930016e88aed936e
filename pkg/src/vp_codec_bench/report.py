"""Deterministic report generation: savings CSV, JSON, SVG rate-quality plots, Markdown."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

from .analysis import savings_table
from .errors import ConsistencyError, EmptyInputError, ReportWriteError
from .log import get_logger
from .models import RateQualityCurve, SavingsTable, gop_label
from .store import ExperimentStore

CSV_HEADER = ("codec", "clip", "gop", "metric", "threshold", "min_bitrate_mbps", "savings_ratio")
NA = "N/A"

SVG_WIDTH = 640
SVG_HEIGHT = 400
_MARGIN = {"left": 64, "right": 160, "top": 32, "bottom": 48}
_PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


@dataclass
class ReportOutput:
    out_dir: Path
    manifest_hash: str
    files: list[Path] = field(default_factory=list)
    tables: list[SavingsTable] = field(default_factory=list)


def _fmt(value: float | None, spec: str = ".4f") -> str:
    return NA if value is None else format(value, spec)


def latest_curves(store: ExperimentStore, manifest_hash: str) -> list[RateQualityCurve]:
    """Most recent curve per (mode, clip, codec, GOP, metric), sorted."""
    latest: dict[tuple, RateQualityCurve] = {}
    for record in store.records("curve", manifest_hash):
        curve = RateQualityCurve.from_dict(record["data"])
        ident = (curve.mode, curve.clip_name, curve.codec_name, gop_label(curve.gop), curve.metric_name)
        latest[ident] = curve
    return [latest[k] for k in sorted(latest)]


def _curve_label(curve: RateQualityCurve) -> str:
    return curve.codec_name if curve.gop is None else f"{curve.codec_name} {gop_label(curve.gop)}"


def build_tables(
    curves: list[RateQualityCurve],
    reference_codec: str,
    threshold: float,
    metric: str,
) -> list[SavingsTable]:
    """One table per mode and GOP; GOP-free codecs appear in every GOP table."""
    logger = get_logger()
    tables: list[SavingsTable] = []
    chosen = [c for c in curves if c.metric_name == metric]
    for mode in sorted({c.mode for c in chosen}):
        in_mode = [c for c in chosen if c.mode == mode]
        gop_free = [c for c in in_mode if c.gop is None]
        labels = sorted({gop_label(c.gop) for c in in_mode if c.gop is not None})
        groups = [
            [c for c in in_mode if c.gop is not None and gop_label(c.gop) == label] + gop_free
            for label in labels
        ] or [gop_free]
        for group in groups:
            group = sorted(group, key=lambda c: (c.codec_name, c.clip_name))
            clips = sorted({c.clip_name for c in group})
            try:
                tables.append(savings_table(group, reference_codec, threshold, clips))
            except ConsistencyError as e:
                logger.warning("Skipping %s savings table: %s", mode, e)
    return tables


def savings_csv(tables: list[SavingsTable]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for table in tables:
        for row in table.rows:
            writer.writerow([
                row.codec, row.clip, table.gop, table.metric_name, f"{table.threshold:g}",
                _fmt(row.min_bitrate), _fmt(row.ratio),
            ])
    return buf.getvalue()


def _decade_range(values: list[float]) -> tuple[int, int]:
    lo = math.floor(math.log10(min(values)))
    hi = math.ceil(math.log10(max(values)))
    return lo, hi if hi > lo else lo + 1


def render_svg(curves: list[RateQualityCurve], title: str, threshold: float | None = None) -> str:
    """Rate-quality plot: log10 bitrate on x, one polyline per curve."""
    if not curves:
        raise EmptyInputError("no curves to plot")
    bitrates = [b for c in curves for b, _ in c.points]
    qualities = [q for c in curves for _, q in c.points]
    if threshold is not None:
        qualities.append(threshold)
    x_lo, x_hi = _decade_range(bitrates)
    y_lo, y_hi = min(qualities), max(qualities)
    if y_hi - y_lo < 1e-9:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = (y_hi - y_lo) * 0.05
    y_lo, y_hi = y_lo - pad, y_hi + pad

    left, top = _MARGIN["left"], _MARGIN["top"]
    plot_w = SVG_WIDTH - _MARGIN["left"] - _MARGIN["right"]
    plot_h = SVG_HEIGHT - _MARGIN["top"] - _MARGIN["bottom"]

    def sx(bitrate: float) -> float:
        return left + (math.log10(bitrate) - x_lo) / (x_hi - x_lo) * plot_w

    def sy(quality: float) -> float:
        return top + (y_hi - quality) / (y_hi - y_lo) * plot_h

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" '
        f'viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>',
        f'<text x="{left}" y="{top - 12}" font-size="13">{escape(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>',
    ]
    for decade in range(x_lo, x_hi + 1):
        x = sx(10.0 ** decade)
        lines.append(
            f'<line x1="{x:.2f}" y1="{top}" x2="{x:.2f}" y2="{top + plot_h}" stroke="#dddddd"/>'
        )
        lines.append(
            f'<text x="{x:.2f}" y="{top + plot_h + 16}" text-anchor="middle">{10.0 ** decade:g}</text>'
        )
    for i in range(5):
        q = y_lo + (y_hi - y_lo) * i / 4
        y = sy(q)
        lines.append(
            f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">{q:.1f}</text>'
        )
    lines.append(
        f'<text x="{left + plot_w / 2:.2f}" y="{SVG_HEIGHT - 10}" text-anchor="middle">'
        f'Bitrate (Mb/s, log scale)</text>'
    )
    lines.append(
        f'<text x="14" y="{top + plot_h / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {top + plot_h / 2:.2f})">{escape(curves[0].metric_name)}</text>'
    )
    if threshold is not None:
        y = sy(threshold)
        lines.append(
            f'<line x1="{left}" y1="{y:.2f}" x2="{left + plot_w}" y2="{y:.2f}" '
            f'stroke="#888888" stroke-dasharray="4 3"/>'
        )

    for i, curve in enumerate(curves):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{sx(b):.2f},{sy(q):.2f}" for b, q in curve.points)
        lines.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>'
        )
        for b, q in curve.points:
            lines.append(f'<circle cx="{sx(b):.2f}" cy="{sy(q):.2f}" r="2.5" fill="{color}"/>')
        ly = top + 12 + i * 16
        lx = left + plot_w + 12
        lines.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        lines.append(f'<text x="{lx + 24}" y="{ly}">{escape(_curve_label(curve))}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _format_table(table: SavingsTable) -> str:
    lines = [
        f"### {table.mode}, GOP {table.gop}: {table.metric_name} >= {table.threshold:g} "
        f"vs {table.reference_codec}",
        "",
    ]
    if not table.clips:
        lines.append("No clip reaches the threshold with the reference codec.")
        return "\n".join(lines)
    lines.append("| Codec | " + " | ".join(table.clips) + " | Average |")
    lines.append("|-------|" + "|".join("---" for _ in table.clips) + "|---|")
    for codec in table.codecs():
        cells = []
        for clip in table.clips:
            cell = table.cell(codec, clip)
            if cell is None or cell.ratio is None:
                cells.append(NA)
            else:
                cells.append(f"{cell.ratio:.2f}x ({cell.min_bitrate:.1f})")
        avg = table.averages.get(codec)
        cells.append(NA if avg is None else f"{avg:.2f}x")
        lines.append(f"| {codec} | " + " | ".join(cells) + " |")
    return "\n".join(lines)


def _format_speed_section(speeds: list[dict]) -> str:
    lines = ["## Encoding speed", "", "| Codec | Clip | GOP | Rate param | FPS |", "|---|---|---|---|---|"]
    for s in speeds:
        fps = s.get("encode_fps")
        lines.append(
            f"| {s['codec']} | {s['clip']} | {s['gop']} | {s['rate_param']} | "
            f"{NA if fps is None else f'{fps:.1f}'} |"
        )
    return "\n".join(lines)


def summary_markdown(
    tables: list[SavingsTable],
    speeds: list[dict],
    failures: list[dict],
    manifest_hash: str,
) -> str:
    lines = ["# Codec savings report", "", f"Manifest: `{manifest_hash}`", ""]
    lines.append("Cells show savings ratio and minimum bitrate in Mb/s.")
    lines.append("")
    for table in tables:
        lines.append(_format_table(table))
        lines.append("")
    if speeds:
        lines.append(_format_speed_section(speeds))
        lines.append("")
    if failures:
        lines.append("## Failures")
        lines.append("")
        for f in failures:
            lines.append(
                f"- {f['stage']}: {f['clip']} {f.get('codec') or ''} {f.get('gop') or ''} "
                f"rp={f.get('rate_param')}: {f['error']}"
            )
        lines.append("")
    return "\n".join(lines)


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            f.write(text)
    except OSError as e:
        raise ReportWriteError(f"cannot write {path}: {e}", path=str(path)) from e
    return path


def emit_report(
    store: ExperimentStore,
    out_dir: str | Path,
    threshold: float | None = None,
    reference_codec: str | None = None,
    metric: str | None = None,
) -> ReportOutput:
    """Write savings CSVs, report.json, SVG plots and summary.md for the latest manifest."""
    logger = get_logger()
    out_dir = Path(out_dir)
    hashes = store.manifest_hashes()
    manifest_hash = store.latest_manifest_hash()
    if manifest_hash is None:
        raise EmptyInputError(f"store {store.path} is empty")
    if len(hashes) > 1:
        logger.warning(
            "Store holds %d manifest hashes; reporting only %s", len(hashes), manifest_hash,
        )

    experiment = store.get("experiment", "experiment", manifest_hash)
    defaults = experiment["data"] if experiment else {}
    threshold = threshold if threshold is not None else float(defaults.get("threshold", 90.0))
    reference_codec = reference_codec or defaults.get("reference_codec", "")
    metric = metric or defaults.get("savings_metric", "psnr")

    curves = latest_curves(store, manifest_hash)
    if not curves:
        raise EmptyInputError("no completed rate-quality curves in the store")

    tables = build_tables(curves, reference_codec, threshold, metric)
    result = ReportOutput(out_dir, manifest_hash, tables=tables)
    logger.info("Writing report for manifest %s to %s", manifest_hash, out_dir)

    for mode in sorted({c.mode for c in curves}):
        mode_tables = [t for t in tables if t.mode == mode]
        result.files.append(_write(out_dir / f"savings_{mode}.csv", savings_csv(mode_tables)))

    groups: dict[tuple[str, str, str], list[RateQualityCurve]] = {}
    for curve in curves:
        groups.setdefault((curve.mode, curve.clip_name, curve.metric_name), []).append(curve)
    for (mode, clip, metric_name), group in sorted(groups.items()):
        group = sorted(group, key=lambda c: (c.codec_name, gop_label(c.gop)))
        svg = render_svg(
            group, f"{clip} ({mode}): {metric_name}",
            threshold if metric_name == metric else None,
        )
        result.files.append(_write(out_dir / f"rq_{mode}_{clip}_{metric_name}.svg", svg))

    speeds = sorted(
        ({**r["data"], "encode_fps": r["volatile"].get("encode_fps")}
         for r in store.records("speed", manifest_hash)),
        key=lambda s: (s["codec"], s["clip"], s["gop"]),
    )
    failures = [r["data"] for r in store.records("failure", manifest_hash)]

    report = {
        "manifest_hash": manifest_hash,
        "threshold": threshold,
        "reference_codec": reference_codec,
        "metric": metric,
        "curves": [c.to_dict() for c in curves],
        "tables": [t.to_dict() for t in tables],
        "speed": [{k: v for k, v in s.items() if k != "encode_fps"} for s in speeds],
        "failures": failures,
    }
    result.files.append(_write(out_dir / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n"))
    result.files.append(_write(
        out_dir / "summary.md", summary_markdown(tables, speeds, failures, manifest_hash),
    ))
    logger.info("Report: %d files", len(result.files))
    return result
