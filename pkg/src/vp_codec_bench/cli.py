"""CLI entry point using Click."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .align import build_alignment_map, select_entries
from .channel import calibrate_noise_for_floor, simulate_capture
from .codec import build_jnd_ladder, encode
from .config import Config
from .errors import EXIT_FAILURE, EXIT_USAGE, VpcbError
from .log import get_logger, setup_logging
from .manifest import load_manifest
from .marker import MarkerGeometry, marker_rects
from .media import clip_spec, read_y4m_file, write_y4m_file
from .metrics import PLANE_METRICS, MetricRunner, noise_floor, psnr_sequence, run_external_metric
from .models import (
    Backend,
    ChannelConfig,
    Chroma,
    ClipDescriptor,
    ClipRole,
    CodecConfig,
    GopMode,
    PairPolicy,
    Rect,
    RegionMask,
    Resample,
    VideoSpec,
    parse_fraction,
)
from .pipeline import embed_clip_markers, run_experiment, store_path_for
from .report import emit_report
from .store import ExperimentStore
from .synth import KINDS, generate_synthetic_clip

_PLANE_OF = {metric: plane for plane, metric in PLANE_METRICS.items()}


class VpcbGroup(click.Group):
    """Maps errors to exit codes: 1 usage, 2 partial, 3 failure."""

    def main(self, args=None, prog_name=None, **extra):
        extra.pop("standalone_mode", None)
        try:
            rv = super().main(args=args, prog_name=prog_name, standalone_mode=False, **extra)
        except click.exceptions.Abort:
            click.echo("\nAborted.", err=True)
            sys.exit(EXIT_USAGE)
        except click.ClickException as e:
            e.show()
            sys.exit(EXIT_USAGE)
        except VpcbError as e:
            click.echo(f"Error: {e}", err=True)
            sys.exit(e.exit_code)
        except KeyboardInterrupt:
            click.echo("\nAborted.", err=True)
            sys.exit(EXIT_USAGE)
        except Exception as e:
            click.echo(f"Unexpected error: {e}", err=True)
            sys.exit(EXIT_FAILURE)
        sys.exit(rv if isinstance(rv, int) else 0)


def _geometry(marker_size: int, inset: int) -> MarkerGeometry:
    return MarkerGeometry.from_pixels(marker_size, inset)


def _parse_rect(text: str | None) -> Rect | None:
    if not text:
        return None
    try:
        return Rect.from_list([int(v) for v in text.split(",")])
    except ValueError as e:
        raise click.BadParameter(f"expected x,y,w,h, got {text!r}") from e


def _parse_rate_param(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return text


def _echo_json(data) -> None:
    click.echo(json.dumps(data, indent=2, sort_keys=True))


@click.group(cls=VpcbGroup)
@click.option("--verbose", is_flag=True, default=False, help="Enable debug logging.")
@click.pass_context
def main(ctx: click.Context, verbose: bool) -> None:
    """Codec evaluation harness for LED-wall virtual production."""
    setup_logging(verbose)
    ctx.obj = {"verbose": verbose}


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(dir_okay=False),
    help="Experiment manifest (YAML).")
@click.option("--mode", "modes", multiple=True,
    help="Restrict to these channel modes ('direct' or a profile name).")
@click.option("--workers", default=None, type=int, envvar="VPCB_WORKERS",
    help="Parallel tuple workers (overrides the manifest).")
@click.option("--output-dir", default="", help="Override the manifest's output directory.")
@click.pass_context
def run(ctx: click.Context, manifest_path: str, modes: tuple[str, ...], workers: int | None,
        output_dir: str) -> int:
    """Run the full experiment described by a manifest."""
    manifest = load_manifest(manifest_path)
    verbose = bool(ctx.obj and ctx.obj.get("verbose"))
    config = Config(workers=workers, verbose=verbose, modes=modes, output_dir=output_dir)
    summary = run_experiment(manifest, config)
    click.echo(f"Results: {summary.store_path}")
    click.echo(
        f"{summary.tuples_completed} completed, {summary.tuples_skipped} skipped, "
        f"{len(summary.failures)} failures"
    )
    for failure in summary.failures:
        click.echo(
            f"  {failure['stage']}: {failure['clip']} {failure.get('codec') or ''} "
            f"rp={failure.get('rate_param')}: {failure['error']}",
            err=True,
        )
    return summary.exit_code


@main.command()
@click.option("--store", "store_path", default="", help="Experiment store (results.jsonl).")
@click.option("--manifest", "manifest_path", default="",
    help="Manifest whose output directory holds the store.")
@click.option("--out", "out_dir", default="", help="Report directory (default: <store dir>/report).")
@click.option("--threshold", default=None, type=float, help="Quality threshold for savings.")
@click.option("--reference", "reference_codec", default=None, help="Reference codec.")
@click.option("--metric", default=None, help="Metric the savings are computed on.")
def report(store_path: str, manifest_path: str, out_dir: str, threshold: float | None,
           reference_codec: str | None, metric: str | None) -> None:
    """Emit savings CSVs, report.json, SVG plots and summary.md from a store."""
    if bool(store_path) == bool(manifest_path):
        raise click.UsageError("give exactly one of --store or --manifest")
    if manifest_path:
        path = store_path_for(load_manifest(manifest_path).output_dir)
    else:
        path = Path(store_path)
    if not path.exists():
        raise click.UsageError(f"store not found: {path}")
    result = emit_report(
        ExperimentStore(path), Path(out_dir) if out_dir else path.parent / "report",
        threshold=threshold, reference_codec=reference_codec, metric=metric,
    )
    click.echo(f"Report written to: {result.out_dir}")


@main.command()
@click.option("--kind", required=True, type=click.Choice(KINDS), help="Synthetic content kind.")
@click.option("--output", required=True, type=click.Path(dir_okay=False), help="Output Y4M.")
@click.option("--width", default=256, type=int)
@click.option("--height", default=256, type=int)
@click.option("--frames", default=30, type=int)
@click.option("--fps", default="30/1")
@click.option("--bit-depth", default=8, type=int)
@click.option("--chroma", default="420", type=click.Choice(["420", "444"]))
@click.option("--seed", default=0, type=int)
def synth(kind: str, output: str, width: int, height: int, frames: int, fps: str,
          bit_depth: int, chroma: str, seed: int) -> None:
    """Generate a seeded synthetic test clip."""
    spec = VideoSpec(width, height, bit_depth, Chroma(chroma), parse_fraction(fps), frames)
    clip = generate_synthetic_clip(kind, spec, seed)
    write_y4m_file(output, spec, clip)
    click.echo(f"Wrote {len(clip)} frames to {output}")


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output", required=True, type=click.Path(dir_okay=False))
@click.option("--clip-id", required=True, type=int, help="16-bit clip identifier.")
@click.option("--marker-size", default=90, type=int, help="Marker edge in pixels.")
@click.option("--inset", default=2, type=int, help="Marker inset from the region edge.")
@click.option("--region", default="", help="Also mark this x,y,w,h region (zoom mode).")
def mark(input_path: str, output: str, clip_id: int, marker_size: int, inset: int, region: str) -> None:
    """Burn frame-ID markers into every frame of a clip."""
    spec, frames = read_y4m_file(input_path)
    regions: list[Rect | None] = [None]
    roi = _parse_rect(region)
    if roi is not None:
        regions.append(roi)
    marked = embed_clip_markers(frames, clip_id, _geometry(marker_size, inset), regions)
    write_y4m_file(output, spec, marked)
    click.echo(f"Marked {len(marked)} frames with clip id {clip_id}")


@main.command("encode-ladder")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--codec", "codec_name", default="toy", help="Codec name ('toy' or one from --manifest).")
@click.option("--manifest", "manifest_path", default="", help="Manifest declaring the codec.")
@click.option("--rate-params", default="", help="Comma-separated rate parameters.")
@click.option("--floor", default=None, type=float, help="JND ladder quality floor (PSNR dB).")
@click.option("--step", default=6.0, type=float, help="JND step.")
@click.option("--points", default=5, type=int, help="JND ladder points.")
@click.option("--gop", default="all_intra", help="GOP mode: all_intra, single_intra, frames:N, seconds:S.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def encode_ladder(input_path: str, codec_name: str, manifest_path: str, rate_params: str,
                  floor: float | None, step: float, points: int, gop: str, out_dir: str) -> None:
    """Encode a clip over a ladder and print bitrate and PSNR per point as JSON."""
    if bool(rate_params) == (floor is not None):
        raise click.UsageError("give exactly one of --rate-params or --floor")
    if manifest_path:
        config = load_manifest(manifest_path).codec(codec_name.lower())
    elif codec_name.lower() == "toy":
        config = CodecConfig("toy", backend=Backend.TOY)
    else:
        raise click.UsageError(f"codec {codec_name!r} needs --manifest")

    spec, frames = read_y4m_file(input_path)
    clip = ClipDescriptor(0, Path(input_path).stem, spec, ClipRole.REF, str(Path(input_path).resolve()))
    gop_mode = None if config.gop_free else GopMode.parse(gop)
    out = Path(out_dir)
    points_out: dict = {}

    def measure(rp):
        if rp not in points_out:
            point = encode(clip, config, rp, gop_mode, out_dir=out)
            _, decoded = read_y4m_file(point.decoded_clip.storage_path)
            quality = psnr_sequence(list(zip(frames, decoded))).pooled
            points_out[rp] = {
                "rate_param": rp,
                "bitrate_mbps": point.bitrate_mbps,
                "encoded_bytes": point.encoded_bytes,
                "psnr": quality,
            }
        return points_out[rp]["psnr"]

    if rate_params:
        ladder = [_parse_rate_param(v) for v in rate_params.split(",")]
        for rp in ladder:
            config.check_rate_param(rp)
    else:
        ladder = build_jnd_ladder(clip, config, measure, step, floor, points)
    for rp in ladder:
        measure(rp)
    _echo_json({
        "codec": config.codec_name,
        "gop": gop_mode.label if gop_mode else "na",
        "ladder": ladder,
        "points": [points_out[rp] for rp in ladder],
    })


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output", required=True, type=click.Path(dir_okay=False))
@click.option("--manifest", "manifest_path", default="", help="Take the channel from this manifest.")
@click.option("--profile", default="", help="Channel profile name in the manifest.")
@click.option("--noise-sigma", default=None, type=float, help="Additive noise sigma (code values).")
@click.option("--floor-psnr", default=None, type=float, help="Calibrate noise to this PSNR floor.")
@click.option("--duplicate-prob", default=0.0, type=float)
@click.option("--skip-prob", default=0.0, type=float)
@click.option("--scale", default="", help="Display-grid scale, e.g. 1/2.")
@click.option("--roi", default="", help="Zoom-mode crop x,y,w,h.")
@click.option("--seed", default=0, type=int)
@click.option("--capture-key", default="", help="Noise substream key for this capture.")
def simulate(input_path: str, output: str, manifest_path: str, profile: str,
             noise_sigma: float | None, floor_psnr: float | None, duplicate_prob: float,
             skip_prob: float, scale: str, roi: str, seed: int, capture_key: str) -> None:
    """Pass a clip through the simulated LED wall and camera."""
    spec, frames = read_y4m_file(input_path)
    if manifest_path:
        if not profile:
            raise click.UsageError("--manifest needs --profile")
        profiles = load_manifest(manifest_path).channel_profiles
        if profile not in profiles:
            raise click.UsageError(f"profile {profile!r} is not declared in the manifest")
        cfg = profiles[profile].with_seed(seed) if seed else profiles[profile]
    else:
        if noise_sigma is not None and floor_psnr is not None:
            raise click.UsageError("give --noise-sigma or --floor-psnr, not both")
        sigma = noise_sigma or 0.0
        if floor_psnr is not None:
            sigma = calibrate_noise_for_floor(floor_psnr, spec.bit_depth)
        cfg = ChannelConfig(
            resample=Resample(parse_fraction(scale)) if scale else None,
            noise_sigma=sigma,
            duplicate_prob=duplicate_prob,
            skip_prob=skip_prob,
            seed=seed,
            roi=_parse_rect(roi),
        )
    capture = simulate_capture(frames, cfg, capture_key)
    write_y4m_file(output, clip_spec(capture.frames, spec.frame_rate), capture.frames)
    click.echo(f"Captured {len(capture.frames)} frames from {len(frames)} source frames")


@main.command()
@click.option("--captured", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--clip-id", required=True, type=int)
@click.option("--marker-size", default=90, type=int)
@click.option("--inset", default=2, type=int)
@click.option("--policy", default="first_of_dup", type=click.Choice([p.value for p in PairPolicy]),
    help="Pairing policy; strict fails on duplicated or skipped frames.")
def align(captured: str, clip_id: int, marker_size: int, inset: int, policy: str) -> None:
    """Decode markers of a capture and print its alignment map and pairing coverage as JSON."""
    _, frames = read_y4m_file(captured)
    amap = build_alignment_map(frames, clip_id, _geometry(marker_size, inset))
    data = amap.to_dict()
    data["policy"] = policy
    data["genlock_loss"] = amap.has_genlock_loss
    sources = [e.source_index for e in select_entries(amap, PairPolicy(policy))]
    data["paired"] = len(sources)
    data["coverage"] = len(sources) / (sources[-1] - sources[0] + 1) if sources else 0.0
    _echo_json(data)


@main.command()
@click.option("--metric", default="psnr", help="psnr, psnr_cb, psnr_cr, or a runner name.")
@click.option("--ref", "ref_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--dist", "dist_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mask", default="full", type=click.Choice(["full", "exclude_markers"]))
@click.option("--marker-size", default=90, type=int)
@click.option("--inset", default=2, type=int)
@click.option("--runner", default="", help="Command template with {ref} {dist} {out}.")
@click.option("--per-frame", is_flag=True, default=False, help="Print per-frame scores as JSON.")
def score(metric: str, ref_path: str, dist_path: str, mask: str, marker_size: int, inset: int,
          runner: str, per_frame: bool) -> None:
    """Score a distorted clip against a reference, frame by frame."""
    if runner:
        record = run_external_metric(MetricRunner(metric, runner), ref_path, dist_path)
    elif metric in _PLANE_OF:
        ref_spec, refs = read_y4m_file(ref_path)
        _, dists = read_y4m_file(dist_path)
        if len(refs) != len(dists):
            raise click.UsageError(f"frame counts differ: {len(refs)} vs {len(dists)}")
        region = RegionMask.full()
        if mask == "exclude_markers":
            rects = marker_rects(ref_spec.width, ref_spec.height, _geometry(marker_size, inset))
            region = RegionMask.exclude(rects.values())
        record = psnr_sequence(list(zip(refs, dists)), region, _PLANE_OF[metric])
    else:
        raise click.UsageError(f"metric {metric!r} needs --runner")
    if per_frame:
        _echo_json({"metric": record.metric_name, "pooled": record.pooled, "per_frame": record.per_frame})
    else:
        click.echo(str(round(record.pooled, 4)))


@main.command("noise-floor")
@click.option("--reference", required=True, type=click.Path(exists=True, dir_okay=False),
    help="Reference capture.")
@click.option("--capture", "captures", multiple=True, required=True,
    type=click.Path(exists=True, dir_okay=False), help="Repeated capture (give at least two).")
@click.option("--clip-id", default=None, type=int, help="Align through markers of this clip.")
@click.option("--marker-size", default=90, type=int)
@click.option("--inset", default=2, type=int)
def noise_floor_cmd(reference: str, captures: tuple[str, ...], clip_id: int | None,
                    marker_size: int, inset: int) -> None:
    """PSNR order statistics of repeated captures against one reference capture."""
    logger = get_logger()
    _, ref_frames = read_y4m_file(reference)
    repeats = [read_y4m_file(path)[1] for path in captures]
    logger.debug("Noise floor over %d captures", len(repeats))
    floor = noise_floor(repeats, ref_frames, clip_id, _geometry(marker_size, inset))
    _echo_json(floor.to_dict())


if __name__ == "__main__":
    main()
