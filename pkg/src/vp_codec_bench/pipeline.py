"""Pipeline orchestrator: wires all stages and appends results to the store."""

from __future__ import annotations

import multiprocessing
import os
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

from .align import build_alignment_map, pair_captures
from .analysis import build_curve
from .channel import simulate_capture
from .codec import artifact_stem, build_jnd_ladder, encode, measure_encode_fps
from .config import Config
from .errors import EXIT_FAILURE, EXIT_OK, EXIT_PARTIAL, EncodeError, VpcbError
from .log import get_logger, log_progress, log_stage, setup_logging
from .manifest import DIRECT, ClipSource, ExperimentManifest
from .marker import MarkerGeometry, MarkerPayload, embed_markers, marker_rects
from .media import clip_spec, common_format, convert_format, read_y4m_file, write_y4m_file
from .metrics import PLANE_METRICS, MetricRunner, psnr_sequence, run_external_metric
from .models import (
    AlignmentMap,
    ChannelConfig,
    ClipDescriptor,
    ClipRole,
    CodecConfig,
    FrameBuffer,
    GopMode,
    LadderPoint,
    PairPolicy,
    QualityRecord,
    Rect,
    RegionMask,
    gop_label,
)
from .store import ExperimentStore, digest, make_key

STORE_NAME = "results.jsonl"
_PLANE_OF = {metric: plane for plane, metric in PLANE_METRICS.items()}


def derive_seed(seed: int, clip_id: int, mode: str) -> int:
    """One channel seed per (experiment seed, clip, mode)."""
    return zlib.crc32(f"{seed}|{clip_id}|{mode}".encode())


def store_path_for(output_dir: Path) -> Path:
    return Path(output_dir) / STORE_NAME


@dataclass
class RunSummary:
    store_path: Path
    manifest_hash: str
    tuples_total: int = 0
    tuples_skipped: int = 0
    tuples_completed: int = 0
    failures: list[dict] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        if not self.failures:
            return EXIT_OK
        if self.tuples_completed + self.tuples_skipped == 0:
            return EXIT_FAILURE
        return EXIT_PARTIAL


@dataclass
class CameraRef:
    """Channel settings and the aligned reference capture for one camera mode."""

    channel: ChannelConfig
    refcam_path: str
    refcam: ClipDescriptor
    alignment: AlignmentMap
    rects: tuple[Rect, ...]


@dataclass
class PreparedClip:
    descriptor: ClipDescriptor
    direct_rects: tuple[Rect, ...]
    cameras: dict[str, CameraRef] = field(default_factory=dict)


@dataclass
class TupleTask:
    """Everything a worker needs to encode and score one ladder point."""

    out_dir: str
    clip: PreparedClip
    codec: CodecConfig
    gop: GopMode | None
    rate_param: int | str
    modes: list[str]
    metrics: list[str]
    runners: list[MetricRunner]
    geometry: MarkerGeometry
    index: int = 0
    total: int = 0


def _rel(path: str | Path, base: str | Path) -> str:
    return os.path.relpath(path, base)


def _relative_descriptor(desc: ClipDescriptor | None, base: str | Path) -> dict | None:
    if desc is None:
        return None
    d = desc.to_dict()
    if d["storage_path"]:
        d["storage_path"] = _rel(d["storage_path"], base)
    return d


def artifact_dir(out_dir: str | Path, clip: str, codec: str, gop: GopMode | None, rate_param) -> Path:
    return Path(out_dir) / "artifacts" / clip / codec / gop_label(gop).replace(":", "-") / f"rp{rate_param}"


def marker_regions(manifest: ExperimentManifest, modes: list[str]) -> list[Rect | None]:
    """Full frame, plus the ROI of every camera mode that crops."""
    regions: list[Rect | None] = [None]
    for mode in modes:
        if mode == DIRECT:
            continue
        roi = manifest.channel_profiles[mode].roi
        if roi is not None and roi not in regions:
            regions.append(roi)
    return regions


def embed_clip_markers(
    frames: list[FrameBuffer],
    clip_id: int,
    geometry: MarkerGeometry,
    regions: list[Rect | None],
) -> list[FrameBuffer]:
    marked = []
    for index, frame in enumerate(frames):
        payload = MarkerPayload.create(clip_id, index)
        for region in regions:
            frame = embed_markers(frame, payload, geometry, region)
        marked.append(frame)
    return marked


def _all_marker_rects(width: int, height: int, geometry: MarkerGeometry, regions) -> list[Rect]:
    rects: list[Rect] = []
    for region in regions:
        rects.extend(marker_rects(width, height, geometry, region).values())
    return rects


def prepare_clip(
    source: ClipSource,
    manifest: ExperimentManifest,
    modes: list[str],
    out_dir: Path,
) -> tuple[PreparedClip, list[FrameBuffer]]:
    """Load the source, burn in markers, write the Ref clip and its camera references."""
    logger = get_logger()
    frames = source.load()
    spec = clip_spec(frames)
    regions = marker_regions(manifest, modes)
    geometry = manifest.marker
    marked = embed_clip_markers(frames, source.clip_id, geometry, regions)
    ref_path = out_dir / "artifacts" / source.name / "ref.y4m"
    write_y4m_file(ref_path, spec.frame_format(), marked)
    desc = ClipDescriptor(source.clip_id, source.name, spec, ClipRole.REF, str(ref_path))
    rects = _all_marker_rects(spec.width, spec.height, geometry, regions)
    prepared = PreparedClip(desc, tuple(rects))
    logger.info("Prepared %s: %dx%d, %d frames", source.name, spec.width, spec.height, len(marked))

    for mode in modes:
        if mode == DIRECT:
            continue
        profile = manifest.channel_profiles[mode]
        channel = profile.with_seed(derive_seed(manifest.seed, source.clip_id, mode))
        capture = simulate_capture(marked, channel, capture_key="ref")
        cam_path = out_dir / "artifacts" / source.name / f"cam-{mode}" / "ref.y4m"
        cam_spec = clip_spec(capture.frames)
        write_y4m_file(cam_path, cam_spec.frame_format(), capture.frames)
        amap = build_alignment_map(capture.frames, source.clip_id, geometry)
        if profile.roi is not None:
            cam_rects = [r.translate(-profile.roi.x, -profile.roi.y) for r in rects]
        else:
            cam_rects = list(rects)
        refcam = desc.derive(
            ClipRole.REF_CAM, name=f"{source.name}.cam-{mode}", storage_path=str(cam_path),
            spec=cam_spec,
        )
        prepared.cameras[mode] = CameraRef(channel, str(cam_path), refcam, amap, tuple(cam_rects))
    return prepared, marked


def _neutralize_markers(ref: FrameBuffer, dist: FrameBuffer, rects) -> FrameBuffer:
    """Copy the reference's marker footprints into dist."""
    y, cb, cr = (p.copy() for p in dist.planes)
    spec = dist.spec
    ch, cw = spec.chroma_shape
    sy, sx = spec.height // ch, spec.width // cw
    for rect in rects:
        x0, y0 = max(rect.x, 0), max(rect.y, 0)
        x1, y1 = min(rect.x + rect.width, spec.width), min(rect.y + rect.height, spec.height)
        if x1 <= x0 or y1 <= y0:
            continue
        y[y0:y1, x0:x1] = ref.y[y0:y1, x0:x1]
        cy0, cx0, cy1, cx1 = y0 // sy, x0 // sx, -(-y1 // sy), -(-x1 // sx)
        cb[cy0:cy1, cx0:cx1] = ref.cb[cy0:cy1, cx0:cx1]
        cr[cy0:cy1, cx0:cx1] = ref.cr[cy0:cy1, cx0:cx1]
    return dist.with_planes((y, cb, cr))


def write_pair_files(
    pairs: list[tuple[FrameBuffer, FrameBuffer]],
    rects,
    work_dir: Path,
    tag: str,
    frame_rate,
) -> tuple[Path, Path]:
    """Aligned pair sequences at their common format, for external runners."""
    chroma, depth = common_format(pairs[0][0].spec, pairs[0][1].spec)
    refs, dists = [], []
    for ref, dist in pairs:
        ref_c = convert_format(ref, chroma, depth)
        dist_c = convert_format(dist, chroma, depth)
        refs.append(ref_c)
        dists.append(_neutralize_markers(ref_c, dist_c, rects))
    spec = clip_spec(refs, frame_rate).frame_format()
    ref_path = work_dir / f"{tag}.ref.y4m"
    dist_path = work_dir / f"{tag}.dist.y4m"
    write_y4m_file(ref_path, spec, refs)
    write_y4m_file(dist_path, spec, dists)
    return ref_path, dist_path


def score_pairs(
    pairs: list[tuple[FrameBuffer, FrameBuffer]],
    metrics: list[str],
    runners: list[MetricRunner],
    rects,
    work_dir: Path,
    tag: str,
    frame_rate,
) -> dict[str, QualityRecord]:
    """Every requested metric over one aligned pair sequence."""
    mask = RegionMask.exclude(rects)
    by_name = {r.name: r for r in runners}
    results: dict[str, QualityRecord] = {}
    pair_files: tuple[Path, Path] | None = None
    for metric in metrics:
        if metric in _PLANE_OF:
            results[metric] = psnr_sequence(pairs, mask, _PLANE_OF[metric])
            continue
        if pair_files is None:
            pair_files = write_pair_files(pairs, rects, work_dir, tag, frame_rate)
        record = run_external_metric(by_name[metric], *pair_files)
        record.region_mask = mask
        results[metric] = record
    return results


def _quality_data(
    mode: str,
    point: LadderPoint,
    record: QualityRecord,
    reference: ClipDescriptor,
    distorted: ClipDescriptor,
    out_dir: str,
) -> dict:
    record.reference, record.distorted = reference, distorted
    d = record.to_dict()
    d["reference"] = _relative_descriptor(reference, out_dir)
    d["distorted"] = _relative_descriptor(distorted, out_dir)
    return {
        "mode": mode,
        "clip": point.clip_name,
        "codec": point.config.codec_name,
        "gop": gop_label(point.gop),
        "rate_param": point.rate_param,
        "bitrate_mbps": point.bitrate_mbps,
        "record": d,
    }


def _ladder_point_data(point: LadderPoint, out_dir: str) -> dict:
    d = point.to_dict()
    d.pop("encode_fps")
    d["encoded_path"] = _rel(d["encoded_path"], out_dir)
    d["decoded_clip"] = _relative_descriptor(point.decoded_clip, out_dir)
    return d


def run_tuple(task: TupleTask) -> dict:
    """Encode one ladder point and score it in every mode. Never raises."""
    logger = get_logger()
    clip = task.clip.descriptor
    gop_name = gop_label(task.gop)
    records: list[tuple] = []
    stage = "encode"
    try:
        work_dir = artifact_dir(task.out_dir, clip.name, task.codec.codec_name, task.gop, task.rate_param)
        point = encode(clip, task.codec, task.rate_param, task.gop, out_dir=work_dir)
        tuple_key = make_key(clip.name, task.codec.codec_name, gop_name, task.rate_param)
        records.append((
            "ladder_point", tuple_key, _ladder_point_data(point, task.out_dir),
            {"encode_fps": point.encode_fps},
        ))
        _, ref_frames = read_y4m_file(clip.storage_path)
        _, decoded = read_y4m_file(point.decoded_clip.storage_path)
        frame_rate = clip.spec.frame_rate

        for mode in task.modes:
            stage = f"score:{mode}"
            if mode == DIRECT:
                pairs = list(zip(ref_frames, decoded))
                scores = score_pairs(
                    pairs, task.metrics, task.runners, task.clip.direct_rects,
                    work_dir, "direct", frame_rate,
                )
                reference, distorted = clip, point.decoded_clip
            else:
                camera = task.clip.cameras[mode]
                stage = f"capture:{mode}"
                capture = simulate_capture(
                    decoded, camera.channel,
                    capture_key=artifact_stem(task.codec, task.gop, task.rate_param),
                )
                cam_path = work_dir / f"cam-{mode}.y4m"
                cam_spec = clip_spec(capture.frames, frame_rate)
                write_y4m_file(cam_path, cam_spec.frame_format(), capture.frames)
                distorted = point.decoded_clip.derive(
                    ClipRole.DEG_DEC_CAM, name=f"{point.decoded_clip.name}.cam-{mode}",
                    storage_path=str(cam_path), spec=cam_spec,
                )
                stage = f"align:{mode}"
                amap = build_alignment_map(capture.frames, clip.clip_id, task.geometry)
                records.append((
                    "alignment", make_key(mode, clip.name, task.codec.codec_name, gop_name, task.rate_param),
                    {"mode": mode, "clip": clip.name, "capture": _rel(cam_path, task.out_dir),
                     "map": amap.to_dict()},
                    None,
                ))
                _, refcam_frames = read_y4m_file(camera.refcam_path)
                pairs = pair_captures(
                    camera.alignment, refcam_frames, amap, capture.frames, PairPolicy.FIRST_OF_DUP,
                )
                stage = f"score:{mode}"
                scores = score_pairs(
                    pairs, task.metrics, task.runners, camera.rects,
                    work_dir, f"cam-{mode}", frame_rate,
                )
                reference = camera.refcam
            for metric, record in scores.items():
                records.append((
                    "quality",
                    make_key(mode, clip.name, task.codec.codec_name, gop_name, task.rate_param, metric),
                    _quality_data(mode, point, record, reference, distorted, task.out_dir),
                    None,
                ))
        logger.info(
            "[%d/%d] %s %s %s rp=%s: %.3f Mb/s",
            task.index, task.total, clip.name, task.codec.codec_name, gop_name,
            task.rate_param, point.bitrate_mbps,
        )
        return {"records": records, "failure": None}
    except Exception as e:
        detail = e.diagnostics if isinstance(e, EncodeError) else ""
        logger.warning(
            "Tuple %s %s %s rp=%s failed at %s: %s",
            clip.name, task.codec.codec_name, gop_name, task.rate_param, stage, e,
        )
        return {"records": records, "failure": {
            "stage": stage,
            "clip": clip.name,
            "codec": task.codec.codec_name,
            "gop": gop_name,
            "rate_param": task.rate_param,
            "error": str(e),
            "type": type(e).__name__,
            "diagnostics": detail,
        }}


def _pool_initializer(verbose: bool = False) -> None:
    setup_logging(verbose, worker=True)


def _tuple_done(
    store: ExperimentStore, mhash: str, clip: str, codec: str, gop: str, rp,
    modes: list[str], metrics: list[str],
) -> bool:
    if not store.has("ladder_point", make_key(clip, codec, gop, rp), mhash):
        return False
    return all(
        store.has("quality", make_key(mode, clip, codec, gop, rp, metric), mhash)
        for mode in modes for metric in metrics
    )


def resolve_ladder(
    store: ExperimentStore,
    mhash: str,
    manifest: ExperimentManifest,
    prepared: PreparedClip,
    ref_frames: list[FrameBuffer],
    codec: CodecConfig,
    gop: GopMode | None,
    out_dir: Path,
) -> list:
    """Rate parameters for one clip/codec/GOP; JND searches are stored and reused."""
    ladder = manifest.ladder
    if not ladder.is_jnd:
        params = ladder.explicit_for(codec)
        for rp in params:
            codec.check_rate_param(rp)
        return params

    clip = prepared.descriptor
    key = make_key(clip.name, codec.codec_name, gop_label(gop))
    stored = store.get("ladder", key, mhash)
    if stored is not None:
        return stored["data"]["rate_params"]

    metric = ladder.metric
    runners = [r for r in manifest.runners if r.name == metric]

    def quality(rp) -> float:
        work_dir = artifact_dir(out_dir, clip.name, codec.codec_name, gop, rp)
        point = encode(clip, codec, rp, gop, out_dir=work_dir)
        _, decoded = read_y4m_file(point.decoded_clip.storage_path)
        scores = score_pairs(
            list(zip(ref_frames, decoded)), [metric], runners, prepared.direct_rects,
            work_dir, "jnd", clip.spec.frame_rate,
        )
        return scores[metric].pooled

    params = build_jnd_ladder(
        clip, codec, quality, ladder.jnd_step, ladder.floor, ladder.points,
    )
    store.add("ladder", key, {
        "clip": clip.name, "codec": codec.codec_name, "gop": gop_label(gop), "rate_params": params,
    }, mhash)
    return params


def _record_failure(store: ExperimentStore, mhash: str, failure: dict, summary: RunSummary) -> None:
    key = make_key(failure["stage"], failure["clip"], failure["codec"], failure["gop"],
                   failure.get("rate_param"))
    store.add("failure", key, failure, mhash)
    summary.failures.append(failure)


def build_curves(
    store: ExperimentStore,
    mhash: str,
    manifest: ExperimentManifest,
    modes: list[str],
) -> int:
    """Append a curve record for every (mode, clip, codec, GOP, metric) with results."""
    points: dict[str, LadderPoint] = {}
    for r in store.records("ladder_point", mhash):
        points[r["key"]] = LadderPoint.from_dict(r["data"])
    groups: dict[tuple, list] = {}
    for r in store.records("quality", mhash):
        d = r["data"]
        if d["mode"] not in modes:
            continue
        point = points.get(make_key(d["clip"], d["codec"], d["gop"], d["rate_param"]))
        if point is None:
            continue
        record = QualityRecord.from_dict(d["record"])
        groups.setdefault((d["mode"], d["clip"], d["codec"], d["gop"], record.metric_name), []).append(
            (point, record)
        )

    added = 0
    for (mode, clip, codec, gop, metric), records in sorted(groups.items()):
        curve = build_curve(records, mode=mode)
        key = make_key(mode, clip, codec, gop, metric, digest(curve.points))
        if store.add("curve", key, curve.to_dict(), mhash):
            added += 1
    return added


def run_timing(
    store: ExperimentStore,
    mhash: str,
    manifest: ExperimentManifest,
    prepared: list[PreparedClip],
    ladders: dict[tuple, list],
    out_dir: Path,
    summary: RunSummary,
) -> None:
    """Encode-speed measurements, one at a time."""
    logger = get_logger()
    timing = manifest.timing
    for clip in prepared:
        desc = clip.descriptor
        for codec in manifest.codecs:
            gop = manifest.gops_for(codec)[0]
            key = make_key(desc.name, codec.codec_name, gop_label(gop))
            if store.has("speed", key, mhash):
                continue
            params = ladders.get((desc.name, codec.codec_name, gop_label(gop))) or codec.rate_params()
            rp = params[len(params) // 2]
            try:
                fps = measure_encode_fps(
                    codec, desc, timing.repetitions, timing.discard_warmup, rp, gop,
                    out_dir=out_dir / "artifacts" / desc.name / codec.codec_name / "timing",
                )
            except VpcbError as e:
                logger.warning("Timing %s on %s failed: %s", codec.codec_name, desc.name, e)
                _record_failure(store, mhash, {
                    "stage": "timing", "clip": desc.name, "codec": codec.codec_name,
                    "gop": gop_label(gop), "rate_param": rp, "error": str(e),
                    "type": type(e).__name__, "diagnostics": "",
                }, summary)
                continue
            store.add("speed", key, {
                "clip": desc.name, "codec": codec.codec_name, "gop": gop_label(gop),
                "rate_param": rp, "repetitions": timing.repetitions,
                "discard_warmup": timing.discard_warmup,
            }, mhash, volatile={"encode_fps": fps})


def run_experiment(manifest: ExperimentManifest, config: Config | None = None) -> RunSummary:
    """Execute the full experiment. Completed tuples already in the store are skipped."""
    logger = get_logger()
    config = config or Config()
    start_time = time.time()
    out_dir = config.effective_output_dir(manifest).resolve()
    out_dir.mkdir(parents=True, exist_ok=True)
    modes = config.effective_modes(manifest)
    workers = config.effective_workers(manifest)
    metrics = manifest.metric_names
    mhash = manifest.manifest_hash()

    store = ExperimentStore(store_path_for(out_dir))
    summary = RunSummary(store.path, mhash)
    store.add("experiment", "experiment", manifest.to_dict(), mhash)
    logger.info("Output directory: %s (manifest %s)", out_dir, mhash)

    # Stage 1: reference clips, markers, camera references
    log_stage(1, "Preparing clips")
    prepared: list[tuple[PreparedClip, list[FrameBuffer]]] = []
    for source in manifest.clips:
        try:
            clip, marked = prepare_clip(source, manifest, modes, out_dir)
        except VpcbError as e:
            logger.warning("Clip %s failed during preparation: %s", source.name, e)
            _record_failure(store, mhash, {
                "stage": "prepare", "clip": source.name, "codec": None, "gop": None,
                "rate_param": None, "error": str(e), "type": type(e).__name__, "diagnostics": "",
            }, summary)
            continue
        for mode, camera in clip.cameras.items():
            store.add("alignment", make_key(mode, source.name, "ref"), {
                "mode": mode, "clip": source.name,
                "capture": _rel(camera.refcam_path, out_dir), "map": camera.alignment.to_dict(),
            }, mhash)
        prepared.append((clip, marked))

    # Stage 2: ladders
    log_stage(2, "Resolving ladders")
    ladders: dict[tuple, list] = {}
    for clip, marked in prepared:
        for codec in manifest.codecs:
            for gop in manifest.gops_for(codec):
                try:
                    params = resolve_ladder(store, mhash, manifest, clip, marked, codec, gop, out_dir)
                except VpcbError as e:
                    logger.warning(
                        "Ladder for %s on %s (%s) failed: %s",
                        codec.codec_name, clip.descriptor.name, gop_label(gop), e,
                    )
                    _record_failure(store, mhash, {
                        "stage": "ladder", "clip": clip.descriptor.name, "codec": codec.codec_name,
                        "gop": gop_label(gop), "rate_param": None, "error": str(e),
                        "type": type(e).__name__, "diagnostics": getattr(e, "diagnostics", ""),
                    }, summary)
                    continue
                ladders[(clip.descriptor.name, codec.codec_name, gop_label(gop))] = params

    # Stage 3: encode and score every tuple not yet in the store
    log_stage(3, "Encoding and scoring")
    tasks: list[TupleTask] = []
    for clip, _ in prepared:
        for codec in manifest.codecs:
            for gop in manifest.gops_for(codec):
                for rp in ladders.get((clip.descriptor.name, codec.codec_name, gop_label(gop)), []):
                    summary.tuples_total += 1
                    if _tuple_done(store, mhash, clip.descriptor.name, codec.codec_name,
                                   gop_label(gop), rp, modes, metrics):
                        summary.tuples_skipped += 1
                        continue
                    tasks.append(TupleTask(
                        out_dir=str(out_dir), clip=clip, codec=codec, gop=gop, rate_param=rp,
                        modes=modes, metrics=metrics, runners=list(manifest.runners),
                        geometry=manifest.marker,
                    ))
    for i, task in enumerate(tasks, 1):
        task.index, task.total = i, len(tasks)
    logger.info(
        "%d tuples, %d already complete, %d to run",
        summary.tuples_total, summary.tuples_skipped, len(tasks),
    )

    def collect(result: dict, completed: int) -> None:
        for kind, key, data, volatile in result["records"]:
            store.add(kind, key, data, mhash, volatile)
        if result["failure"] is not None:
            _record_failure(store, mhash, result["failure"], summary)
        else:
            summary.tuples_completed += 1
        log_progress(completed, len(tasks))

    if workers <= 1 or len(tasks) <= 1:
        for i, task in enumerate(tasks, 1):
            collect(run_tuple(task), i)
    else:
        logger.info("Using %d workers", workers)
        with multiprocessing.Pool(
            workers, initializer=_pool_initializer, initargs=(config.verbose,)
        ) as pool:
            # imap keeps results in submission order so the store is deterministic
            for i, result in enumerate(pool.imap(run_tuple, tasks), 1):
                collect(result, i)

    # Stage 4: curves
    log_stage(4, "Rate-quality curves")
    added = build_curves(store, mhash, manifest, modes)
    logger.info("%d new curve records", added)

    # Stage 5: exclusive timing
    if manifest.timing.repetitions > 0:
        log_stage(5, "Encode timing")
        run_timing(store, mhash, manifest, [c for c, _ in prepared], ladders, out_dir, summary)

    duration = time.time() - start_time
    logger.info(
        "Experiment complete in %.1fs: %d completed, %d skipped, %d failures",
        duration, summary.tuples_completed, summary.tuples_skipped, len(summary.failures),
    )
    return summary
