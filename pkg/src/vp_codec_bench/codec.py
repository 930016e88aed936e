"""Encoder harness: toy and external backends, JND ladders, encode timing."""

from __future__ import annotations

import shlex
import subprocess
import time
from collections.abc import Callable
from pathlib import Path

from .errors import (
    ClipUnreachableError,
    ConsistencyError,
    EmptyInputError,
    EncodeError,
    RangeError,
    UnsupportedDepthError,
)
from .log import get_logger
from .media import read_y4m_file, write_y4m_file
from .models import (
    Backend,
    ClipDescriptor,
    ClipRole,
    CodecConfig,
    GopMode,
    LadderPoint,
    VideoSpec,
    bitrate_mbps,
    format_fraction,
    gop_label,
)
from .toycodec import toy_decode, toy_encode

DIAGNOSTIC_TAIL = 2000
# neighbour above the bisection result may undershoot its target by at most this
LADDER_TOLERANCE = 0.5


def artifact_stem(config: CodecConfig, gop: GopMode | None, rate_param) -> str:
    label = gop_label(gop).replace(":", "-")
    return f"{config.codec_name}_{label}_{rate_param}"


def _effective_gop(config: CodecConfig, gop: GopMode | None) -> GopMode | None:
    if config.gop_free:
        return None
    return gop or GopMode.all_intra()


def _template_values(
    spec: VideoSpec, rate_param, gop: GopMode | None, **paths: str,
) -> dict[str, str]:
    values = {
        "qp": str(rate_param),
        "rate": str(rate_param),
        "gop": "na" if gop is None else str(gop.gop_length(spec.frame_rate)),
        "fps": format_fraction(spec.frame_rate),
        "width": str(spec.width),
        "height": str(spec.height),
        "bit_depth": str(spec.bit_depth),
    }
    values.update(paths)
    return values


def expand_template(template: str, values: dict[str, str]) -> list[str]:
    """Split a command template into argv, then fill placeholders per token."""
    if not template.strip():
        raise EncodeError("empty command template")
    try:
        return [token.format_map(values) for token in shlex.split(template)]
    except KeyError as e:
        raise EncodeError(f"unknown placeholder {e} in template {template!r}") from e
    except ValueError as e:
        raise EncodeError(f"malformed command template {template!r}: {e}") from e


def run_command(
    argv: list[str],
    log_path: Path | None = None,
    timeout: float | None = None,
    what: str = "command",
) -> float:
    """Run argv to completion; returns wall-clock seconds.

    stdout/stderr are appended to log_path. Nonzero exit, a missing binary or
    a timeout raise EncodeError carrying the stderr tail.
    """
    logger = get_logger()
    logger.debug("Running %s: %s", what, shlex.join(argv))
    start = time.perf_counter()
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
    except FileNotFoundError as e:
        raise EncodeError(f"{what} not found: {argv[0]}", diagnostics=str(e)) from e
    except subprocess.TimeoutExpired as e:
        stderr = e.stderr.decode(errors="replace") if isinstance(e.stderr, bytes) else e.stderr
        raise EncodeError(
            f"{what} timed out after {timeout}s", diagnostics=(stderr or "")[-DIAGNOSTIC_TAIL:],
        ) from e
    elapsed = time.perf_counter() - start

    if log_path is not None:
        log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(log_path, "a") as f:
            f.write(f"$ {shlex.join(argv)}\n")
            f.write(f"# exit {proc.returncode}, {elapsed:.3f}s\n")
            if proc.stdout:
                f.write(proc.stdout)
            if proc.stderr:
                f.write(proc.stderr)
    if proc.returncode != 0:
        raise EncodeError(
            f"{what} exited with status {proc.returncode}",
            diagnostics=(proc.stderr or proc.stdout or "")[-DIAGNOSTIC_TAIL:],
        )
    return elapsed


def _check_input(clip: ClipDescriptor, config: CodecConfig, rate_param) -> None:
    config.check_rate_param(rate_param)
    if clip.role not in (ClipRole.REF, ClipRole.DEG):
        raise ConsistencyError(f"cannot encode a {clip.role.value} clip")
    if clip.spec.bit_depth > 8 and not config.supports_10bit:
        raise UnsupportedDepthError(
            f"{config.codec_name} does not accept {clip.spec.bit_depth}-bit input"
        )
    if not clip.storage_path:
        raise EncodeError(f"clip {clip.name} has no storage path")


def _encode_once(
    clip: ClipDescriptor,
    config: CodecConfig,
    rate_param,
    gop: GopMode | None,
    encoded_path: Path,
    log_path: Path | None,
) -> tuple[float, int]:
    """Encode clip to encoded_path; returns (encode seconds, frame count)."""
    encoded_path.parent.mkdir(parents=True, exist_ok=True)
    if config.backend == Backend.TOY:
        spec, frames = read_y4m_file(clip.storage_path)
        start = time.perf_counter()
        data = toy_encode(frames, int(rate_param), gop)
        encoded_path.write_bytes(data)
        return time.perf_counter() - start, spec.frame_count

    spec = clip.spec
    if spec.frame_count == 0:
        spec, _ = read_y4m_file(clip.storage_path)
    values = _template_values(
        spec, rate_param, gop, input=str(clip.storage_path), output=str(encoded_path),
    )
    argv = expand_template(config.encode_template, values)
    elapsed = run_command(argv, log_path, config.timeout, what=f"{config.codec_name} encoder")
    if not encoded_path.exists():
        raise EncodeError(f"{config.codec_name} encoder did not write {encoded_path}")
    return elapsed, spec.frame_count


def _decode_once(
    clip: ClipDescriptor,
    config: CodecConfig,
    rate_param,
    gop: GopMode | None,
    encoded_path: Path,
    decoded_path: Path,
    log_path: Path | None,
) -> VideoSpec:
    if config.backend == Backend.TOY:
        spec, frames = toy_decode(encoded_path.read_bytes())
        write_y4m_file(decoded_path, spec.frame_format(), frames)
    else:
        values = _template_values(
            clip.spec, rate_param, gop, input=str(encoded_path), output=str(decoded_path),
        )
        argv = expand_template(config.decode_template, values)
        run_command(argv, log_path, config.timeout, what=f"{config.codec_name} decoder")
        if not decoded_path.exists():
            raise EncodeError(f"{config.codec_name} decoder did not write {decoded_path}")
    decoded_spec, _ = read_y4m_file(decoded_path)
    return decoded_spec


def encode(
    clip: ClipDescriptor,
    config: CodecConfig,
    rate_param,
    gop: GopMode | None = None,
    out_dir: str | Path | None = None,
) -> LadderPoint:
    """Encode, decode back to Y4M and measure one ladder point."""
    logger = get_logger()
    _check_input(clip, config, rate_param)
    gop = _effective_gop(config, gop)
    out_dir = Path(out_dir) if out_dir is not None else Path(clip.storage_path).parent / "encodes"
    stem = artifact_stem(config, gop, rate_param)
    encoded_path = out_dir / f"{stem}{config.extension}"
    decoded_path = out_dir / f"{stem}.dec.y4m"
    log_path = out_dir / f"{stem}.log"
    if log_path.exists():
        log_path.unlink()

    elapsed, frame_count = _encode_once(clip, config, rate_param, gop, encoded_path, log_path)
    if frame_count == 0:
        raise EmptyInputError(f"clip {clip.name} has no frames")
    decoded_spec = _decode_once(
        clip, config, rate_param, gop, encoded_path, decoded_path, log_path,
    )
    if decoded_spec.frame_count != frame_count:
        raise EncodeError(
            f"{config.codec_name} decoded {decoded_spec.frame_count} frames, "
            f"expected {frame_count}"
        )
    if (decoded_spec.width, decoded_spec.height) != (clip.spec.width, clip.spec.height):
        raise EncodeError(
            f"{config.codec_name} decoded {decoded_spec.width}x{decoded_spec.height}, "
            f"expected {clip.spec.width}x{clip.spec.height}"
        )

    source_spec = clip.spec.with_frames(frame_count)
    encoded_bytes = encoded_path.stat().st_size
    rate = bitrate_mbps(encoded_bytes, source_spec.duration_seconds)
    fps = frame_count / max(elapsed, 1e-9)
    logger.debug(
        "Encoded %s with %s rp=%s gop=%s: %d bytes, %.3f Mb/s, %.1f fps",
        clip.name, config.codec_name, rate_param, gop_label(gop), encoded_bytes, rate, fps,
    )

    if clip.role == ClipRole.REF:
        deg = clip.derive(ClipRole.DEG, name=f"{clip.name}.{stem}", storage_path=str(encoded_path))
    else:
        deg = clip
    decoded = deg.derive(
        ClipRole.DEG_DEC,
        name=f"{clip.name}.{stem}.dec",
        storage_path=str(decoded_path),
        spec=decoded_spec,
    )
    return LadderPoint(
        config=config,
        clip_name=clip.name,
        gop=gop,
        rate_param=rate_param,
        encoded_path=str(encoded_path),
        encoded_bytes=encoded_bytes,
        bitrate_mbps=rate,
        encode_fps=fps,
        decoded_clip=decoded,
    )


def measure_encode_fps(
    config: CodecConfig,
    clip: ClipDescriptor,
    repetitions: int = 1,
    discard_warmup: bool = False,
    rate_param=None,
    gop: GopMode | None = None,
    out_dir: str | Path | None = None,
) -> float:
    """Mean frames per wall-clock second over repeated encodes (no decode)."""
    logger = get_logger()
    if repetitions < 1:
        raise RangeError(f"repetitions must be >= 1, got {repetitions}")
    if clip.spec.frame_count == 0 and clip.storage_path:
        spec, _ = read_y4m_file(clip.storage_path)
        clip = ClipDescriptor(clip.clip_id, clip.name, spec, clip.role, clip.storage_path)
    if clip.spec.frame_count == 0:
        raise EmptyInputError(f"clip {clip.name} has no frames to time")
    if rate_param is None:
        params = config.rate_params()
        rate_param = params[len(params) // 2]
    _check_input(clip, config, rate_param)
    gop = _effective_gop(config, gop)
    out_dir = Path(out_dir) if out_dir is not None else Path(clip.storage_path).parent / "timing"
    encoded_path = out_dir / f"{artifact_stem(config, gop, rate_param)}{config.extension}"

    runs = repetitions + 1 if discard_warmup else repetitions
    rates: list[float] = []
    for i in range(runs):
        elapsed, frames = _encode_once(clip, config, rate_param, gop, encoded_path, None)
        if discard_warmup and i == 0:
            continue
        rates.append(frames / max(elapsed, 1e-9))
    mean = sum(rates) / len(rates)
    logger.info(
        "Encode speed %s on %s: %.1f fps over %d runs", config.codec_name, clip.name, mean, len(rates),
    )
    return mean


def _bisect_largest(
    quality_fn: Callable[[int], float], lo: int, hi: int, target: float,
) -> int:
    """Largest rate parameter in [lo, hi] whose quality is >= target."""
    if quality_fn(hi) >= target:
        return hi
    good, bad = lo, hi
    while bad - good > 1:
        mid = (good + bad) // 2
        if quality_fn(mid) >= target:
            good = mid
        else:
            bad = mid
    return good


def ladder_targets(top: float, jnd_step: float, floor: float, points: int) -> list[float]:
    """Evenly spaced quality targets from top down to max(top - (points-1)*jnd, floor)."""
    bottom = max(top - (points - 1) * jnd_step, floor)
    span = top - bottom
    return [top - span * i / (points - 1) for i in range(points)]


def build_jnd_ladder(
    clip: ClipDescriptor | None,
    config: CodecConfig,
    quality_fn: Callable[[int], float],
    jnd_step: float = 6.0,
    floor: float = 82.0,
    points: int = 5,
) -> list:
    """Pick rate parameters spaced roughly one JND apart above a quality floor.

    Enumerated-label codecs (NotchLC levels, HAP modes) have no search space
    and return every declared label.
    """
    logger = get_logger()
    name = clip.name if clip is not None else "clip"
    if points < 2:
        raise RangeError(f"a ladder needs at least 2 points, got {points}")
    if jnd_step <= 0:
        raise RangeError(f"jnd_step must be > 0, got {jnd_step}")
    if config.is_enumerated:
        return config.rate_params()

    cache: dict[int, float] = {}

    def quality(rp: int) -> float:
        if rp not in cache:
            cache[rp] = float(quality_fn(rp))
        return cache[rp]

    lo, hi = config.rate_range
    top = quality(lo)
    if top < floor:
        raise ClipUnreachableError(
            f"{config.codec_name} on {name}: best quality {top:.2f} is below the floor {floor}"
        )
    if quality(hi) > top:
        logger.warning(
            "%s on %s: quality rises with rate parameter (%.2f at %s > %.2f at %s); "
            "bisecting the sampled envelope",
            config.codec_name, name, quality(hi), hi, top, lo,
        )

    chosen: set[int] = set()
    for target in ladder_targets(top, jnd_step, floor, points):
        rp = _bisect_largest(quality, lo, hi, target)
        if rp < hi:
            below, above = quality(rp), quality(rp + 1)
            closer = abs(above - target) <= abs(below - target) + 1e-9
            if closer and above >= target - LADDER_TOLERANCE:
                rp += 1
        chosen.add(rp)
    ladder = sorted(chosen)
    logger.debug("JND ladder for %s on %s: %s", config.codec_name, name, ladder)
    return ladder
