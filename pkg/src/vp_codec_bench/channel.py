"""Simulated LED wall + camera capture chain.

Stage order is fixed: ROI crop, display-grid resample, colour, sensor
noise, capture format, then temporal jitter. Every random draw comes from a
substream keyed by (seed, capture key, frame index) so captures are
reproducible and independent of each other.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, GeometryError, RangeError
from .log import get_logger
from .media import convert_format
from .models import (
    ChannelConfig,
    Chroma,
    FrameBuffer,
    Reconstruction,
    Resample,
    VideoSpec,
)

_JITTER_STREAM = 0xFFFFFFFF


@dataclass
class Capture:
    """Captured frames and, for each, the index of the source frame shown."""

    frames: list[FrameBuffer]
    source_indices: list[int]


def calibrate_noise_for_floor(target_psnr: float, bit_depth: int) -> float:
    """Gaussian sigma whose expected PSNR against the clean signal is target_psnr."""
    if target_psnr <= 0:
        raise RangeError(f"target PSNR must be > 0 dB, got {target_psnr}")
    return ((1 << bit_depth) - 1) * 10 ** (-target_psnr / 20)


def capture_key_int(capture_key: str) -> int:
    return zlib.crc32(capture_key.encode("utf-8"))


def _frame_rng(cfg: ChannelConfig, key: int, index: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed & 0xFFFFFFFF, key, index])


def _crop(frame: FrameBuffer, cfg: ChannelConfig) -> FrameBuffer:
    roi, spec = cfg.roi, frame.spec
    if not roi.fits_in(spec.width, spec.height):
        raise GeometryError(f"ROI {roi} outside {spec.width}x{spec.height} frame")
    if spec.chroma == Chroma.YUV420 and any(v % 2 for v in roi.to_list()):
        raise GeometryError(f"ROI {roi} must be 2-px aligned for 4:2:0 frames")
    cropped = VideoSpec(roi.width, roi.height, spec.bit_depth, spec.chroma, spec.frame_rate, 1)
    ch, cw = spec.chroma_shape
    sy, sx = spec.height // ch, spec.width // cw
    y = frame.y[roi.y:roi.y + roi.height, roi.x:roi.x + roi.width]
    cb, cr = (
        p[roi.y // sy:(roi.y + roi.height) // sy, roi.x // sx:(roi.x + roi.width) // sx]
        for p in (frame.cb, frame.cr)
    )
    return FrameBuffer(cropped, (y, cb, cr))


def _point_indices(src: int, dst: int) -> np.ndarray:
    return np.minimum(((np.arange(dst) + 0.5) * src / dst).astype(np.int64), src - 1)


def _upsample_axis(plane: np.ndarray, size: int, axis: int, mode: Reconstruction) -> np.ndarray:
    src = plane.shape[axis]
    if mode == Reconstruction.NEAREST:
        return np.take(plane, _point_indices(src, size), axis=axis)
    pos = np.clip((np.arange(size) + 0.5) * src / size - 0.5, 0, src - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, src - 1)
    frac = pos - lo
    shape = [1, 1]
    shape[axis] = size
    frac = frac.reshape(shape)
    return np.take(plane, lo, axis=axis) * (1 - frac) + np.take(plane, hi, axis=axis) * frac


def _resample_plane(plane: np.ndarray, resample: Resample) -> np.ndarray:
    """Point-sample onto the display grid, reconstruct onto the camera grid."""
    h, w = plane.shape
    dh = max(1, round(h * resample.scale))
    dw = max(1, round(w * resample.scale))
    display = plane[np.ix_(_point_indices(h, dh), _point_indices(w, dw))]
    up = _upsample_axis(display, h, 0, resample.reconstruction)
    return _upsample_axis(up, w, 1, resample.reconstruction)


def _apply_color(planes: list[np.ndarray], spec: VideoSpec, cfg: ChannelConfig) -> list[np.ndarray]:
    """3x3 matrix on (Y, Cb-0.5, Cr-0.5) then per-channel gamma, in unit range."""
    peak = float(spec.peak)
    subsampled = spec.chroma == Chroma.YUV420
    y, cb, cr = planes
    if subsampled:
        cb = np.repeat(np.repeat(cb, 2, axis=0), 2, axis=1)
        cr = np.repeat(np.repeat(cr, 2, axis=0), 2, axis=1)
    stack = np.stack([y / peak, cb / peak - 0.5, cr / peak - 0.5])
    mixed = np.tensordot(np.asarray(cfg.matrix, dtype=np.float64), stack, axes=1)
    mixed[1:] += 0.5
    mixed = np.clip(mixed, 0.0, 1.0)
    for c, g in enumerate(cfg.gamma):
        if g != 1.0:
            mixed[c] = mixed[c] ** g
    out = [mixed[0] * peak, mixed[1] * peak, mixed[2] * peak]
    if subsampled:
        for c in (1, 2):
            p = out[c]
            out[c] = (p[0::2, 0::2] + p[1::2, 0::2] + p[0::2, 1::2] + p[1::2, 1::2]) / 4
    return out


def _process_frame(
    frame: FrameBuffer, cfg: ChannelConfig, key: int, index: int,
) -> FrameBuffer:
    if cfg.roi is not None:
        frame = _crop(frame, cfg)
    spec = frame.spec
    needs_float = cfg.resample is not None or cfg.has_color or cfg.noise_sigma > 0
    if needs_float:
        planes = [p.astype(np.float64) for p in frame.planes]
        if cfg.resample is not None:
            planes = [_resample_plane(p, cfg.resample) for p in planes]
        if cfg.has_color:
            planes = _apply_color(planes, spec, cfg)
        if cfg.noise_sigma > 0:
            rng = _frame_rng(cfg, key, index)
            planes = [p + rng.normal(0.0, cfg.noise_sigma, size=p.shape) for p in planes]
        planes = [np.clip(np.rint(p), 0, spec.peak).astype(np.uint16) for p in planes]
        frame = FrameBuffer(spec, tuple(planes))
    if cfg.capture_bit_depth is not None or cfg.capture_chroma is not None:
        frame = convert_format(frame, cfg.capture_chroma, cfg.capture_bit_depth)
    return frame


def _jitter(count: int, cfg: ChannelConfig, key: int) -> list[int]:
    """Source index per captured frame after seeded duplicate/skip draws."""
    if not cfg.has_jitter:
        return list(range(count))
    rng = np.random.default_rng([cfg.seed & 0xFFFFFFFF, key, _JITTER_STREAM])
    draws = rng.random(count)
    indices: list[int] = []
    for i, u in enumerate(draws):
        if u < cfg.skip_prob:
            continue
        indices.append(i)
        if u < cfg.skip_prob + cfg.duplicate_prob:
            indices.append(i)
    return indices


def simulate_capture(
    frames: list[FrameBuffer],
    cfg: ChannelConfig,
    capture_key: str = "",
) -> Capture:
    """Run frames through the channel, keeping the ground-truth source index."""
    if not frames:
        raise EmptyInputError("channel input has no frames")
    first = frames[0].spec
    for f in frames[1:]:
        if not f.spec.same_format(first):
            raise GeometryError("channel input frames have inconsistent specs")
    if cfg.is_identity:
        return Capture(list(frames), list(range(len(frames))))

    key = capture_key_int(capture_key)
    processed = [_process_frame(f, cfg, key, i) for i, f in enumerate(frames)]
    indices = _jitter(len(processed), cfg, key)
    logger = get_logger()
    if len(indices) != len(processed):
        logger.debug(
            "Channel jitter: %d source frames -> %d captured", len(processed), len(indices)
        )
    return Capture([processed[i] for i in indices], indices)


def apply_channel(
    frames: list[FrameBuffer],
    cfg: ChannelConfig,
    capture_key: str = "",
) -> list[FrameBuffer]:
    """Captured frames for a clip played through the simulated wall."""
    return simulate_capture(frames, cfg, capture_key).frames


def expected_psnr(sigma: float, bit_depth: int) -> float:
    """PSNR of clamp-free additive Gaussian noise against the clean signal."""
    if sigma <= 0:
        return math.inf
    return 20 * math.log10(((1 << bit_depth) - 1) / sigma)
