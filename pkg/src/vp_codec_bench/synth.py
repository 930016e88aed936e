"""Deterministic synthetic test clips."""

from __future__ import annotations

import numpy as np

from .models import FrameBuffer, VideoSpec

KINDS = ("gradient", "moving_bar", "noise", "text_like", "flat")

BAR_STEP_PX = 2


def _chroma_ramps(spec: VideoSpec) -> tuple[np.ndarray, np.ndarray]:
    h, w = spec.chroma_shape
    peak = spec.peak
    cb = np.tile(np.linspace(peak * 0.25, peak * 0.75, w), (h, 1))
    cr = np.tile(np.linspace(peak * 0.75, peak * 0.25, h)[:, None], (1, w))
    return np.rint(cb).astype(np.uint16), np.rint(cr).astype(np.uint16)


def _gradient(spec: VideoSpec) -> FrameBuffer:
    ramp = np.linspace(0, spec.peak, spec.width)
    y = np.rint(np.tile(ramp, (spec.height, 1))).astype(np.uint16)
    cb, cr = _chroma_ramps(spec)
    return FrameBuffer(spec.frame_format(), (y, cb, cr))


def _bar_frame0(spec: VideoSpec, rng: np.random.Generator) -> tuple[np.ndarray, ...]:
    """Vertical-ramp background with a textured bright bar."""
    peak = spec.peak
    rows = np.linspace(peak * 0.15, peak * 0.45, spec.height)
    y = np.tile(rows[:, None], (1, spec.width))
    bar_w = max(2, spec.width // 4)
    x0 = spec.width // 8
    texture = rng.uniform(peak * 0.55, peak * 0.95, size=(spec.height, bar_w))
    y[:, x0:x0 + bar_w] = texture
    y = np.rint(y).astype(np.uint16)

    ch, cw = spec.chroma_shape
    cb = np.full((ch, cw), spec.neutral, dtype=np.uint16)
    cr = np.full((ch, cw), spec.neutral, dtype=np.uint16)
    sx = cw / spec.width
    cx0, cx1 = int(x0 * sx), max(int(x0 * sx) + 1, int((x0 + bar_w) * sx))
    cb[:, cx0:cx1] = int(peak * 0.35)
    cr[:, cx0:cx1] = int(peak * 0.65)
    return y, cb, cr


def _moving_bar(spec: VideoSpec, rng: np.random.Generator) -> list[FrameBuffer]:
    y0, cb0, cr0 = _bar_frame0(spec, rng)
    chroma_scale = spec.chroma_shape[1] / spec.width
    frames = []
    for n in range(spec.frame_count):
        shift = BAR_STEP_PX * n
        cshift = int(round(shift * chroma_scale))
        frames.append(FrameBuffer(spec.frame_format(), (
            np.roll(y0, shift, axis=1),
            np.roll(cb0, cshift, axis=1),
            np.roll(cr0, cshift, axis=1),
        )))
    return frames


def _noise(spec: VideoSpec, rng: np.random.Generator) -> list[FrameBuffer]:
    frames = []
    for _ in range(spec.frame_count):
        planes = tuple(
            rng.integers(0, spec.peak + 1, size=shape, dtype=np.uint16)
            for shape in spec.plane_shapes
        )
        frames.append(FrameBuffer(spec.frame_format(), planes))
    return frames


def _text_like(spec: VideoSpec, rng: np.random.Generator) -> list[FrameBuffer]:
    """Saturated glyph-like blocks scrolling upward one row per frame."""
    cell = max(4, spec.height // 12)
    rows = spec.height // cell + 2
    cols = spec.width // cell + 1
    glyphs = rng.random((rows, cols, 3, 3)) > 0.55
    page = np.zeros((rows * cell, cols * cell), dtype=bool)
    sub = max(1, cell // 3)
    for r in range(rows):
        for c in range(cols):
            block = np.kron(glyphs[r, c], np.ones((sub, sub), dtype=bool))
            page[r * cell:r * cell + block.shape[0], c * cell:c * cell + block.shape[1]] = block
    colours = rng.integers(0, 3, size=(rows, cols))
    frames = []
    for n in range(spec.frame_count):
        view = np.roll(page, -n, axis=0)[:spec.height, :spec.width]
        y = np.where(view, spec.peak * 0.9, spec.peak * 0.08)
        y = np.rint(y).astype(np.uint16)
        cb, cr = (np.full(spec.chroma_shape, spec.neutral, dtype=np.uint16) for _ in range(2))
        ch, cw = spec.chroma_shape
        tint = np.repeat(np.repeat(np.roll(colours, -(n // cell), axis=0), cell, 0), cell, 1)
        tint = tint[:spec.height, :spec.width]
        if (ch, cw) != (spec.height, spec.width):
            tint = tint[::2, ::2]
        cb = np.where(tint == 0, int(spec.peak * 0.8), cb)
        cr = np.where(tint == 1, int(spec.peak * 0.8), cr)
        frames.append(FrameBuffer(spec.frame_format(), (y, cb.astype(np.uint16),
                                                       cr.astype(np.uint16))))
    return frames


def generate_synthetic_clip(kind: str, spec: VideoSpec, seed: int = 0) -> list[FrameBuffer]:
    """Generate spec.frame_count frames of synthetic content.

    gradient and flat are static; moving_bar translates 2 px per frame
    horizontally (wrapping); noise draws seeded uniform samples per frame.
    """
    rng = np.random.default_rng(seed)
    if kind == "gradient":
        frame = _gradient(spec)
        return [frame] * spec.frame_count
    if kind == "flat":
        frame = FrameBuffer.blank(spec, luma=spec.neutral)
        return [frame] * spec.frame_count
    if kind == "moving_bar":
        return _moving_bar(spec, rng)
    if kind == "noise":
        return _noise(spec, rng)
    if kind == "text_like":
        return _text_like(spec, rng)
    raise ValueError(f"unknown synthetic clip kind {kind!r}; expected one of {KINDS}")
