"""Hermetic block-transform codec used when no external encoder is available.

Each plane, minus the mid-grey level, is cut into 8x8 blocks that go
through a three-level integer S-transform (a reversible Haar lifting
scheme). Coefficients are quantised uniformly with step 1 + round(qp * w),
where w evens out the synthesis gain of the coefficient's subband; the
finest horizontal and vertical detail bands get exactly qp + 1. Levels are
zigzag scanned and packed as varint (run, level) pairs without entropy
coding.

Inter frames code each block as the level delta against the previous
frame, or as plain levels where that packs smaller, so a frame plane
decodes to the same picture at a given qp in every GOP mode and qp 0 is
lossless.

The encoder walks qp up from 0. A frame plane keeps its previous qp when
the new step would lower its error, and the whole previous plan is kept
when the stream would grow, so as qp rises the stream never grows and
no frame gets closer to its source.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import EncodeError, RangeError
from .models import Chroma, FrameBuffer, GopMode, VideoSpec

MAGIC = b"VPT2"
QP_MAX = 63
BLOCK = 8
LEVELS = 3
_HEADER = struct.Struct(">4sHHBBIIIBI")
_INTRA, _INTER = 0, 1
_MODE_LEVELS, _MODE_DELTA = 0, 1


def _zigzag_order() -> np.ndarray:
    cells = [(r, c) for r in range(BLOCK) for c in range(BLOCK)]
    cells.sort(key=lambda rc: (rc[0] + rc[1], rc[0] if (rc[0] + rc[1]) % 2 else rc[1]))
    return np.array([r * BLOCK + c for r, c in cells], dtype=np.int64)


ZIGZAG = _zigzag_order()
UNZIGZAG = np.argsort(ZIGZAG)


def _lift_forward(x: np.ndarray, axis: int, n: int) -> None:
    """S-transform of the first n samples along axis, in place."""
    idx_a = [slice(None)] * x.ndim
    idx_b = [slice(None)] * x.ndim
    idx_a[axis] = slice(0, n, 2)
    idx_b[axis] = slice(1, n, 2)
    a, b = x[tuple(idx_a)].copy(), x[tuple(idx_b)].copy()
    low = (a + b) >> 1
    high = a - b
    lo_idx = [slice(None)] * x.ndim
    hi_idx = [slice(None)] * x.ndim
    lo_idx[axis] = slice(0, n // 2)
    hi_idx[axis] = slice(n // 2, n)
    x[tuple(lo_idx)] = low
    x[tuple(hi_idx)] = high


def _lift_inverse(x: np.ndarray, axis: int, n: int) -> None:
    lo_idx = [slice(None)] * x.ndim
    hi_idx = [slice(None)] * x.ndim
    lo_idx[axis] = slice(0, n // 2)
    hi_idx[axis] = slice(n // 2, n)
    low, high = x[tuple(lo_idx)].copy(), x[tuple(hi_idx)].copy()
    a = low + ((high + 1) >> 1)
    b = a - high
    idx_a = [slice(None)] * x.ndim
    idx_b = [slice(None)] * x.ndim
    idx_a[axis] = slice(0, n, 2)
    idx_b[axis] = slice(1, n, 2)
    x[tuple(idx_a)] = a
    x[tuple(idx_b)] = b


def forward_transform(blocks: np.ndarray) -> np.ndarray:
    """(N, 8, 8) int64 -> coefficients, Mallat layout."""
    x = blocks.astype(np.int64).copy()
    n = BLOCK
    for _ in range(LEVELS):
        sub = x[:, :n, :n]
        _lift_forward(sub, 2, n)
        _lift_forward(sub, 1, n)
        n //= 2
    return x


def inverse_transform(coeffs: np.ndarray) -> np.ndarray:
    x = coeffs.astype(np.int64).copy()
    n = BLOCK >> (LEVELS - 1)
    for _ in range(LEVELS):
        sub = x[:, :n, :n]
        _lift_inverse(sub, 1, n)
        _lift_inverse(sub, 2, n)
        n *= 2
    return x


def _band_weights() -> np.ndarray:
    """Step multiplier per coefficient position of the Mallat layout.

    One over the square root of the subband's synthesis energy gain: a
    lifting low band doubles the energy of an error, a high band halves it.
    """
    gain = np.empty((BLOCK, BLOCK))
    for r in range(BLOCK):
        for c in range(BLOCK):
            n, level = BLOCK, 1
            while max(r, c) < n // 2 and level < LEVELS:
                n //= 2
                level += 1
            half = n // 2
            row_gain = 2.0 if r < half else 0.5
            col_gain = 2.0 if c < half else 0.5
            gain[r, c] = 4.0 ** (level - 1) * row_gain * col_gain
    return 1.0 / np.sqrt(gain)


BAND_WEIGHTS = _band_weights()


def band_steps(qp) -> np.ndarray:
    """Quantiser steps, shape (..., 8, 8) for a qp of shape (...)."""
    scaled = np.asarray(qp, dtype=np.float64)[..., None, None] * BAND_WEIGHTS
    return 1 + np.floor(scaled + 0.5).astype(np.int64)


def quantize(coeffs: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Round half away from zero; magnitudes never grow as steps do."""
    mag = (np.abs(coeffs) * 2 + steps) // (2 * steps)
    return np.sign(coeffs) * mag


def dequantize(levels: np.ndarray, steps: np.ndarray) -> np.ndarray:
    return levels * steps


def _to_blocks(plane: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    h, w = plane.shape
    ph, pw = -(-h // BLOCK) * BLOCK, -(-w // BLOCK) * BLOCK
    padded = np.pad(plane, ((0, ph - h), (0, pw - w)), mode="edge")
    blocks = padded.reshape(ph // BLOCK, BLOCK, pw // BLOCK, BLOCK).swapaxes(1, 2)
    return blocks.reshape(-1, BLOCK, BLOCK), (ph, pw)


def _from_blocks(blocks: np.ndarray, padded: tuple[int, int], shape: tuple[int, int]) -> np.ndarray:
    """(..., N, 8, 8) blocks back to (..., h, w) planes."""
    ph, pw = padded
    lead = blocks.shape[:-3]
    grid = blocks.reshape(*lead, ph // BLOCK, pw // BLOCK, BLOCK, BLOCK).swapaxes(-3, -2)
    return grid.reshape(*lead, ph, pw)[..., :shape[0], :shape[1]]


def _padded(shape: tuple[int, int]) -> tuple[int, int]:
    return -(-shape[0] // BLOCK) * BLOCK, -(-shape[1] // BLOCK) * BLOCK


def _reconstruct(
    levels: np.ndarray,
    steps: np.ndarray,
    shape: tuple[int, int],
    neutral: int,
    peak: int,
) -> np.ndarray:
    """(..., N, 8, 8) levels to (..., h, w) decoded planes."""
    coeffs = dequantize(levels, steps).reshape(-1, BLOCK, BLOCK)
    blocks = inverse_transform(coeffs).reshape(levels.shape)
    return np.clip(neutral + _from_blocks(blocks, _padded(shape), shape), 0, peak)


def _signed_to_unsigned(values: np.ndarray) -> np.ndarray:
    return np.where(values >= 0, values << 1, ((-values) << 1) - 1)


def _varint_len(values: np.ndarray) -> np.ndarray:
    n = np.ones(values.shape, dtype=np.int64)
    for shift in range(7, 63, 7):
        n += values >= (1 << shift)
    return n


def _block_costs(rows: np.ndarray, mode: int) -> np.ndarray:
    """Packed bytes of each (..., 64) zigzag row under _pack_blocks."""
    nz = rows != 0
    idx = np.arange(rows.shape[-1], dtype=np.int64)
    last = np.maximum.accumulate(np.where(nz, idx, -1), axis=-1)
    before = np.concatenate(
        [np.full(rows.shape[:-1] + (1,), -1, dtype=np.int64), last[..., :-1]], axis=-1
    )
    body = np.where(nz, _varint_len(idx - before - 1) + _varint_len(_signed_to_unsigned(rows)), 0)
    return _varint_len(2 * nz.sum(axis=-1) + mode) + body.sum(axis=-1)


def _zigzag_rows(levels: np.ndarray) -> np.ndarray:
    return levels.reshape(*levels.shape[:-2], BLOCK * BLOCK)[..., ZIGZAG]


def _block_modes(rows: np.ndarray, intra: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coding mode and packed bytes per block of (F, N, 64) zigzag levels."""
    cost = _block_costs(rows, _MODE_LEVELS)
    modes = np.full(cost.shape, _MODE_LEVELS, dtype=np.int64)
    if len(rows) > 1:
        delta_cost = _block_costs(rows[1:] - rows[:-1], _MODE_DELTA)
        use = (delta_cost < cost[1:]) & ~intra[1:, None]
        modes[1:][use] = _MODE_DELTA
        cost[1:] = np.where(use, delta_cost, cost[1:])
    return modes, cost


@dataclass
class _PlaneStack:
    """One plane of every frame, with its transform coefficients."""

    source: np.ndarray  # (F, h, w)
    coeffs: np.ndarray  # (F, N, 8, 8)

    @classmethod
    def of(cls, planes: list[np.ndarray], neutral: int) -> _PlaneStack:
        source = np.stack([p.astype(np.int64) for p in planes])
        blocks = np.stack([_to_blocks(p - neutral)[0] for p in source])
        coeffs = forward_transform(blocks.reshape(-1, BLOCK, BLOCK)).reshape(blocks.shape)
        return cls(source, coeffs)

    @property
    def shape(self) -> tuple[int, int]:
        return self.source.shape[1], self.source.shape[2]

    def errors(self, levels: np.ndarray, steps: np.ndarray, neutral: int, peak: int) -> np.ndarray:
        """Squared error of each decoded frame."""
        diff = _reconstruct(levels, steps, self.shape, neutral, peak) - self.source
        return (diff * diff).reshape(len(diff), -1).sum(axis=1)


def _packed_size(levels: list[np.ndarray], intra: np.ndarray) -> int:
    """Bytes of every block across all planes; the rest of the stream is fixed."""
    return sum(int(_block_modes(_zigzag_rows(lv), intra)[1].sum()) for lv in levels)


def _plan(
    stacks: list[_PlaneStack],
    intra: np.ndarray,
    qp: int,
    neutral: int,
    peak: int,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-plane (F,) qp choices and (F, N, 8, 8) levels for a target qp."""
    frames = len(intra)
    chosen = [np.zeros(frames, dtype=np.int64) for _ in stacks]
    levels = [s.coeffs for s in stacks]
    errors = [np.zeros(frames, dtype=np.int64) for _ in stacks]
    size = _packed_size(levels, intra)
    for q in range(1, qp + 1):
        steps = band_steps(q)
        next_chosen, next_levels, next_errors = [], [], []
        for stack, current, lv, err in zip(stacks, chosen, levels, errors):
            candidate = quantize(stack.coeffs, steps)
            cand_err = stack.errors(candidate, steps, neutral, peak)
            take = cand_err >= err
            next_chosen.append(np.where(take, q, current))
            next_levels.append(np.where(take[:, None, None, None], candidate, lv))
            next_errors.append(np.where(take, cand_err, err))
        next_size = _packed_size(next_levels, intra)
        if next_size <= size:
            chosen, levels, errors, size = next_chosen, next_levels, next_errors, next_size
    return chosen, levels


def _put_varint(out: bytearray, value: int) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def _get_varint(data: bytes, pos: int) -> tuple[int, int]:
    value = shift = 0
    while True:
        if pos >= len(data):
            raise EncodeError("toy bitstream truncated")
        byte = data[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7


def _pack_blocks(out: bytearray, rows: np.ndarray, modes: np.ndarray) -> None:
    """Append (N, 64) zigzag rows as mode/count header + (run, level) pairs."""
    for block, mode in zip(rows, modes.tolist()):
        nz = np.flatnonzero(block)
        _put_varint(out, 2 * len(nz) + mode)
        prev = -1
        for pos in nz.tolist():
            _put_varint(out, pos - prev - 1)
            v = int(block[pos])
            _put_varint(out, (v << 1) if v >= 0 else (-v << 1) - 1)
            prev = pos


def _unpack_blocks(data: bytes, pos: int, count: int) -> tuple[np.ndarray, np.ndarray, int]:
    rows = np.zeros((count, BLOCK * BLOCK), dtype=np.int64)
    modes = np.zeros(count, dtype=np.int64)
    for i in range(count):
        header, pos = _get_varint(data, pos)
        modes[i] = header & 1
        at = -1
        for _ in range(header >> 1):
            run, pos = _get_varint(data, pos)
            zz, pos = _get_varint(data, pos)
            at += run + 1
            if at >= BLOCK * BLOCK:
                raise EncodeError("toy bitstream run overflows its block")
            rows[i, at] = (zz >> 1) if not zz & 1 else -((zz + 1) >> 1)
    return rows, modes, pos


def toy_encode(frames: list[FrameBuffer], qp: int, gop: GopMode | None) -> bytes:
    """Encode a clip; returns the complete bitstream."""
    if not 0 <= qp <= QP_MAX:
        raise RangeError(f"toy qp {qp} outside [0, {QP_MAX}]")
    if not frames:
        raise EncodeError("cannot encode an empty clip")
    spec = frames[0].spec
    gop = gop or GopMode.all_intra()
    period = gop.intra_period(len(frames), spec.frame_rate)
    intra = np.arange(len(frames)) % period == 0
    stacks = [
        _PlaneStack.of([f.planes[p] for f in frames], spec.neutral)
        for p in range(len(spec.plane_shapes))
    ]
    chosen, levels = _plan(stacks, intra, qp, spec.neutral, spec.peak)
    coded = []
    for lv in levels:
        rows = _zigzag_rows(lv)
        modes, _ = _block_modes(rows, intra)
        coded.append((rows, modes))

    out = bytearray(_HEADER.pack(
        MAGIC, spec.width, spec.height, spec.bit_depth,
        0 if spec.chroma == Chroma.YUV420 else 1,
        spec.frame_rate.numerator, spec.frame_rate.denominator,
        len(frames), qp, period,
    ))
    for i in range(len(frames)):
        out.append(_INTRA if intra[i] else _INTER)
        for plane_qp, (rows, modes) in zip(chosen, coded):
            out.append(int(plane_qp[i]))
            values = rows[i]
            if i:
                values = np.where((modes[i] == _MODE_DELTA)[:, None], rows[i] - rows[i - 1], rows[i])
            _pack_blocks(out, values, modes[i])
    return bytes(out)


def toy_decode(data: bytes) -> tuple[VideoSpec, list[FrameBuffer]]:
    """Exact inverse of the packing and dequantisation in toy_encode."""
    if len(data) < _HEADER.size or data[:4] != MAGIC:
        raise EncodeError("not a toy codec bitstream")
    _magic, width, height, bit_depth, chroma_code, num, den, count, _qp, _period = (
        _HEADER.unpack_from(data, 0)
    )
    spec = VideoSpec(
        width, height, bit_depth,
        Chroma.YUV420 if chroma_code == 0 else Chroma.YUV444,
        Fraction(num, den), count,
    )
    pos = _HEADER.size
    frames: list[FrameBuffer] = []
    previous: list[np.ndarray] | None = None
    for _ in range(count):
        if pos >= len(data):
            raise EncodeError("toy bitstream truncated")
        kind = data[pos]
        pos += 1
        if kind not in (_INTRA, _INTER):
            raise EncodeError(f"unknown toy frame kind {kind}")
        if kind == _INTER and previous is None:
            raise EncodeError("inter frame without a preceding intra frame")
        planes, current = [], []
        for p, shape in enumerate(spec.plane_shapes):
            if pos >= len(data):
                raise EncodeError("toy bitstream truncated")
            plane_qp = data[pos]
            pos += 1
            if plane_qp > QP_MAX:
                raise EncodeError(f"toy plane qp {plane_qp} outside [0, {QP_MAX}]")
            padded = _padded(shape)
            n_blocks = (padded[0] // BLOCK) * (padded[1] // BLOCK)
            rows, modes, pos = _unpack_blocks(data, pos, n_blocks)
            delta = modes == _MODE_DELTA
            if delta.any():
                if kind == _INTRA:
                    raise EncodeError("delta block in an intra frame")
                rows = np.where(delta[:, None], previous[p] + rows, rows)
            current.append(rows)
            levels = rows[:, UNZIGZAG].reshape(n_blocks, BLOCK, BLOCK)
            planes.append(_reconstruct(levels, band_steps(plane_qp), shape, spec.neutral, spec.peak))
        previous = current
        frames.append(FrameBuffer(spec.frame_format(), tuple(planes)))
    return spec, frames
