"""Corner fiducial markers carrying clip ID and frame index.

A marker is a 10x10 module grid. The outer ring of 36 modules is a fixed
checkerboard used to find the black and white levels; the 8x8 interior
carries, row-major and MSB first, the 48-bit codeword
(clip_id:16, frame_index:24, crc:8) followed by the CRC byte twice.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import FrameUnreadableError, GeometryError, RangeError
from .models import FrameBuffer, Rect

GRID = 10
INTERIOR = GRID - 2
CODEWORD_BITS = 48
REPEAT_BITS = 16
MIN_REPEAT_MATCHES = 12
MIN_BORDER_MATCHES = 32
# white-black gap below this fraction of full scale counts as occluded
MIN_CONTRAST = 0.25

CORNERS = ("top_left", "top_right", "bottom_left", "bottom_right")


def _crc8_table(poly: int = 0x07) -> list[int]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = ((crc << 1) ^ poly) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
        table.append(crc)
    return table


_CRC8_TABLE = _crc8_table()


def crc8(data: bytes) -> int:
    """CRC-8, polynomial 0x07, init 0x00, no reflection, xorout 0x00."""
    crc = 0
    for byte in data:
        crc = _CRC8_TABLE[crc ^ byte]
    return crc


def _payload_bytes(clip_id: int, frame_index: int) -> bytes:
    return clip_id.to_bytes(2, "big") + frame_index.to_bytes(3, "big")


@dataclass(frozen=True)
class MarkerPayload:
    clip_id: int
    frame_index: int
    crc: int

    def __post_init__(self) -> None:
        if not 0 <= self.clip_id <= 0xFFFF:
            raise RangeError(f"clip_id {self.clip_id} outside 16-bit range")
        if not 0 <= self.frame_index <= 0xFFFFFF:
            raise RangeError(f"frame_index {self.frame_index} outside 24-bit range")

    @classmethod
    def create(cls, clip_id: int, frame_index: int) -> MarkerPayload:
        return cls(clip_id, frame_index, crc8(_payload_bytes(clip_id, frame_index)))

    @property
    def crc_ok(self) -> bool:
        return self.crc == crc8(_payload_bytes(self.clip_id, self.frame_index))

    def bits(self) -> np.ndarray:
        """The 64 interior bits."""
        word = _payload_bytes(self.clip_id, self.frame_index) + bytes([self.crc, self.crc, self.crc])
        return np.unpackbits(np.frombuffer(word, dtype=np.uint8))

    def to_dict(self) -> dict:
        return {"clip_id": self.clip_id, "frame_index": self.frame_index, "crc": self.crc}


@dataclass(frozen=True)
class MarkerGeometry:
    module_size: int = 9
    inset: int = 2

    def __post_init__(self) -> None:
        if self.module_size < 1:
            raise GeometryError(f"module size must be >= 1, got {self.module_size}")
        if self.inset < 0:
            raise GeometryError(f"inset must be >= 0, got {self.inset}")

    @property
    def size_px(self) -> int:
        return GRID * self.module_size

    @classmethod
    def from_pixels(cls, size_px: int = 90, inset: int = 2) -> MarkerGeometry:
        if size_px % GRID:
            raise GeometryError(f"marker size {size_px} is not a multiple of {GRID} modules")
        return cls(module_size=size_px // GRID, inset=inset)


@dataclass(frozen=True)
class MarkerFailure:
    """Why a marker could not be decoded."""

    reason: str


def _border_pattern() -> np.ndarray:
    """True = white module."""
    r, c = np.indices((GRID, GRID))
    return (r + c) % 2 == 0


_BORDER_PATTERN = _border_pattern()
_BORDER_MASK = np.ones((GRID, GRID), dtype=bool)
_BORDER_MASK[1:-1, 1:-1] = False


def render_marker(payload: MarkerPayload, geometry: MarkerGeometry, bit_depth: int) -> np.ndarray:
    """Luma patch of size_px x size_px samples."""
    if not payload.crc_ok:
        raise RangeError(f"payload CRC {payload.crc:#04x} inconsistent with its fields")
    white = (1 << bit_depth) - 1
    modules = np.where(_BORDER_PATTERN, white, 0).astype(np.uint16)
    modules[1:-1, 1:-1] = payload.bits().reshape(INTERIOR, INTERIOR).astype(np.uint16) * white
    m = geometry.module_size
    return np.kron(modules, np.ones((m, m), dtype=np.uint16))


def marker_rects(
    width: int,
    height: int,
    geometry: MarkerGeometry,
    region: Rect | None = None,
) -> dict[str, Rect]:
    """Footprints of the four corner markers inside region (default: whole frame)."""
    region = region or Rect(0, 0, width, height)
    size, inset = geometry.size_px, geometry.inset
    if not region.fits_in(width, height):
        raise GeometryError(f"marker region {region} outside {width}x{height} frame")
    if region.width < 2 * (size + inset) or region.height < 2 * (size + inset):
        raise GeometryError(
            f"region {region.width}x{region.height} too small for four "
            f"{size}px markers with {inset}px inset"
        )
    left, top = region.x + inset, region.y + inset
    right = region.x + region.width - inset - size
    bottom = region.y + region.height - inset - size
    return {
        "top_left": Rect(left, top, size, size),
        "top_right": Rect(right, top, size, size),
        "bottom_left": Rect(left, bottom, size, size),
        "bottom_right": Rect(right, bottom, size, size),
    }


def embed_markers(
    frame: FrameBuffer,
    payload: MarkerPayload,
    geometry: MarkerGeometry,
    region: Rect | None = None,
) -> FrameBuffer:
    """Burn four identical markers into luma; chroma under them goes neutral."""
    spec = frame.spec
    rects = marker_rects(spec.width, spec.height, geometry, region)
    patch = render_marker(payload, geometry, spec.bit_depth)
    y, cb, cr = (p.copy() for p in frame.planes)
    ch, cw = spec.chroma_shape
    sy, sx = spec.height // ch, spec.width // cw
    for rect in rects.values():
        y[rect.y:rect.y + rect.height, rect.x:rect.x + rect.width] = patch
        y0, x0 = rect.y // sy, rect.x // sx
        y1, x1 = -(-(rect.y + rect.height) // sy), -(-(rect.x + rect.width) // sx)
        cb[y0:y1, x0:x1] = spec.neutral
        cr[y0:y1, x0:x1] = spec.neutral
    return frame.with_planes((y, cb, cr))


def _module_means(patch: np.ndarray, geometry: MarkerGeometry) -> np.ndarray:
    """Mean of the central 3x3 samples of each module."""
    m = geometry.module_size
    half = 1 if m >= 3 else 0
    centre = m // 2
    lo, hi = max(centre - half, 0), min(centre + half + 1, m)
    blocks = patch.astype(np.float64).reshape(GRID, m, GRID, m)
    return blocks[:, lo:hi, :, lo:hi].mean(axis=(1, 3))


def decode_marker(
    patch: np.ndarray,
    geometry: MarkerGeometry,
    bit_depth: int = 8,
) -> MarkerPayload | MarkerFailure:
    """Decode one luma marker region."""
    size = geometry.size_px
    if patch.shape != (size, size):
        raise GeometryError(f"marker patch is {patch.shape}, expected {(size, size)}")

    means = _module_means(patch, geometry)
    white_level = means[_BORDER_MASK & _BORDER_PATTERN].mean()
    black_level = means[_BORDER_MASK & ~_BORDER_PATTERN].mean()
    if white_level - black_level < MIN_CONTRAST * ((1 << bit_depth) - 1):
        return MarkerFailure("low contrast (occluded or missing marker)")

    threshold = (white_level + black_level) / 2
    modules = means > threshold
    border_matches = int(np.sum(modules[_BORDER_MASK] == _BORDER_PATTERN[_BORDER_MASK]))
    if border_matches < MIN_BORDER_MATCHES:
        return MarkerFailure(f"border pattern mismatch ({border_matches}/36)")

    bits = modules[1:-1, 1:-1].reshape(-1).astype(np.uint8)
    word = np.packbits(bits).tobytes()
    clip_id = int.from_bytes(word[0:2], "big")
    frame_index = int.from_bytes(word[2:5], "big")
    crc = word[5]
    if crc != crc8(word[0:5]):
        return MarkerFailure("CRC mismatch")
    repeat = bits[CODEWORD_BITS:]
    expected = np.unpackbits(np.frombuffer(bytes([crc, crc]), dtype=np.uint8))
    matches = int(np.sum(repeat == expected))
    if matches < MIN_REPEAT_MATCHES:
        return MarkerFailure(f"CRC repetition mismatch ({matches}/16)")
    return MarkerPayload(clip_id, frame_index, crc)


def decode_frame_id(
    frame: FrameBuffer,
    geometry: MarkerGeometry,
    region: Rect | None = None,
) -> tuple[MarkerPayload, int]:
    """Majority payload over the four corners and how many corners agreed."""
    spec = frame.spec
    rects = marker_rects(spec.width, spec.height, geometry, region)
    votes: Counter[MarkerPayload] = Counter()
    diagnostics: dict[str, str] = {}
    for corner in CORNERS:
        rect = rects[corner]
        patch = frame.y[rect.y:rect.y + rect.height, rect.x:rect.x + rect.width]
        result = decode_marker(patch, geometry, spec.bit_depth)
        if isinstance(result, MarkerFailure):
            diagnostics[corner] = result.reason
        else:
            votes[result] += 1
            diagnostics[corner] = f"clip {result.clip_id} frame {result.frame_index}"

    ranked = votes.most_common()
    if not ranked or ranked[0][1] < 2:
        raise FrameUnreadableError(
            "fewer than two corners agree: "
            + ", ".join(f"{k}={v}" for k, v in diagnostics.items()),
            diagnostics=diagnostics,
        )
    if len(ranked) > 1 and ranked[1][1] == ranked[0][1]:
        raise FrameUnreadableError(
            "corners disagree on two payloads with equal votes", diagnostics=diagnostics,
        )
    payload, agreement = ranked[0]
    return payload, agreement


def marker_area_fraction(width: int, height: int, geometry: MarkerGeometry) -> float:
    return 4 * geometry.size_px ** 2 / (width * height)
