"""YUV4MPEG2 container I/O and pixel-format conversion."""

from __future__ import annotations

import io
from collections.abc import Iterable, Iterator
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import DimensionError, TruncationError, UnsupportedFormatError, Y4MParseError
from .models import Chroma, FrameBuffer, VideoSpec, format_fraction, parse_fraction

SIGNATURE = b"YUV4MPEG2"
FRAME_TAG = b"FRAME"

# colorspace tag -> (chroma, bit depth)
_COLORSPACES: dict[str, tuple[Chroma, int]] = {
    "420": (Chroma.YUV420, 8),
    "420jpeg": (Chroma.YUV420, 8),
    "420paldv": (Chroma.YUV420, 8),
    "420mpeg2": (Chroma.YUV420, 8),
    "444": (Chroma.YUV444, 8),
    "420p10": (Chroma.YUV420, 10),
    "444p10": (Chroma.YUV444, 10),
    "420p12": (Chroma.YUV420, 12),
    "444p12": (Chroma.YUV444, 12),
}


def colorspace_tag(chroma: Chroma, bit_depth: int) -> str:
    if bit_depth == 8:
        return chroma.value
    return f"{chroma.value}p{bit_depth}"


def _read_line(stream: BinaryIO, limit: int = 4096) -> bytes | None:
    """Read up to and excluding '\\n'. None at clean EOF."""
    buf = bytearray()
    while True:
        ch = stream.read(1)
        if not ch:
            return bytes(buf) if buf else None
        if ch == b"\n":
            return bytes(buf)
        buf += ch
        if len(buf) > limit:
            raise Y4MParseError("header line too long")


def parse_header(line: bytes) -> VideoSpec:
    """Parse a stream header line (without the trailing newline)."""
    tokens = line.split(b" ")
    if not tokens or tokens[0] != SIGNATURE:
        raise Y4MParseError(f"missing YUV4MPEG2 signature, got {tokens[0][:16]!r}")

    width = height = None
    frame_rate = None
    chroma, bit_depth = Chroma.YUV420, 8
    for raw in tokens[1:]:
        if not raw:
            continue
        token = raw.decode("ascii", errors="replace")
        key, value = token[0], token[1:]
        try:
            if key == "W":
                width = int(value)
            elif key == "H":
                height = int(value)
            elif key == "F":
                num, _, den = value.partition(":")
                frame_rate = parse_fraction(f"{int(num)}/{int(den)}")
            elif key == "C":
                if value not in _COLORSPACES:
                    raise UnsupportedFormatError(f"unsupported colorspace tag {token!r}")
                chroma, bit_depth = _COLORSPACES[value]
            elif key in "IAX":
                continue
            else:
                raise Y4MParseError(f"unknown header token {token!r}")
        except (ValueError, ZeroDivisionError) as e:
            raise Y4MParseError(f"malformed header token {token!r}") from e

    for name, value in (("W", width), ("H", height), ("F", frame_rate)):
        if value is None:
            raise Y4MParseError(f"header is missing the {name} token")
    try:
        return VideoSpec(width, height, bit_depth, chroma, frame_rate, 0)
    except DimensionError as e:
        raise Y4MParseError(f"invalid header geometry: {e}") from e


def format_header(spec: VideoSpec) -> bytes:
    fps = format_fraction(spec.frame_rate).replace("/", ":")
    tag = colorspace_tag(spec.chroma, spec.bit_depth)
    return f"YUV4MPEG2 W{spec.width} H{spec.height} F{fps} C{tag}\n".encode("ascii")


def _decode_frame(spec: VideoSpec, payload: bytes) -> FrameBuffer:
    dtype = np.uint8 if spec.bit_depth == 8 else np.dtype("<u2")
    samples = np.frombuffer(payload, dtype=dtype)
    planes = []
    offset = 0
    for h, w in spec.plane_shapes:
        planes.append(samples[offset:offset + h * w].reshape(h, w))
        offset += h * w
    return FrameBuffer(spec.frame_format(), tuple(planes))


def _encode_frame(spec: VideoSpec, frame: FrameBuffer) -> bytes:
    if not frame.spec.same_format(spec):
        raise DimensionError(
            f"frame {frame.spec.width}x{frame.spec.height} {frame.spec.chroma.value} "
            f"{frame.spec.bit_depth}-bit does not match stream "
            f"{spec.width}x{spec.height} {spec.chroma.value} {spec.bit_depth}-bit"
        )
    dtype = np.uint8 if spec.bit_depth == 8 else np.dtype("<u2")
    return b"".join(p.astype(dtype).tobytes() for p in frame.planes)


def iter_y4m(stream: BinaryIO) -> tuple[VideoSpec, Iterator[FrameBuffer]]:
    """Parse the header and return a lazy frame iterator (single consumer)."""
    header = _read_line(stream)
    if header is None:
        raise Y4MParseError("empty stream")
    spec = parse_header(header)

    def frames() -> Iterator[FrameBuffer]:
        index = 0
        while True:
            line = _read_line(stream)
            if line is None:
                return
            if not line.startswith(FRAME_TAG):
                raise Y4MParseError(f"expected FRAME marker at frame {index}, got {line[:16]!r}")
            payload = stream.read(spec.frame_bytes)
            if len(payload) < spec.frame_bytes:
                raise TruncationError(
                    f"frame {index} truncated: {len(payload)} of {spec.frame_bytes} bytes",
                    frame_index=index,
                )
            yield _decode_frame(spec, payload)
            index += 1

    return spec, frames()


def read_y4m(source: bytes | BinaryIO) -> tuple[VideoSpec, list[FrameBuffer]]:
    """Read a whole Y4M stream. frame_count in the returned VideoSpec is the number of frames read."""
    stream = io.BytesIO(source) if isinstance(source, (bytes, bytearray)) else source
    spec, frames = iter_y4m(stream)
    frame_list = list(frames)
    return spec.with_frames(len(frame_list)), frame_list


def write_y4m_to(stream: BinaryIO, spec: VideoSpec, frames: Iterable[FrameBuffer]) -> int:
    """Stream frames out; returns the number of frames written."""
    stream.write(format_header(spec))
    count = 0
    for frame in frames:
        payload = _encode_frame(spec, frame)
        stream.write(FRAME_TAG + b"\n")
        stream.write(payload)
        count += 1
    return count


def write_y4m(spec: VideoSpec, frames: Iterable[FrameBuffer]) -> bytes:
    buf = io.BytesIO()
    write_y4m_to(buf, spec, frames)
    return buf.getvalue()


def read_y4m_file(path: str | Path) -> tuple[VideoSpec, list[FrameBuffer]]:
    with open(path, "rb") as f:
        return read_y4m(f)


def write_y4m_file(path: str | Path, spec: VideoSpec, frames: Iterable[FrameBuffer]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        return write_y4m_to(f, spec, frames)


def _downsample_chroma(plane: np.ndarray) -> np.ndarray:
    """2x2 box average with rounding."""
    p = plane.astype(np.uint32)
    total = p[0::2, 0::2] + p[1::2, 0::2] + p[0::2, 1::2] + p[1::2, 1::2]
    return ((total + 2) // 4).astype(np.uint16)


def _upsample_chroma(plane: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(plane, 2, axis=0), 2, axis=1)


def _shift_depth(plane: np.ndarray, source: int, target: int) -> np.ndarray:
    if target == source:
        return plane
    if target > source:
        return (plane.astype(np.uint32) << (target - source)).astype(np.uint16)
    shift = source - target
    peak = (1 << target) - 1
    rounded = (plane.astype(np.uint32) + (1 << (shift - 1))) >> shift
    return np.minimum(rounded, peak).astype(np.uint16)


def convert_format(
    frame: FrameBuffer,
    chroma: Chroma | None = None,
    bit_depth: int | None = None,
) -> FrameBuffer:
    """Convert chroma layout and/or bit depth. Luma is only ever bit-shifted."""
    spec = frame.spec
    chroma = chroma or spec.chroma
    bit_depth = bit_depth or spec.bit_depth
    if chroma not in (Chroma.YUV420, Chroma.YUV444):
        raise UnsupportedFormatError(f"unsupported chroma target {chroma!r}")
    if bit_depth not in (8, 10, 12):
        raise UnsupportedFormatError(f"unsupported bit depth target {bit_depth}")
    if chroma == spec.chroma and bit_depth == spec.bit_depth:
        return frame

    y, cb, cr = frame.planes
    if chroma != spec.chroma:
        if chroma == Chroma.YUV420:
            if spec.width % 2 or spec.height % 2:
                raise DimensionError(f"4:2:0 needs even dimensions, got {spec.width}x{spec.height}")
            cb, cr = _downsample_chroma(cb), _downsample_chroma(cr)
        else:
            cb, cr = _upsample_chroma(cb), _upsample_chroma(cr)

    planes = tuple(_shift_depth(p, spec.bit_depth, bit_depth) for p in (y, cb, cr))
    target = VideoSpec(
        spec.width, spec.height, bit_depth, chroma, spec.frame_rate, 1,
    )
    return FrameBuffer(target, planes)


def common_format(a: VideoSpec, b: VideoSpec) -> tuple[Chroma, int]:
    """Scoring format for a pair: 4:4:4 at the higher bit depth."""
    if a.width != b.width or a.height != b.height:
        raise DimensionError(
            f"cannot compare {a.width}x{a.height} against {b.width}x{b.height}"
        )
    if a.same_format(b):
        return a.chroma, a.bit_depth
    return Chroma.YUV444, max(a.bit_depth, b.bit_depth)


def clip_spec(frames: list[FrameBuffer], frame_rate=None) -> VideoSpec:
    """Clip-level spec for a list of frames."""
    if not frames:
        raise DimensionError("no frames")
    spec = frames[0].spec
    if frame_rate is not None:
        spec = VideoSpec(spec.width, spec.height, spec.bit_depth, spec.chroma, frame_rate, 1)
    return spec.with_frames(len(frames))
