"""Data models for vp-codec-bench."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .errors import ConsistencyError, DimensionError, RangeError, UnsupportedFormatError

SUPPORTED_BIT_DEPTHS = (8, 10, 12)


class Chroma(enum.Enum):
    YUV420 = "420"
    YUV444 = "444"


class ClipRole(enum.Enum):
    REF = "Ref"
    DEG = "Deg"
    DEG_DEC = "DegDec"
    REF_CAM = "RefCam"
    DEG_DEC_CAM = "DegDecCam"


# Ref -> Deg -> DegDec -> DegDecCam, Ref -> RefCam
_ROLE_TRANSITIONS: dict[ClipRole, set[ClipRole]] = {
    ClipRole.REF: {ClipRole.DEG, ClipRole.REF_CAM},
    ClipRole.DEG: {ClipRole.DEG_DEC},
    ClipRole.DEG_DEC: {ClipRole.DEG_DEC_CAM},
    ClipRole.REF_CAM: set(),
    ClipRole.DEG_DEC_CAM: set(),
}


class GopKind(enum.Enum):
    ALL_INTRA = "all_intra"
    SINGLE_INTRA = "single_intra"
    FIXED_FRAMES = "frames"
    SECONDS = "seconds"


class Backend(enum.Enum):
    TOY = "toy"
    EXTERNAL = "external"


class RateParamKind(enum.Enum):
    QP = "qp"
    CQ = "cq"
    QUALITY_LEVEL = "quality_level"
    FIXED_MODE = "fixed_mode"


class Reconstruction(enum.Enum):
    NEAREST = "nearest"
    BILINEAR = "bilinear"


class EventKind(enum.Enum):
    DUPLICATE = "Duplicate"
    SKIP = "Skip"
    UNREADABLE = "Unreadable"


class PairPolicy(enum.Enum):
    STRICT = "strict"
    FIRST_OF_DUP = "first_of_dup"


class MaskKind(enum.Enum):
    FULL = "full"
    EXCLUDE_MARKERS = "exclude_markers"
    ROI = "roi"


def parse_fraction(value: str | int | float | Fraction) -> Fraction:
    """Parse "30/1", "30000:1001", 30 or 29.97 into an exact rational."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value.replace(":", "/"))
    return Fraction(value).limit_denominator(100000)


def format_fraction(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle."""

    x: int
    y: int
    width: int
    height: int

    def fits_in(self, width: int, height: int) -> bool:
        return (
            self.x >= 0 and self.y >= 0 and self.width > 0 and self.height > 0
            and self.x + self.width <= width and self.y + self.height <= height
        )

    def translate(self, dx: int, dy: int) -> Rect:
        return Rect(self.x + dx, self.y + dy, self.width, self.height)

    def to_list(self) -> list[int]:
        return [self.x, self.y, self.width, self.height]

    @classmethod
    def from_list(cls, values: list[int] | tuple[int, ...]) -> Rect:
        if len(values) != 4:
            raise ValueError(f"rectangle needs 4 values [x, y, w, h], got {values!r}")
        return cls(*(int(v) for v in values))


@dataclass(frozen=True)
class VideoSpec:
    """Clip geometry, sample format and timing."""

    width: int
    height: int
    bit_depth: int = 8
    chroma: Chroma = Chroma.YUV420
    frame_rate: Fraction = Fraction(30, 1)
    frame_count: int = 0

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise DimensionError(f"invalid dimensions {self.width}x{self.height}")
        if self.chroma == Chroma.YUV420 and (self.width % 2 or self.height % 2):
            raise DimensionError(
                f"4:2:0 needs even dimensions, got {self.width}x{self.height}"
            )
        if self.bit_depth not in SUPPORTED_BIT_DEPTHS:
            raise UnsupportedFormatError(f"unsupported bit depth {self.bit_depth}")
        if not isinstance(self.frame_rate, Fraction):
            object.__setattr__(self, "frame_rate", parse_fraction(self.frame_rate))
        if self.frame_rate.numerator <= 0 or self.frame_rate.denominator <= 0:
            raise DimensionError(f"invalid frame rate {self.frame_rate}")
        if self.frame_count < 0:
            raise DimensionError(f"negative frame count {self.frame_count}")

    @property
    def peak(self) -> int:
        return (1 << self.bit_depth) - 1

    @property
    def neutral(self) -> int:
        return 1 << (self.bit_depth - 1)

    @property
    def duration_seconds(self) -> float:
        return float(self.frame_count / self.frame_rate)

    @property
    def chroma_shape(self) -> tuple[int, int]:
        if self.chroma == Chroma.YUV420:
            return self.height // 2, self.width // 2
        return self.height, self.width

    @property
    def plane_shapes(self) -> tuple[tuple[int, int], ...]:
        return (self.height, self.width), self.chroma_shape, self.chroma_shape

    @property
    def frame_bytes(self) -> int:
        """Size of one raw frame payload in a Y4M stream."""
        bytes_per_sample = 1 if self.bit_depth == 8 else 2
        return sum(h * w for h, w in self.plane_shapes) * bytes_per_sample

    def frame_format(self) -> VideoSpec:
        """Single-frame view of this spec."""
        return replace(self, frame_count=1)

    def with_frames(self, frame_count: int) -> VideoSpec:
        return replace(self, frame_count=frame_count)

    def same_format(self, other: VideoSpec) -> bool:
        """Geometry and sample format match (frame count ignored)."""
        return (
            self.width == other.width and self.height == other.height
            and self.bit_depth == other.bit_depth and self.chroma == other.chroma
        )

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "bit_depth": self.bit_depth,
            "chroma": self.chroma.value,
            "frame_rate": format_fraction(self.frame_rate),
            "frame_count": self.frame_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> VideoSpec:
        return cls(
            width=int(d["width"]),
            height=int(d["height"]),
            bit_depth=int(d.get("bit_depth", 8)),
            chroma=Chroma(str(d.get("chroma", "420"))),
            frame_rate=parse_fraction(d.get("frame_rate", "30/1")),
            frame_count=int(d.get("frame_count", 0)),
        )


@dataclass(frozen=True, eq=False)
class FrameBuffer:
    """One immutable planar Y, Cb, Cr frame."""

    spec: VideoSpec
    planes: tuple[np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self) -> None:
        if len(self.planes) != 3:
            raise DimensionError(f"expected 3 planes, got {len(self.planes)}")
        frozen = []
        for name, plane, shape in zip("Y Cb Cr".split(), self.planes, self.spec.plane_shapes):
            arr = np.asarray(plane)
            if arr.shape != shape:
                raise DimensionError(f"{name} plane is {arr.shape}, expected {shape}")
            if arr.size and (arr.min() < 0 or arr.max() > self.spec.peak):
                raise RangeError(
                    f"{name} plane has samples outside [0, {self.spec.peak}]"
                )
            arr = np.array(arr, dtype=np.uint16, copy=True)
            arr.flags.writeable = False
            frozen.append(arr)
        object.__setattr__(self, "planes", tuple(frozen))
        if self.spec.frame_count != 1:
            object.__setattr__(self, "spec", self.spec.frame_format())

    @property
    def y(self) -> np.ndarray:
        return self.planes[0]

    @property
    def cb(self) -> np.ndarray:
        return self.planes[1]

    @property
    def cr(self) -> np.ndarray:
        return self.planes[2]

    def equals(self, other: FrameBuffer) -> bool:
        return self.spec.same_format(other.spec) and all(
            np.array_equal(a, b) for a, b in zip(self.planes, other.planes)
        )

    def with_planes(self, planes, spec: VideoSpec | None = None) -> FrameBuffer:
        return FrameBuffer(spec or self.spec, tuple(planes))

    @classmethod
    def blank(cls, spec: VideoSpec, luma: int = 0) -> FrameBuffer:
        shapes = spec.plane_shapes
        return cls(spec, (
            np.full(shapes[0], luma, dtype=np.uint16),
            np.full(shapes[1], spec.neutral, dtype=np.uint16),
            np.full(shapes[2], spec.neutral, dtype=np.uint16),
        ))


@dataclass(frozen=True)
class ClipDescriptor:
    """A clip's identity and its place in the Ref -> DegDecCam chain."""

    clip_id: int
    name: str
    spec: VideoSpec
    role: ClipRole = ClipRole.REF
    storage_path: str = ""

    def __post_init__(self) -> None:
        if not 0 <= self.clip_id <= 0xFFFF:
            raise RangeError(f"clip_id {self.clip_id} outside 16-bit range")

    def derive(
        self,
        role: ClipRole,
        name: str | None = None,
        storage_path: str = "",
        spec: VideoSpec | None = None,
    ) -> ClipDescriptor:
        """Next clip along the role chain; illegal transitions are rejected."""
        if role not in _ROLE_TRANSITIONS[self.role]:
            raise ConsistencyError(
                f"illegal role transition {self.role.value} -> {role.value}"
            )
        return ClipDescriptor(
            clip_id=self.clip_id,
            name=name or f"{self.name}.{role.value}",
            spec=spec or self.spec,
            role=role,
            storage_path=storage_path,
        )

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "name": self.name,
            "spec": self.spec.to_dict(),
            "role": self.role.value,
            "storage_path": self.storage_path,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ClipDescriptor:
        return cls(
            clip_id=int(d["clip_id"]),
            name=d["name"],
            spec=VideoSpec.from_dict(d["spec"]),
            role=ClipRole(d.get("role", "Ref")),
            storage_path=d.get("storage_path", ""),
        )


@dataclass(frozen=True)
class GopMode:
    """Intra refresh policy."""

    kind: GopKind
    value: float | None = None

    def __post_init__(self) -> None:
        if self.kind == GopKind.FIXED_FRAMES and (self.value is None or int(self.value) < 1):
            raise RangeError(f"GOP frame count must be >= 1, got {self.value}")
        if self.kind == GopKind.SECONDS and (self.value is None or self.value <= 0):
            raise RangeError(f"GOP duration must be > 0, got {self.value}")

    @classmethod
    def all_intra(cls) -> GopMode:
        return cls(GopKind.ALL_INTRA)

    @classmethod
    def single_intra(cls) -> GopMode:
        return cls(GopKind.SINGLE_INTRA)

    @classmethod
    def frames(cls, n: int) -> GopMode:
        return cls(GopKind.FIXED_FRAMES, int(n))

    @classmethod
    def seconds(cls, s: float) -> GopMode:
        return cls(GopKind.SECONDS, float(s))

    @classmethod
    def parse(cls, text: str | int) -> GopMode:
        """Parse all_intra | single_intra | frames:N | seconds:S | 0 | -1."""
        raw = str(text).strip().lower()
        if raw in ("all_intra", "gop0", "0"):
            return cls.all_intra()
        if raw in ("single_intra", "gop-1", "-1"):
            return cls.single_intra()
        if ":" in raw:
            kind, _, value = raw.partition(":")
            if kind == "frames":
                return cls.frames(int(value))
            if kind == "seconds":
                return cls.seconds(float(value))
        raise ValueError(f"unknown GOP mode {text!r}")

    @property
    def label(self) -> str:
        if self.kind == GopKind.ALL_INTRA:
            return "all_intra"
        if self.kind == GopKind.SINGLE_INTRA:
            return "single_intra"
        if self.kind == GopKind.FIXED_FRAMES:
            return f"frames:{int(self.value)}"
        return f"seconds:{self.value:g}"

    def gop_length(self, frame_rate: Fraction) -> int:
        """GOP length in frames, using the 0 = all-intra, -1 = single-intra convention."""
        if self.kind == GopKind.ALL_INTRA:
            return 0
        if self.kind == GopKind.SINGLE_INTRA:
            return -1
        if self.kind == GopKind.FIXED_FRAMES:
            return int(self.value)
        return max(1, round(self.value * float(frame_rate)))

    def intra_period(self, frame_count: int, frame_rate: Fraction) -> int:
        """Distance between intra frames."""
        length = self.gop_length(frame_rate)
        if length == 0:
            return 1
        if length < 0:
            return max(1, frame_count)
        return length


def gop_label(gop: GopMode | None) -> str:
    return gop.label if gop is not None else "na"


def gop_from_label(label: str) -> GopMode | None:
    return None if label == "na" else GopMode.parse(label)


# Parameterisations used for the hardware encoders and intermediates.
PAPER_RATE_RANGES: dict[str, tuple[RateParamKind, tuple]] = {
    "h264": (RateParamKind.QP, (11, 51)),
    "hevc": (RateParamKind.QP, (11, 50)),
    "av1": (RateParamKind.QP, (15, 230)),
    "daniel2": (RateParamKind.CQ, (20, 95)),
    "notchlc": (RateParamKind.QUALITY_LEVEL, ("good", "excellent", "optimal", "best")),
    "hap": (RateParamKind.FIXED_MODE, ("hap_q",)),
    "toy": (RateParamKind.QP, (0, 63)),
}

GOP_FREE_CODECS = frozenset({"hap", "notchlc", "daniel2"})
NO_10BIT_CODECS = frozenset({"h264"})


@dataclass(frozen=True)
class CodecConfig:
    """How to drive one encoder backend."""

    codec_name: str
    backend: Backend = Backend.EXTERNAL
    rate_param_kind: RateParamKind = RateParamKind.QP
    rate_range: tuple = (0, 63)
    gop_free: bool = False
    supports_10bit: bool = True
    encode_template: str = ""
    decode_template: str = ""
    extension: str = ".bin"
    timeout: float | None = None

    @property
    def is_enumerated(self) -> bool:
        return self.rate_param_kind in (RateParamKind.QUALITY_LEVEL, RateParamKind.FIXED_MODE)

    def rate_params(self) -> list:
        """Every legal rate parameter, in ascending order."""
        if self.is_enumerated:
            return list(self.rate_range)
        lo, hi = self.rate_range
        return list(range(lo, hi + 1))

    def check_rate_param(self, rate_param) -> None:
        if self.is_enumerated:
            if rate_param not in self.rate_range:
                raise RangeError(
                    f"{self.codec_name}: {rate_param!r} not in {list(self.rate_range)}"
                )
            return
        lo, hi = self.rate_range
        if isinstance(rate_param, bool) or not isinstance(rate_param, int):
            raise RangeError(f"{self.codec_name}: rate parameter {rate_param!r} is not an integer")
        if not lo <= rate_param <= hi:
            raise RangeError(f"{self.codec_name}: rate parameter {rate_param} outside [{lo}, {hi}]")

    def to_dict(self) -> dict:
        return {
            "name": self.codec_name,
            "backend": self.backend.value,
            "rate_param_kind": self.rate_param_kind.value,
            "rate_range": list(self.rate_range),
            "gop_free": self.gop_free,
            "supports_10bit": self.supports_10bit,
            "encode": self.encode_template,
            "decode": self.decode_template,
            "extension": self.extension,
            "timeout": self.timeout,
        }

    @classmethod
    def from_dict(cls, d: dict) -> CodecConfig:
        name = str(d["name"]).lower()
        backend = Backend(d.get("backend", "toy" if name == "toy" else "external"))
        default_kind, default_range = PAPER_RATE_RANGES.get(name, (RateParamKind.QP, (0, 63)))
        kind = RateParamKind(d.get("rate_param_kind", default_kind.value))
        rate_range = tuple(d.get("rate_range", default_range))
        if kind in (RateParamKind.QP, RateParamKind.CQ):
            if len(rate_range) != 2 or rate_range[0] > rate_range[1]:
                raise RangeError(f"{name}: rate_range must be [lo, hi], got {list(rate_range)}")
            rate_range = (int(rate_range[0]), int(rate_range[1]))
        else:
            rate_range = tuple(str(v) for v in rate_range)
        return cls(
            codec_name=name,
            backend=backend,
            rate_param_kind=kind,
            rate_range=rate_range,
            gop_free=bool(d.get("gop_free", name in GOP_FREE_CODECS)),
            supports_10bit=bool(d.get("supports_10bit", name not in NO_10BIT_CODECS)),
            encode_template=d.get("encode", ""),
            decode_template=d.get("decode", ""),
            extension=d.get("extension", ".bin"),
            timeout=d.get("timeout"),
        )


def bitrate_mbps(encoded_bytes: int, duration_seconds: float) -> float:
    """Decimal megabits per second."""
    return encoded_bytes * 8 / duration_seconds / 1e6


@dataclass
class LadderPoint:
    """One completed encode."""

    config: CodecConfig
    clip_name: str
    gop: GopMode | None
    rate_param: int | str
    encoded_path: str
    encoded_bytes: int
    bitrate_mbps: float
    encode_fps: float
    decoded_clip: ClipDescriptor

    def to_dict(self) -> dict:
        return {
            "codec": self.config.codec_name,
            "config": self.config.to_dict(),
            "clip": self.clip_name,
            "gop": gop_label(self.gop),
            "rate_param": self.rate_param,
            "encoded_path": self.encoded_path,
            "encoded_bytes": self.encoded_bytes,
            "bitrate_mbps": self.bitrate_mbps,
            "encode_fps": self.encode_fps,
            "decoded_clip": self.decoded_clip.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> LadderPoint:
        return cls(
            config=CodecConfig.from_dict(d["config"]),
            clip_name=d["clip"],
            gop=gop_from_label(d["gop"]),
            rate_param=d["rate_param"],
            encoded_path=d["encoded_path"],
            encoded_bytes=int(d["encoded_bytes"]),
            bitrate_mbps=float(d["bitrate_mbps"]),
            encode_fps=float(d.get("encode_fps", 0.0)),
            decoded_clip=ClipDescriptor.from_dict(d["decoded_clip"]),
        )


@dataclass(frozen=True)
class RegionMask:
    """Which luma samples take part in a metric."""

    kind: MaskKind = MaskKind.FULL
    rects: tuple[Rect, ...] = ()

    @classmethod
    def full(cls) -> RegionMask:
        return cls()

    @classmethod
    def exclude(cls, rects) -> RegionMask:
        return cls(MaskKind.EXCLUDE_MARKERS, tuple(rects))

    @classmethod
    def roi(cls, rect: Rect) -> RegionMask:
        return cls(MaskKind.ROI, (rect,))

    def to_array(self, height: int, width: int) -> np.ndarray:
        """Boolean include-mask of shape (height, width)."""
        if self.kind == MaskKind.FULL:
            return np.ones((height, width), dtype=bool)
        if self.kind == MaskKind.ROI:
            rect = self.rects[0]
            if not rect.fits_in(width, height):
                raise DimensionError(f"mask {rect} outside {width}x{height} frame")
            mask = np.zeros((height, width), dtype=bool)
            mask[rect.y:rect.y + rect.height, rect.x:rect.x + rect.width] = True
            return mask
        mask = np.ones((height, width), dtype=bool)
        for rect in self.rects:
            x0, y0 = max(rect.x, 0), max(rect.y, 0)
            x1 = min(rect.x + rect.width, width)
            y1 = min(rect.y + rect.height, height)
            if x1 > x0 and y1 > y0:
                mask[y0:y1, x0:x1] = False
        return mask

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "rects": [r.to_list() for r in self.rects]}

    @classmethod
    def from_dict(cls, d: dict) -> RegionMask:
        return cls(MaskKind(d["kind"]), tuple(Rect.from_list(r) for r in d.get("rects", [])))


@dataclass
class QualityRecord:
    """Per-frame and pooled scores of one metric over one clip pair."""

    metric_name: str
    per_frame: list[float]
    pooled: float
    pooling: str = "arithmetic_mean"
    reference: ClipDescriptor | None = None
    distorted: ClipDescriptor | None = None
    region_mask: RegionMask = field(default_factory=RegionMask.full)

    def recompute_pooled(self) -> float:
        return float(np.mean(self.per_frame))

    def to_dict(self) -> dict:
        return {
            "metric": self.metric_name,
            "per_frame": list(self.per_frame),
            "pooled": self.pooled,
            "pooling": self.pooling,
            "reference": self.reference.to_dict() if self.reference else None,
            "distorted": self.distorted.to_dict() if self.distorted else None,
            "region_mask": self.region_mask.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> QualityRecord:
        return cls(
            metric_name=d["metric"],
            per_frame=[float(v) for v in d["per_frame"]],
            pooled=float(d["pooled"]),
            pooling=d.get("pooling", "arithmetic_mean"),
            reference=ClipDescriptor.from_dict(d["reference"]) if d.get("reference") else None,
            distorted=ClipDescriptor.from_dict(d["distorted"]) if d.get("distorted") else None,
            region_mask=RegionMask.from_dict(d.get("region_mask", {"kind": "full"})),
        )


@dataclass(frozen=True)
class Resample:
    """Display-grid resampling stage."""

    scale: Fraction
    reconstruction: Reconstruction = Reconstruction.NEAREST


@dataclass(frozen=True)
class ChannelConfig:
    """Simulated LED wall + camera degradation parameters."""

    resample: Resample | None = None
    matrix: tuple[tuple[float, ...], ...] = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    gamma: tuple[float, float, float] = (1.0, 1.0, 1.0)
    noise_sigma: float = 0.0
    duplicate_prob: float = 0.0
    skip_prob: float = 0.0
    seed: int = 0
    roi: Rect | None = None
    capture_bit_depth: int | None = None
    capture_chroma: Chroma | None = None

    def __post_init__(self) -> None:
        if self.noise_sigma < 0:
            raise RangeError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.duplicate_prob < 0 or self.skip_prob < 0:
            raise RangeError("jitter probabilities must be >= 0")
        if self.duplicate_prob + self.skip_prob >= 1:
            raise RangeError(
                f"duplicate_prob + skip_prob must be < 1, got "
                f"{self.duplicate_prob + self.skip_prob}"
            )
        if len(self.matrix) != 3 or any(len(row) != 3 for row in self.matrix):
            raise RangeError("color matrix must be 3x3")
        if self.resample is not None and self.resample.scale <= 0:
            raise RangeError(f"resample scale must be > 0, got {self.resample.scale}")

    @property
    def has_color(self) -> bool:
        identity = np.array_equal(np.asarray(self.matrix, dtype=float), np.eye(3))
        return not identity or any(g != 1.0 for g in self.gamma)

    @property
    def has_jitter(self) -> bool:
        return self.duplicate_prob > 0 or self.skip_prob > 0

    @property
    def is_identity(self) -> bool:
        return (
            self.resample is None and not self.has_color and self.noise_sigma == 0
            and not self.has_jitter and self.roi is None
            and self.capture_bit_depth is None and self.capture_chroma is None
        )

    def with_seed(self, seed: int) -> ChannelConfig:
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        d: dict = {
            "matrix": [list(row) for row in self.matrix],
            "gamma": list(self.gamma),
            "noise_sigma": self.noise_sigma,
            "duplicate_prob": self.duplicate_prob,
            "skip_prob": self.skip_prob,
            "seed": self.seed,
        }
        if self.resample is not None:
            d["resample"] = {
                "scale": format_fraction(self.resample.scale),
                "reconstruction": self.resample.reconstruction.value,
            }
        if self.roi is not None:
            d["roi"] = self.roi.to_list()
        if self.capture_bit_depth is not None:
            d["capture_bit_depth"] = self.capture_bit_depth
        if self.capture_chroma is not None:
            d["capture_chroma"] = self.capture_chroma.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ChannelConfig:
        resample = None
        if d.get("resample"):
            r = d["resample"]
            resample = Resample(
                scale=parse_fraction(r.get("scale", "1/1")),
                reconstruction=Reconstruction(r.get("reconstruction", "nearest")),
            )
        matrix = d.get("matrix")
        return cls(
            resample=resample,
            matrix=tuple(tuple(float(v) for v in row) for row in matrix)
            if matrix else ChannelConfig.matrix,
            gamma=tuple(float(g) for g in d.get("gamma", (1.0, 1.0, 1.0))),
            noise_sigma=float(d.get("noise_sigma", 0.0)),
            duplicate_prob=float(d.get("duplicate_prob", 0.0)),
            skip_prob=float(d.get("skip_prob", 0.0)),
            seed=int(d.get("seed", 0)),
            roi=Rect.from_list(d["roi"]) if d.get("roi") else None,
            capture_bit_depth=d.get("capture_bit_depth"),
            capture_chroma=Chroma(str(d["capture_chroma"])) if d.get("capture_chroma") else None,
        )


@dataclass(frozen=True)
class GenlockEvent:
    """A break in the 1:1 display/capture frame correspondence."""

    kind: EventKind
    captured_index: int
    detail: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "captured_index": self.captured_index,
            "detail": list(self.detail),
        }

    @classmethod
    def from_dict(cls, d: dict) -> GenlockEvent:
        return cls(EventKind(d["kind"]), int(d["captured_index"]), tuple(d.get("detail", ())))

    def describe(self) -> str:
        if self.kind == EventKind.SKIP:
            return f"Skip at captured {self.captured_index} (source {self.detail[0]}->{self.detail[1]})"
        if self.kind == EventKind.DUPLICATE:
            return f"Duplicate at captured {self.captured_index} (source {self.detail[0]})"
        return f"Unreadable at captured {self.captured_index}"


@dataclass(frozen=True)
class AlignmentEntry:
    captured_index: int
    source_index: int
    agreement: int


@dataclass
class AlignmentMap:
    """Captured frame index -> source frame index, with genlock events."""

    clip_id: int
    entries: list[AlignmentEntry] = field(default_factory=list)
    events: list[GenlockEvent] = field(default_factory=list)

    @property
    def has_genlock_loss(self) -> bool:
        return any(e.kind in (EventKind.DUPLICATE, EventKind.SKIP) for e in self.events)

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "entries": [[e.captured_index, e.source_index, e.agreement] for e in self.entries],
            "events": [e.to_dict() for e in self.events],
        }

    @classmethod
    def from_dict(cls, d: dict) -> AlignmentMap:
        return cls(
            clip_id=int(d["clip_id"]),
            entries=[AlignmentEntry(int(c), int(s), int(a)) for c, s, a in d["entries"]],
            events=[GenlockEvent.from_dict(e) for e in d.get("events", [])],
        )


@dataclass
class RateQualityCurve:
    """Pareto-filtered (bitrate, quality) points for one codec, clip and GOP."""

    codec_name: str
    clip_name: str
    gop: GopMode | None
    metric_name: str
    points: list[tuple[float, float]]
    mode: str = "direct"

    def to_dict(self) -> dict:
        return {
            "codec": self.codec_name,
            "clip": self.clip_name,
            "gop": gop_label(self.gop),
            "metric": self.metric_name,
            "mode": self.mode,
            "points": [[b, q] for b, q in self.points],
        }

    @classmethod
    def from_dict(cls, d: dict) -> RateQualityCurve:
        return cls(
            codec_name=d["codec"],
            clip_name=d["clip"],
            gop=gop_from_label(d["gop"]),
            metric_name=d["metric"],
            points=[(float(b), float(q)) for b, q in d["points"]],
            mode=d.get("mode", "direct"),
        )


@dataclass
class SavingsCell:
    codec: str
    clip: str
    min_bitrate: float | None
    ratio: float | None

    def to_dict(self) -> dict:
        return {
            "codec": self.codec,
            "clip": self.clip,
            "min_bitrate_mbps": self.min_bitrate,
            "ratio": self.ratio,
        }


@dataclass
class SavingsTable:
    """Bitrate savings against a reference codec at a quality threshold."""

    reference_codec: str
    threshold: float
    metric_name: str = ""
    gop: str = "na"
    mode: str = "direct"
    clips: list[str] = field(default_factory=list)
    reference_bitrates: dict[str, float] = field(default_factory=dict)
    rows: list[SavingsCell] = field(default_factory=list)
    averages: dict[str, float | None] = field(default_factory=dict)

    def cell(self, codec: str, clip: str) -> SavingsCell | None:
        for row in self.rows:
            if row.codec == codec and row.clip == clip:
                return row
        return None

    def codecs(self) -> list[str]:
        seen: list[str] = []
        for row in self.rows:
            if row.codec not in seen:
                seen.append(row.codec)
        return seen

    def to_dict(self) -> dict:
        return {
            "reference_codec": self.reference_codec,
            "threshold": self.threshold,
            "metric": self.metric_name,
            "gop": self.gop,
            "mode": self.mode,
            "clips": self.clips,
            "reference_bitrates": self.reference_bitrates,
            "rows": [r.to_dict() for r in self.rows],
            "averages": self.averages,
        }

