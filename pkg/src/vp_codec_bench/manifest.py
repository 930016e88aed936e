"""YAML experiment manifest."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .channel import calibrate_noise_for_floor
from .errors import ManifestError, VpcbError
from .marker import MarkerGeometry
from .media import read_y4m_file
from .metrics import MetricRunner
from .models import (
    ChannelConfig,
    Chroma,
    CodecConfig,
    FrameBuffer,
    GopMode,
    VideoSpec,
    format_fraction,
    parse_fraction,
)
from .synth import KINDS, generate_synthetic_clip

DIRECT = "direct"


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str
    width: int = 256
    height: int = 256
    frames: int = 30
    fps: str = "30/1"
    bit_depth: int = 8
    chroma: str = "420"
    seed: int = 0

    def video_spec(self) -> VideoSpec:
        return VideoSpec(
            self.width, self.height, self.bit_depth, Chroma(self.chroma),
            parse_fraction(self.fps), self.frames,
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "width": self.width, "height": self.height,
            "frames": self.frames, "fps": self.fps, "bit_depth": self.bit_depth,
            "chroma": self.chroma, "seed": self.seed,
        }


@dataclass(frozen=True)
class ClipSource:
    """Where a reference clip comes from."""

    name: str
    clip_id: int
    path: Path | None = None
    synthetic: SyntheticSpec | None = None

    def load(self) -> list[FrameBuffer]:
        if self.synthetic is not None:
            s = self.synthetic
            return generate_synthetic_clip(s.kind, s.video_spec(), s.seed)
        _, frames = read_y4m_file(self.path)
        return frames

    def to_dict(self, base_dir: Path | None = None) -> dict:
        d: dict = {"name": self.name, "clip_id": self.clip_id}
        if self.synthetic is not None:
            d["synthetic"] = self.synthetic.to_dict()
        else:
            d["path"] = _portable(self.path, base_dir)
        return d


@dataclass(frozen=True)
class LadderSpec:
    """Explicit rate parameters, or a JND search."""

    explicit: dict[str, tuple] | tuple | None = None
    jnd_step: float = 6.0
    floor: float = 82.0
    points: int = 5
    metric: str = "psnr"

    @property
    def is_jnd(self) -> bool:
        return self.explicit is None

    def explicit_for(self, config: CodecConfig) -> list:
        if isinstance(self.explicit, dict):
            values = self.explicit.get(config.codec_name)
            if values is None:
                return config.rate_params() if config.is_enumerated else []
            return list(values)
        if config.is_enumerated:
            return config.rate_params()
        return list(self.explicit or ())

    def to_dict(self) -> dict:
        if self.explicit is not None:
            if isinstance(self.explicit, dict):
                return {"explicit": {k: list(v) for k, v in sorted(self.explicit.items())}}
            return {"explicit": list(self.explicit)}
        return {"jnd": {
            "step": self.jnd_step, "floor": self.floor,
            "points": self.points, "metric": self.metric,
        }}


@dataclass(frozen=True)
class TimingSpec:
    repetitions: int = 0
    discard_warmup: bool = True


@dataclass(frozen=True)
class ExperimentManifest:
    clips: tuple[ClipSource, ...]
    codecs: tuple[CodecConfig, ...]
    gop_modes: tuple[GopMode, ...] = (GopMode.all_intra(),)
    ladder: LadderSpec = field(default_factory=LadderSpec)
    channels: tuple[str, ...] = (DIRECT,)
    channel_profiles: dict[str, ChannelConfig] = field(default_factory=dict)
    psnr: bool = True
    psnr_chroma: bool = False
    runners: tuple[MetricRunner, ...] = ()
    threshold: float = 90.0
    reference_codec: str = ""
    savings_metric: str = "psnr"
    output_dir: Path = Path("out")
    seed: int = 0
    workers: int = 1
    marker: MarkerGeometry = field(default_factory=MarkerGeometry)
    timing: TimingSpec = field(default_factory=TimingSpec)
    source_path: Path | None = None
    base_dir: Path | None = None  # directory relative paths were resolved against

    @property
    def camera_modes(self) -> list[str]:
        return [c for c in self.channels if c != DIRECT]

    @property
    def metric_names(self) -> list[str]:
        names = []
        if self.psnr:
            names.append("psnr")
            if self.psnr_chroma:
                names += ["psnr_cb", "psnr_cr"]
        names += [r.name for r in self.runners]
        return names

    def codec(self, name: str) -> CodecConfig:
        for c in self.codecs:
            if c.codec_name == name:
                return c
        raise ManifestError(f"codec {name!r} is not declared")

    def runner(self, name: str) -> MetricRunner | None:
        for r in self.runners:
            if r.name == name:
                return r
        return None

    def gops_for(self, config: CodecConfig) -> list[GopMode | None]:
        return [None] if config.gop_free else list(self.gop_modes)

    def to_dict(self) -> dict:
        """Result-affecting fields in canonical form, paths relative to base_dir."""
        return {
            "seed": self.seed,
            "output_dir": _portable(self.output_dir, self.base_dir),
            "threshold": self.threshold,
            "reference_codec": self.reference_codec,
            "savings_metric": self.savings_metric,
            "marker": {"size": self.marker.size_px, "inset": self.marker.inset},
            "clips": [c.to_dict(self.base_dir) for c in self.clips],
            "codecs": [c.to_dict() for c in self.codecs],
            "gop_modes": [g.label for g in self.gop_modes],
            "ladder": self.ladder.to_dict(),
            "channel": list(self.channels),
            "channel_profiles": {
                name: cfg.to_dict() for name, cfg in sorted(self.channel_profiles.items())
            },
            "metrics": {
                "psnr": self.psnr,
                "psnr_chroma": self.psnr_chroma,
                "runners": [r.to_dict() for r in self.runners],
            },
            "timing": {
                "repetitions": self.timing.repetitions,
                "discard_warmup": self.timing.discard_warmup,
            },
        }

    def manifest_hash(self) -> str:
        raw = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(raw.encode()).hexdigest()[:16]


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def _portable(path: Path, base_dir: Path | None) -> str:
    if base_dir is not None:
        try:
            return path.relative_to(base_dir).as_posix()
        except ValueError:
            pass
    return path.as_posix()


def _parse_clip(raw: dict, base: Path) -> ClipSource:
    if "name" not in raw or "clip_id" not in raw:
        raise ManifestError(f"clip entry needs name and clip_id: {raw}")
    if ("path" in raw) == ("synthetic" in raw):
        raise ManifestError(f"clip {raw['name']!r} needs exactly one of path or synthetic")
    if "synthetic" in raw:
        s = dict(raw["synthetic"])
        if s.get("kind") not in KINDS:
            raise ManifestError(f"clip {raw['name']!r}: unknown synthetic kind {s.get('kind')!r}")
        synthetic = SyntheticSpec(
            kind=s["kind"],
            width=int(s.get("width", 256)),
            height=int(s.get("height", 256)),
            frames=int(s.get("frames", 30)),
            fps=format_fraction(parse_fraction(s.get("fps", "30/1"))),
            bit_depth=int(s.get("bit_depth", 8)),
            chroma=str(s.get("chroma", "420")),
            seed=int(s.get("seed", 0)),
        )
        synthetic.video_spec()
        return ClipSource(str(raw["name"]), int(raw["clip_id"]), synthetic=synthetic)
    return ClipSource(str(raw["name"]), int(raw["clip_id"]), path=_resolve(base, raw["path"]))


def _parse_ladder(raw: dict | None) -> LadderSpec:
    if not raw:
        return LadderSpec(explicit=(0, 8, 16, 24, 32))
    if "explicit" in raw:
        explicit = raw["explicit"]
        if isinstance(explicit, dict):
            return LadderSpec(explicit={str(k).lower(): tuple(v) for k, v in explicit.items()})
        return LadderSpec(explicit=tuple(explicit))
    if "jnd" in raw:
        j = raw["jnd"] or {}
        return LadderSpec(
            explicit=None,
            jnd_step=float(j.get("step", 6.0)),
            floor=float(j.get("floor", 82.0)),
            points=int(j.get("points", 5)),
            metric=str(j.get("metric", "psnr")),
        )
    raise ManifestError("ladder needs an explicit list or a jnd section")


def _parse_profile(name: str, raw: dict) -> ChannelConfig:
    raw = dict(raw or {})
    floor = raw.pop("floor_psnr", None)
    if floor is not None:
        if "noise_sigma" in raw:
            raise ManifestError(f"channel profile {name!r}: give noise_sigma or floor_psnr, not both")
        raw["noise_sigma"] = calibrate_noise_for_floor(float(floor), int(raw.pop("bit_depth", 8)))
    return ChannelConfig.from_dict(raw)


def parse_manifest(doc: dict, base_dir: Path, source_path: Path | None = None) -> ExperimentManifest:
    """Build and validate a manifest from its decoded YAML mapping."""
    if not isinstance(doc, dict):
        raise ManifestError("manifest must be a mapping")
    try:
        clips = tuple(_parse_clip(c, base_dir) for c in doc.get("clips") or [])
        codecs = tuple(CodecConfig.from_dict(c) for c in doc.get("codecs") or [])
        gop_modes = tuple(GopMode.parse(g) for g in doc.get("gop_modes") or ["all_intra"])
        ladder = _parse_ladder(doc.get("ladder"))
        channel = doc.get("channel", DIRECT)
        channels = tuple([channel] if isinstance(channel, str) else channel)
        profiles = {
            str(name): _parse_profile(name, p)
            for name, p in (doc.get("channel_profiles") or {}).items()
        }
        metrics = doc.get("metrics") or {}
        runners = tuple(MetricRunner.from_dict(r) for r in metrics.get("runners") or [])
        marker = doc.get("marker") or {}
        geometry = MarkerGeometry.from_pixels(int(marker.get("size", 90)), int(marker.get("inset", 2)))
        timing = doc.get("timing") or {}
    except VpcbError as e:
        raise ManifestError(f"invalid manifest: {e}") from e
    except (KeyError, TypeError, ValueError) as e:
        raise ManifestError(f"invalid manifest: {e}") from e

    manifest = ExperimentManifest(
        clips=clips,
        codecs=codecs,
        gop_modes=gop_modes,
        ladder=ladder,
        channels=channels,
        channel_profiles=profiles,
        psnr=bool(metrics.get("psnr", True)),
        psnr_chroma=bool(metrics.get("psnr_chroma", False)),
        runners=runners,
        threshold=float(doc.get("threshold", 90.0)),
        reference_codec=str(doc.get("reference_codec", codecs[0].codec_name if codecs else "")).lower(),
        savings_metric=str(doc.get("savings_metric", runners[0].name if runners else "psnr")),
        output_dir=_resolve(base_dir, str(doc.get("output_dir", "out"))),
        seed=int(doc.get("seed", 0)),
        workers=int(doc.get("workers", 1)),
        marker=geometry,
        timing=TimingSpec(
            repetitions=int(timing.get("repetitions", 0)),
            discard_warmup=bool(timing.get("discard_warmup", True)),
        ),
        source_path=source_path,
        base_dir=base_dir,
    )
    validate_manifest(manifest)
    return manifest


def validate_manifest(m: ExperimentManifest) -> None:
    if not m.clips:
        raise ManifestError("manifest declares no clips")
    if not m.codecs:
        raise ManifestError("manifest declares no codecs")
    for label, values in (
        ("clip name", [c.name for c in m.clips]),
        ("clip_id", [c.clip_id for c in m.clips]),
        ("codec name", [c.codec_name for c in m.codecs]),
        ("runner name", [r.name for r in m.runners]),
    ):
        dupes = sorted({str(v) for v in values if values.count(v) > 1})
        if dupes:
            raise ManifestError(f"duplicate {label}: {', '.join(dupes)}")
    for clip in m.clips:
        if not 0 <= clip.clip_id <= 0xFFFF:
            raise ManifestError(f"clip {clip.name!r}: clip_id {clip.clip_id} outside 16-bit range")
        if clip.path is not None and not clip.path.exists():
            raise ManifestError(f"clip {clip.name!r}: {clip.path} does not exist")
    names = {c.codec_name for c in m.codecs}
    if m.reference_codec not in names:
        raise ManifestError(f"reference codec {m.reference_codec!r} is not among the codecs")
    for codec in m.codecs:
        if codec.backend.value == "external" and not (codec.encode_template and codec.decode_template):
            raise ManifestError(f"codec {codec.codec_name!r} needs encode and decode templates")
    for channel in m.channels:
        if channel != DIRECT and channel not in m.channel_profiles:
            raise ManifestError(f"channel profile {channel!r} is not declared")
    for runner in m.runners:
        for placeholder in ("{ref}", "{dist}", "{out}"):
            if placeholder not in runner.command:
                raise ManifestError(f"runner {runner.name!r} command lacks {placeholder}")
    if m.psnr is False and not m.runners:
        raise ManifestError("no metrics enabled")
    for label, metric in (("savings_metric", m.savings_metric), ("ladder metric", m.ladder.metric)):
        if label == "ladder metric" and not m.ladder.is_jnd:
            continue
        if metric not in m.metric_names:
            raise ManifestError(f"{label} {metric!r} is not an enabled metric")
    if m.ladder.is_jnd and m.ladder.points < 2:
        raise ManifestError("jnd ladder needs at least 2 points")
    if m.workers < 1:
        raise ManifestError(f"workers must be >= 1, got {m.workers}")


def load_manifest(path: str | Path) -> ExperimentManifest:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ManifestError(f"cannot parse manifest {path}: {e}") from e
    return parse_manifest(doc, path.resolve().parent, source_path=path)
