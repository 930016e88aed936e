"""Shared test fixtures."""

from __future__ import annotations

import sys
from fractions import Fraction
from pathlib import Path

import pytest

from vp_codec_bench.log import setup_logging
from vp_codec_bench.marker import MarkerGeometry
from vp_codec_bench.media import clip_spec, write_y4m_file
from vp_codec_bench.models import (
    Backend,
    Chroma,
    ClipDescriptor,
    ClipRole,
    CodecConfig,
    FrameBuffer,
    VideoSpec,
)
from vp_codec_bench.synth import generate_synthetic_clip

FIXTURES_DIR = Path(__file__).parent / "fixtures"
PYTHON = sys.executable


def make_spec(
    width: int = 64,
    height: int = 64,
    frames: int = 4,
    bit_depth: int = 8,
    chroma: Chroma = Chroma.YUV420,
    fps: Fraction = Fraction(30, 1),
) -> VideoSpec:
    return VideoSpec(width, height, bit_depth, chroma, fps, frames)


def write_clip(
    path: Path,
    frames: list[FrameBuffer],
    name: str = "clip",
    clip_id: int = 1,
    frame_rate=None,
) -> ClipDescriptor:
    spec = clip_spec(frames, frame_rate)
    write_y4m_file(path, spec, frames)
    return ClipDescriptor(clip_id, name, spec, ClipRole.REF, str(path))


def runner_command(script: str, *extra: str) -> str:
    parts = [PYTHON, str(FIXTURES_DIR / script), *extra, "{ref}", "{dist}", "{out}"]
    return " ".join(parts)


@pytest.fixture(autouse=True)
def _setup_logging():
    setup_logging(verbose=False)


@pytest.fixture
def small_geometry() -> MarkerGeometry:
    """20 px markers, small enough for 64x64 test frames."""
    return MarkerGeometry(module_size=2, inset=2)


@pytest.fixture
def toy_codec() -> CodecConfig:
    return CodecConfig("toy", backend=Backend.TOY)


@pytest.fixture
def gradient_frames() -> list[FrameBuffer]:
    return generate_synthetic_clip("gradient", make_spec(frames=4))


@pytest.fixture
def moving_bar_frames() -> list[FrameBuffer]:
    return generate_synthetic_clip("moving_bar", make_spec(frames=6), seed=3)


@pytest.fixture
def gradient_clip(tmp_path: Path, gradient_frames) -> ClipDescriptor:
    return write_clip(tmp_path / "gradient.y4m", gradient_frames, name="gradient")


@pytest.fixture
def moving_bar_clip(tmp_path: Path, moving_bar_frames) -> ClipDescriptor:
    return write_clip(tmp_path / "moving_bar.y4m", moving_bar_frames, name="moving_bar")


@pytest.fixture
def stub_vmaf_command() -> str:
    return runner_command("stub_vmaf.py")
