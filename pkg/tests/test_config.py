"""Tests for run-time configuration."""

from pathlib import Path

import pytest

from vp_codec_bench.config import Config
from vp_codec_bench.errors import UsageError
from vp_codec_bench.manifest import parse_manifest

DOC = {
    "clips": [{"name": "flat", "clip_id": 1, "synthetic": {"kind": "flat", "width": 32, "height": 32}}],
    "codecs": [{"name": "toy"}],
    "channel": ["direct", "wall"],
    "channel_profiles": {"wall": {"noise_sigma": 1.0}},
    "workers": 2,
}


@pytest.fixture
def manifest(tmp_path: Path):
    return parse_manifest(DOC, tmp_path)


def test_defaults_come_from_the_manifest(manifest, tmp_path: Path):
    cfg = Config()
    assert cfg.effective_workers(manifest) == 2
    assert cfg.effective_modes(manifest) == ["direct", "wall"]
    assert cfg.effective_output_dir(manifest) == tmp_path / "out"


def test_overrides(manifest, tmp_path: Path):
    cfg = Config(workers=4, modes=("wall",), output_dir=str(tmp_path / "elsewhere"))
    assert cfg.effective_workers(manifest) == 4
    assert cfg.effective_modes(manifest) == ["wall"]
    assert cfg.effective_output_dir(manifest) == tmp_path / "elsewhere"


def test_invalid_overrides(manifest):
    with pytest.raises(UsageError):
        Config(workers=0).effective_workers(manifest)
    with pytest.raises(UsageError):
        Config(modes=("studio",)).effective_modes(manifest)


def test_config_is_frozen():
    with pytest.raises(AttributeError):
        Config().workers = 3
