"""Tests for native PSNR, external runners and noise-floor estimation."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vp_codec_bench.channel import apply_channel
from vp_codec_bench.errors import (
    DimensionError,
    EmptyInputError,
    MetricParseError,
    RangeError,
    RunnerError,
)
from vp_codec_bench.marker import marker_rects
from vp_codec_bench.media import write_y4m_file
from vp_codec_bench.metrics import (
    MetricRunner,
    noise_floor,
    noise_floor_from_scores,
    parse_runner_output,
    pool,
    psnr_frame,
    psnr_sequence,
    run_external_metric,
)
from vp_codec_bench.models import ChannelConfig, Chroma, FrameBuffer, Rect, RegionMask
from vp_codec_bench.pipeline import embed_clip_markers
from vp_codec_bench.synth import generate_synthetic_clip

from .conftest import make_spec, runner_command


def _offset(frame: FrameBuffer, delta: int) -> FrameBuffer:
    planes = tuple((p.astype(np.int64) + delta).astype(np.uint16) for p in frame.planes)
    return FrameBuffer(frame.spec, planes)


def _psnr_oracle(a: np.ndarray, b: np.ndarray, peak: int) -> float:
    total = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            d = float(a[i, j]) - float(b[i, j])
            total += d * d
    mse = total / a.size
    return 99.0 if mse == 0 else min(99.0, 10 * math.log10(peak * peak / mse))


def test_identical_frames_hit_the_cap():
    frame = generate_synthetic_clip("noise", make_spec(16, 16, frames=1), seed=1)[0]
    assert psnr_frame(frame, frame) == 99.0
    assert psnr_sequence([(frame, frame)] * 3).pooled == 99.0


def test_off_by_one_8bit():
    frame = FrameBuffer.blank(make_spec(16, 16, frames=1), luma=100)
    assert psnr_frame(frame, _offset(frame, 1)) == pytest.approx(48.13, abs=0.01)


def test_mse_one_10bit():
    frame = FrameBuffer.blank(make_spec(16, 16, frames=1, bit_depth=10), luma=500)
    assert psnr_frame(frame, _offset(frame, 1)) == pytest.approx(60.20, abs=0.01)


def test_pooling_is_the_arithmetic_mean():
    assert pool([40.0, 50.0]) == 45.0
    with pytest.raises(EmptyInputError):
        pool([])
    with pytest.raises(EmptyInputError):
        psnr_sequence([])


@settings(max_examples=40, deadline=None)
@given(
    a=arrays(np.uint16, (8, 8), elements=st.integers(0, 255)),
    b=arrays(np.uint16, (8, 8), elements=st.integers(0, 255)),
)
def test_psnr_matches_brute_force_oracle(a, b):
    spec = make_spec(8, 8, frames=1, chroma=Chroma.YUV444)
    z = np.zeros((8, 8), dtype=np.uint16)
    ref = FrameBuffer(spec.frame_format(), (a, z, z))
    dist = FrameBuffer(spec.frame_format(), (b, z, z))
    assert psnr_frame(ref, dist) == pytest.approx(_psnr_oracle(a, b, 255), abs=1e-9)


def test_mixed_depths_compare_at_the_common_format():
    frame8 = generate_synthetic_clip("gradient", make_spec(16, 16, frames=1))[0]
    frame10 = generate_synthetic_clip("gradient", make_spec(16, 16, frames=1, bit_depth=10))[0]
    score = psnr_frame(frame8, frame10)
    assert 40.0 < score <= 99.0
    with pytest.raises(DimensionError):
        psnr_frame(frame8, generate_synthetic_clip("flat", make_spec(32, 16, frames=1))[0])


def test_exclude_markers_mask_ignores_marker_only_differences(small_geometry):
    frames = generate_synthetic_clip("noise", make_spec(64, 64, frames=1), seed=6)
    marked = embed_clip_markers(frames, 3, small_geometry, [None])
    rects = marker_rects(64, 64, small_geometry).values()
    assert psnr_frame(frames[0], marked[0]) < 99.0
    mask = RegionMask.exclude(rects)
    assert psnr_frame(frames[0], marked[0], mask) == 99.0
    assert psnr_frame(frames[0], marked[0], mask, plane="cb") == 99.0


def test_chroma_plane_and_bad_masks():
    frame = FrameBuffer.blank(make_spec(16, 16, frames=1), luma=50)
    shifted = FrameBuffer(frame.spec, (frame.y, (frame.cb.astype(np.int64) + 1).astype(np.uint16), frame.cr))
    assert psnr_frame(frame, shifted) == 99.0
    assert psnr_frame(frame, shifted, plane="cb") == pytest.approx(48.13, abs=0.01)
    assert psnr_sequence([(frame, shifted)], plane="cr").metric_name == "psnr_cr"
    with pytest.raises(ValueError):
        psnr_frame(frame, frame, plane="alpha")
    with pytest.raises(DimensionError):
        psnr_frame(frame, frame, RegionMask.exclude([Rect(0, 0, 16, 16)]))


def test_parse_runner_output():
    vmaf = MetricRunner("vmaf", "unused")
    scores = parse_runner_output('{"frames": [{"score": 90}, {"score": 100}]}', vmaf)
    assert pool(scores) == 95.0
    with pytest.raises(RangeError):
        parse_runner_output('{"frames": [{"score": 11}]}', MetricRunner("cvvdp", "unused"))
    with pytest.raises(MetricParseError):
        parse_runner_output('{"frames": []}', vmaf)
    with pytest.raises(MetricParseError):
        parse_runner_output('{"frames": [{"score": true}]}', vmaf)
    with pytest.raises(MetricParseError):
        parse_runner_output('{"frames": [{"score": NaN}]}', vmaf)
    with pytest.raises(MetricParseError):
        parse_runner_output('{"scores": [1]}', vmaf)
    # undeclared metrics are not range-checked
    assert parse_runner_output('{"frames": [{"score": 1e6}]}', MetricRunner("odd", "x")) == [1e6]


def test_psnr_runner_rejects_a_zero_score():
    psnr = MetricRunner("psnr", "unused")
    with pytest.raises(RangeError, match=r"outside \(0, 99\]"):
        parse_runner_output('{"frames": [{"score": 0}]}', psnr)
    assert parse_runner_output('{"frames": [{"score": 0.5}, {"score": 99}]}', psnr) == [0.5, 99.0]
    # an explicit range keeps both ends closed
    explicit = MetricRunner("psnr", "unused", score_range=(0.0, 99.0))
    assert parse_runner_output('{"frames": [{"score": 0}]}', explicit) == [0.0]


@pytest.fixture
def runner_clips(tmp_path: Path) -> tuple[Path, Path]:
    spec = make_spec(16, 16, frames=2)
    ref = [FrameBuffer.blank(spec, luma=100)] * 2
    dist = [_offset(ref[0], 1)] * 2
    ref_path, dist_path = tmp_path / "ref.y4m", tmp_path / "dist.y4m"
    write_y4m_file(ref_path, spec, ref)
    write_y4m_file(dist_path, spec, dist)
    return ref_path, dist_path


def test_external_runner_ok(runner_clips, stub_vmaf_command):
    record = run_external_metric(MetricRunner("vmaf", stub_vmaf_command), *runner_clips)
    assert record.metric_name == "vmaf"
    assert len(record.per_frame) == 2
    assert record.pooled == pytest.approx(2 * 20 * math.log10(255), abs=1e-6)


@pytest.mark.parametrize("mode,error", [
    ("overflow", RangeError),
    ("garbage", MetricParseError),
    ("silent", MetricParseError),
])
def test_external_runner_bad_output(runner_clips, mode, error):
    runner = MetricRunner("vmaf", runner_command("stub_vmaf.py", f"--mode={mode}"))
    with pytest.raises(error):
        run_external_metric(runner, *runner_clips)


def test_external_runner_failure_carries_stderr(runner_clips):
    runner = MetricRunner("vmaf", runner_command("stub_vmaf.py", "--mode=fail"))
    with pytest.raises(RunnerError) as exc:
        run_external_metric(runner, *runner_clips)
    assert "simulated failure" in exc.value.stderr


def test_missing_runner_binary(runner_clips):
    runner = MetricRunner("vmaf", "no-such-metric-tool {ref} {dist} {out}")
    with pytest.raises(RunnerError):
        run_external_metric(runner, *runner_clips)


def test_runner_dict_form():
    runner = MetricRunner("cvvdp", "tool {ref} {dist} {out}", (0.0, 10.0))
    assert MetricRunner.from_dict(runner.to_dict()) == runner
    assert MetricRunner("vmaf", "x").bounds == (0.0, 100.0)


def test_noise_floor_statistics():
    floor = noise_floor_from_scores([37.01, 37.02, 37.00])
    assert floor.range == pytest.approx(0.02)
    assert floor.max == 37.02
    assert floor.mean == pytest.approx(37.01)


def test_identical_captures_sit_at_the_cap():
    frames = generate_synthetic_clip("noise", make_spec(16, 16, frames=2), seed=1)
    floor = noise_floor([frames, frames], frames)
    assert floor.max == floor.min == 99.0


def test_noise_floor_of_noisy_captures(small_geometry):
    spec = make_spec(64, 64, frames=3, chroma=Chroma.YUV444)
    marked = embed_clip_markers(generate_synthetic_clip("flat", spec), 12, small_geometry, [None])
    cfg = ChannelConfig(noise_sigma=3.60, seed=2)
    captures = [apply_channel(marked, cfg, f"take-{i}") for i in range(6)]
    floor = noise_floor(captures[1:], captures[0], clip_id=12, geometry=small_geometry)
    # both sides are noisy, so the error variance doubles
    assert floor.mean == pytest.approx(34.0, abs=0.5)
    assert floor.range < 0.5


def test_noise_floor_errors():
    frames = generate_synthetic_clip("flat", make_spec(16, 16, frames=2))
    with pytest.raises(EmptyInputError):
        noise_floor([frames], frames)
    with pytest.raises(DimensionError):
        noise_floor([frames, frames[:1]], frames)
