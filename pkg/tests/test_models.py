"""Tests for data models."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from vp_codec_bench.errors import ConsistencyError, DimensionError, RangeError, UnsupportedFormatError
from vp_codec_bench.models import (
    AlignmentEntry,
    AlignmentMap,
    ChannelConfig,
    Chroma,
    ClipDescriptor,
    ClipRole,
    CodecConfig,
    EventKind,
    FrameBuffer,
    GenlockEvent,
    GopMode,
    MaskKind,
    QualityRecord,
    RateParamKind,
    RateQualityCurve,
    Rect,
    RegionMask,
    Resample,
    VideoSpec,
    bitrate_mbps,
    gop_from_label,
    gop_label,
    parse_fraction,
)


def test_parse_fraction_forms():
    assert parse_fraction("30000:1001") == Fraction(30000, 1001)
    assert parse_fraction("30/1") == Fraction(30)
    assert parse_fraction(25) == Fraction(25)
    assert parse_fraction(Fraction(24)) == Fraction(24)


def test_video_spec_validation():
    with pytest.raises(DimensionError):
        VideoSpec(0, 16)
    with pytest.raises(DimensionError):
        VideoSpec(15, 16, chroma=Chroma.YUV420)
    VideoSpec(15, 16, chroma=Chroma.YUV444)
    with pytest.raises(UnsupportedFormatError):
        VideoSpec(16, 16, bit_depth=9)


def test_video_spec_derived_sizes():
    spec = VideoSpec(64, 32, bit_depth=10, chroma=Chroma.YUV420, frame_count=10)
    assert spec.peak == 1023
    assert spec.neutral == 512
    assert spec.chroma_shape == (16, 32)
    assert spec.frame_bytes == (64 * 32 + 2 * 16 * 32) * 2
    assert spec.duration_seconds == pytest.approx(10 / 30)


def test_frame_buffer_is_immutable():
    spec = VideoSpec(4, 4, chroma=Chroma.YUV444)
    frame = FrameBuffer.blank(spec, luma=10)
    with pytest.raises(ValueError):
        frame.y[0, 0] = 5


def test_frame_buffer_rejects_wrong_shape_and_range():
    spec = VideoSpec(4, 4, chroma=Chroma.YUV420)
    good = np.zeros((2, 2), dtype=np.uint16)
    with pytest.raises(DimensionError):
        FrameBuffer(spec, (np.zeros((4, 3), dtype=np.uint16), good, good))
    with pytest.raises(RangeError):
        FrameBuffer(spec, (np.full((4, 4), 256, dtype=np.uint16), good, good))


def test_role_chain():
    spec = VideoSpec(16, 16, frame_count=2)
    ref = ClipDescriptor(7, "clip", spec)
    deg = ref.derive(ClipRole.DEG)
    dec = deg.derive(ClipRole.DEG_DEC)
    cam = dec.derive(ClipRole.DEG_DEC_CAM)
    assert cam.role == ClipRole.DEG_DEC_CAM
    assert cam.clip_id == 7
    assert ref.derive(ClipRole.REF_CAM).role == ClipRole.REF_CAM
    with pytest.raises(ConsistencyError):
        ref.derive(ClipRole.DEG_DEC)
    with pytest.raises(ConsistencyError):
        cam.derive(ClipRole.DEG)


def test_clip_id_range():
    with pytest.raises(RangeError):
        ClipDescriptor(0x10000, "clip", VideoSpec(16, 16))


def test_gop_parse_and_labels():
    assert GopMode.parse("0") == GopMode.all_intra()
    assert GopMode.parse("-1") == GopMode.single_intra()
    assert GopMode.parse("frames:5").label == "frames:5"
    assert GopMode.parse("seconds:2").label == "seconds:2"
    assert gop_label(None) == "na"
    assert gop_from_label("na") is None
    assert gop_from_label("frames:5") == GopMode.frames(5)
    with pytest.raises(ValueError):
        GopMode.parse("sometimes")


def test_gop_length_convention():
    fps = Fraction(30)
    assert GopMode.all_intra().gop_length(fps) == 0
    assert GopMode.single_intra().gop_length(fps) == -1
    assert GopMode.seconds(2).gop_length(fps) == 60
    assert GopMode.single_intra().intra_period(30, fps) == 30
    assert GopMode.all_intra().intra_period(30, fps) == 1


def test_codec_defaults_follow_codec_name():
    notch = CodecConfig.from_dict({"name": "NotchLC", "encode": "x", "decode": "y"})
    assert notch.gop_free
    assert notch.rate_param_kind == RateParamKind.QUALITY_LEVEL
    assert notch.rate_params() == ["good", "excellent", "optimal", "best"]
    h264 = CodecConfig.from_dict({"name": "h264"})
    assert not h264.supports_10bit
    assert h264.rate_range == (11, 51)


def test_check_rate_param():
    toy = CodecConfig.from_dict({"name": "toy"})
    toy.check_rate_param(0)
    toy.check_rate_param(63)
    with pytest.raises(RangeError):
        toy.check_rate_param(64)
    with pytest.raises(RangeError):
        toy.check_rate_param("12")
    notch = CodecConfig.from_dict({"name": "notchlc"})
    with pytest.raises(RangeError):
        notch.check_rate_param("perfect")


def test_bitrate_is_decimal_megabits():
    # 1.2 MB over one second
    assert bitrate_mbps(1_200_000, 1.0) == pytest.approx(9.6)


def test_region_mask_arrays():
    full = RegionMask.full().to_array(4, 6)
    assert full.all()
    excluded = RegionMask.exclude([Rect(0, 0, 2, 2), Rect(-1, 3, 3, 5)]).to_array(4, 6)
    assert not excluded[0:2, 0:2].any()
    assert not excluded[3, 0:2].any()
    assert excluded.sum() == 24 - 4 - 2
    roi = RegionMask.roi(Rect(1, 1, 2, 2)).to_array(4, 6)
    assert roi.sum() == 4
    with pytest.raises(DimensionError):
        RegionMask.roi(Rect(5, 0, 2, 2)).to_array(4, 6)


def test_region_mask_dict_form():
    mask = RegionMask.exclude([Rect(1, 2, 3, 4)])
    assert mask.to_dict() == {"kind": "exclude_markers", "rects": [[1, 2, 3, 4]]}
    assert RegionMask.from_dict(mask.to_dict()).kind == MaskKind.EXCLUDE_MARKERS


def test_channel_config_validation():
    with pytest.raises(RangeError):
        ChannelConfig(noise_sigma=-1)
    with pytest.raises(RangeError):
        ChannelConfig(duplicate_prob=0.6, skip_prob=0.4)
    with pytest.raises(RangeError):
        ChannelConfig(resample=Resample(Fraction(0)))
    assert ChannelConfig().is_identity
    assert not ChannelConfig(noise_sigma=1.0).is_identity


def test_channel_config_from_dict():
    cfg = ChannelConfig.from_dict({
        "resample": {"scale": "1/2", "reconstruction": "bilinear"},
        "noise_sigma": 2.5,
        "roi": [8, 8, 32, 32],
        "capture_bit_depth": 12,
        "capture_chroma": "444",
    })
    assert cfg.resample.scale == Fraction(1, 2)
    assert cfg.roi == Rect(8, 8, 32, 32)
    assert cfg.capture_chroma == Chroma.YUV444
    assert ChannelConfig.from_dict(cfg.to_dict()) == cfg


def test_alignment_map_genlock_loss():
    amap = AlignmentMap(
        clip_id=3,
        entries=[AlignmentEntry(0, 5, 4), AlignmentEntry(1, 5, 4)],
        events=[GenlockEvent(EventKind.DUPLICATE, 1, (5,))],
    )
    assert amap.has_genlock_loss
    assert "Duplicate" in amap.events[0].describe()
    restored = AlignmentMap.from_dict(amap.to_dict())
    assert restored.entries == amap.entries
    assert restored.events == amap.events


def test_quality_record_pooled():
    record = QualityRecord("psnr", [40.0, 42.0], 41.0)
    assert record.recompute_pooled() == pytest.approx(41.0)


def test_curve_from_dict_keeps_gop_free():
    curve = RateQualityCurve("notchlc", "waves", None, "vmaf", [(10.0, 90.0)])
    restored = RateQualityCurve.from_dict(curve.to_dict())
    assert restored.gop is None
    assert restored.points == [(10.0, 90.0)]
