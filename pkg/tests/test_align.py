"""Tests for marker-based capture alignment."""

from __future__ import annotations

import pytest

from vp_codec_bench.align import (
    build_alignment_map,
    map_from_ids,
    pair_captures,
    pair_frames,
)
from vp_codec_bench.channel import simulate_capture
from vp_codec_bench.errors import (
    AlignmentImpossibleError,
    GenlockViolationError,
    WrongClipError,
)
from vp_codec_bench.models import ChannelConfig, Chroma, EventKind, FrameBuffer, PairPolicy
from vp_codec_bench.pipeline import embed_clip_markers
from vp_codec_bench.synth import generate_synthetic_clip

from .conftest import make_spec

CLIP_ID = 21


def _ids(*sources: int, clip_id: int = CLIP_ID):
    return [(clip_id, s, 4) for s in sources]


@pytest.fixture
def marked(small_geometry) -> list[FrameBuffer]:
    spec = make_spec(64, 64, frames=10, chroma=Chroma.YUV444)
    frames = generate_synthetic_clip("noise", spec, seed=8)
    return embed_clip_markers(frames, CLIP_ID, small_geometry, [None])


def test_clean_sequence():
    amap = map_from_ids(_ids(5, 6, 7, 8), CLIP_ID)
    assert [e.source_index for e in amap.entries] == [5, 6, 7, 8]
    assert amap.events == []


def test_duplicate_event():
    amap = map_from_ids(_ids(5, 6, 7, 7, 8), CLIP_ID)
    assert len(amap.entries) == 5
    (event,) = amap.events
    assert event.kind == EventKind.DUPLICATE
    assert event.captured_index == 3


def test_skip_event():
    amap = map_from_ids(_ids(5, 6, 8), CLIP_ID)
    (event,) = amap.events
    assert event.kind == EventKind.SKIP
    assert event.captured_index == 2
    assert event.detail == (6, 8)


def test_pre_and_post_roll_are_trimmed():
    decoded = [None, None, *_ids(0, 1, 2), None]
    amap = map_from_ids(decoded, CLIP_ID)
    assert [e.captured_index for e in amap.entries] == [2, 3, 4]
    assert amap.events == []


def test_interior_unreadable_frame_is_an_event():
    decoded = [*_ids(0, 1), None, *_ids(3)]
    amap = map_from_ids(decoded, CLIP_ID)
    kinds = [e.kind for e in amap.events]
    assert EventKind.UNREADABLE in kinds
    assert EventKind.SKIP in kinds


def test_wrong_clip():
    with pytest.raises(WrongClipError):
        map_from_ids(_ids(0, 1, 2, clip_id=9), CLIP_ID)


def test_nothing_readable():
    with pytest.raises(AlignmentImpossibleError):
        map_from_ids([None, None], CLIP_ID)
    with pytest.raises(AlignmentImpossibleError):
        build_alignment_map([], CLIP_ID)


def test_build_map_from_marked_frames(marked, small_geometry):
    captured = [marked[i] for i in (2, 3, 4, 4, 5)]
    amap = build_alignment_map(captured, CLIP_ID, small_geometry)
    assert [e.source_index for e in amap.entries] == [2, 3, 4, 4, 5]
    assert [e.kind for e in amap.events] == [EventKind.DUPLICATE]
    assert all(e.agreement == 4 for e in amap.entries)


def test_unmarked_capture_is_impossible(small_geometry):
    frames = generate_synthetic_clip("flat", make_spec(64, 64, frames=3))
    with pytest.raises(AlignmentImpossibleError):
        build_alignment_map(frames, CLIP_ID, small_geometry)


def test_strict_pairing_of_clean_capture(marked, small_geometry):
    amap = build_alignment_map(marked, CLIP_ID, small_geometry)
    pairs = pair_frames(amap, marked, marked, PairPolicy.STRICT)
    assert len(pairs) == len(marked)
    assert all(ref is cap for ref, cap in pairs)


def test_strict_pairing_rejects_genlock_loss(marked, small_geometry):
    captured = [marked[i] for i in (0, 1, 3, 4)]
    amap = build_alignment_map(captured, CLIP_ID, small_geometry)
    with pytest.raises(GenlockViolationError) as exc:
        pair_frames(amap, marked, captured, PairPolicy.STRICT)
    assert "Skip" in str(exc.value)
    assert exc.value.events


def test_first_of_dup_keeps_unique_sources(marked, small_geometry):
    captured = [marked[i] for i in (0, 1, 1, 2, 3)]
    amap = build_alignment_map(captured, CLIP_ID, small_geometry)
    pairs = pair_frames(amap, marked, captured, PairPolicy.FIRST_OF_DUP)
    assert len(pairs) == 4
    assert all(ref is marked[i] for i, (ref, _) in enumerate(pairs))


def test_jittered_channel_alignment_matches_ground_truth(marked, small_geometry):
    capture = simulate_capture(
        marked, ChannelConfig(duplicate_prob=0.2, skip_prob=0.2, seed=4), "cam",
    )
    amap = build_alignment_map(capture.frames, CLIP_ID, small_geometry)
    assert [e.source_index for e in amap.entries] == capture.source_indices


def test_pair_two_captures_on_shared_sources(marked, small_geometry):
    cap_a = [marked[i] for i in (0, 1, 2, 3)]
    cap_b = [marked[i] for i in (1, 2, 2, 4)]
    map_a = build_alignment_map(cap_a, CLIP_ID, small_geometry)
    map_b = build_alignment_map(cap_b, CLIP_ID, small_geometry)
    pairs = pair_captures(map_a, cap_a, map_b, cap_b)
    assert len(pairs) == 2
    for (a, b), source in zip(pairs, (1, 2)):
        assert a is marked[source]
        assert b is marked[source]

    with pytest.raises(GenlockViolationError):
        pair_captures(map_a, cap_a, map_b, cap_b, PairPolicy.STRICT)
