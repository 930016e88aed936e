"""Map captured frames back to source frames through their markers."""

from __future__ import annotations

from collections import Counter

from .errors import (
    AlignmentImpossibleError,
    DimensionError,
    FrameUnreadableError,
    GenlockViolationError,
    WrongClipError,
)
from .log import get_logger
from .marker import MarkerGeometry, decode_frame_id
from .models import (
    AlignmentEntry,
    AlignmentMap,
    EventKind,
    FrameBuffer,
    GenlockEvent,
    PairPolicy,
    Rect,
)


def decode_ids(
    captured: list[FrameBuffer],
    geometry: MarkerGeometry,
    region: Rect | None = None,
) -> list[tuple[int, int, int] | None]:
    """(clip_id, frame_index, agreement) per captured frame, None when unreadable."""
    decoded: list[tuple[int, int, int] | None] = []
    for frame in captured:
        try:
            payload, agreement = decode_frame_id(frame, geometry, region)
        except FrameUnreadableError:
            decoded.append(None)
            continue
        decoded.append((payload.clip_id, payload.frame_index, agreement))
    return decoded


def map_from_ids(
    decoded: list[tuple[int, int, int] | None],
    expected_clip_id: int,
) -> AlignmentMap:
    """Assemble an AlignmentMap from per-frame decode results."""
    logger = get_logger()
    readable = [i for i, d in enumerate(decoded) if d is not None]
    if not readable:
        raise AlignmentImpossibleError(
            f"no readable marker in {len(decoded)} captured frames"
        )
    votes = Counter(decoded[i][0] for i in readable)
    majority, _ = votes.most_common(1)[0]
    if majority != expected_clip_id:
        raise WrongClipError(
            f"capture carries clip {majority}, expected clip {expected_clip_id}"
        )

    # pre-roll and post-roll are trimmed; interior failures become events
    first, last = readable[0], readable[-1]
    entries: list[AlignmentEntry] = []
    events: list[GenlockEvent] = []
    for i in range(first, last + 1):
        d = decoded[i]
        if d is None or d[0] != expected_clip_id:
            events.append(GenlockEvent(EventKind.UNREADABLE, i))
            continue
        _, source, agreement = d
        if entries:
            prev = entries[-1].source_index
            if source == prev:
                events.append(GenlockEvent(EventKind.DUPLICATE, i, (source,)))
            elif source != prev + 1:
                events.append(GenlockEvent(EventKind.SKIP, i, (prev, source)))
        entries.append(AlignmentEntry(i, source, agreement))

    trimmed = first + (len(decoded) - 1 - last)
    if trimmed:
        logger.debug("Alignment trimmed %d pre/post-roll frames", trimmed)
    for event in events:
        logger.debug("Genlock event: %s", event.describe())
    return AlignmentMap(clip_id=expected_clip_id, entries=entries, events=events)


def build_alignment_map(
    captured: list[FrameBuffer],
    expected_clip_id: int,
    geometry: MarkerGeometry | None = None,
    region: Rect | None = None,
) -> AlignmentMap:
    """Decode every captured frame's marker and record genlock events."""
    if not captured:
        raise AlignmentImpossibleError("capture has no frames")
    geometry = geometry or MarkerGeometry()
    return map_from_ids(decode_ids(captured, geometry, region), expected_clip_id)


def select_entries(amap: AlignmentMap, policy: PairPolicy) -> list[AlignmentEntry]:
    """First captured instance per source index, in source order."""
    if policy == PairPolicy.STRICT:
        bad = [e for e in amap.events if e.kind in (EventKind.DUPLICATE, EventKind.SKIP)]
        if bad:
            raise GenlockViolationError(
                "genlock lost: " + "; ".join(e.describe() for e in bad), events=bad,
            )
    seen: dict[int, AlignmentEntry] = {}
    for entry in amap.entries:
        seen.setdefault(entry.source_index, entry)
    return [seen[s] for s in sorted(seen)]


def pair_frames(
    amap: AlignmentMap,
    reference: list[FrameBuffer],
    captured: list[FrameBuffer],
    policy: PairPolicy = PairPolicy.STRICT,
) -> list[tuple[FrameBuffer, FrameBuffer]]:
    """(source frame, captured frame) pairs in strictly increasing source order."""
    pairs = []
    for entry in select_entries(amap, policy):
        if entry.source_index >= len(reference) or entry.captured_index >= len(captured):
            raise DimensionError(
                f"alignment entry ({entry.captured_index} -> {entry.source_index}) outside "
                f"clips of {len(captured)} captured / {len(reference)} source frames"
            )
        pairs.append((reference[entry.source_index], captured[entry.captured_index]))
    return pairs


def pair_captures(
    map_a: AlignmentMap,
    captured_a: list[FrameBuffer],
    map_b: AlignmentMap,
    captured_b: list[FrameBuffer],
    policy: PairPolicy = PairPolicy.FIRST_OF_DUP,
) -> list[tuple[FrameBuffer, FrameBuffer]]:
    """Pair two captures of the same clip on the source frames both contain."""
    if map_a.clip_id != map_b.clip_id:
        raise WrongClipError(f"captures of clips {map_a.clip_id} and {map_b.clip_id}")
    by_source_a = {e.source_index: e for e in select_entries(map_a, policy)}
    by_source_b = {e.source_index: e for e in select_entries(map_b, policy)}
    shared = sorted(by_source_a.keys() & by_source_b.keys())
    if not shared:
        raise AlignmentImpossibleError("captures share no source frames")
    return [
        (captured_a[by_source_a[s].captured_index], captured_b[by_source_b[s].captured_index])
        for s in shared
    ]
