"""Fuse VAD posteriors with the filtered angle stream into homogeneous segments.

Change events come in three kinds: speech onset/offset (debounced VAD
crossings, timestamped at the crossing frame) and angle changes (the
filtered angle leaving the current angle cluster during speech). An angle
change is stamped at the midpoint between the last in-cluster frame and the
detection frame, pulled up to the latest speech onset when one intervened,
so the reported time lands where the speaker turn actually happened rather
than where detection latency put it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .angles import circular_distance, circular_mean, circular_std

DEFAULT_TOLERANCE_RAD = math.radians(10.0)
DEFAULT_MIN_SEGMENT_S = 0.2
VAD_THRESHOLD = 0.5
VAD_HANGOVER_FRAMES = 3


class EventKind(str, Enum):
    SPEECH_ONSET = "speech_onset"
    SPEECH_OFFSET = "speech_offset"
    ANGLE_CHANGE = "angle_change"


@dataclass(frozen=True)
class ChangeEvent:
    timestamp: float
    kind: EventKind
    angle: float | None = None


@dataclass
class AngleClusterState:
    """Running circular mean of the angles attributed to the current talker."""

    tolerance: float = DEFAULT_TOLERANCE_RAD
    current_center: float | None = None
    member_count: int = 0

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")

    def reset(self, angle: float):
        self.current_center = angle
        self.member_count = 1

    def absorb(self, angle: float):
        if self.current_center is None:
            self.reset(angle)
            return
        self.current_center = circular_mean(
            np.array([self.current_center, angle]),
            np.array([float(self.member_count), 1.0]),
        )
        self.member_count += 1


@dataclass
class Segment:
    start_time: float
    end_time: float
    mean_doa: float
    doa_spread: float
    frame_count: int
    member_angles: list[float] = field(default_factory=list, repr=False)

    @property
    def duration(self) -> float:
        return self.end_time - self.start_time


def _segment_from_span(start: float, end: float, frames, angles) -> Segment:
    members = [a for a in angles if a is not None and not math.isnan(a)]
    if members:
        mean = circular_mean(np.array(members))
        spread = circular_std(np.array(members))
    else:
        mean, spread = math.nan, 0.0
    return Segment(
        start_time=start,
        end_time=end,
        mean_doa=mean,
        doa_spread=spread,
        frame_count=max(1, frames),
        member_angles=members,
    )


class ChangeDetector:
    """Streaming change-event emitter over aligned angle and VAD streams."""

    def __init__(
        self,
        tolerance: float = DEFAULT_TOLERANCE_RAD,
        vad_threshold: float = VAD_THRESHOLD,
        hangover_frames: int = VAD_HANGOVER_FRAMES,
    ):
        self.cluster = AngleClusterState(tolerance=tolerance)
        self.vad_threshold = vad_threshold
        self.hangover = hangover_frames
        self.in_speech = False
        self._run_length = 0
        self._run_start_time: float | None = None
        self._last_in_cluster_time: float | None = None
        self._last_onset_time: float | None = None

    def push(self, time_s: float, angle: float | None, posterior: float) -> list[ChangeEvent]:
        events: list[ChangeEvent] = []
        offset_fired = self._update_vad(time_s, posterior, events)
        if not offset_fired and self.in_speech and posterior >= self.vad_threshold:
            if angle is not None:
                events.extend(self._update_angle(time_s, angle))
        return events

    def _update_vad(self, time_s: float, posterior: float, events: list[ChangeEvent]) -> bool:
        above = posterior >= self.vad_threshold
        if above == self.in_speech:
            self._run_length = 0
            self._run_start_time = None
            return False
        if self._run_length == 0:
            self._run_start_time = time_s
        self._run_length += 1
        if self._run_length < self.hangover:
            return False
        # Debounced crossing confirmed; stamp it at the crossing frame.
        crossing = self._run_start_time if self._run_start_time is not None else time_s
        self.in_speech = above
        self._run_length = 0
        self._run_start_time = None
        if above:
            events.append(ChangeEvent(crossing, EventKind.SPEECH_ONSET))
            self._last_onset_time = crossing
            return False
        events.append(ChangeEvent(crossing, EventKind.SPEECH_OFFSET))
        return True

    def _update_angle(self, time_s: float, angle: float) -> list[ChangeEvent]:
        cluster = self.cluster
        if cluster.current_center is None:
            cluster.reset(angle)
            self._last_in_cluster_time = time_s
            return []
        if circular_distance(angle, cluster.current_center) <= cluster.tolerance:
            cluster.absorb(angle)
            self._last_in_cluster_time = time_s
            return []
        timestamp = self._change_timestamp(time_s)
        cluster.reset(angle)
        self._last_in_cluster_time = time_s
        return [ChangeEvent(timestamp, EventKind.ANGLE_CHANGE, angle=angle)]

    def _change_timestamp(self, detection_time: float) -> float:
        last = self._last_in_cluster_time
        if last is None:
            return detection_time
        if self._last_onset_time is not None and self._last_onset_time > last:
            return self._last_onset_time
        return 0.5 * (last + detection_time)


def detect_change(
    angle_stream,
    vad_stream,
    cluster: AngleClusterState | None = None,
    frame_times=None,
) -> list[ChangeEvent]:
    """Batch wrapper around ChangeDetector over frame-aligned streams.

    `angle_stream` holds a filtered angle or None per frame; `vad_stream`
    holds posteriors; `frame_times` gives each frame's center time (defaults
    to the frame index).
    """
    if len(angle_stream) != len(vad_stream):
        raise ValueError("streams must be frame-aligned")
    detector = ChangeDetector(
        tolerance=cluster.tolerance if cluster else DEFAULT_TOLERANCE_RAD
    )
    if cluster is not None and cluster.current_center is not None:
        detector.cluster = cluster
    times = frame_times if frame_times is not None else list(range(len(angle_stream)))
    events: list[ChangeEvent] = []
    for t, angle, posterior in zip(times, angle_stream, vad_stream):
        events.extend(detector.push(t, angle, posterior))
    return events


def _merge_pass(segments: list[Segment], min_len: float) -> list[Segment]:
    """Merge sub-minimum segments into the contiguous neighbor with nearer angle."""
    changed = True
    while changed and len(segments) > 1:
        changed = False
        for i, seg in enumerate(segments):
            if seg.duration >= min_len:
                continue
            prev_seg = segments[i - 1] if i > 0 else None
            next_seg = segments[i + 1] if i + 1 < len(segments) else None
            if prev_seg is not None and abs(prev_seg.end_time - seg.start_time) > 1e-9:
                prev_seg = None
            if next_seg is not None and abs(seg.end_time - next_seg.start_time) > 1e-9:
                next_seg = None
            target = _pick_merge_target(seg, prev_seg, next_seg)
            if target is None:
                continue
            merged = _merge_two(target, seg) if target is prev_seg else _merge_two(seg, target)
            j = segments.index(target)
            lo, hi = min(i, j), max(i, j)
            segments[lo:hi + 1] = [merged]
            changed = True
            break
    return segments


def _pick_merge_target(seg: Segment, prev_seg, next_seg):
    if prev_seg is None and next_seg is None:
        return None
    if prev_seg is None:
        return next_seg
    if next_seg is None:
        return prev_seg
    if math.isnan(seg.mean_doa):
        return prev_seg
    d_prev = circular_distance(seg.mean_doa, prev_seg.mean_doa) if not math.isnan(prev_seg.mean_doa) else math.inf
    d_next = circular_distance(seg.mean_doa, next_seg.mean_doa) if not math.isnan(next_seg.mean_doa) else math.inf
    return prev_seg if d_prev <= d_next else next_seg


def _merge_two(first: Segment, second: Segment) -> Segment:
    angles = first.member_angles + second.member_angles
    return _segment_from_span(
        first.start_time,
        second.end_time,
        first.frame_count + second.frame_count,
        angles,
    )


def build_segments(
    events: list[ChangeEvent],
    angle_stream,
    frame_times=None,
    min_segment_s: float = DEFAULT_MIN_SEGMENT_S,
) -> list[Segment]:
    """Bracket speech by events into segments carrying circular DOA statistics.

    Segments span consecutive events inside speech regions; those shorter
    than `min_segment_s` are merged into the contiguous neighbor whose mean
    angle is nearer.
    """
    times = frame_times if frame_times is not None else list(range(len(angle_stream)))
    segments: list[Segment] = []
    open_start: float | None = None
    for event in sorted(events, key=lambda e: e.timestamp):
        if event.kind == EventKind.SPEECH_ONSET:
            if open_start is None:
                open_start = event.timestamp
        elif event.kind == EventKind.SPEECH_OFFSET:
            if open_start is not None:
                segments.append(_close_span(open_start, event.timestamp, times, angle_stream))
                open_start = None
        elif event.kind == EventKind.ANGLE_CHANGE:
            if open_start is not None:
                segments.append(_close_span(open_start, event.timestamp, times, angle_stream))
                open_start = event.timestamp
    segments = [s for s in segments if s.end_time > s.start_time]
    return _merge_pass(segments, min_segment_s)


def _close_span(start: float, end: float, times, angle_stream) -> Segment:
    angles = [a for t, a in zip(times, angle_stream) if start <= t < end]
    frames = sum(1 for t in times if start <= t < end)
    return _segment_from_span(start, end, frames, angles)


class _PendingSeg:
    __slots__ = ("segment", "resolved")

    def __init__(self, segment: Segment, resolved: bool):
        self.segment = segment
        self.resolved = resolved


class OnlineSegmentBuilder:
    """Streaming counterpart of build_segments with bounded emission latency.

    Short closed segments stay undecided until their merge target is known.
    The only successor that can still change is the currently open segment,
    and once it has aged past the minimum length it can no longer close
    short, so every decision settles within one minimum-length window.
    """

    def __init__(self, min_segment_s: float = DEFAULT_MIN_SEGMENT_S):
        self.min_segment_s = min_segment_s
        self._open: dict | None = None
        self._pending: list[_PendingSeg] = []

    def _open_segment(self, start: float):
        self._open = {"start": start, "angles": [], "frames": 0, "last_time": start}

    def push_frame(self, time_s: float, angle: float | None) -> list[Segment]:
        if self._open is not None:
            self._open["frames"] += 1
            self._open["last_time"] = time_s
            if angle is not None:
                self._open["angles"].append(angle)
        return self._drain(flush=False)

    def push_event(self, event: ChangeEvent) -> list[Segment]:
        if event.kind == EventKind.SPEECH_ONSET:
            if self._open is None:
                self._open_segment(event.timestamp)
        elif event.kind == EventKind.SPEECH_OFFSET:
            self._close(event.timestamp)
        elif event.kind == EventKind.ANGLE_CHANGE:
            if self._open is not None:
                self._close(event.timestamp)
                self._open_segment(event.timestamp)
        return self._drain(flush=False)

    def flush(self, end_time: float | None = None) -> list[Segment]:
        if self._open is not None:
            self._close(end_time if end_time is not None else self._open["last_time"])
        self._open = None
        return self._drain(flush=True)

    def _close(self, end: float):
        if self._open is None:
            return
        start = self._open["start"]
        end = max(end, self._open["last_time"]) if end <= start else end
        if end > start:
            seg = _segment_from_span(start, end, self._open["frames"], self._open["angles"])
            self._pending.append(_PendingSeg(seg, resolved=seg.duration >= self.min_segment_s))
        self._open = None

    # -- internal resolution machinery ------------------------------------

    def _open_age(self) -> float:
        return self._open["last_time"] - self._open["start"] if self._open else 0.0

    def _open_contiguous_to(self, seg: Segment) -> bool:
        return self._open is not None and abs(self._open["start"] - seg.end_time) <= 1e-9

    def _open_provisional(self) -> Segment:
        o = self._open
        return _segment_from_span(o["start"], o["last_time"], max(1, o["frames"]), o["angles"])

    def _resolve_shorts(self, flush: bool) -> bool:
        for i, entry in enumerate(self._pending):
            seg = entry.segment
            if entry.resolved:
                continue
            prev_entry = self._pending[i - 1] if i > 0 else None
            if prev_entry is not None and abs(prev_entry.segment.end_time - seg.start_time) > 1e-9:
                prev_entry = None
            next_entry = self._pending[i + 1] if i + 1 < len(self._pending) else None
            if next_entry is not None and abs(seg.end_time - next_entry.segment.start_time) > 1e-9:
                next_entry = None
            open_is_next = next_entry is None and self._open_contiguous_to(seg)
            if open_is_next and not flush and self._open_age() < self.min_segment_s:
                return False  # successor still unsettled; decide later
            next_seg = None
            if next_entry is not None:
                next_seg = next_entry.segment
            elif open_is_next:
                next_seg = self._open_provisional()
            prev_seg = prev_entry.segment if prev_entry else None
            target = _pick_merge_target(seg, prev_seg, next_seg)
            if target is None:
                entry.resolved = True
                return True
            if target is prev_seg:
                merged = _merge_two(prev_seg, seg)
                self._pending[i - 1] = _PendingSeg(merged, merged.duration >= self.min_segment_s)
                del self._pending[i]
            elif next_entry is not None:
                merged = _merge_two(seg, next_entry.segment)
                self._pending[i] = _PendingSeg(merged, merged.duration >= self.min_segment_s)
                del self._pending[i + 1]
            else:
                # Pool into the open segment: pull its start back.
                self._open["start"] = seg.start_time
                self._open["angles"] = list(seg.member_angles) + self._open["angles"]
                self._open["frames"] += seg.frame_count
                del self._pending[i]
            return True
        return False

    def _head_safe(self, flush: bool) -> bool:
        if not self._pending:
            return False
        head = self._pending[0]
        if not head.resolved:
            return False
        if flush:
            return True
        if len(self._pending) > 1:
            nxt = self._pending[1]
            contiguous = abs(head.segment.end_time - nxt.segment.start_time) <= 1e-9
            return not contiguous or nxt.resolved
        if self._open_contiguous_to(head.segment):
            return self._open_age() >= self.min_segment_s
        return True

    def _drain(self, flush: bool) -> list[Segment]:
        while self._resolve_shorts(flush):
            pass
        out: list[Segment] = []
        while self._head_safe(flush):
            out.append(self._pending.pop(0).segment)
            while self._resolve_shorts(flush):
                pass
        return out
