"""Eye-rotation schedules and ground-truth labels.

Euler convention: x is vertical gaze, z is horizontal gaze and y is torsion,
which the renderer ignores. Mirroring the contralateral eye negates y only,
so mirrored tracks stay conjugate in gaze.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from modules.exceptions import ConfigError, DataError
from modules.utils import make_rng

logger = logging.getLogger(__name__)

FIXATION = "fixation"
SACCADE = "saccade"
CLASS_INDEX = {FIXATION: 0, SACCADE: 1}

MIN_FIXATION_MS = 20.0


@dataclass(frozen=True)
class RotationKey:
    frame_index: int
    rotation: tuple


@dataclass(frozen=True)
class RotationTrack:
    keys: tuple
    frame_start: int
    frame_end: int
    frame_step: int
    fps: float = 25.0

    def rotations(self):
        return np.array([key.rotation for key in self.keys], dtype=np.float64).reshape(-1, 3)

    def frames(self):
        return np.array([key.frame_index for key in self.keys], dtype=np.int64)


@dataclass(frozen=True)
class GazeSample:
    t_us: int
    angle: tuple
    segment_id: int


@dataclass(frozen=True)
class LabelSegment:
    start_us: int
    end_us: int
    label: str

    @property
    def class_index(self):
        return CLASS_INDEX[self.label]

    @property
    def duration_us(self):
        return self.end_us - self.start_us


@dataclass
class LabelTrack:
    segments: list = field(default_factory=list)

    def to_dict(self):
        return {"segments": [
            {"start_us": seg.start_us, "end_us": seg.end_us, "class": seg.label}
            for seg in self.segments
        ]}

    @classmethod
    def from_dict(cls, data):
        try:
            segments = [
                LabelSegment(int(seg["start_us"]), int(seg["end_us"]), str(seg["class"]))
                for seg in data["segments"]
            ]
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"Malformed label track: {e}")
        for seg in segments:
            if seg.label not in CLASS_INDEX:
                raise DataError(f"Unknown label class {seg.label!r}")
        return cls(segments)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path):
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError:
            raise DataError(f"Label file not found: {path}", path=str(path))
        except json.JSONDecodeError as e:
            raise DataError(f"Malformed label JSON in {path}: {e}", path=str(path))
        return cls.from_dict(data)

    def duration_us(self):
        return self.segments[-1].end_us if self.segments else 0


def generate_saccades(frame_start, frame_end, frame_step, max_angle_deg, seed, fps=25.0):
    """Sample one random rotation in [-L, L]^3 per keyframe"""
    if frame_end < frame_start:
        raise ConfigError("frame_end must not precede frame_start",
                          frame_start=frame_start, frame_end=frame_end)
    if frame_step < 1:
        raise ConfigError("frame_step must be at least 1", frame_step=frame_step)
    if max_angle_deg <= 0:
        raise ConfigError("max_angle_deg must be positive", max_angle_deg=max_angle_deg)
    if fps <= 0:
        raise ConfigError("fps must be positive", fps=fps)

    frames = list(range(frame_start, frame_end + 1, frame_step))
    rng = make_rng(seed)
    rotations = rng.uniform(-max_angle_deg, max_angle_deg, size=(len(frames), 3))

    keys = tuple(
        RotationKey(frame, tuple(float(v) for v in rotation))
        for frame, rotation in zip(frames, rotations)
    )
    logger.debug(f"Generated {len(keys)} keyframes in frames [{frame_start}, {frame_end}]")
    return RotationTrack(keys, frame_start, frame_end, frame_step, float(fps))


def mirror_track(track):
    """Contralateral eye: (x, y, z) -> (x, -y, z) on every key"""
    keys = tuple(
        RotationKey(key.frame_index, (key.rotation[0], -key.rotation[1], key.rotation[2]))
        for key in track.keys
    )
    return RotationTrack(keys, track.frame_start, track.frame_end, track.frame_step, track.fps)


def binocular_tracks(frame_start, frame_end, frame_step, max_angle_deg, seed, fps=25.0):
    """Left track and its mirrored right track"""
    left = generate_saccades(frame_start, frame_end, frame_step, max_angle_deg, seed, fps)
    return left, mirror_track(left)


def keyframe_gaze(track):
    """Key times in microseconds and (horizontal, vertical) gaze per key"""
    if not track.keys:
        raise DataError("Rotation track has no keys")
    rotations = track.rotations()
    times_us = (track.frames() - track.frame_start) * 1e6 / track.fps
    gaze = np.stack([rotations[:, 2], rotations[:, 0]], axis=1)
    return times_us, gaze


def sample_trajectory(track, sample_rate_hz):
    """Linearly interpolate keyframe gaze at a uniform sample rate"""
    if sample_rate_hz <= 0:
        raise ConfigError("sample_rate_hz must be positive", sample_rate_hz=sample_rate_hz)
    times_us, gaze = keyframe_gaze(track)

    n_samples = int(np.floor(times_us[-1] * sample_rate_hz / 1e6 + 1e-9)) + 1
    t = np.arange(n_samples) * (1e6 / sample_rate_hz)
    horizontal = np.interp(t, times_us, gaze[:, 0])
    vertical = np.interp(t, times_us, gaze[:, 1])
    segment_ids = np.clip(np.searchsorted(times_us, t, side="right") - 1, 0, max(len(times_us) - 2, 0))

    return [
        GazeSample(int(round(ts)), (float(h), float(v)), int(seg))
        for ts, h, v, seg in zip(t, horizontal, vertical, segment_ids)
    ]


@dataclass
class _Segment:
    start_us: int
    end_us: int
    label: str
    start_gaze: np.ndarray
    end_gaze: np.ndarray
    motion_end_us: int


def _draw_target(rng, max_angle_deg, origin, min_amplitude_deg, attempts=100):
    target = rng.uniform(-max_angle_deg, max_angle_deg, size=2)
    for _ in range(attempts):
        if origin is None or np.hypot(*(target - origin)) >= min_amplitude_deg:
            break
        target = rng.uniform(-max_angle_deg, max_angle_deg, size=2)
    return target


def _plan_segments(duration_us, max_angle_deg, rng, fix_range_ms, sac_range_ms, min_amplitude_deg):
    gaze = _draw_target(rng, max_angle_deg, None, min_amplitude_deg)
    segments = []
    t = 0
    label = FIXATION
    while t < duration_us:
        low, high = fix_range_ms if label == FIXATION else sac_range_ms
        planned = int(round(rng.uniform(low, high) * 1000))
        end = min(t + planned, duration_us)
        if label == FIXATION:
            segments.append(_Segment(t, end, FIXATION, gaze, gaze, end))
        else:
            target = _draw_target(rng, max_angle_deg, gaze, min_amplitude_deg)
            segments.append(_Segment(t, end, SACCADE, gaze, target, t + planned))
            gaze = target
        t = end
        label = SACCADE if label == FIXATION else FIXATION

    last = segments[-1]
    if len(segments) > 1 and last.label == FIXATION and last.end_us - last.start_us < MIN_FIXATION_MS * 1000:
        # A truncated fixation too short to count is absorbed by the saccade before it
        segments.pop()
        previous = segments[-1]
        previous.end_us = duration_us
        previous.motion_end_us = max(previous.motion_end_us, duration_us)
    return segments


def _gaze_at(segment, t_us):
    if segment.label == FIXATION:
        return segment.start_gaze
    span = segment.motion_end_us - segment.start_us
    fraction = (t_us - segment.start_us) / span if span > 0 else 1.0
    return segment.start_gaze + min(max(fraction, 0.0), 1.0) * (segment.end_gaze - segment.start_gaze)


def generate_labeled_schedule(duration_ms, max_angle_deg, seed, fix_range_ms=(50, 600),
                              sac_range_ms=(20, 300), sample_rate_hz=1000.0,
                              min_amplitude_deg=1.0):
    """Alternate fixations and saccades over [0, duration] and label them.

    Gaze is constant during a fixation and moves along a straight line between
    the bounding fixation targets during a saccade. Returns the gaze samples and
    the LabelTrack.
    """
    if duration_ms <= 0:
        raise ConfigError("duration_ms must be positive", duration_ms=duration_ms)
    if max_angle_deg <= 0:
        raise ConfigError("max_angle_deg must be positive", max_angle_deg=max_angle_deg)
    if sample_rate_hz <= 0:
        raise ConfigError("sample_rate_hz must be positive", sample_rate_hz=sample_rate_hz)
    for name, (low, high) in (("fix_range_ms", fix_range_ms), ("sac_range_ms", sac_range_ms)):
        if low < 1 or high < low:
            raise ConfigError(f"{name} must be a non-empty range with min >= 1 ms", range=(low, high))

    rng = make_rng(seed)
    duration_us = int(round(duration_ms * 1000))

    if duration_ms < fix_range_ms[0]:
        gaze = _draw_target(rng, max_angle_deg, None, min_amplitude_deg)
        segments = [_Segment(0, duration_us, FIXATION, gaze, gaze, duration_us)]
    else:
        segments = _plan_segments(duration_us, max_angle_deg, rng, fix_range_ms,
                                  sac_range_ms, min_amplitude_deg)

    n_samples = int(np.floor(duration_us * sample_rate_hz / 1e6 + 1e-9)) + 1
    starts = np.array([seg.start_us for seg in segments])
    samples = []
    for k in range(n_samples):
        t_us = int(round(k * 1e6 / sample_rate_hz))
        index = min(int(np.searchsorted(starts, t_us, side="right")) - 1, len(segments) - 1)
        angle = _gaze_at(segments[index], t_us)
        samples.append(GazeSample(t_us, (float(angle[0]), float(angle[1])), index))

    labels = LabelTrack([LabelSegment(seg.start_us, seg.end_us, seg.label) for seg in segments])
    counts = {label: sum(1 for seg in segments if seg.label == label) for label in CLASS_INDEX}
    logger.info(f"Scheduled {counts[FIXATION]} fixations and {counts[SACCADE]} saccades "
                f"over {duration_ms:.0f} ms")
    return samples, labels
