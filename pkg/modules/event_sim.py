"""Frame-to-event conversion.

Reference-level DVS model: every pixel remembers the log intensity at which it
last fired and emits one event per threshold crossing since then, carrying the
residual over to the next frame. Thresholds carry a frozen per-pixel mismatch;
leak and shot noise are homogeneous Poisson processes per pixel.
"""

import logging
import math
import os
from dataclasses import dataclass, asdict

import numpy as np
from PIL import Image

from modules.exceptions import ConfigError, DataError
from modules.utils import ensure_dir, make_rng

logger = logging.getLogger(__name__)

EVENT_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])

ON = 1
OFF = -1

LOG_EPS = 1e-3
MIN_THRESHOLD = 0.01
# Absorbs float rounding when a change lands exactly on a multiple of the threshold
COUNT_TOLERANCE = 1e-9

EVENT_FRAME_PATTERN = "events_%06d.pgm"
EVENT_FRAME_MID = 128
EVENT_FRAME_STEP = 32


@dataclass(frozen=True)
class SimConfig:
    theta_on: float = 0.2
    theta_off: float = 0.2
    sigma_theta: float = 0.05
    cutoff_hz: float = 30.0
    leak_rate_hz: float = 0.1
    shot_rate_hz: float = 5.0
    upsample_factor: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.theta_on <= 0 or self.theta_off <= 0:
            raise ConfigError("contrast thresholds must be positive",
                              theta_on=self.theta_on, theta_off=self.theta_off)
        if self.sigma_theta < 0:
            raise ConfigError("sigma_theta must be non-negative", sigma_theta=self.sigma_theta)
        if self.cutoff_hz < 0 or self.leak_rate_hz < 0 or self.shot_rate_hz < 0:
            raise ConfigError("cutoff and noise rates must be non-negative")
        if int(self.upsample_factor) != self.upsample_factor or self.upsample_factor < 1:
            raise ConfigError("upsample_factor must be a positive integer",
                              upsample_factor=self.upsample_factor)

    def to_dict(self):
        return asdict(self)


def empty_events(count=0):
    return np.zeros(count, dtype=EVENT_DTYPE)


def sort_events(events):
    """Canonical order: time, then row, column and polarity"""
    order = np.lexsort((events["p"], events["x"], events["y"], events["t"]))
    return events[order]


@dataclass
class EventStream:
    events: np.ndarray
    width: int
    height: int
    duration_us: int

    def __len__(self):
        return len(self.events)

    def validate(self):
        if self.events.dtype != EVENT_DTYPE:
            raise DataError("event array has the wrong dtype", dtype=str(self.events.dtype))
        if len(self.events):
            if np.any(np.diff(self.events["t"].astype(np.int64)) < 0):
                raise DataError("event timestamps are not sorted")
            if self.events["x"].max() >= self.width or self.events["y"].max() >= self.height:
                raise DataError("event coordinates outside the sensor",
                                width=self.width, height=self.height)
            if not np.all(np.isin(self.events["p"], (ON, OFF))):
                raise DataError("event polarity must be +1 or -1")
        return self

    def window(self, t_start_us, t_end_us):
        """Events with t_start_us <= t < t_end_us"""
        t = self.events["t"]
        lo = np.searchsorted(t, np.uint64(t_start_us), side="left")
        hi = np.searchsorted(t, np.uint64(t_end_us), side="left")
        return self.events[lo:hi]

    def polarity_counts(self):
        return int(np.sum(self.events["p"] == ON)), int(np.sum(self.events["p"] == OFF))


@dataclass
class LogFrameSequence:
    """Log-intensity frames: an (N, H, W) array or any iterable of (H, W) arrays"""
    frames: object
    fps: float
    t0_us: int = 0


def to_log(frame):
    return np.log(np.asarray(frame, dtype=np.float64) + LOG_EPS)


def iter_upsampled_log(frames, factor):
    """Yield log frames with factor - 1 linear inserts between neighbours"""
    if factor < 1:
        raise ConfigError("upsample factor must be at least 1", factor=factor)
    previous = None
    count = 0
    for frame in frames:
        current = to_log(frame)
        count += 1
        if previous is not None:
            step = current - previous
            for j in range(1, factor):
                yield previous + (j / factor) * step
        yield current
        previous = current
    if factor > 1 and count < 2:
        raise DataError("upsampling needs at least 2 frames", frames=count, factor=factor)


def upsample_log(frames, factor):
    """Log-transform and temporally upsample an IntensityFrameSequence"""
    if factor > 1 and len(frames) < 2:
        raise DataError("upsampling needs at least 2 frames", frames=len(frames), factor=factor)
    stacked = np.stack(list(iter_upsampled_log(frames.frames, factor)))
    return LogFrameSequence(stacked, frames.fps * factor, frames.t0_us)


def lowpass_coefficient(cutoff_hz, fps):
    if fps <= 0:
        raise ConfigError("fps must be positive", fps=fps)
    if cutoff_hz <= 0:
        return 1.0
    return min(1.0, 2 * math.pi * cutoff_hz / fps)


def iter_lowpass(frames, cutoff_hz, fps):
    """First-order IIR per pixel, started at the first frame; cutoff 0 disables it"""
    a = lowpass_coefficient(cutoff_hz, fps)
    state = None
    for frame in frames:
        if a >= 1.0:
            yield frame
            continue
        state = np.array(frame, dtype=np.float64) if state is None else state + a * (frame - state)
        yield state


def lowpass(log_frames, cutoff_hz, fps):
    """Low-pass an (N, H, W) log-frame array"""
    frames = np.asarray(log_frames, dtype=np.float64)
    return np.stack(list(iter_lowpass(frames, cutoff_hz, fps)))


def draw_thresholds(shape, config):
    """Frozen per-pixel ON and OFF thresholds"""
    rng = make_rng(config.seed, 0)
    theta_on = np.full(shape, float(config.theta_on))
    theta_off = np.full(shape, float(config.theta_off))
    if config.sigma_theta > 0:
        theta_on = np.maximum(rng.normal(config.theta_on, config.sigma_theta, shape), MIN_THRESHOLD)
        theta_off = np.maximum(rng.normal(config.theta_off, config.sigma_theta, shape), MIN_THRESHOLD)
    return theta_on, theta_off


def _transition_events(counts, polarity, width, t_start, interval):
    flat = np.flatnonzero(counts)
    if flat.size == 0:
        return None
    n = counts.ravel()[flat]
    pixels = np.repeat(flat, n)
    per_event_n = np.repeat(n, n)
    order = np.arange(pixels.size) - np.repeat(np.cumsum(n) - n, n)

    chunk = empty_events(pixels.size)
    chunk["t"] = np.floor(t_start + interval * (order + 1) / (per_event_n + 1)).astype(np.uint64)
    chunk["x"] = pixels % width
    chunk["y"] = pixels // width
    chunk["p"] = polarity
    return chunk


def generate_events(log_frames, config):
    """Emit threshold-crossing events for a LogFrameSequence"""
    interval = 1e6 / log_frames.fps
    chunks = []
    reference = None
    shape = None
    count = 0

    for frame in log_frames.frames:
        frame = np.asarray(frame, dtype=np.float64)
        if reference is None:
            if frame.ndim != 2:
                raise DataError("log frames must be 2-D", shape=frame.shape)
            shape = frame.shape
            reference = frame.copy()
            theta_on, theta_off = draw_thresholds(shape, config)
            count = 1
            continue
        if frame.shape != shape:
            raise DataError("frame dimensions differ within the sequence",
                            expected=shape, got=frame.shape)

        delta = frame - reference
        n_on = np.where(delta > 0, np.floor(delta / theta_on + COUNT_TOLERANCE), 0).astype(np.int64)
        n_off = np.where(delta < 0, np.floor(-delta / theta_off + COUNT_TOLERANCE), 0).astype(np.int64)
        reference += n_on * theta_on - n_off * theta_off

        t_start = log_frames.t0_us + (count - 1) * interval
        for counts, polarity in ((n_on, ON), (n_off, OFF)):
            chunk = _transition_events(counts, polarity, shape[1], t_start, interval)
            if chunk is not None:
                chunks.append(chunk)
        count += 1

    if count < 2:
        raise DataError("event generation needs at least 2 frames", frames=count)

    events = sort_events(np.concatenate(chunks)) if chunks else empty_events()
    duration_us = int(round(log_frames.t0_us + (count - 1) * interval))
    logger.debug(f"Generated {len(events)} signal events from {count} log frames")
    return EventStream(events, shape[1], shape[0], duration_us)


def _poisson_events(rng, rate_hz, polarity, width, height, duration_us):
    counts = rng.poisson(rate_hz * duration_us / 1e6, size=width * height)
    pixels = np.repeat(np.arange(width * height), counts)
    chunk = empty_events(pixels.size)
    chunk["t"] = np.floor(rng.uniform(0, duration_us, pixels.size)).astype(np.uint64)
    chunk["x"] = pixels % width
    chunk["y"] = pixels // width
    chunk["p"] = polarity
    return chunk


def inject_noise(stream, config):
    """Add ON leak events and polarity-balanced shot noise"""
    processes = [
        (config.leak_rate_hz, ON),
        (config.shot_rate_hz / 2, ON),
        (config.shot_rate_hz / 2, OFF),
    ]
    if all(rate == 0 for rate, _ in processes) or stream.duration_us <= 0:
        return stream

    rng = make_rng(config.seed, 1)
    chunks = [stream.events]
    for rate, polarity in processes:
        if rate > 0:
            chunks.append(_poisson_events(rng, rate, polarity, stream.width, stream.height,
                                          stream.duration_us))
    events = sort_events(np.concatenate(chunks))
    logger.debug(f"Injected {len(events) - len(stream)} noise events")
    return EventStream(events, stream.width, stream.height, stream.duration_us)


def event_frame(stream, t_start_us, t_end_us):
    """Signed per-pixel polarity sum over a time window"""
    frame = np.zeros((stream.height, stream.width), dtype=np.int64)
    window = stream.window(t_start_us, t_end_us)
    np.add.at(frame, (window["y"].astype(np.intp), window["x"].astype(np.intp)),
              window["p"].astype(np.int64))
    return frame


def write_event_frames(stream, directory, window_us):
    """Dump consecutive event frames as PGMs, mid-gray at zero net polarity"""
    if window_us <= 0:
        raise ConfigError("event frame window must be positive", window_us=window_us)
    ensure_dir(directory)
    count = int(math.ceil(stream.duration_us / window_us))
    for index in range(count):
        frame = event_frame(stream, int(round(index * window_us)), int(round((index + 1) * window_us)))
        image = np.clip(EVENT_FRAME_MID + EVENT_FRAME_STEP * frame, 0, 255).astype(np.uint8)
        Image.fromarray(image).save(os.path.join(directory, EVENT_FRAME_PATTERN % index))
    logger.info(f"Wrote {count} event frames to {directory}")
    return count


class EventSimulator:
    """Streams frames through upsampling, low-pass filtering, emission and noise"""

    def __init__(self, config):
        self.config = config

    def simulate(self, sequence, duration_us=None):
        """Events for a frame sequence; duration_us stretches the stream (and its noise) to a label track"""
        factor = int(self.config.upsample_factor)
        fps = sequence.fps * factor
        log_frames = iter_upsampled_log(sequence.frames, factor)
        filtered = iter_lowpass(log_frames, self.config.cutoff_hz, fps)
        stream = generate_events(LogFrameSequence(filtered, fps, sequence.t0_us), self.config)
        if duration_us is not None and duration_us > stream.duration_us:
            stream = EventStream(stream.events, stream.width, stream.height, int(duration_us))
        stream = inject_noise(stream, self.config)

        on, off = stream.polarity_counts()
        logger.info(f"Simulated {len(stream)} events ({on} ON / {off} OFF) "
                    f"over {stream.duration_us / 1e6:.2f} s")
        return stream
