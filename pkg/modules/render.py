"""Procedural near-eye renderer.

A 2-D disk model: a dark pupil inside an iris, both translated linearly with
gaze over a static sclera. Edges get a one-pixel linear falloff.
"""

import logging
import os
import re
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np
from PIL import Image

from modules.exceptions import ConfigError, DataError
from modules.utils import ensure_dir, thread_map

logger = logging.getLogger(__name__)

FRAME_PATTERN = "frame_%06d.pgm"


@dataclass(frozen=True)
class EyeAppearance:
    sclera_level: float = 200.0
    iris_level: float = 80.0
    pupil_level: float = 20.0
    iris_radius_px: float = 8.0
    pupil_radius_px: float = 3.5
    gain_px_per_deg: float = 1.5
    background_level: float = 150.0
    sclera_radius_px: Optional[float] = None

    def __post_init__(self):
        for name in ("sclera_level", "iris_level", "pupil_level", "background_level"):
            value = getattr(self, name)
            if not 0 <= value <= 255:
                raise ConfigError(f"{name} must lie in [0, 255]", **{name: value})
        if self.pupil_radius_px <= 0 or self.iris_radius_px <= 0:
            raise ConfigError("radii must be positive")
        if self.pupil_radius_px >= self.iris_radius_px:
            raise ConfigError("pupil_radius_px must be smaller than iris_radius_px",
                              pupil_radius_px=self.pupil_radius_px, iris_radius_px=self.iris_radius_px)
        if not self.pupil_level < self.iris_level < self.sclera_level:
            raise ConfigError("levels must satisfy pupil < iris < sclera")
        if self.gain_px_per_deg <= 0:
            raise ConfigError("gain_px_per_deg must be positive", gain_px_per_deg=self.gain_px_per_deg)

    def to_dict(self):
        return asdict(self)


@dataclass
class IntensityFrameSequence:
    width: int
    height: int
    fps: float
    frames: np.ndarray
    t0_us: int = 0

    def __post_init__(self):
        if self.fps <= 0:
            raise ConfigError("fps must be positive", fps=self.fps)
        if self.frames.ndim != 3 or self.frames.shape[1:] != (self.height, self.width):
            raise DataError("frames do not match the declared geometry",
                            shape=self.frames.shape, width=self.width, height=self.height)

    def __len__(self):
        return self.frames.shape[0]

    def timestamps_us(self):
        return self.t0_us + np.arange(len(self)) * (1e6 / self.fps)


def _coverage(distance, radius):
    return np.clip(radius + 0.5 - distance, 0.0, 1.0)


def render_frame(gaze, appearance, width, height):
    """Render one grayscale frame for a (horizontal, vertical) gaze in degrees"""
    if width <= 0 or height <= 0:
        raise ConfigError("frame dimensions must be positive", width=width, height=height)

    xs = np.arange(width) + 0.5
    ys = np.arange(height) + 0.5

    frame = np.full((height, width), float(appearance.sclera_level))
    if appearance.sclera_radius_px is not None:
        static = np.hypot(xs[None, :] - width / 2, ys[:, None] - height / 2)
        cover = _coverage(static, appearance.sclera_radius_px)
        frame = appearance.background_level * (1 - cover) + appearance.sclera_level * cover

    cx = width / 2 + appearance.gain_px_per_deg * gaze[0]
    cy = height / 2 + appearance.gain_px_per_deg * gaze[1]
    distance = np.hypot(xs[None, :] - cx, ys[:, None] - cy)

    iris = _coverage(distance, appearance.iris_radius_px)
    frame = frame * (1 - iris) + appearance.iris_level * iris
    pupil = _coverage(distance, appearance.pupil_radius_px)
    frame = frame * (1 - pupil) + appearance.pupil_level * pupil

    return np.clip(frame, 0.0, 255.0)


def render_sequence(samples, appearance, width, height, fps, threads=1):
    """One frame per 1/fps tick with gaze interpolated to the frame timestamps"""
    if not samples:
        raise DataError("Cannot render an empty gaze sample list")
    if fps <= 0:
        raise ConfigError("fps must be positive", fps=fps)

    t = np.array([s.t_us for s in samples], dtype=np.float64)
    horizontal = np.array([s.angle[0] for s in samples])
    vertical = np.array([s.angle[1] for s in samples])

    duration_us = t[-1] - t[0]
    n_frames = max(1, int(np.floor(duration_us * fps / 1e6 + 1e-9)))
    frame_t = t[0] + np.arange(n_frames) * (1e6 / fps)
    gaze = np.stack([np.interp(frame_t, t, horizontal), np.interp(frame_t, t, vertical)], axis=1)

    frames = thread_map(lambda g: render_frame(g, appearance, width, height), gaze, threads)
    logger.info(f"Rendered {n_frames} frames of {width}x{height} at {fps:g} fps")
    return IntensityFrameSequence(width, height, float(fps), np.stack(frames), int(t[0]))


def write_pgm_frames(sequence, directory):
    """Dump frames as 8-bit binary PGM files"""
    ensure_dir(directory)
    for index, frame in enumerate(sequence.frames):
        image = Image.fromarray(np.round(frame).astype(np.uint8))
        image.save(os.path.join(directory, FRAME_PATTERN % index))
    logger.info(f"Wrote {len(sequence)} PGM frames to {directory}")


def read_pgm_frames(directory, fps):
    """Load a frame_%06d.pgm sequence written by write_pgm_frames"""
    if not os.path.isdir(directory):
        raise DataError(f"Frame directory not found: {directory}", path=str(directory))
    names = sorted(name for name in os.listdir(directory) if re.fullmatch(r"frame_\d{6}\.pgm", name))
    if not names:
        raise DataError(f"No frame_%06d.pgm files in {directory}", path=str(directory))

    frames = []
    for name in names:
        try:
            with Image.open(os.path.join(directory, name)) as image:
                frames.append(np.asarray(image.convert("L"), dtype=np.float64))
        except OSError as e:
            raise DataError(f"Unreadable frame {name}: {e}", path=os.path.join(directory, name))
    shapes = {frame.shape for frame in frames}
    if len(shapes) != 1:
        raise DataError(f"Frames in {directory} have differing sizes", shapes=sorted(shapes))
    height, width = frames[0].shape
    return IntensityFrameSequence(width, height, float(fps), np.stack(frames))
