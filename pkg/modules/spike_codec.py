"""Binary spike tensors, rate codes and labeled window slicing."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from modules.event_sim import ON
from modules.exceptions import ConfigError, DataError
from modules.kinematics import CLASS_INDEX
from modules.utils import make_rng

logger = logging.getLogger(__name__)

CLASS_NAMES = {index: name for name, index in CLASS_INDEX.items()}


@dataclass
class SpikeTensor:
    """Binary spikes indexed (polarity, y, x, time bin); polarity 1 is ON"""
    data: np.ndarray
    bin_ms: float
    window_ms: float
    label: int
    t_start_us: int = 0
    source: str = ""

    @property
    def timesteps(self):
        return self.data.shape[3]

    @property
    def geometry(self):
        return self.data.shape[1], self.data.shape[2]

    def nonzero_count(self):
        return int(np.count_nonzero(self.data))

    def as_input(self):
        """(T, 2, H, W) float view for the network input"""
        return np.ascontiguousarray(self.data.transpose(3, 0, 1, 2), dtype=np.float64)


def bin_count(window_ms, bin_ms):
    return int(math.ceil(window_ms / bin_ms - 1e-9))


def bin_events(stream, t_start_us, window_ms, bin_ms=1.0, downscale=1, label=0, source=""):
    """Binary spike tensor for events in [t_start, t_start + window)"""
    if bin_ms <= 0 or window_ms <= 0:
        raise ConfigError("bin_ms and window_ms must be positive", bin_ms=bin_ms, window_ms=window_ms)
    if downscale < 1:
        raise ConfigError("downscale must be a positive integer", downscale=downscale)
    t_end_us = t_start_us + window_ms * 1000
    if t_start_us < 0 or t_end_us > stream.duration_us + 1e-6:
        raise DataError("window exceeds the stream bounds",
                        t_start_us=t_start_us, t_end_us=t_end_us, duration_us=stream.duration_us)

    n_bins = bin_count(window_ms, bin_ms)
    height = -(-stream.height // downscale)
    width = -(-stream.width // downscale)
    data = np.zeros((2, height, width, n_bins), dtype=np.uint8)

    events = stream.window(int(t_start_us), int(math.ceil(t_end_us)))
    if len(events):
        offset = events["t"].astype(np.float64) - t_start_us
        k = np.minimum(np.floor(offset / (bin_ms * 1000)).astype(np.intp), n_bins - 1)
        p = (events["p"] == ON).astype(np.intp)
        y = events["y"].astype(np.intp) // downscale
        x = events["x"].astype(np.intp) // downscale
        data[p, y, x, k] = 1

    return SpikeTensor(data, float(bin_ms), float(window_ms), int(label), int(t_start_us), source)


def firing_rate(spike_train, bin_ms=1.0):
    """Spikes per second of a binary train over T bins"""
    train = np.asarray(spike_train)
    if train.shape[-1] < 1:
        raise ConfigError("a spike train needs at least one bin")
    return train.sum(axis=-1) / (train.shape[-1] * bin_ms / 1000.0)


def window_starts(labels, window_ms, duration_us=None):
    """(start_us, class index) for every full window inside one label segment"""
    if window_ms <= 0:
        raise ConfigError("window_ms must be positive", window_ms=window_ms)
    window_us = window_ms * 1000
    starts = []
    for segment in labels.segments:
        end = segment.end_us if duration_us is None else min(segment.end_us, duration_us)
        count = int(math.floor((end - segment.start_us) / window_us + 1e-9))
        for i in range(max(count, 0)):
            starts.append((int(round(segment.start_us + i * window_us)), segment.class_index))
    return starts


def slice_windows(stream, labels, window_ms, bin_ms=1.0, downscale=1, source=""):
    """Tile non-overlapping windows inside each label segment"""
    tensors = [
        bin_events(stream, start, window_ms, bin_ms, downscale, label, source)
        for start, label in window_starts(labels, window_ms, stream.duration_us)
    ]
    logger.debug(f"Sliced {len(tensors)} windows of {window_ms:g} ms")
    return tensors


def class_counts(labels):
    counts = {name: 0 for name in CLASS_INDEX}
    for label in labels:
        counts[CLASS_NAMES[int(label)]] += 1
    return counts


def balance_indices(labels, seed, tolerance=0.1, groups=None):
    """Subsample the majority class to within tolerance of the minority.

    With groups, windows sharing a group id (same label) are kept or dropped
    together and counted once.
    """
    labels = np.asarray(labels)
    groups = np.arange(len(labels)) if groups is None else np.asarray(groups)
    ids, first = np.unique(groups, return_index=True)
    group_labels = labels[first]
    rng = make_rng(seed)
    by_class = {c: ids[group_labels == c] for c in np.unique(group_labels)}
    if len(by_class) < 2:
        return np.arange(len(labels))
    minority = min(len(members) for members in by_class.values())
    cap = int(math.floor(minority * (1 + tolerance)))
    keep = []
    for c in sorted(by_class):
        members = by_class[c]
        if len(members) > cap:
            members = np.sort(rng.choice(members, size=minority, replace=False))
        keep.append(members)
    return np.flatnonzero(np.isin(groups, np.concatenate(keep)))
