import numpy as np
import pytest

from modules.event_sim import EVENT_DTYPE, EventStream, sort_events
from modules.kinematics import LabelSegment, LabelTrack
from modules.spike_codec import SpikeTensor


def make_stream(rows, width=8, height=6, duration_us=100_000):
    """EventStream from (t, x, y, p) tuples"""
    events = np.zeros(len(rows), dtype=EVENT_DTYPE)
    for i, (t, x, y, p) in enumerate(rows):
        events[i] = (t, x, y, p)
    return EventStream(sort_events(events), width, height, duration_us)


def make_tensor(label, height=4, width=4, steps=10, fill=None, seed=0):
    """Random binary SpikeTensor, or a constant one when fill is given"""
    if fill is None:
        data = (np.random.default_rng(seed).random((2, height, width, steps)) < 0.2).astype(np.uint8)
    else:
        data = np.full((2, height, width, steps), fill, dtype=np.uint8)
    return SpikeTensor(data, 1.0, float(steps), label)


def make_separable_set(count, height=4, width=4, steps=10, seed=0):
    """Fixation windows fire ON spikes in the top half, saccades in the bottom half"""
    rng = np.random.default_rng(seed)
    tensors = []
    for i in range(count):
        label = i % 2
        data = np.zeros((2, height, width, steps), dtype=np.uint8)
        rows = slice(0, height // 2) if label == 0 else slice(height // 2, height)
        data[1, rows] = (rng.random((height // 2, width, steps)) < 0.6).astype(np.uint8)
        tensors.append(SpikeTensor(data, 1.0, float(steps), label))
    return tensors


@pytest.fixture
def label_track():
    return LabelTrack([
        LabelSegment(0, 600_000, "fixation"),
        LabelSegment(600_000, 630_000, "saccade"),
        LabelSegment(630_000, 900_000, "fixation"),
        LabelSegment(900_000, 1_000_000, "saccade"),
    ])
