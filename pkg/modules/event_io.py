"""EVB1 binary and CSV event files.

EVB1 layout, little-endian: magic "EVB1", width u16, height u16, count u64,
then 13 bytes per event: t_us u64, x u16, y u16, polarity u8 (1 = ON, 0 = OFF).
The header carries no duration; a reader takes it from the last timestamp
unless the caller supplies one.
"""

import logging
import os
import struct

import numpy as np
import pandas as pd

from modules.event_sim import EVENT_DTYPE, ON, OFF, EventStream, sort_events
from modules.exceptions import DataError

logger = logging.getLogger(__name__)

MAGIC = b"EVB1"
HEADER = struct.Struct("<4sHHQ")
RECORD_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])
CSV_COLUMNS = ["t_us", "x", "y", "p"]


def _to_records(events):
    records = np.zeros(len(events), dtype=RECORD_DTYPE)
    records["t"] = events["t"]
    records["x"] = events["x"]
    records["y"] = events["y"]
    records["p"] = (events["p"] == ON).astype(np.uint8)
    return records


def _from_records(records):
    events = np.zeros(len(records), dtype=EVENT_DTYPE)
    events["t"] = records["t"]
    events["x"] = records["x"]
    events["y"] = records["y"]
    events["p"] = np.where(records["p"] == 1, ON, OFF)
    return events


def _duration(events, duration_us):
    if duration_us is not None:
        return int(duration_us)
    return int(events["t"][-1]) + 1 if len(events) else 0


def write_evb1(path, stream):
    """Write a stream as an EVB1 file"""
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, stream.width, stream.height, len(stream)))
        f.write(_to_records(stream.events).tobytes())
    logger.debug(f"Wrote {len(stream)} events to {path}")


def read_evb1(path, duration_us=None):
    """Read an EVB1 file into an EventStream"""
    try:
        with open(path, "rb") as f:
            header = f.read(HEADER.size)
            if len(header) < HEADER.size:
                raise DataError(f"Truncated EVB1 header in {path}", path=str(path))
            magic, width, height, count = HEADER.unpack(header)
            if magic != MAGIC:
                raise DataError(f"Not an EVB1 file: {path}", path=str(path))
            payload = f.read()
    except FileNotFoundError:
        raise DataError(f"Event file not found: {path}", path=str(path))

    expected = count * RECORD_DTYPE.itemsize
    if len(payload) != expected:
        raise DataError(f"EVB1 payload size mismatch in {path}",
                        path=str(path), expected=expected, got=len(payload))
    events = _from_records(np.frombuffer(payload, dtype=RECORD_DTYPE))
    return EventStream(events, width, height, _duration(events, duration_us)).validate()


def write_csv(path, stream):
    """Write a stream as t_us,x,y,p CSV with p in {1, -1}"""
    frame = pd.DataFrame({
        "t_us": stream.events["t"],
        "x": stream.events["x"],
        "y": stream.events["y"],
        "p": stream.events["p"].astype(np.int64),
    }, columns=CSV_COLUMNS)
    frame.to_csv(path, index=False)


def read_csv(path, width, height, duration_us=None):
    """Read a t_us,x,y,p CSV; polarity may be 1/-1 or 1/0"""
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise DataError(f"Event file not found: {path}", path=str(path))
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"Malformed event CSV {path}: {e}", path=str(path))
    if list(frame.columns) != CSV_COLUMNS:
        raise DataError(f"Event CSV {path} must have columns {CSV_COLUMNS}", columns=list(frame.columns))

    events = np.zeros(len(frame), dtype=EVENT_DTYPE)
    events["t"] = frame["t_us"].to_numpy(dtype=np.uint64)
    events["x"] = frame["x"].to_numpy(dtype=np.uint16)
    events["y"] = frame["y"].to_numpy(dtype=np.uint16)
    events["p"] = np.where(frame["p"].to_numpy() > 0, ON, OFF)
    events = sort_events(events)
    return EventStream(events, int(width), int(height), _duration(events, duration_us)).validate()


def read_events(path, width=None, height=None, duration_us=None):
    """Read EVB1 or CSV, dispatching on the file's leading bytes"""
    if not os.path.exists(path):
        raise DataError(f"Event file not found: {path}", path=str(path))
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
    if magic == MAGIC:
        return read_evb1(path, duration_us)
    if width is None or height is None:
        raise DataError(f"CSV event file {path} needs explicit sensor geometry", path=str(path))
    return read_csv(path, width, height, duration_us)
