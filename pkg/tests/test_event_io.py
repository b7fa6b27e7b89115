import numpy as np
import pytest

from modules.event_io import HEADER, MAGIC, RECORD_DTYPE, read_csv, read_evb1, read_events, write_csv, write_evb1
from modules.event_sim import OFF, ON
from modules.exceptions import DataError

from tests.conftest import make_stream


@pytest.fixture
def stream():
    return make_stream([(0, 0, 0, ON), (15, 7, 5, OFF), (15, 2, 3, ON), (99_999, 4, 1, OFF)])


def test_record_layout():
    assert RECORD_DTYPE.itemsize == 13
    assert HEADER.size == 16


def test_evb1_round_trip_is_byte_identical(tmp_path, stream):
    first = tmp_path / "a.evb1"
    second = tmp_path / "b.evb1"
    write_evb1(first, stream)
    loaded = read_evb1(first, stream.duration_us)
    np.testing.assert_array_equal(loaded.events, stream.events)
    assert (loaded.width, loaded.height, loaded.duration_us) == (8, 6, 100_000)
    write_evb1(second, loaded)
    assert first.read_bytes() == second.read_bytes()
    assert len(first.read_bytes()) == HEADER.size + 13 * len(stream)


def test_evb1_duration_defaults_to_last_event(tmp_path, stream):
    path = tmp_path / "a.evb1"
    write_evb1(path, stream)
    assert read_evb1(path).duration_us == 100_000


def test_evb1_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.evb1"
    path.write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(DataError):
        read_evb1(path)


def test_evb1_rejects_truncated_payload(tmp_path, stream):
    path = tmp_path / "a.evb1"
    write_evb1(path, stream)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(DataError):
        read_evb1(path)


def test_evb1_missing_file(tmp_path):
    with pytest.raises(DataError):
        read_evb1(tmp_path / "absent.evb1")


def test_csv_round_trip(tmp_path, stream):
    path = tmp_path / "events.csv"
    write_csv(path, stream)
    loaded = read_csv(path, 8, 6, stream.duration_us)
    np.testing.assert_array_equal(loaded.events, stream.events)


def test_csv_accepts_zero_one_polarity(tmp_path):
    path = tmp_path / "events.csv"
    path.write_text("t_us,x,y,p\n5,1,1,0\n3,2,2,1\n")
    loaded = read_csv(path, 4, 4)
    assert loaded.events["t"].tolist() == [3, 5]
    assert loaded.events["p"].tolist() == [ON, OFF]


def test_read_events_dispatch(tmp_path, stream):
    evb1 = tmp_path / "a.evb1"
    write_evb1(evb1, stream)
    assert len(read_events(str(evb1))) == len(stream)
    assert evb1.read_bytes()[:4] == MAGIC

    csv = tmp_path / "a.csv"
    write_csv(csv, stream)
    with pytest.raises(DataError):
        read_events(str(csv))
    assert len(read_events(str(csv), 8, 6)) == len(stream)
