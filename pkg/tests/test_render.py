import numpy as np
import pytest

from modules.exceptions import ConfigError, DataError
from modules.kinematics import GazeSample
from modules.render import (
    EyeAppearance, IntensityFrameSequence, read_pgm_frames, render_frame, render_sequence, write_pgm_frames,
)


def _constant_samples(duration_ms, angle=(0.0, 0.0)):
    return [GazeSample(t * 1000, angle, 0) for t in range(duration_ms + 1)]


def test_centered_gaze_puts_pupil_at_center():
    appearance = EyeAppearance()
    frame = render_frame((0.0, 0.0), appearance, 64, 48)
    assert frame[24, 32] == pytest.approx(appearance.pupil_level)
    assert frame[0, 0] == pytest.approx(appearance.sclera_level)


def test_gaze_shift_moves_disk_by_gain():
    appearance = EyeAppearance(gain_px_per_deg=4.0)
    centered = render_frame((0.0, 0.0), appearance, 96, 48)
    shifted = render_frame((5.0, 0.0), appearance, 96, 48)
    np.testing.assert_array_equal(shifted[:, 20:], centered[:, :-20])


def test_render_is_deterministic_and_bounded():
    appearance = EyeAppearance(sclera_radius_px=20.0)
    a = render_frame((1.3, -2.1), appearance, 64, 48)
    b = render_frame((1.3, -2.1), appearance, 64, 48)
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 0 and a.max() <= 255
    assert a[0, 0] == pytest.approx(appearance.background_level)


@pytest.mark.parametrize("kwargs", [
    {"pupil_radius_px": 9.0},
    {"iris_level": 250.0},
    {"sclera_level": 300.0},
    {"gain_px_per_deg": 0.0},
])
def test_appearance_validation(kwargs):
    with pytest.raises(ConfigError):
        EyeAppearance(**kwargs)


def test_constant_gaze_sequence():
    sequence = render_sequence(_constant_samples(100), EyeAppearance(), 32, 24, 250.0)
    assert len(sequence) == 25
    assert np.all(sequence.frames == sequence.frames[0])


def test_sequence_frame_count_matches_duration():
    sequence = render_sequence(_constant_samples(1000), EyeAppearance(), 16, 12, 250.0)
    assert len(sequence) == 250
    assert sequence.timestamps_us()[1] == pytest.approx(4000.0)


def test_frame_at_sample_time_uses_sample_gaze():
    appearance = EyeAppearance()
    samples = [GazeSample(0, (0.0, 0.0), 0), GazeSample(4000, (3.0, 1.0), 0), GazeSample(8000, (3.0, 1.0), 0)]
    sequence = render_sequence(samples, appearance, 32, 24, 250.0)
    np.testing.assert_array_equal(sequence.frames[1], render_frame((3.0, 1.0), appearance, 32, 24))


def test_threaded_render_matches_serial():
    samples = [GazeSample(t * 1000, (t / 20.0, -t / 40.0), 0) for t in range(101)]
    serial = render_sequence(samples, EyeAppearance(), 32, 24, 250.0, threads=1)
    threaded = render_sequence(samples, EyeAppearance(), 32, 24, 250.0, threads=4)
    np.testing.assert_array_equal(serial.frames, threaded.frames)


def test_empty_samples_rejected():
    with pytest.raises(DataError):
        render_sequence([], EyeAppearance(), 8, 8, 250.0)


def test_pgm_round_trip(tmp_path):
    frames = np.stack([np.full((6, 8), 10.0 * k) for k in range(3)])
    sequence = IntensityFrameSequence(8, 6, 100.0, frames)
    write_pgm_frames(sequence, tmp_path / "frames")
    loaded = read_pgm_frames(str(tmp_path / "frames"), 100.0)
    assert (loaded.width, loaded.height, len(loaded)) == (8, 6, 3)
    np.testing.assert_array_equal(loaded.frames, frames)


def test_read_pgm_missing_directory(tmp_path):
    with pytest.raises(DataError):
        read_pgm_frames(str(tmp_path / "absent"), 100.0)
