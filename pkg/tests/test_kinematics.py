import numpy as np
import pytest

from modules.exceptions import ConfigError, DataError
from modules.kinematics import (
    FIXATION, SACCADE, LabelTrack, RotationKey, RotationTrack, binocular_tracks, generate_labeled_schedule,
    generate_saccades, keyframe_gaze, mirror_track, sample_trajectory,
)


def test_generate_saccades_key_frames():
    track = generate_saccades(0, 10, 5, 15, seed=7)
    assert track.frames().tolist() == [0, 5, 10]


def test_generate_saccades_single_frame_range():
    track = generate_saccades(0, 0, 1, 15, seed=1)
    assert len(track.keys) == 1
    assert track.keys[0].frame_index == 0


def test_generate_saccades_bounds_and_determinism():
    track = generate_saccades(0, 100, 10, 25, seed=3)
    rotations = track.rotations()
    assert rotations.shape == (11, 3)
    assert np.all(np.abs(rotations) <= 25)
    assert generate_saccades(0, 100, 10, 25, seed=3) == track


@pytest.mark.parametrize("args", [(10, 0, 1, 15), (0, 10, 0, 15), (0, 10, 1, 0)])
def test_generate_saccades_rejects_bad_parameters(args):
    with pytest.raises(ConfigError):
        generate_saccades(*args, seed=0)


def test_mirror_negates_torsion_only():
    track = RotationTrack((RotationKey(0, (10.0, 5.0, -3.0)), RotationKey(1, (0.0, 0.0, 0.0))), 0, 1, 1)
    mirrored = mirror_track(track)
    assert mirrored.keys[0].rotation == (10.0, -5.0, -3.0)
    assert mirrored.keys[1].rotation == (0.0, 0.0, 0.0)
    assert mirror_track(mirrored) == track


def test_sample_trajectory_midpoint():
    track = RotationTrack((RotationKey(0, (0.0, 0.0, 0.0)), RotationKey(10, (10.0, 0.0, 10.0))),
                          0, 10, 10, fps=100.0)
    samples = sample_trajectory(track, 1000.0)
    assert len(samples) == 101
    assert samples[50].t_us == 50_000
    assert samples[50].angle == pytest.approx((5.0, 5.0))
    assert samples[0].angle == (0.0, 0.0)
    assert samples[-1].angle == pytest.approx((10.0, 10.0))


def test_sample_trajectory_single_key_is_constant():
    track = RotationTrack((RotationKey(0, (2.0, 1.0, -4.0)),), 0, 0, 1)
    samples = sample_trajectory(track, 500.0)
    assert all(s.angle == (-4.0, 2.0) for s in samples)


def test_keyframe_gaze_empty_track():
    with pytest.raises(DataError):
        keyframe_gaze(RotationTrack((), 0, 0, 1))


def test_labeled_schedule_tiles_duration():
    samples, labels = generate_labeled_schedule(1000, 10, seed=3)
    segments = labels.segments
    assert segments[0].start_us == 0
    assert segments[-1].end_us == 1_000_000
    for before, after in zip(segments, segments[1:]):
        assert before.end_us == after.start_us
        assert before.label != after.label
    assert samples[0].t_us == 0
    assert samples[-1].t_us == 1_000_000


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_labeled_schedule_fixation_lengths_and_constancy(seed):
    samples, labels = generate_labeled_schedule(5000, 10, seed=seed)
    for segment in labels.segments[:-1]:
        if segment.label == FIXATION:
            assert 50_000 <= segment.duration_us <= 600_000
        else:
            assert 20_000 <= segment.duration_us <= 300_000
    for index, segment in enumerate(labels.segments):
        if segment.label != FIXATION:
            continue
        angles = np.array([s.angle for s in samples if s.segment_id == index])
        if len(angles):
            assert np.all(angles == angles[0])


def test_labeled_schedule_short_duration_is_one_fixation():
    _, labels = generate_labeled_schedule(30, 10, seed=0)
    assert [s.label for s in labels.segments] == [FIXATION]


def test_labeled_schedule_saccades_move():
    samples, labels = generate_labeled_schedule(3000, 10, seed=5)
    for index, segment in enumerate(labels.segments):
        if segment.label == SACCADE:
            angles = [s.angle for s in samples if s.segment_id == index]
            if len(angles) > 1:
                assert angles[0] != angles[-1]


def test_label_track_round_trip(tmp_path):
    _, labels = generate_labeled_schedule(2000, 10, seed=9)
    path = tmp_path / "labels.json"
    labels.save(path)
    assert LabelTrack.load(path) == labels


def test_label_track_rejects_unknown_class():
    with pytest.raises(DataError):
        LabelTrack.from_dict({"segments": [{"start_us": 0, "end_us": 10, "class": "blink"}]})


def test_binocular_tracks_share_rendered_gaze():
    left, right = binocular_tracks(0, 50, 5, 15, seed=4)
    assert right == mirror_track(left)
    _, left_gaze = keyframe_gaze(left)
    _, right_gaze = keyframe_gaze(right)
    np.testing.assert_array_equal(left_gaze, right_gaze)
