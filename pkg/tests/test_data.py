import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stedge.autodiff import ParameterStore
from stedge.data import (
    DuplicateObservationError,
    EmptyFileError,
    MalformedLineError,
    Window,
    build_windows,
    future_displacements,
    init_features,
    motion_features,
    parse_trajectory_file,
    scene_from_records,
)
from stedge.synth import linear_records, write_trajectory_file


def _write(tmp_path, text, name="scene.txt"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_parse_minimal_file(tmp_path):
    scene = parse_trajectory_file(_write(tmp_path, "0 1 0.0 0.0\n10 1 1.0 0.0\n"))
    assert scene.ped_ids() == [1]
    assert scene.frame_stride == 10
    assert len(scene.records) == 2


def test_parse_accepts_float_ids_and_comments(tmp_path):
    text = "# header comment\n0.0 2.0 1.5 2.5   # trailing\n\n10.0 2.0 2.5 2.5\n"
    scene = parse_trajectory_file(_write(tmp_path, text))
    assert scene.records[0] == (0, 2, 1.5, 2.5)


def test_parse_malformed_line_reports_number(tmp_path):
    with pytest.raises(MalformedLineError, match=":2"):
        parse_trajectory_file(_write(tmp_path, "0 1 0 0\n0 1 oops\n"))


def test_parse_duplicate_observation(tmp_path):
    with pytest.raises(DuplicateObservationError):
        parse_trajectory_file(_write(tmp_path, "0 1 0 0\n0 1 0 0\n"))


def test_parse_empty_file(tmp_path):
    with pytest.raises(EmptyFileError):
        parse_trajectory_file(_write(tmp_path, "# only a comment\n"))


def test_parse_synthetic_two_ped_fixture(tmp_path):
    records = linear_records([(1, (0.0, 0.0), (1.0, 0.0)),
                              (2, (5.0, 5.0), (-1.0, 0.0))], n_frames=10)
    scene = parse_trajectory_file(write_trajectory_file(tmp_path / "s.txt", records))
    assert scene.ped_ids() == [1, 2]
    assert len(scene.records) == 20


def test_windows_exact_span():
    scene = scene_from_records(linear_records(
        [(1, (0.0, 0.0), (1.0, 0.0)), (2, (0.0, 1.0), (1.0, 0.0))], n_frames=20))
    windows = build_windows(scene)
    assert len(windows) == 1
    assert windows[0].n_peds == 2
    assert windows[0].obs.shape == (2, 8, 2)
    assert windows[0].fut.shape == (2, 12, 2)
    np.testing.assert_array_equal(windows[0].origin, windows[0].obs[:, -1])


def test_windows_sliding_count():
    scene = scene_from_records(linear_records(
        [(1, (0.0, 0.0), (1.0, 0.0))], n_frames=21))
    assert len(build_windows(scene)) == 2  # 21 - 20 + 1


def test_windows_exclude_short_pedestrian():
    records = linear_records([(1, (0.0, 0.0), (1.0, 0.0))], n_frames=20)
    records += linear_records([(2, (9.0, 9.0), (0.0, 1.0))], n_frames=10)
    windows = build_windows(scene_from_records(records))
    assert len(windows) == 1
    assert windows[0].ped_ids == [1]


def test_windows_respect_frame_stride():
    scene = scene_from_records(linear_records(
        [(1, (0.0, 0.0), (0.5, 0.0))], n_frames=20, frame_stride=10))
    windows = build_windows(scene)
    assert len(windows) == 1
    assert windows[0].start_frame == 0


@given(n_frames=st.integers(min_value=1, max_value=40),
       slide=st.integers(min_value=1, max_value=3))
@settings(max_examples=40, deadline=None)
def test_window_count_matches_brute_force(n_frames, slide):
    scene = scene_from_records(linear_records(
        [(1, (0.0, 0.0), (1.0, 0.0))], n_frames=n_frames))
    got = len(build_windows(scene, slide=slide))
    # brute force: test every start frame independently
    frames = scene.frames()
    expected = sum(1 for start in frames[::slide]
                   if all(start + i in frames for i in range(20)))
    assert got == expected


def _square_window():
    # one pedestrian moving (+1, +1), one stationary
    t = np.arange(20, dtype=float)
    mover = np.stack([t, t], axis=-1)
    still = np.full((20, 2), 3.0)
    track = np.stack([mover, still])
    return Window(obs=track[:, :8], fut=track[:, 8:], ped_ids=[1, 2],
                  origin=track[:, 7].copy())


def test_motion_features_values():
    vel, norm, angle = motion_features(_square_window())
    # first step is defined as zero velocity
    np.testing.assert_array_equal(vel[:, 0], 0.0)
    np.testing.assert_allclose(norm[0, 1:], math.sqrt(2.0), atol=1e-12)
    np.testing.assert_allclose(angle[0, 1:], math.pi / 4.0, atol=1e-12)
    # stationary pedestrian: rho = 0 and theta := 0, never NaN
    np.testing.assert_array_equal(norm[1], 0.0)
    np.testing.assert_array_equal(angle[1], 0.0)


def test_motion_features_endpoint_modes():
    w = _square_window()
    vel_off, _, _ = motion_features(w, "off")
    vel_last, _, _ = motion_features(w, "last_velocity")
    np.testing.assert_allclose(vel_last, vel_off - vel_off[:, -1:, :])
    np.testing.assert_array_equal(vel_last[:, -1], 0.0)
    vel_gt, _, _ = motion_features(w, "oracle_gt")
    endpoint = w.fut[:, -1] - w.fut[:, -2]
    np.testing.assert_allclose(vel_gt, vel_off - endpoint[:, None, :])
    with pytest.raises(ValueError):
        motion_features(w, "nope")


def test_velocity_round_trip():
    w = _square_window()
    vel, _, _ = motion_features(w)
    rebuilt = w.obs[:, 0:1, :] + np.cumsum(vel[:, 1:], axis=1)
    np.testing.assert_allclose(rebuilt, w.obs[:, 1:], atol=1e-12)


def _feature_params(e=4, seed=0):
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    store.add("feat.w_v", rng.normal(size=(2, e)))
    store.add("feat.w_norm", rng.normal(size=(1, e)))
    store.add("feat.w_angle", rng.normal(size=(1, e)))
    return store


@pytest.mark.parametrize("mode", ["off", "last_velocity", "oracle_gt"])
def test_features_translation_invariant(mode):
    params = _feature_params()
    w = _square_window()
    shifted = Window(obs=w.obs + np.array([13.0, -7.0]),
                     fut=w.fut + np.array([13.0, -7.0]),
                     ped_ids=w.ped_ids, origin=w.origin + np.array([13.0, -7.0]))
    a = init_features(w, params, mode).data
    b = init_features(shifted, params, mode).data
    np.testing.assert_allclose(a, b, atol=1e-12)
    assert a.shape == (2, 8, 12)  # N x T_obs x 3E


def test_future_displacements_cumsum_back():
    w = _square_window()
    disp = future_displacements(w)
    rebuilt = w.origin[:, None, :] + np.cumsum(disp, axis=1)
    np.testing.assert_allclose(rebuilt, w.fut, atol=1e-12)
