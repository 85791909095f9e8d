import numpy as np
import pytest

from ddkf.errors import DimensionError, InsufficientDataError
from ddkf.trajectory import (HorizonSpec, Trajectory, build_hankel, is_persistently_exciting, numerical_rank,
                             rank_pinv, stack, stacked_samples, window)


def _ramp(channels=2, length=12):
    return Trajectory(np.arange(channels * length, dtype=float).reshape(length, channels).T,
                      [f"u:{i + 1}" for i in range(channels)])


class TestTrajectory:

    def test_rejects_non_finite_samples(self):
        with pytest.raises(ValueError):
            Trajectory([[0.0, np.nan, 1.0]])

    def test_select_role_keeps_matching_channels(self):
        traj = Trajectory(np.ones((3, 5)), ["u:1", "y:1", "u:2"])
        picked = traj.select_role("u")
        assert picked.channel_names == ("u:1", "u:2")
        assert traj.has_role("y") and not traj.has_role("w")
        with pytest.raises(DimensionError):
            traj.select_role("w")

    def test_segment_is_inclusive(self):
        traj = _ramp(1, 10)
        part = traj.segment(2, 5)
        assert part.length == 4
        assert part.samples[0, 0] == 2.0

    def test_stack_requires_equal_lengths(self):
        with pytest.raises(DimensionError):
            stack(_ramp(1, 10), _ramp(1, 9))


class TestHankel:

    def test_columns_are_stacked_windows(self):
        traj = _ramp(2, 12)
        hankel = build_hankel(traj, 0, 11, 4)
        assert hankel.data.shape == (8, 9)
        for j in range(hankel.columns):
            np.testing.assert_array_equal(hankel.data[:, j], stacked_samples(traj, j, 4))
        np.testing.assert_array_equal(hankel.block(1, 3), traj.at(4))

    def test_window_offsets(self):
        traj = _ramp(2, 12)
        hankel = build_hankel(traj, 3, 9, 2)
        assert hankel.columns == 6
        np.testing.assert_array_equal(hankel.data[:, 0], stacked_samples(traj, 3, 2))

    def test_too_short_window(self):
        with pytest.raises(InsufficientDataError):
            build_hankel(_ramp(1, 10), 0, 2, 4)

    def test_window_outside_record(self):
        with pytest.raises(DimensionError):
            build_hankel(_ramp(1, 10), 0, 10, 2)


class TestRank:

    def test_numerical_rank_threshold(self):
        assert numerical_rank([1.0, 1e-12], (2, 2)) == 1
        assert numerical_rank([1.0, 1e-6], (2, 2)) == 2
        assert numerical_rank([], (0, 3)) == 0

    def test_rank_pinv_drops_tiny_directions(self):
        np.testing.assert_allclose(rank_pinv(np.diag([2.0, 1e-14])), np.diag([0.5, 0.0]))

    def test_white_noise_is_persistently_exciting(self, rng):
        traj = Trajectory(rng.standard_normal((1, 100)), ["u:1"])
        report = is_persistently_exciting(traj, 5)
        assert report
        assert report.rank == report.required_rank == 5

    def test_constant_signal_is_not(self):
        report = is_persistently_exciting(Trajectory(np.ones((1, 50)), ["u:1"]), 2)
        assert not report
        assert report.rank == 1


class TestHorizonSpec:

    def test_order_bound_limited_by_past_outputs(self):
        with pytest.raises(DimensionError):
            HorizonSpec(T_p=2, T_f=2, n_x_bar=5, n_u=1, n_y=2)

    def test_window_split(self):
        traj = _ramp(2, 12)
        spec = HorizonSpec(T_p=3, T_f=2, n_x_bar=1, n_u=1, n_y=1)
        past, future = window(traj, 4, spec)
        np.testing.assert_array_equal(past, stacked_samples(traj, 2, 3))
        np.testing.assert_array_equal(future, stacked_samples(traj, 5, 2))
        with pytest.raises(DimensionError):
            window(traj, 1, spec)
