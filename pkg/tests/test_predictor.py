import numpy as np
import pytest

from ddkf.errors import DimensionError, NumericalError, SchemaError
from ddkf.pipeline import build_data_model
from ddkf.predictor import (TrackingProblem, build_prediction_matrices, model_prediction_matrices, predict,
                            solve_tracking)
from ddkf.trajectory import HorizonSpec, stack, stacked_samples


def _simulate_from(A, B, C, D, x, u_f, T_f):
    n_u = B.shape[1]
    outputs = []
    for j in range(T_f):
        u = u_f[j * n_u:(j + 1) * n_u]
        outputs.append(C @ x + D @ u)
        x = A @ x + B @ u
    return np.concatenate(outputs)


@pytest.fixture
def plant(rng):
    A = rng.standard_normal((3, 3))
    A *= 0.8 / np.max(np.abs(np.linalg.eigvals(A)))
    return A, rng.standard_normal((3, 2)), rng.standard_normal((2, 3)), rng.standard_normal((2, 2))


class TestModelPredictionMatrices:

    def test_matches_simulation(self, plant, rng):
        A, B, C, D = plant
        matrices = model_prediction_matrices(A, B, C, D, 5)
        assert matrices.E_xu.shape == (10, 0)
        assert matrices.state_dim == 3
        x = rng.standard_normal(3)
        u_f = rng.standard_normal(10)
        np.testing.assert_allclose(predict(matrices, x, u_f), _simulate_from(A, B, C, D, x, u_f, 5), atol=1e-12)

    def test_future_input_map_is_block_lower_triangular(self, plant):
        matrices = model_prediction_matrices(*plant, 4)
        np.testing.assert_array_equal(matrices.E_uf[0:2, 2:], 0.0)
        np.testing.assert_allclose(matrices.E_uf[0:2, 0:2], plant[3])

    def test_dimension_mismatch(self, plant):
        matrices = model_prediction_matrices(*plant, 4)
        with pytest.raises(DimensionError):
            predict(matrices, np.zeros(2), np.zeros(8))


class TestDataPredictionMatrices:

    def test_noise_free_prediction_is_exact(self, system, rng, noise_free_smm):
        matrices = build_prediction_matrices(noise_free_smm)
        assert matrices.E_uf.shape == (4, 4)
        assert matrices.state_dim == 8
        # a fresh trajectory of the same system, not part of the training data
        u, y, _ = system.record(rng, 40, noise=False, x0=[-0.5, 2.0])
        for t in (5, 20, 35):
            state = noise_free_smm.state(u.samples[0, t - 5:t + 1], y.samples[0, t - 5:t + 1])
            predicted = predict(matrices, state, u.samples[0, t + 1:t + 5])
            np.testing.assert_allclose(predicted, y.samples[0, t + 1:t + 5], atol=1e-7)


    def test_future_input_map_is_the_impulse_response(self, system, noise_free_smm):
        expected = model_prediction_matrices(system.A, system.B, system.C, system.D, 4).E_uf
        np.testing.assert_allclose(build_prediction_matrices(noise_free_smm).E_uf, expected, atol=1e-8)

    def test_predictions_superpose(self, noise_free_smm, rng):
        matrices = build_prediction_matrices(noise_free_smm)
        x1, x2 = rng.standard_normal((2, matrices.state_dim))
        u1, u2 = rng.standard_normal((2, 4))
        combined = predict(matrices, 2.0 * x1 - 0.5 * x2, 2.0 * u1 - 0.5 * u2)
        np.testing.assert_allclose(combined, 2.0 * predict(matrices, x1, u1) - 0.5 * predict(matrices, x2, u2),
                                   atol=1e-10)

    def test_one_step_prediction_matches_the_filter(self, system, rng):
        u, y, e = system.record(rng, 1000)
        model = build_data_model(u, e, y, HorizonSpec(T_p=6, T_f=1, n_x_bar=2, n_u=1, n_y=1), aux_cov=system.Lambda)
        ubar = stack(u, e)
        scale = np.abs(y.samples).max()
        for t in (100, 500, 900):
            state = model.smm.state(stacked_samples(ubar, t - 5, 6), stacked_samples(y, t - 5, 6))
            model.kalman.reset(state)
            expected = model.kalman.predicted_output(u.samples[:, t + 1])
            np.testing.assert_allclose(predict(model.matrices, state, u.samples[:, t + 1]), expected,
                                       atol=1e-7 * scale)
            np.testing.assert_allclose(expected, y.samples[:, t + 1] - e.samples[:, t + 1], atol=1e-6 * scale)


@pytest.fixture
def tracking_case(plant):
    matrices = model_prediction_matrices(*plant, 6)
    reference = np.tile([1.0, -0.5], 6)
    return matrices, np.array([0.2, -0.1, 0.3]), reference


class TestTracking:

    def test_unconstrained_matches_least_squares(self, tracking_case):
        matrices, x, reference = tracking_case
        problem = TrackingProblem.diagonal(reference, 2, 2, q=1.0, r=0.1)
        solution = solve_tracking(matrices, x, problem)
        target = reference - predict(matrices, x, np.zeros(12))
        stacked = np.vstack([matrices.E_uf, np.sqrt(0.1) * np.eye(12)])
        expected, _, _, _ = np.linalg.lstsq(stacked, np.concatenate([target, np.zeros(12)]), rcond=None)
        np.testing.assert_allclose(solution.u_f, expected, rtol=1e-8, atol=1e-10)
        assert solution.kkt_residual < 1e-8
        assert solution.active_bounds == 0
        np.testing.assert_array_equal(solution.first_input(2), solution.u_f[:2])

    def test_bounds_are_respected(self, tracking_case):
        matrices, x, reference = tracking_case
        free = solve_tracking(matrices, x, TrackingProblem.diagonal(reference, 2, 2))
        bounded = solve_tracking(matrices, x, TrackingProblem.diagonal(reference, 2, 2, u_min=-0.05, u_max=0.05))
        assert np.all(bounded.u_f >= -0.05 - 1e-12) and np.all(bounded.u_f <= 0.05 + 1e-12)
        assert bounded.kkt_residual < 1e-6
        assert bounded.cost >= free.cost - 1e-9
        assert bounded.active_bounds > 0

    def test_heavy_input_weight_suppresses_the_input(self, tracking_case):
        matrices, x, reference = tracking_case
        r = 1e8
        solution = solve_tracking(matrices, x, TrackingProblem.diagonal(reference, 2, 2, q=1.0, r=r))
        target = reference - predict(matrices, x, np.zeros(12))
        assert np.linalg.norm(solution.u_f) <= np.linalg.norm(matrices.E_uf.T @ target) / r * (1.0 + 1e-9)

    def test_receding_horizon_cost_shrinks(self, plant):
        A, B, _, _ = plant
        matrices = model_prediction_matrices(*plant, 8)
        problem = TrackingProblem.diagonal(np.zeros(16), 2, 2, q=1.0, r=0.1)
        x = np.array([5.0, -5.0, 5.0])
        for _ in range(10):
            solution = solve_tracking(matrices, x, problem)
            x_next = A @ x + B @ solution.first_input(2)
            # the previous plan shifted by one step, padded with zero input
            shifted = np.concatenate([solution.u_f[2:], np.zeros(2)])
            y_shifted = predict(matrices, x_next, shifted)
            shifted_cost = y_shifted @ y_shifted + 0.1 * shifted @ shifted
            stage = np.sum(solution.y_f[:2] ** 2) + 0.1 * np.sum(solution.u_f[:2] ** 2)
            following = solve_tracking(matrices, x_next, problem)
            assert following.cost <= shifted_cost + 1e-9 * max(1.0, shifted_cost)
            assert shifted_cost <= solution.cost - stage + y_shifted[-2:] @ y_shifted[-2:] + 1e-9 * solution.cost
            x = x_next

    def test_input_weight_must_be_positive_definite(self):
        with pytest.raises(NumericalError):
            TrackingProblem(np.zeros(4), np.eye(2), np.zeros((2, 2)))

    def test_bounds_out_of_order(self):
        with pytest.raises(SchemaError):
            TrackingProblem(np.zeros(4), np.eye(2), np.eye(2), u_min=[1.0, 0.0], u_max=[0.0, 1.0])

    def test_reference_length(self, tracking_case):
        matrices, x, _ = tracking_case
        with pytest.raises(DimensionError):
            solve_tracking(matrices, x, TrackingProblem.diagonal(np.zeros(5), 2, 2))
