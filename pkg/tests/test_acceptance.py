"""End-to-end checks on a random MIMO system and on the aircraft benchmark."""
import os

import numpy as np
import pytest

from ddkf.benchmark.aircraft import benchmark_plant
from ddkf.benchmark.campaign import run_monte_carlo
from ddkf.benchmark.config import BenchmarkConfig
from ddkf.benchmark.simulation import oracle_kf, simulate_seeded
from ddkf.innovations import channel_correlation, estimate_innovations, whiteness
from ddkf.pipeline import build_data_model, innovations_model
from ddkf.predictor import predict
from ddkf.trajectory import HorizonSpec, Trajectory


def _random_mimo(rng, n=4, m=2, p=2):
    A = rng.standard_normal((n, n))
    A *= 0.8 / np.max(np.abs(np.linalg.eigvals(A)))
    return A, rng.standard_normal((n, m)), rng.standard_normal((p, n)), rng.standard_normal((p, m))


def _simulate(A, B, C, D, u, x0):
    x = np.asarray(x0, dtype=float)
    y = np.empty((C.shape[0], u.shape[1]))
    for t in range(u.shape[1]):
        y[:, t] = C @ x + D @ u[:, t]
        x = A @ x + B @ u[:, t]
    return y


class TestNoiseFreeExactness:

    def test_twenty_step_prediction_of_a_mimo_system(self, rng):
        A, B, C, D = _random_mimo(rng)
        spec = HorizonSpec(T_p=6, T_f=20, n_x_bar=4, n_u=2, n_y=2)
        u = rng.standard_normal((2, 500))
        y = _simulate(A, B, C, D, u, rng.standard_normal(4))
        model = build_data_model(Trajectory.from_role(u, "u"), None, Trajectory.from_role(y, "y"), spec)
        assert model.diagnostics["replay_residual"] < 1e-6

        u_new = rng.standard_normal((2, 60))
        y_new = _simulate(A, B, C, D, u_new, rng.standard_normal(4))
        for t in (5, 20, 39):
            state = model.smm.state(u_new[:, t - 5:t + 1].T.reshape(-1), y_new[:, t - 5:t + 1].T.reshape(-1))
            predicted = predict(model.matrices, state, u_new[:, t + 1:t + 21].T.reshape(-1))
            actual = y_new[:, t + 1:t + 21].T.reshape(-1)
            assert np.linalg.norm(predicted - actual) <= 1e-6 * np.linalg.norm(actual)


@pytest.fixture(scope="module")
def default_config():
    return BenchmarkConfig(V=774.0)


@pytest.fixture(scope="module")
def identification(default_config):
    plant = benchmark_plant(default_config.gust, default_config.dt)
    record = simulate_seeded(plant, default_config.N + default_config.L, default_config.run_seed(0),
                             default_config.covariance("Sigma_w"), default_config.covariance("Sigma_v"))
    return plant, record


@pytest.mark.slow
class TestAircraftBenchmark:

    def test_innovations_recovery(self, default_config, identification):
        plant, record = identification
        L, N = default_config.L, default_config.N
        estimate = estimate_innovations(record.u, record.y, L)
        oracle = oracle_kf(plant, default_config.covariance("Sigma_w"), default_config.covariance("Sigma_v"))
        e_true = oracle.innovations(record.u.samples, record.y.samples)[:, L:L + N]
        assert np.all(channel_correlation(estimate.e_hat, e_true) >= 0.8)
        assert whiteness(estimate.e_hat).passed

    def test_riccati_solution_of_the_data_model(self, default_config, identification):
        _, record = identification
        model = innovations_model(record.u, record.y, default_config.L, default_config.horizon)
        solution = model.kalman.solution
        P = solution.P
        assert solution.residual <= 1e-8 * max(1.0, np.linalg.norm(P))
        np.testing.assert_allclose(P, P.T, rtol=1e-10, atol=1e-14)
        assert np.linalg.eigvalsh(P).min() >= -1e-10 * max(1.0, np.trace(P))
        assert solution.spectral_radius < 1.0

    def test_method_ordering(self, default_config):
        threads = max(1, min(8, os.cpu_count() or 1))
        result = run_monte_carlo(default_config, threads=threads, progress=False)
        column = f"prediction_rmse_k{default_config.T_f}"
        ok = result.runs[result.runs["status"] == "ok"]
        pivot = ok.pivot(index="run", columns="method", values=column)
        assert pivot["innov-smm-kal"].median() <= 1.1 * pivot["smm-kal"].median()
        paired = pivot[["innov-smm-kal", "unfiltered-smm"]].dropna()
        assert (paired["innov-smm-kal"] < paired["unfiltered-smm"]).mean() >= 0.8
        paired = pivot[["oracle-kf", "unfiltered-smm"]].dropna()
        assert (paired["oracle-kf"] <= paired["unfiltered-smm"]).mean() >= 0.8
