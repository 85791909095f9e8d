import numpy as np
import pytest

from ddkf.errors import InsufficientDataError
from ddkf.innovations import whiteness
from ddkf.pipeline import build_data_model, innovations_model
from ddkf.trajectory import HorizonSpec, Trajectory


@pytest.fixture
def spec():
    return HorizonSpec(T_p=6, T_f=4, n_x_bar=2, n_u=1, n_y=1)


class TestInnovationsModel:

    def test_filter_is_close_to_optimal(self, system, rng, spec):
        u, y, e = system.record(rng, 2000)
        model = innovations_model(u, y, 15, spec)
        assert model.estimate.L == 15
        assert model.kalman is not None
        assert model.diagnostics["dare"]["spectral_radius"] < 1.0

        segment = (15, 1999)
        _, residuals = model.kalman.run(u.segment(*segment).samples, y.segment(*segment).samples)
        e_true = e.segment(*segment).samples
        ratio = np.mean(residuals[:, 50:] ** 2) / np.mean(e_true[:, 50:] ** 2)
        assert ratio < 1.25

    def test_too_short_for_the_horizon(self, system, rng, spec):
        u, y, _ = system.record(rng, 30)
        with pytest.raises(InsufficientDataError):
            innovations_model(u, y, 15, spec)


class TestBuildDataModel:

    def test_measured_innovations_as_auxiliary_channel(self, system, rng, spec):
        u, y, e = system.record(rng, 1000)
        model = build_data_model(u, e, y, spec, aux_cov=system.Lambda)
        assert model.smm.n_aux == 1
        assert model.ddss.state_dim == 6 * 2 + 2
        assert model.matrices.E_uf.shape == (4, 4)
        assert model.diagnostics["replay_residual"] < 1e-6

    def test_without_auxiliary_channels_there_is_no_filter(self, noise_free_record, spec):
        u, y = noise_free_record
        model = build_data_model(u, None, y, spec)
        assert model.kalman is None and model.estimate is None
        assert model.horizon == spec

    def test_filter_residuals_are_white_and_beat_the_open_loop_predictor(self, system, rng, spec):
        u, y, e = system.record(rng, 1500)
        model = build_data_model(u, e, y, spec, aux_cov=system.Lambda)
        _, residuals = model.kalman.run(u.samples, y.samples)
        assert whiteness(residuals[:, 50:]).passed

        ddss = model.ddss
        x = np.zeros(ddss.state_dim)
        open_loop = np.empty_like(residuals)
        for t in range(u.length):
            x = ddss.A_p @ x + ddss.B_up @ u.samples[:, t]
            open_loop[:, t] = y.samples[:, t] - ddss.C_p @ x
        assert np.var(residuals[:, 50:]) < np.var(open_loop[:, 50:])

    def test_zero_auxiliary_record_falls_back_to_the_deterministic_model(self, noise_free_record):
        u, y = noise_free_record
        silent = Trajectory.from_role(np.zeros((1, u.length)), "e", u.dt)
        spec = HorizonSpec(T_p=6, T_f=4, n_x_bar=3, n_u=1, n_y=1)
        model = build_data_model(u, silent, y, spec, aux_cov=np.eye(1))
        assert model.kalman is None
        assert model.smm.n_aux == 0
        assert model.smm.n_x_bar == 2
        assert model.diagnostics["replay_residual"] < 1e-6

    def test_zero_auxiliary_covariance_falls_back_to_the_deterministic_model(self, system, rng, spec):
        u, y, e = system.record(rng, 500)
        model = build_data_model(u, e, y, spec, aux_cov=np.zeros((1, 1)))
        assert model.kalman is None and model.smm.n_aux == 0


class TestPastHorizonSelection:

    def test_selected_horizon_keeps_the_estimate_aligned(self, system, rng, spec):
        u, y, e = system.record(rng, 1500)
        model = innovations_model(u, y, 30, spec, L_candidates=[2, 5, 10, 30, 60])
        assert model.diagnostics["selected_L"] in (2, 5, 10, 30)
        assert model.estimate.N == 1500 - 30
        correlation = np.corrcoef(model.estimate.e_hat[0], e.samples[0, 30:])[0, 1]
        assert correlation > 0.9

    def test_noise_free_record_gives_the_deterministic_model(self, system, rng, spec):
        u, y, _ = system.record(rng, 400, noise=False, x0=[1.0, 0.0])
        model = innovations_model(u, y, 10, spec)
        assert model.kalman is None
        assert model.estimate is not None
        assert model.smm.n_aux == 0
