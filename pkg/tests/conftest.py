"""Shared fixtures: small linear systems and records simulated from them."""
import numpy as np
import pytest

from ddkf.smm import build_stacked, reduce
from ddkf.trajectory import HorizonSpec, Trajectory


class InnovationsSystem:
    """x(t+1) = A x + B u + K e,  y = C x + D u + e  (stable predictor A - K C)."""

    def __init__(self, A, B, C, D, K, Lambda):
        self.A, self.B, self.C, self.D, self.K = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, B, C, D, K))
        self.Lambda = np.atleast_2d(np.asarray(Lambda, dtype=float))

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n_u(self):
        return self.B.shape[1]

    @property
    def n_y(self):
        return self.C.shape[0]

    def simulate(self, u, e, x0=None):
        x = np.zeros(self.n_x) if x0 is None else np.asarray(x0, dtype=float)
        y = np.empty((self.n_y, u.shape[1]))
        for t in range(u.shape[1]):
            y[:, t] = self.C @ x + self.D @ u[:, t] + e[:, t]
            x = self.A @ x + self.B @ u[:, t] + self.K @ e[:, t]
        return y

    def record(self, rng, length, noise=True, x0=None):
        """(u, y, e) trajectories driven by unit white input."""
        u = rng.standard_normal((self.n_u, length))
        if noise:
            e = np.linalg.cholesky(self.Lambda) @ rng.standard_normal((self.n_y, length))
        else:
            e = np.zeros((self.n_y, length))
        y = self.simulate(u, e, x0)
        return (Trajectory.from_role(u, "u", 0.1), Trajectory.from_role(y, "y", 0.1),
                Trajectory.from_role(e, "e", 0.1))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def system():
    # eig(A) = 0.55 +- 0.13j, eig(A - K C) has modulus 0.37
    return InnovationsSystem(
        A=[[0.6, 0.2], [-0.1, 0.5]],
        B=[[1.0], [0.5]],
        C=[[1.0, 0.0]],
        D=[[0.0]],
        K=[[0.4], [0.2]],
        Lambda=[[0.25]],
    )


@pytest.fixture
def horizon():
    return HorizonSpec(T_p=6, T_f=4, n_x_bar=2, n_u=1, n_y=1)


@pytest.fixture
def noise_free_record(system, rng):
    u, y, _ = system.record(rng, 300, noise=False, x0=[1.0, -1.0])
    return u, y


@pytest.fixture
def noise_free_smm(noise_free_record, horizon):
    u, y = noise_free_record
    return reduce(build_stacked(u, None, y, horizon), horizon.n_x_bar)
