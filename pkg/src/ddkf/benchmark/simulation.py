"""Seeded stochastic simulation of a discrete plant and the model-based
(oracle) Kalman predictor used as ground truth."""
from dataclasses import dataclass, field
import logging

import numpy as np

from ddkf.errors import DimensionError
from ddkf.kalman import solve_dare_correlated
from ddkf.predictor import model_prediction_matrices
from ddkf.trajectory import Trajectory

logger = logging.getLogger(__name__)

STREAMS = ("input", "process", "measurement")


def noise_generators(seed):
    """Independent generators for the input, process-noise and measurement-noise streams."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return dict(zip(STREAMS, (np.random.default_rng(child) for child in children)))


def gaussian(rng, cov, length):
    """``length`` samples of N(0, cov) as a (channels, length) array."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if not np.any(cov):
        return np.zeros((cov.shape[0], length))
    return rng.multivariate_normal(np.zeros(cov.shape[0]), cov, size=length, method='eigh').T


@dataclass(frozen=True, eq=False)
class SimulationResult:
    u: Trajectory
    w: Trajectory
    v: Trajectory
    y: Trajectory
    y_clean: Trajectory
    x: np.ndarray = field(repr=False)

    @property
    def length(self):
        return self.y.length


def simulate(plant, u, w, v, x0=None):
    """Forward simulation x(k+1) = A x + B_u u + B_w w, y = C x + D u + v from given signals.

    Args:
        plant (DiscretePlant): Discrete plant.
        u, w, v (np.ndarray): (channels, length) input, process noise and measurement noise.
        x0 (np.ndarray, optional): Initial state, zero by default.

    Returns:
        SimulationResult
    """
    u, w, v = (np.atleast_2d(np.asarray(s, dtype=float)) for s in (u, w, v))
    length = u.shape[1]
    if u.shape[0] != plant.n_u or w.shape != (plant.n_w, length) or v.shape != (plant.n_y, length):
        raise DimensionError(f"signal shapes u {u.shape}, w {w.shape}, v {v.shape} do not fit the plant")
    x = np.zeros(plant.n_x) if x0 is None else np.asarray(x0, dtype=float)
    states = np.empty((plant.n_x, length))
    for k in range(length):
        states[:, k] = x
        x = plant.A @ x + plant.B_u @ u[:, k] + plant.B_w @ w[:, k]
    y_clean = plant.C @ states + plant.D @ u
    dt = plant.dt
    return SimulationResult(
        u=Trajectory.from_role(u, "u", dt),
        w=Trajectory.from_role(w, "w", dt) if plant.n_w else None,
        v=Trajectory.from_role(v, "v", dt),
        y=Trajectory.from_role(y_clean + v, "y", dt),
        y_clean=Trajectory.from_role(y_clean, "y", dt),
        x=states,
    )


def simulate_seeded(plant, length, seed, Sigma_w, Sigma_v, input_cov=None):
    """Open-loop record driven by a zero-mean Gaussian input (unit variance by default)."""
    rngs = noise_generators(seed)
    input_cov = np.eye(plant.n_u) if input_cov is None else input_cov
    u = gaussian(rngs["input"], input_cov, length)
    w = gaussian(rngs["process"], Sigma_w, length)
    v = gaussian(rngs["measurement"], Sigma_v, length)
    return simulate(plant, u, w, v)


class OracleKalman:
    """Stationary predictor x(k+1|k) = A x + B_u u + K (y - C x - D u) of the true plant."""

    def __init__(self, plant, Sigma_w, Sigma_v, tol=1e-10, max_iter=100000):
        self.plant = plant
        Sigma_v = np.asarray(Sigma_v, dtype=float)
        Lambda1 = plant.B_w @ np.asarray(Sigma_w, dtype=float) @ plant.B_w.T
        if not np.any(Lambda1) and not np.any(Sigma_v):
            # noise-free plant: the open-loop simulator is the optimal predictor
            self.solution = None
            self.gain = np.zeros((plant.n_x, plant.n_y))
            self.innovation_cov = np.zeros((plant.n_y, plant.n_y))
        else:
            Lambda12 = np.zeros((plant.n_x, plant.n_y))
            self.solution = solve_dare_correlated(plant.A, plant.C, Lambda1, Sigma_v, Lambda12,
                                                  tol=tol, max_iter=max_iter)
            self.gain = self.solution.K
            self.innovation_cov = plant.C @ self.solution.P @ plant.C.T + Sigma_v
        self.x_hat = np.zeros(plant.n_x)
        self.last_residual = None

    @property
    def state(self):
        return self.x_hat.copy()

    def reset(self):
        self.x_hat = np.zeros(self.plant.n_x)
        self.last_residual = None

    def observe(self, u_t, y_t):
        """Absorb (u(t), y(t)) and return the predicted state x(t+1|t)."""
        u_t = np.asarray(u_t, dtype=float).reshape(-1)
        y_t = np.asarray(y_t, dtype=float).reshape(-1)
        residual = y_t - self.plant.C @ self.x_hat - self.plant.D @ u_t
        self.x_hat = self.plant.A @ self.x_hat + self.plant.B_u @ u_t + self.gain @ residual
        self.last_residual = residual
        return self.state

    def innovations(self, u, y):
        """Innovations sequence of a whole record, filter started from zero."""
        u, y = np.atleast_2d(u), np.atleast_2d(y)
        self.reset()
        e = np.empty_like(y, dtype=float)
        for k in range(y.shape[1]):
            self.observe(u[:, k], y[:, k])
            e[:, k] = self.last_residual
        self.reset()
        return e

    def prediction_matrices(self, T_f):
        return model_prediction_matrices(self.plant.A, self.plant.B_u, self.plant.C, self.plant.D, T_f)


def oracle_kf(plant, Sigma_w, Sigma_v, tol=1e-10, max_iter=100000):
    return OracleKalman(plant, Sigma_w, Sigma_v, tol, max_iter)
