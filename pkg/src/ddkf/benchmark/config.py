from dataclasses import dataclass
import logging

import numpy as np

from ddkf.config import SCHEMA_VERSION, check_command, require_int, require_positive
from ddkf.errors import SchemaError
from ddkf.benchmark.aircraft import GustParams
from ddkf.trajectory import HorizonSpec

logger = logging.getLogger(__name__)

METHODS = ("innov-smm-kal", "smm-kal", "unfiltered-smm", "oracle-kf")
PAST_HORIZON_GRID = (10, 20, 30, 50, 75, 100, 150, 200, 300)


def _matrix_field(name, value, size):
    matrix = np.asarray(value, dtype=float)
    if matrix.shape != (size, size):
        raise SchemaError(f"{name} must be a {size}x{size} matrix, got shape {matrix.shape}")
    if not np.allclose(matrix, matrix.T) or np.linalg.eigvalsh(matrix).min() < -1e-12:
        raise SchemaError(f"{name} must be symmetric positive semidefinite")
    return tuple(tuple(float(x) for x in row) for row in matrix)


def _vector_field(name, value, size, allow_none=False):
    if value is None and allow_none:
        return None
    vector = np.broadcast_to(np.asarray(value, dtype=float), (size,))
    if not np.all(np.isfinite(vector)):
        raise SchemaError(f"{name} must be finite")
    return tuple(float(x) for x in vector)


@dataclass(frozen=True)
class BenchmarkConfig:
    """Monte Carlo study on the gust-disturbed aircraft model.

    ``V`` (true airspeed, ft/s) has no default: the Dryden filters depend on it.
    The defaults give the standard 100-run campaign.
    With ``select_L`` the innovations horizon is picked by AIC among the grid
    values below ``L`` and ``L`` itself; the estimate always starts at sample L.
    """
    V: float
    N: int = 2500
    L: int = 150
    select_L: bool = True
    T_p: int = 30
    T_f: int = 20
    dt: float = 0.1
    n_x_bar: int = 7
    Sigma_w: tuple = ((1.0, 0.0), (0.0, 1.0))
    Sigma_v: tuple = ((0.0625, 0.0), (0.0, 0.0625))
    mc_runs: int = 100
    master_seed: int = 0
    step_time: float = 3.0
    sim_duration: float = 10.0
    reference_step: tuple = (5.0, 0.0)
    Q_weight: tuple = (1.0, 1.0)
    R_weight: tuple = (0.1, 0.1)
    u_min: tuple = None
    u_max: tuple = None
    methods: tuple = METHODS
    sigma_u_gust: float = 10.0
    sigma_v_gust: float = 10.0
    L_u: float = 1750.0
    L_v: float = 875.0
    dare_tol: float = 1e-10
    dare_max_iter: int = 100000
    command: str = "benchmark"
    schema_version: int = SCHEMA_VERSION
    n_u = 2
    n_y = 2

    def __post_init__(self):
        check_command(self, "benchmark")
        for name in ("N", "L", "T_p", "T_f", "n_x_bar", "mc_runs", "dare_max_iter"):
            require_int(name, getattr(self, name))
        require_int("master_seed", self.master_seed, minimum=0)
        for name in ("V", "dt", "sim_duration", "sigma_u_gust", "sigma_v_gust", "L_u", "L_v", "dare_tol"):
            require_positive(name, getattr(self, name))
        if not isinstance(self.select_L, bool):
            raise SchemaError(f"select_L must be true or false, got {self.select_L!r}")
        if self.T_p < 2:
            raise SchemaError(f"T_p must be >= 2, got {self.T_p}")
        if self.N <= self.L:
            raise SchemaError(f"N={self.N} must exceed L={self.L}")
        if not 0 <= self.step_time < self.sim_duration:
            raise SchemaError(f"step_time {self.step_time} must lie in [0, sim_duration)")
        if self.closed_loop_steps <= self.T_f:
            raise SchemaError(f"closed loop of {self.closed_loop_steps} steps is not longer than T_f={self.T_f}")
        HorizonSpec(self.T_p, self.T_f, self.n_x_bar, self.n_u, self.n_y)

        set_ = object.__setattr__
        set_(self, "Sigma_w", _matrix_field("Sigma_w", self.Sigma_w, 2))
        set_(self, "Sigma_v", _matrix_field("Sigma_v", self.Sigma_v, self.n_y))
        set_(self, "reference_step", _vector_field("reference_step", self.reference_step, self.n_y))
        set_(self, "Q_weight", _vector_field("Q_weight", self.Q_weight, self.n_y))
        set_(self, "R_weight", _vector_field("R_weight", self.R_weight, self.n_u))
        set_(self, "u_min", _vector_field("u_min", self.u_min, self.n_u, allow_none=True))
        set_(self, "u_max", _vector_field("u_max", self.u_max, self.n_u, allow_none=True))
        if min(self.Q_weight) < 0 or min(self.R_weight) <= 0:
            raise SchemaError("Q_weight must be nonnegative and R_weight positive")
        if self.u_min is not None and self.u_max is not None and any(
                lo > hi for lo, hi in zip(self.u_min, self.u_max)):
            raise SchemaError("u_min must not exceed u_max")
        methods = tuple(self.methods)
        unknown = sorted(set(methods) - set(METHODS))
        if unknown or not methods:
            raise SchemaError(f"unknown or empty methods {unknown}; choose from {list(METHODS)}")
        set_(self, "methods", tuple(m for m in METHODS if m in methods))

    @property
    def gust(self):
        return GustParams(self.sigma_u_gust, self.sigma_v_gust, self.L_u, self.L_v, self.V)

    @property
    def horizon(self):
        return HorizonSpec(self.T_p, self.T_f, self.n_x_bar, self.n_u, self.n_y)

    @property
    def past_horizons(self):
        if not self.select_L:
            return (self.L,)
        return tuple(sorted({L for L in PAST_HORIZON_GRID if L < self.L} | {self.L}))

    @property
    def closed_loop_steps(self):
        return int(round(self.sim_duration / self.dt))

    @property
    def step_index(self):
        return int(round(self.step_time / self.dt))

    @property
    def prediction_steps(self):
        """Prediction depths k reported by the indices: 1, T_f/2 and T_f."""
        return tuple(sorted({1, max(1, self.T_f // 2), self.T_f}))

    def covariance(self, name):
        return np.array(getattr(self, name))

    def run_seed(self, run_index):
        return self.master_seed + run_index
