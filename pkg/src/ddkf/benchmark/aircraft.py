"""Linearised Boeing 747 longitudinal model with Dryden gust filters.

States are forward velocity, downward velocity, pitch rate and pitch angle;
inputs are throttle and elevator; outputs are forward velocity and climb
rate (ft/s).
"""
from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.linalg as la
from scipy import signal

from ddkf.errors import DimensionError, SchemaError

logger = logging.getLogger(__name__)


def _matrix(value):
    return np.atleast_2d(np.asarray(value, dtype=float))


@dataclass(frozen=True, eq=False)
class ContinuousPlant:
    A: np.ndarray = field(repr=False)
    B_u: np.ndarray = field(repr=False)
    B_w: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)
    state_names: tuple = ()
    input_names: tuple = ()
    output_names: tuple = ()

    def __post_init__(self):
        A = _matrix(self.A)
        n = A.shape[0]
        B_u = _matrix(self.B_u)
        B_w = np.asarray(self.B_w, dtype=float).reshape(n, -1) if np.size(self.B_w) else np.zeros((n, 0))
        C = _matrix(self.C)
        D = np.asarray(self.D, dtype=float).reshape(C.shape[0], B_u.shape[1])
        if A.shape != (n, n) or B_u.shape[0] != n or C.shape[1] != n:
            raise DimensionError(f"inconsistent plant: A {A.shape}, B_u {B_u.shape}, C {C.shape}")
        for name, value in (("A", A), ("B_u", B_u), ("B_w", B_w), ("C", C), ("D", D)):
            object.__setattr__(self, name, value)

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n_u(self):
        return self.B_u.shape[1]

    @property
    def n_w(self):
        return self.B_w.shape[1]

    @property
    def n_y(self):
        return self.C.shape[0]


@dataclass(frozen=True, eq=False)
class DiscretePlant(ContinuousPlant):
    dt: float = 1.0

    def step(self, x, u, w=None):
        x_next = self.A @ x + self.B_u @ u
        if w is not None and self.n_w:
            x_next = x_next + self.B_w @ w
        return x_next

    def output(self, x, u):
        return self.C @ x + self.D @ u


@dataclass(frozen=True)
class GustParams:
    """Dryden intensities (ft/s), turbulence lengths (ft) and true airspeed (ft/s)."""
    sigma_u_gust: float = 10.0
    sigma_v_gust: float = 10.0
    L_u: float = 1750.0
    L_v: float = 875.0
    V: float = 774.0

    def __post_init__(self):
        for name in ("sigma_u_gust", "sigma_v_gust", "L_u", "L_v", "V"):
            value = getattr(self, name)
            if not value > 0:
                raise SchemaError(f"gust parameter {name} must be positive, got {value}")

    @property
    def horizontal_gain(self):
        return self.sigma_u_gust * np.sqrt(2.0 * self.L_u / (self.V * np.pi))

    @property
    def vertical_gain(self):
        return self.sigma_v_gust * np.sqrt(2.0 * self.L_v / (self.V * np.pi))


def b747_continuous():
    A = [[-0.003, 0.039, 0.0, -0.322],
         [-0.065, -0.319, 7.74, 0.0],
         [0.02, -0.101, -0.429, 0.0],
         [0.0, 0.0, 1.0, 0.0]]
    B_u = [[0.010, 1.0],
           [-0.18, -0.04],
           [-1.16, 0.598],
           [0.0, 0.0]]
    # gusts enter the forward and downward velocity equations
    B_w = [[-1.0, 0.0],
           [0.0, -1.0],
           [0.0, 0.0],
           [0.0, 0.0]]
    C = [[1.0, 0.0, 0.0, 0.0],
         [0.0, -1.0, 0.0, 7.74]]
    return ContinuousPlant(A, B_u, B_w, C, np.zeros((2, 2)),
                           state_names=("u", "w", "q", "theta"),
                           input_names=("throttle", "elevator"),
                           output_names=("velocity", "climb_rate"))


def dryden_filters(gust):
    """State-space realisations (A, B, C, D) of the horizontal and vertical gust filters."""
    tau_u = gust.L_u / gust.V
    tau_v = gust.L_v / gust.V
    horizontal = signal.tf2ss([gust.horizontal_gain], [tau_u, 1.0])
    vertical_den = np.polymul([2.0 * tau_v, 1.0], [2.0 * tau_v, 1.0])
    vertical = signal.tf2ss(gust.vertical_gain * np.array([2.0 * np.sqrt(3.0) * tau_v, 1.0]), vertical_den)
    return horizontal, vertical


def dryden_augment(plant, gust):
    """Append the gust filter states so white inputs w1, w2 drive the plant's B_w channels."""
    if plant.n_w != 2:
        raise DimensionError(f"Dryden augmentation needs 2 gust channels, plant has {plant.n_w}")
    filters = dryden_filters(gust)
    A_g = la.block_diag(*(np.atleast_2d(f[0]) for f in filters))
    B_g = la.block_diag(*(np.atleast_2d(f[1]) for f in filters))
    C_g = la.block_diag(*(np.atleast_2d(f[2]) for f in filters))
    D_g = la.block_diag(*(np.atleast_2d(f[3]) for f in filters))
    n, n_g = plant.n_x, A_g.shape[0]
    A = np.block([[plant.A, plant.B_w @ C_g], [np.zeros((n_g, n)), A_g]])
    B_u = np.vstack([plant.B_u, np.zeros((n_g, plant.n_u))])
    B_w = np.vstack([plant.B_w @ D_g, B_g])
    C = np.hstack([plant.C, np.zeros((plant.n_y, n_g))])
    names = tuple(plant.state_names) + tuple(f"gust:{i + 1}" for i in range(n_g))
    logger.debug(f"Dryden augmentation: {n} + {n_g} states")
    return ContinuousPlant(A, B_u, B_w, C, plant.D, names, plant.input_names, plant.output_names)


def zoh_discretize(plant, dt):
    """Exact zero-order-hold discretisation of both input groups."""
    if not dt > 0:
        raise SchemaError(f"sample period must be positive, got {dt}")
    n, m = plant.n_x, plant.n_u + plant.n_w
    block = np.zeros((n + m, n + m))
    block[:n, :n] = plant.A
    block[:n, n:] = np.hstack([plant.B_u, plant.B_w])
    phi = la.expm(block * dt)
    A_d = phi[:n, :n]
    B_d = phi[:n, n:]
    return DiscretePlant(A_d, B_d[:, :plant.n_u], B_d[:, plant.n_u:], plant.C, plant.D,
                         plant.state_names, plant.input_names, plant.output_names, dt=dt)


def benchmark_plant(gust, dt):
    return zoh_discretize(dryden_augment(b747_continuous(), gust), dt)
