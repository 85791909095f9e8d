"""Sampled signal records and the Hankel / window machinery built on them.

Samples are stored one column per time step with the channels of a time step
contiguous, so stacking T consecutive columns gives the block vectors used by
every Hankel construction in the package. Time indices are 0-based sample
positions.
"""
from dataclasses import dataclass, field, replace
import logging

import numpy as np
import scipy.linalg as la

from ddkf.errors import DimensionError, InsufficientDataError

logger = logging.getLogger(__name__)

# Singular values count toward rank iff sigma > max(rows, cols) * sigma_max * RANK_RTOL
RANK_RTOL = 1e-10

ROLES = ("u", "y", "w", "e", "v", "x")


def role_names(role, count):
    """Channel labels ``role:1 ... role:count``."""
    return [f"{role}:{i + 1}" for i in range(count)]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A finite multichannel record, ``samples`` has shape (channels, length)."""
    samples: np.ndarray
    channel_names: tuple = None
    dt: float = None

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples.reshape(1, -1)
        if samples.ndim != 2:
            raise DimensionError(f"samples must be 2-D (channels x length), got shape {samples.shape}")
        if samples.shape[0] < 1 or samples.shape[1] < 1:
            raise InsufficientDataError(f"empty trajectory with shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("trajectory samples must be finite")
        samples.flags.writeable = False

        names = self.channel_names
        if names is None:
            names = role_names("z", samples.shape[0])
        names = tuple(str(name) for name in names)
        if len(names) != samples.shape[0]:
            raise DimensionError(
                f"{len(names)} channel names for {samples.shape[0]} channels")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "channel_names", names)

    @classmethod
    def from_role(cls, samples, role, dt=None):
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        return cls(samples, role_names(role, samples.shape[0]), dt)

    @property
    def channel_count(self):
        return self.samples.shape[0]

    @property
    def length(self):
        return self.samples.shape[1]

    def at(self, t):
        return self.samples[:, t]

    def segment(self, first, last):
        """Sub-record of samples first..last (inclusive)."""
        if not 0 <= first <= last < self.length:
            raise DimensionError(f"segment [{first}, {last}] outside record of length {self.length}")
        return Trajectory(self.samples[:, first:last + 1], self.channel_names, self.dt)

    def select_role(self, role):
        """Channels whose label starts with ``role:``."""
        picked = [i for i, name in enumerate(self.channel_names) if name.split(":", 1)[0] == role]
        if not picked:
            raise DimensionError(f"no '{role}:' channels in {list(self.channel_names)}")
        return Trajectory(self.samples[picked, :], [self.channel_names[i] for i in picked], self.dt)

    def has_role(self, role):
        return any(name.split(":", 1)[0] == role for name in self.channel_names)


def stack(*trajectories):
    """Stack records channel-wise; all must have the same length."""
    lengths = {traj.length for traj in trajectories}
    if len(lengths) != 1:
        raise DimensionError(f"cannot stack records of lengths {sorted(lengths)}")
    names = [name for traj in trajectories for name in traj.channel_names]
    dt = next((traj.dt for traj in trajectories if traj.dt is not None), None)
    return Trajectory(np.vstack([traj.samples for traj in trajectories]), names, dt)


@dataclass(frozen=True, eq=False)
class HankelMatrix:
    block_rows: int
    block_size: int
    data: np.ndarray

    @property
    def columns(self):
        return self.data.shape[1]

    def block(self, i, j):
        n = self.block_size
        return self.data[i * n:(i + 1) * n, j]

    def block_row_range(self, first_block, count):
        """Rows of ``count`` consecutive block rows starting at ``first_block``."""
        n = self.block_size
        return self.data[first_block * n:(first_block + count) * n, :]


def build_hankel(traj, first, last, T):
    """Block Hankel matrix of samples first..last with T block rows.

    Args:
        traj (Trajectory): Source record.
        first (int): Position of the first sample used.
        last (int): Position of the last sample used (inclusive).
        T (int): Number of block rows.

    Returns:
        HankelMatrix: (T*n) x M matrix with M = last - first - T + 2 columns.
    """
    if T < 1:
        raise DimensionError(f"block rows must be >= 1, got {T}")
    if not 0 <= first <= last < traj.length:
        raise DimensionError(f"window [{first}, {last}] outside record of length {traj.length}")
    if last - first + 1 < T:
        raise InsufficientDataError(
            f"window of {last - first + 1} samples is too short for {T} block rows")

    n = traj.channel_count
    flat = traj.samples[:, first:last + 1].T.reshape(-1)
    windows = np.lib.stride_tricks.sliding_window_view(flat, T * n)[::n, :]
    return HankelMatrix(T, n, np.ascontiguousarray(windows.T))


def numerical_rank(singular_values, shape):
    s = np.asarray(singular_values, dtype=float)
    if s.size == 0 or s[0] <= 0:
        return 0
    tol = max(shape) * s[0] * RANK_RTOL
    return int(np.sum(s > tol))


def is_singular_triangle(factor, columns):
    """Triangular factor whose smallest diagonal entry falls under the rank threshold."""
    diag = np.abs(np.diag(factor))
    return diag.size == 0 or diag.min() <= max(factor.shape[0], columns) * diag.max() * RANK_RTOL


def rank_pinv(matrix):
    """Pseudo-inverse with the package-wide relative rank threshold."""
    matrix = np.atleast_2d(matrix)
    return la.pinv(matrix, atol=0.0, rtol=max(matrix.shape) * RANK_RTOL)


@dataclass(frozen=True, eq=False)
class PersistencyReport:
    exciting: bool
    order: int
    rank: int
    required_rank: int
    singular_values: np.ndarray = field(repr=False)

    def __bool__(self):
        return self.exciting


def is_persistently_exciting(traj, order):
    """Full-row-rank check of the order-``order`` Hankel matrix of the whole record."""
    hankel = build_hankel(traj, 0, traj.length - 1, order)
    s = la.svdvals(hankel.data)
    rank = numerical_rank(s, hankel.data.shape)
    required = hankel.data.shape[0]
    logger.debug(f"persistency order {order}: rank {rank}/{required}")
    return PersistencyReport(rank == required, order, rank, required, s)


@dataclass(frozen=True)
class HorizonSpec:
    T_p: int
    T_f: int
    n_x_bar: int
    n_u: int
    n_y: int

    def __post_init__(self):
        for name in ("T_p", "T_f", "n_x_bar", "n_u", "n_y"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise DimensionError(f"{name} must be a positive integer, got {value!r}")
        if self.T_p * self.n_y < self.n_x_bar:
            raise DimensionError(
                f"order bound n_x_bar={self.n_x_bar} exceeds T_p*n_y={self.T_p * self.n_y}")

    @property
    def T(self):
        return self.T_p + self.T_f

    def with_order(self, n_x_bar):
        return replace(self, n_x_bar=n_x_bar)


def stacked_samples(traj, first, count):
    """Samples first..first+count-1 stacked into one column vector."""
    return traj.samples[:, first:first + count].T.reshape(-1)


def window(traj, t, spec):
    """Past window of T_p samples ending at t and future window of T_f samples after t."""
    if t < spec.T_p - 1 or t + spec.T_f > traj.length - 1:
        raise DimensionError(
            f"position {t} leaves no room for T_p={spec.T_p} past and T_f={spec.T_f} "
            f"future samples in a record of length {traj.length}")
    past = stacked_samples(traj, t - spec.T_p + 1, spec.T_p)
    future = stacked_samples(traj, t + 1, spec.T_f)
    return past, future
