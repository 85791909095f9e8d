"""Multi-step output prediction from a (filtered) state and a quadratic
tracking controller built on the same prediction matrices.

    y_f_hat = E_xu x_u + E_xy x_y + E_uf u_f
"""
from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.linalg as la
from scipy.optimize import lsq_linear

from ddkf.errors import DimensionError, NumericalError, SchemaError
from ddkf.trajectory import is_singular_triangle

logger = logging.getLogger(__name__)

DEFAULT_Q_WEIGHT = 1.0
DEFAULT_R_WEIGHT = 0.1


@dataclass(frozen=True, eq=False)
class PredictionMatrices:
    E_xu: np.ndarray = field(repr=False)
    E_xy: np.ndarray = field(repr=False)
    E_uf: np.ndarray = field(repr=False)
    n_u: int
    n_y: int
    T_f: int

    @property
    def E_x(self):
        return np.hstack([self.E_xu, self.E_xy])

    @property
    def state_dim(self):
        return self.E_xu.shape[1] + self.E_xy.shape[1]


def future_input_columns(n_u, n_ubar, T_f):
    """Column indices of the u channels in a stacked future extended-input vector."""
    return np.array([k * n_ubar + i for k in range(T_f) for i in range(n_u)], dtype=int)


def build_prediction_matrices(smm):
    """Future output map of a parsimonious SMM with future auxiliary channels at their zero mean.

    From the last two block rows, z = L_uf^-1 (u_f - S_uu x_u - S_uy x_y), so
    y_f = (S_yu - G S_uu) x_u + (S_yy - G S_uy) x_y + G u_f with G = L_yuf L_uf^-1.
    """
    if is_singular_triangle(smm.L_uf, smm.diagnostics.get("columns", smm.L_uf.shape[0])):
        raise NumericalError("L_uf is singular")
    # G L_uf = L_yuf
    G = la.solve_triangular(smm.L_uf.T, smm.L_yuf.T, lower=False).T
    spec = smm.horizon
    columns = future_input_columns(spec.n_u, smm.n_ubar, spec.T_f)
    return PredictionMatrices(
        E_xu=smm.S_yu - G @ smm.S_uu,
        E_xy=smm.S_yy - G @ smm.S_uy,
        E_uf=G[:, columns],
        n_u=spec.n_u,
        n_y=spec.n_y,
        T_f=spec.T_f,
    )


def model_prediction_matrices(A, B, C, D, T_f):
    """Prediction matrices of a state-space model from the predicted state x(t+1).

    y(t+j) = C A^(j-1) x(t+1) + sum_i C A^(j-1-i) B u(t+i) + D u(t+j), j = 1..T_f.
    """
    A, B, C, D = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, B, C, D))
    n_y, n_u = D.shape
    observability = np.empty((n_y * T_f, A.shape[0]))
    markov = [D]
    power = np.eye(A.shape[0])
    for j in range(T_f):
        observability[j * n_y:(j + 1) * n_y] = C @ power
        if j < T_f - 1:
            markov.append(C @ power @ B)
        power = A @ power
    E_uf = np.zeros((n_y * T_f, n_u * T_f))
    for j in range(T_f):
        for i in range(j + 1):
            E_uf[j * n_y:(j + 1) * n_y, i * n_u:(i + 1) * n_u] = markov[j - i]
    return PredictionMatrices(np.zeros((n_y * T_f, 0)), observability, E_uf, n_u, n_y, T_f)


def predict(matrices, x_hat, u_f):
    x_hat = np.asarray(x_hat, dtype=float).reshape(-1)
    u_f = np.asarray(u_f, dtype=float).reshape(-1)
    if x_hat.size != matrices.state_dim or u_f.size != matrices.E_uf.shape[1]:
        raise DimensionError(
            f"state of size {x_hat.size} and future input of size {u_f.size}, expected "
            f"{matrices.state_dim} and {matrices.E_uf.shape[1]}")
    return matrices.E_x @ x_hat + matrices.E_uf @ u_f


@dataclass(frozen=True, eq=False)
class TrackingProblem:
    """Minimise sum_j |y(t+j) - r(t+j)|^2_Q + |u(t+j)|^2_R over the future inputs.

    ``Q`` and ``R`` are per-step weights, ``u_min``/``u_max`` optional per-channel bounds.
    """
    reference: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    u_min: np.ndarray = None
    u_max: np.ndarray = None

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if Q.shape[0] != Q.shape[1] or R.shape[0] != R.shape[1]:
            raise DimensionError(f"weights must be square, got Q {Q.shape}, R {R.shape}")
        if la.eigvalsh(0.5 * (Q + Q.T)).min() < -1e-12 * max(1.0, np.trace(Q)):
            raise NumericalError("output weight Q is not positive semidefinite")
        if la.eigvalsh(0.5 * (R + R.T)).min() <= 0:
            raise NumericalError("input weight R is not positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "reference", np.asarray(self.reference, dtype=float).reshape(-1))
        n_u = R.shape[0]
        for name in ("u_min", "u_max"):
            value = getattr(self, name)
            if value is not None:
                value = np.broadcast_to(np.asarray(value, dtype=float), (n_u,)).copy()
                object.__setattr__(self, name, value)
        if self.u_min is not None and self.u_max is not None and np.any(self.u_min > self.u_max):
            raise SchemaError(f"input bounds are not ordered: {self.u_min} > {self.u_max}")

    @classmethod
    def diagonal(cls, reference, n_y, n_u, q=DEFAULT_Q_WEIGHT, r=DEFAULT_R_WEIGHT, u_min=None, u_max=None):
        return cls(reference, q * np.eye(n_y), r * np.eye(n_u), u_min, u_max)

    @property
    def bounded(self):
        return self.u_min is not None or self.u_max is not None


@dataclass(frozen=True, eq=False)
class TrackingSolution:
    u_f: np.ndarray
    y_f: np.ndarray
    cost: float
    kkt_residual: float
    active_bounds: int = 0

    def first_input(self, n_u):
        return self.u_f[:n_u]


def _psd_sqrt(matrix):
    eigenvalues, vectors = la.eigh(0.5 * (matrix + matrix.T))
    return (vectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ vectors.T


def solve_tracking(matrices, x_hat, problem):
    """Minimise the tracking cost over u_f.

    Unconstrained problems are solved from the normal equations; with bounds
    the stacked weighted least-squares form is handed to a bounded-variable
    least-squares solver.

    Returns:
        TrackingSolution
    """
    T_f, n_u, n_y = matrices.T_f, matrices.n_u, matrices.n_y
    if problem.reference.size != n_y * T_f:
        raise DimensionError(f"reference of size {problem.reference.size}, expected {n_y * T_f}")
    if problem.Q.shape[0] != n_y or problem.R.shape[0] != n_u:
        raise DimensionError(f"weights of shapes {problem.Q.shape}/{problem.R.shape} for {n_y} outputs, {n_u} inputs")

    free_response = predict(matrices, x_hat, np.zeros(n_u * T_f))
    target = problem.reference - free_response
    Q_bar = np.kron(np.eye(T_f), problem.Q)
    R_bar = np.kron(np.eye(T_f), problem.R)
    E = matrices.E_uf
    hessian = E.T @ Q_bar @ E + R_bar
    linear = E.T @ Q_bar @ target

    if not problem.bounded:
        u_f = la.solve(0.5 * (hessian + hessian.T), linear, assume_a='pos')
        lower = np.full(n_u * T_f, -np.inf)
        upper = np.full(n_u * T_f, np.inf)
    else:
        lower = np.tile(problem.u_min if problem.u_min is not None else np.full(n_u, -np.inf), T_f)
        upper = np.tile(problem.u_max if problem.u_max is not None else np.full(n_u, np.inf), T_f)
        Q_half = np.kron(np.eye(T_f), _psd_sqrt(problem.Q))
        R_half = np.kron(np.eye(T_f), _psd_sqrt(problem.R))
        stacked = np.vstack([Q_half @ E, R_half])
        rhs = np.concatenate([Q_half @ target, np.zeros(n_u * T_f)])
        result = lsq_linear(stacked, rhs, bounds=(lower, upper), method='bvls', tol=1e-12)
        if not result.success:
            logger.warning(f"Bounded tracking solver stopped early: {result.message}")
        u_f = np.clip(result.x, lower, upper)

    gradient = hessian @ u_f - linear
    projected = u_f - np.clip(u_f - gradient, lower, upper)
    kkt_residual = float(np.linalg.norm(projected) / max(1.0, np.linalg.norm(linear)))
    y_f = free_response + E @ u_f
    error = y_f - problem.reference
    cost = float(error @ Q_bar @ error + u_f @ R_bar @ u_f)
    active = int(np.sum(np.isclose(u_f, lower) | np.isclose(u_f, upper)))
    return TrackingSolution(u_f, y_f, cost, kkt_residual, active)
