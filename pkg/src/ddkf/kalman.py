"""Stationary correlated-noise Kalman predictor for the data-based model.

The model driving the filter is

    x+(t+1) = A_p x+(t) + B_up u(t) + B_ap a(t)
    y(t)    = C_p A_p x+(t) + C_p B_up u(t) + C_p B_ap a(t) + v(t)

with a(t) the auxiliary channels (innovations or measured disturbances) of
covariance Sigma_a and v an optional extra measurement noise. Process and
measurement noise share a(t), hence the cross-covariance Lambda12.
"""
from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.linalg as la

from ddkf.errors import DareError, DimensionError, NumericalError

logger = logging.getLogger(__name__)

DARE_TOL = 1e-10
DARE_MAX_ITER = 100000
# Innovation covariances conditioned worse than this are treated as singular
MAX_INNOVATION_COND = 1e12


def _symmetric(matrix):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    return 0.5 * (matrix + matrix.T)


def _check_psd(name, matrix):
    if matrix.shape[0] != matrix.shape[1]:
        raise DimensionError(f"{name} must be square, got {matrix.shape}")
    if not np.allclose(matrix, matrix.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(matrix).max())):
        raise NumericalError(f"{name} is not symmetric")
    eigenvalues = la.eigvalsh(_symmetric(matrix))
    if eigenvalues.size and eigenvalues.min() < -1e-10 * max(np.trace(matrix), 1e-300):
        raise NumericalError(f"{name} is not positive semidefinite (min eigenvalue {eigenvalues.min():.3g})")


@dataclass(frozen=True, eq=False)
class NoiseModel:
    Lambda: np.ndarray
    Lambda1: np.ndarray
    Lambda2: np.ndarray
    Lambda12: np.ndarray

    @classmethod
    def from_model(cls, ddss, aux_cov, meas_cov=None):
        """Noise covariances of the predictor model driven by auxiliary channels of covariance ``aux_cov``.

        Args:
            ddss (DataStateSpace): The data-based model.
            aux_cov (np.ndarray): Covariance of the auxiliary channels (Lambda for innovations).
            meas_cov (np.ndarray, optional): Extra white measurement noise covariance.

        Returns:
            NoiseModel
        """
        aux_cov = _symmetric(aux_cov)
        if aux_cov.shape != (ddss.n_aux, ddss.n_aux):
            raise DimensionError(f"auxiliary covariance of shape {aux_cov.shape}, model has {ddss.n_aux} channels")
        _check_psd("auxiliary covariance", aux_cov)
        Lambda1 = _symmetric(ddss.B_ep @ aux_cov @ ddss.B_ep.T)
        Lambda2 = _symmetric(ddss.C_p @ Lambda1 @ ddss.C_p.T)
        if meas_cov is not None:
            meas_cov = _symmetric(meas_cov)
            if meas_cov.shape != (ddss.n_y, ddss.n_y):
                raise DimensionError(f"measurement covariance of shape {meas_cov.shape}, model has {ddss.n_y} outputs")
            _check_psd("measurement covariance", meas_cov)
            Lambda2 = Lambda2 + meas_cov
        return cls(aux_cov, Lambda1, Lambda2, Lambda1 @ ddss.C_p.T)

    def joint(self):
        return np.block([[self.Lambda1, self.Lambda12], [self.Lambda12.T, self.Lambda2]])


@dataclass(frozen=True, eq=False)
class DareSolution:
    P: np.ndarray = field(repr=False)
    K: np.ndarray = field(repr=False)
    iterations: int
    residual: float
    spectral_radius: float
    innovation_cond: float
    warm_started: bool = False

    def as_dict(self):
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "relative_residual": self.residual / max(1.0, float(np.linalg.norm(self.P))),
            "spectral_radius": self.spectral_radius,
            "innovation_cond": self.innovation_cond,
            "warm_started": self.warm_started,
        }


def riccati_map(A, C, Lambda1, Lambda2, Lambda12, P):
    """One step of the predictor Riccati recursion; returns (P_next, K)."""
    innovation_cov = C @ P @ C.T + Lambda2
    cross = A @ P @ C.T + Lambda12
    try:
        K = la.solve(innovation_cov, cross.T, assume_a='sym').T
    except la.LinAlgError as e:
        raise NumericalError(f"innovation covariance is singular: {e}") from e
    P_next = A @ P @ A.T + Lambda1 - K @ cross.T
    return _symmetric(P_next), K


def _iterate(A, C, Lambda1, Lambda2, Lambda12, P, tol, max_iter, damping):
    for iteration in range(1, max_iter + 1):
        P_next, _ = riccati_map(A, C, Lambda1, Lambda2, Lambda12, P)
        if damping != 1.0:
            P_next = (1.0 - damping) * P + damping * P_next
        step = np.linalg.norm(P_next - P)
        P = P_next
        if not np.all(np.isfinite(P)):
            raise DareError(f"Riccati iteration diverged after {iteration} iterations")
        if step <= tol * max(1.0, np.linalg.norm(P)):
            return P, iteration
    raise DareError(f"Riccati iteration did not converge within {max_iter} iterations")


def solve_dare_correlated(A, C, Lambda1, Lambda2, Lambda12, tol=DARE_TOL, max_iter=DARE_MAX_ITER,
                          damping=1.0, P0=None):
    """Stabilising solution of P = A P A' + L1 - (A P C' + L12)(C P C' + L2)^-1 (A P C' + L12)'.

    The fixed-point iteration starts from ``P0`` (zero by default). If its
    fixed point is not stabilising the iteration is restarted from the
    Schur-method solution of scipy and polished.

    Returns:
        DareSolution: P, gain K = (A P C' + L12)(C P C' + L2)^-1 and checks.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n, m = A.shape[0], C.shape[0]
    Lambda1, Lambda2 = _symmetric(Lambda1), _symmetric(Lambda2)
    Lambda12 = np.asarray(Lambda12, dtype=float).reshape(n, m)
    if A.shape != (n, n) or C.shape[1] != n or Lambda1.shape != (n, n) or Lambda2.shape != (m, m):
        raise DimensionError(
            f"incompatible Riccati data: A {A.shape}, C {C.shape}, Lambda1 {Lambda1.shape}, Lambda2 {Lambda2.shape}")
    if not 0.0 < damping <= 1.0:
        raise ValueError(f"damping must be in (0, 1], got {damping}")
    _check_psd("joint noise covariance", np.block([[Lambda1, Lambda12], [Lambda12.T, Lambda2]]))

    P = np.zeros((n, n)) if P0 is None else _symmetric(P0)
    P, iterations = _iterate(A, C, Lambda1, Lambda2, Lambda12, P, tol, max_iter, damping)
    solution = _checked(A, C, Lambda1, Lambda2, Lambda12, P, iterations, False)
    if solution.spectral_radius < 1.0:
        return _accepted(solution, tol)

    logger.info(f"Fixed point after {iterations} iterations is not stabilising "
                f"(spectral radius {solution.spectral_radius:.4f}), restarting from the Schur solution")
    try:
        P_schur = la.solve_discrete_are(a=A.T, b=C.T, q=Lambda1, r=Lambda2, s=Lambda12)
    except (ValueError, np.linalg.LinAlgError) as e:
        raise DareError(f"no stabilising Riccati solution: {e}") from e
    P, polish = _iterate(A, C, Lambda1, Lambda2, Lambda12, _symmetric(P_schur), tol, max_iter, damping)
    solution = _checked(A, C, Lambda1, Lambda2, Lambda12, P, iterations + polish, True)
    if solution.spectral_radius >= 1.0:
        raise DareError(f"Riccati solution is not stabilising (spectral radius {solution.spectral_radius:.6f})")
    return _accepted(solution, tol)


def _checked(A, C, Lambda1, Lambda2, Lambda12, P, iterations, warm_started):
    innovation_cov = C @ P @ C.T + Lambda2
    innovation_cond = float(np.linalg.cond(innovation_cov))
    if not np.isfinite(innovation_cond) or innovation_cond > MAX_INNOVATION_COND:
        raise NumericalError(f"innovation covariance is singular (condition number {innovation_cond:.3g})")
    P_next, K = riccati_map(A, C, Lambda1, Lambda2, Lambda12, P)
    residual = float(np.linalg.norm(P_next - P))
    radius = float(np.max(np.abs(la.eigvals(A - K @ C))))
    return DareSolution(P, K, iterations, residual, radius, innovation_cond, warm_started)


def _accepted(solution, tol):
    P = solution.P
    scale = max(1.0, float(np.linalg.norm(P)))
    if solution.residual > 100 * tol * scale:
        raise DareError(f"Riccati residual {solution.residual:.3g} exceeds tolerance")
    eigenvalues = la.eigvalsh(P)
    if eigenvalues.size and eigenvalues.min() < -1e-10 * max(np.trace(P), 1.0):
        raise DareError(f"Riccati solution is indefinite (min eigenvalue {eigenvalues.min():.3g})")
    logger.debug(f"DARE solved in {solution.iterations} iterations, residual {solution.residual:.3g}, "
                 f"closed-loop spectral radius {solution.spectral_radius:.4f}")
    return solution


class KalmanPredictor:
    """Stationary predictor x+(t+1|t) = A_p x + B_up u + K (y - C_p (A_p x + B_up u)).

    After ``step`` the state is the filtered coordinate pair x_uy(t) of the
    window ending at t.
    """

    def __init__(self, model, noise, solution):
        self.model = model
        self.noise = noise
        self.solution = solution
        self.gain = solution.K
        self.riccati_solution = solution.P
        self.x_hat = np.zeros(model.state_dim)
        self.last_residual = None

    @property
    def state(self):
        return self.x_hat.copy()

    def reset(self, x0=None):
        self.x_hat = np.zeros(self.model.state_dim) if x0 is None else np.array(x0, dtype=float).reshape(-1)
        self.last_residual = None

    def _propagated(self, u_t):
        u_t = np.asarray(u_t, dtype=float).reshape(-1)
        if u_t.size != self.model.n_u:
            raise DimensionError(f"input of size {u_t.size}, model has {self.model.n_u} inputs")
        return self.model.A_p @ self.x_hat + self.model.B_up @ u_t

    def predicted_output(self, u_t):
        """One-step output prediction C_p (A_p x + B_up u) before y(t) is seen."""
        return self.model.C_p @ self._propagated(u_t)

    def step(self, u_t, y_t):
        y_t = np.asarray(y_t, dtype=float).reshape(-1)
        if y_t.size != self.model.n_y:
            raise DimensionError(f"output of size {y_t.size}, model has {self.model.n_y} outputs")
        propagated = self._propagated(u_t)
        residual = y_t - self.model.C_p @ propagated
        self.x_hat = propagated + self.gain @ residual
        self.last_residual = residual
        return self.state

    def run(self, u, y):
        """Filter whole (channels, length) arrays; returns (states, residuals) one column per step."""
        u, y = np.atleast_2d(u), np.atleast_2d(y)
        if u.shape[1] != y.shape[1]:
            raise DimensionError(f"input length {u.shape[1]} != output length {y.shape[1]}")
        states = np.empty((self.model.state_dim, u.shape[1]))
        residuals = np.empty((self.model.n_y, u.shape[1]))
        for t in range(u.shape[1]):
            states[:, t] = self.step(u[:, t], y[:, t])
            residuals[:, t] = self.last_residual
        return states, residuals


def make_filter(ddss, Lambda, meas_cov=None, tol=DARE_TOL, max_iter=DARE_MAX_ITER, damping=1.0):
    """Build the stationary predictor of a data-based model from its auxiliary-channel covariance."""
    noise = NoiseModel.from_model(ddss, Lambda, meas_cov)
    solution = solve_dare_correlated(ddss.A_p, ddss.C_eff, noise.Lambda1, noise.Lambda2, noise.Lambda12,
                                     tol=tol, max_iter=max_iter, damping=damping)
    return KalmanPredictor(ddss, noise, solution)
