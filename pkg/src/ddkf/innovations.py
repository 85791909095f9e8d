"""Estimate the innovations sequence of a record from inputs and outputs only.

Each future output sample is projected onto the stacked (u, y) window of the
L samples before it; the projection residual is the innovations estimate
(the residual of an implicitly fitted order-L vector ARX model).
"""
from dataclasses import dataclass, field
import logging

import numpy as np
import pandas as pd
import scipy.linalg as la

from ddkf.errors import DimensionError, InsufficientDataError
from ddkf.trajectory import RANK_RTOL, Trajectory, build_hankel, role_names, stack

logger = logging.getLogger(__name__)

WHITENESS_LAGS = 20
WHITENESS_PASS_FRACTION = 0.95


@dataclass(frozen=True, eq=False)
class InnovationsEstimate:
    """Innovations estimate for positions L .. L+N-1 of the source record."""
    e_hat: np.ndarray = field(repr=False)
    lambda_hat: np.ndarray
    L: int
    N: int
    used_lq: bool = True

    @property
    def start(self):
        return self.L

    def as_trajectory(self, dt=None):
        return Trajectory(self.e_hat, role_names("e", self.e_hat.shape[0]), dt)

    def aligned(self, traj):
        """The part of a full-length record that lines up with ``e_hat``."""
        return traj.segment(self.L, self.L + self.N - 1)


def _projection_residual(Z, Y):
    """Residual of the least-squares regression of the rows of Y on the rows of Z."""
    p, N = Z.shape
    if p + Y.shape[0] <= N:
        Q, R = la.qr(np.vstack([Z, Y]).T, mode='economic')
        d = np.abs(np.diag(R[:p, :p]))
        if d.size == 0 or d.min() > max(p, N) * d.max() * RANK_RTOL:
            # LQ factors: L22 = R22^T, Q2^T = Q[:, p:]^T
            return (Q[:, p:] @ R[p:, p:]).T, True
        logger.warning("Regressor matrix is rank deficient, using the minimum-norm least-squares residual")
    else:
        logger.warning(f"{p} regressors for {N} samples, using the minimum-norm least-squares residual")
    coef, _, _, _ = la.lstsq(Z.T, Y.T)
    return Y - (Z.T @ coef).T, False


def estimate_lambda(e_hat):
    """Sample covariance (1/N) e e^T of zero-mean innovations, symmetrised."""
    e_hat = np.atleast_2d(np.asarray(e_hat, dtype=float))
    if e_hat.shape[1] < 1:
        raise InsufficientDataError("need at least one innovations sample")
    cov = e_hat @ e_hat.T / e_hat.shape[1]
    return 0.5 * (cov + cov.T)


def estimate_innovations(u, y, L):
    """Estimate innovations from an input-output record.

    Args:
        u (Trajectory): Inputs, n_u channels.
        y (Trajectory): Measured outputs, n_y channels, same length as ``u``.
        L (int): Past horizon of the regression.

    Returns:
        InnovationsEstimate: ``e_hat`` of shape (n_y, N) with N = length - L.
    """
    if u.length != y.length:
        raise DimensionError(f"input length {u.length} != output length {y.length}")
    if L < 1:
        raise DimensionError(f"past horizon L must be >= 1, got {L}")
    N = u.length - L
    if N < 2:
        raise InsufficientDataError(f"record of {u.length} samples is too short for L={L} (need >= {L + 2})")

    zeta = stack(u, y)
    Z = build_hankel(zeta, 0, L + N - 2, L).data
    Y = build_hankel(y, L, L + N - 1, 1).data
    e_hat, used_lq = _projection_residual(Z, Y)
    lambda_hat = estimate_lambda(e_hat)
    logger.debug(f"innovations: L={L}, N={N}, trace(lambda)={np.trace(lambda_hat):.4g}")
    return InnovationsEstimate(e_hat, lambda_hat, L, N, used_lq)


def select_past_horizon(u, y, candidates):
    """Pick L by AIC(L) = N log det lambda(L) + 2 L n_y (n_u + n_y).

    All candidates are scored on the same target samples (those after the
    largest candidate) so the scores are comparable.

    Returns:
        tuple: (chosen L, pandas.DataFrame of scores indexed by L)
    """
    candidates = sorted({int(L) for L in candidates})
    if not candidates:
        raise InsufficientDataError("empty list of past-horizon candidates")
    L_max = candidates[-1]
    N_common = u.length - L_max
    if N_common < 2:
        raise InsufficientDataError(f"record of {u.length} samples is too short for L={L_max}")

    n_u, n_y = u.channel_count, y.channel_count
    rows = []
    for L in candidates:
        offset = L_max - L
        estimate = estimate_innovations(u.segment(offset, u.length - 1), y.segment(offset, y.length - 1), L)
        sign, logdet = np.linalg.slogdet(estimate.lambda_hat)
        if sign <= 0:
            logdet = -np.inf
        penalty = 2.0 * L * n_y * (n_u + n_y)
        rows.append({"L": L, "N": N_common, "logdet": logdet, "penalty": penalty,
                     "aic": N_common * logdet + penalty})
    scores = pd.DataFrame(rows).set_index("L")
    chosen = int(scores["aic"].idxmin())
    logger.info(f"AIC selected L={chosen} among {candidates}")
    return chosen, scores


@dataclass(frozen=True, eq=False)
class WhitenessReport:
    autocorrelation: np.ndarray = field(repr=False)
    bound: float
    fraction_within: np.ndarray
    passed: bool

    def as_dict(self):
        return {
            "bound": self.bound,
            "fraction_within": [float(f) for f in self.fraction_within],
            "passed": bool(self.passed),
            "max_lag": int(self.autocorrelation.shape[1]),
        }


def whiteness(residuals, max_lag=WHITENESS_LAGS):
    """Sample autocorrelation test of each channel at lags 1..max_lag against 3/sqrt(N)."""
    residuals = np.atleast_2d(np.asarray(residuals, dtype=float))
    n, N = residuals.shape
    if N <= max_lag:
        raise InsufficientDataError(f"{N} samples are not enough for {max_lag} lags")
    centered = residuals - residuals.mean(axis=1, keepdims=True)
    energy = np.sum(centered ** 2, axis=1)
    energy[energy == 0] = 1.0
    acf = np.empty((n, max_lag))
    for k in range(1, max_lag + 1):
        acf[:, k - 1] = np.sum(centered[:, k:] * centered[:, :-k], axis=1) / energy
    bound = 3.0 / np.sqrt(N)
    fraction = np.mean(np.abs(acf) <= bound, axis=1)
    return WhitenessReport(acf, float(bound), fraction, bool(np.all(fraction >= WHITENESS_PASS_FRACTION)))


def channel_correlation(a, b):
    """Per-channel Pearson correlation of two equally shaped (channels, N) arrays."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return np.array([np.corrcoef(a[i], b[i])[0, 1] for i in range(a.shape[0])])
