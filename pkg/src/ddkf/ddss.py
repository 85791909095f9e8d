"""Data-based state-space realisation of a parsimonious SMM.

The state x_uy(t) = (x_u(t), x_y(t)) is the coordinate pair of the past
window ending at t. Shifting the window by one sample gives

    x_uy(t) = A_p x_uy(t-1) + B_p ubar(t),    y(t) = C_p x_uy(t)

and re-indexing x+(t+1) = x_uy(t) gives the predictor model

    x+(t+1) = A_p x+(t) + B_up u(t) + B_ep e(t)
    y(t)    = C_p A_p x+(t) + C_p B_up u(t) + C_p B_ep e(t)
"""
from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.linalg as la

from ddkf.errors import DimensionError, NumericalError
from ddkf.trajectory import numerical_rank, rank_pinv

logger = logging.getLogger(__name__)


def shift_and_select(T_p, n):
    """Block upper shift S_n, newest-block selector J_n and last-block remover Pi.

    Args:
        T_p (int): Number of blocks in the stacked window.
        n (int): Block size.

    Returns:
        tuple: (S_n, J_n, Pi) of shapes (T_p n, T_p n), (T_p n, n), ((T_p-1) n, T_p n).
    """
    if T_p < 2 or n < 1:
        raise DimensionError(f"need T_p >= 2 and n >= 1, got T_p={T_p}, n={n}")
    eye_n = np.eye(n)
    S = np.kron(np.eye(T_p, k=1), eye_n)
    newest = np.zeros((T_p, 1))
    newest[-1, 0] = 1.0
    J = np.kron(newest, eye_n)
    Pi = np.kron(np.eye(T_p - 1, T_p), eye_n)
    return S, J, Pi


@dataclass(frozen=True, eq=False)
class DataStateSpace:
    A_p: np.ndarray = field(repr=False)
    B_up: np.ndarray = field(repr=False)
    B_ep: np.ndarray = field(repr=False)
    C_p: np.ndarray = field(repr=False)
    n_xu: int = 0
    components: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_matrices(cls, A_p, B_up, B_ep, C_p):
        A_p = np.atleast_2d(np.asarray(A_p, dtype=float))
        B_up = np.asarray(B_up, dtype=float).reshape(A_p.shape[0], -1)
        B_ep = np.asarray(B_ep, dtype=float).reshape(A_p.shape[0], -1)
        C_p = np.asarray(C_p, dtype=float).reshape(-1, A_p.shape[0])
        if A_p.shape[0] != A_p.shape[1]:
            raise DimensionError(f"A_p must be square, got {A_p.shape}")
        return cls(A_p, B_up, B_ep, C_p)

    @property
    def state_dim(self):
        return self.A_p.shape[0]

    @property
    def n_u(self):
        return self.B_up.shape[1]

    @property
    def n_aux(self):
        return self.B_ep.shape[1]

    @property
    def n_y(self):
        return self.C_p.shape[0]

    @property
    def B_p(self):
        return np.hstack([self.B_up, self.B_ep])

    @property
    def C_eff(self):
        return self.C_p @ self.A_p

    @property
    def D_u_eff(self):
        return self.C_p @ self.B_up

    @property
    def D_e_eff(self):
        return self.C_p @ self.B_ep

    def poles(self):
        """Eigenvalues of A_yy (the output-coordinate dynamics)."""
        A_yy = self.A_p[self.n_xu:, self.n_xu:]
        return la.eigvals(A_yy)


def build_ddss(smm):
    """Shift/selection algebra turning the parsimonious SMM into (A_p, B_p, C_p)."""
    T_p = smm.horizon.T_p
    n_u, n_y, n_ubar = smm.horizon.n_u, smm.horizon.n_y, smm.n_ubar
    S_u, J_u, _ = shift_and_select(T_p, n_ubar)
    S_y, J_y, Pi = shift_and_select(T_p, n_y)

    L_up, L_yup, L_yp = smm.L_up, smm.L_yup, smm.L_yp
    diag = np.abs(np.diag(L_up))
    if diag.min() == 0:
        raise NumericalError("L_up is singular")
    # ubar_p(t) = L_up x_u(t) and ubar_p(t) = S ubar_p(t-1) + J ubar(t)
    A_uu = la.solve_triangular(L_up, S_u @ L_up, lower=True)
    B_uu = la.solve_triangular(L_up, J_u, lower=True)

    Pi_L_yp = Pi @ L_yp
    rank = numerical_rank(la.svdvals(Pi_L_yp), Pi_L_yp.shape)
    if rank < smm.n_x_bar:
        raise NumericalError(
            f"Pi L_yp has rank {rank} < n_x_bar={smm.n_x_bar}; increase T_p or lower n_x_bar")
    Phi = rank_pinv(Pi_L_yp)
    A_yu = Phi @ Pi @ (S_y @ L_yup - L_yup @ A_uu)
    A_yy = Phi @ Pi @ S_y @ L_yp
    B_yu = -Phi @ Pi @ L_yup @ B_uu
    C_yu = J_y.T @ L_yup
    C_yy = J_y.T @ L_yp

    n_xu = L_up.shape[0]
    A_p = np.block([[A_uu, np.zeros((n_xu, smm.n_x_bar))], [A_yu, A_yy]])
    B_p = np.vstack([B_uu, B_yu])
    C_p = np.hstack([C_yu, C_yy])
    components = {"A_uu": A_uu, "A_yu": A_yu, "A_yy": A_yy, "B_uu": B_uu,
                  "B_yu": B_yu, "C_yu": C_yu, "C_yy": C_yy, "Phi": Phi}
    logger.debug(f"data state space: dimension {A_p.shape[0]}, "
                 f"spectral radius of A_yy {np.max(np.abs(la.eigvals(A_yy))):.4f}")
    return DataStateSpace(A_p, B_p[:, :n_u], B_p[:, n_u:], C_p, n_xu, components)


def replay(ddss, x0, ubar):
    """Run x(t) = A_p x(t-1) + B_p ubar(t) from x0 over the columns of ``ubar``; returns (states, outputs)."""
    ubar = np.atleast_2d(ubar)
    states = np.empty((ddss.state_dim, ubar.shape[1]))
    x = np.asarray(x0, dtype=float)
    B_p = ddss.B_p
    for t in range(ubar.shape[1]):
        x = ddss.A_p @ x + B_p @ ubar[:, t]
        states[:, t] = x
    return states, ddss.C_p @ states


def replay_residual(ddss, smm, ubar, y):
    """Max relative output error of the recursion replayed over a training record.

    The recursion starts from the coordinates of the first past window and is
    driven by the recorded extended input; the error is the largest absolute
    output deviation divided by the largest absolute recorded output.
    """
    T_p = smm.horizon.T_p
    if (ddss.state_dim != smm.L_up.shape[0] + smm.n_x_bar or ddss.B_p.shape[1] != ubar.channel_count
            or ddss.n_y != y.channel_count or ubar.length != y.length):
        raise DimensionError("model, SMM and record dimensions do not match")
    if y.length <= T_p:
        raise DimensionError(f"record of {y.length} samples leaves nothing to replay after T_p={T_p}")

    t0 = T_p - 1
    ubar_p = ubar.samples[:, :T_p].T.reshape(-1)
    y_p = y.samples[:, :T_p].T.reshape(-1)
    x0 = smm.state(ubar_p, y_p)
    _, outputs = replay(ddss, x0, ubar.samples[:, t0 + 1:])
    scale = np.max(np.abs(y.samples))
    error = np.max(np.abs(outputs - y.samples[:, t0 + 1:]))
    return float(error / scale) if scale > 0 else float(error)
