"""Signal Matrix Model (SMM) of an extended-input / output record and its
parsimonious block lower-triangular reduction.

The extended input is u followed by n_aux auxiliary channels: the estimated
innovations for the innovations-based model, measured disturbances for the
disturbance-based model, or none for a deterministic model.
"""
from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.linalg as la

from ddkf.errors import DimensionError, ExcitationError, InsufficientDataError
from ddkf.trajectory import build_hankel, is_singular_triangle, numerical_rank, stack as stack_channels

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StackedSMM:
    """Hankel blocks of the extended input and the output, rows in the order
    past extended inputs, future extended inputs, past outputs, future outputs."""
    H_up: np.ndarray = field(repr=False)
    H_uf: np.ndarray = field(repr=False)
    H_yp: np.ndarray = field(repr=False)
    H_yf: np.ndarray = field(repr=False)
    horizon: object
    n_aux: int

    @property
    def n_ubar(self):
        return self.horizon.n_u + self.n_aux

    @property
    def columns(self):
        return self.H_up.shape[1]

    def reordered(self):
        """Rows in the parsimonious order: past inputs, past outputs, future inputs, future outputs."""
        return np.vstack([self.H_up, self.H_yp, self.H_uf, self.H_yf])

    def column(self, j):
        """Training window j in the parsimonious row order."""
        return np.concatenate([self.H_up[:, j], self.H_yp[:, j], self.H_uf[:, j], self.H_yf[:, j]])


def build_stacked(u, aux, y, spec):
    """Build the four Hankel blocks with the maximal number of columns.

    Args:
        u (Trajectory): Inputs, ``spec.n_u`` channels.
        aux (Trajectory or None): Auxiliary extended-input channels (innovations
            estimate or measured disturbance); None for a deterministic model.
        y (Trajectory): Measured outputs, ``spec.n_y`` channels.
        spec (HorizonSpec): Horizons and channel counts.

    Returns:
        StackedSMM
    """
    if u.channel_count != spec.n_u or y.channel_count != spec.n_y:
        raise DimensionError(
            f"records have {u.channel_count} inputs / {y.channel_count} outputs, "
            f"horizon expects {spec.n_u} / {spec.n_y}")
    records = [u] if aux is None else [u, aux]
    lengths = {traj.length for traj in records + [y]}
    if len(lengths) != 1:
        raise DimensionError(f"records must have equal lengths, got {sorted(lengths)}")
    length = y.length
    if length < spec.T:
        raise InsufficientDataError(f"record of {length} samples is shorter than T_p+T_f={spec.T}")

    ubar = stack_channels(*records)
    H_u = build_hankel(ubar, 0, length - 1, spec.T)
    H_y = build_hankel(y, 0, length - 1, spec.T)
    n_aux = 0 if aux is None else aux.channel_count
    return StackedSMM(
        H_up=H_u.block_row_range(0, spec.T_p),
        H_uf=H_u.block_row_range(spec.T_p, spec.T_f),
        H_yp=H_y.block_row_range(0, spec.T_p),
        H_yf=H_y.block_row_range(spec.T_p, spec.T_f),
        horizon=spec,
        n_aux=n_aux,
    )


@dataclass(frozen=True, eq=False)
class ParsimoniousSMM:
    """Block lower-triangular model

        [u_p]   [L_up   0      0    ] [x_u]
        [y_p] = [L_yup  L_yp   0    ] [x_y]
        [u_f]   [S_uu   S_uy   L_uf ] [ z ]
        [y_f]   [S_yu   S_yy   L_yuf]

    where u stands for the extended input.
    """
    L_up: np.ndarray = field(repr=False)
    L_yup: np.ndarray = field(repr=False)
    L_yp: np.ndarray = field(repr=False)
    S_uu: np.ndarray = field(repr=False)
    S_uy: np.ndarray = field(repr=False)
    L_uf: np.ndarray = field(repr=False)
    S_yu: np.ndarray = field(repr=False)
    S_yy: np.ndarray = field(repr=False)
    L_yuf: np.ndarray = field(repr=False)
    horizon: object
    n_aux: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_ubar(self):
        return self.horizon.n_u + self.n_aux

    @property
    def n_x_bar(self):
        return self.L_yp.shape[1]

    @property
    def window_size(self):
        return (self.n_ubar + self.horizon.n_y) * self.horizon.T

    def matrix(self):
        a, n, c = self.L_up.shape[0], self.n_x_bar, self.L_uf.shape[0]
        b, d = self.L_yp.shape[0], self.L_yuf.shape[0]
        return np.block([
            [self.L_up, np.zeros((a, n)), np.zeros((a, c))],
            [self.L_yup, self.L_yp, np.zeros((b, c))],
            [self.S_uu, self.S_uy, self.L_uf],
            [self.S_yu, self.S_yy, self.L_yuf],
        ])

    def coordinates(self, ubar_p, y_p):
        """(x_u, x_y) of a past window: triangular solve, then least squares."""
        ubar_p = np.asarray(ubar_p, dtype=float).reshape(-1)
        y_p = np.asarray(y_p, dtype=float).reshape(-1)
        if ubar_p.size != self.L_up.shape[0] or y_p.size != self.L_yp.shape[0]:
            raise DimensionError(
                f"past window sizes {ubar_p.size}/{y_p.size}, expected "
                f"{self.L_up.shape[0]}/{self.L_yp.shape[0]}")
        x_u = la.solve_triangular(self.L_up, ubar_p, lower=True)
        x_y, _, _, _ = la.lstsq(self.L_yp, y_p - self.L_yup @ x_u)
        return x_u, x_y

    def state(self, ubar_p, y_p):
        return np.concatenate(self.coordinates(ubar_p, y_p))

    def split_window(self, window):
        """Split a window column [u_p; y_p; u_f; y_f] into its four parts."""
        window = np.asarray(window, dtype=float).reshape(-1)
        if window.size != self.window_size:
            raise DimensionError(f"window of size {window.size}, expected {self.window_size}")
        sizes = np.cumsum([self.L_up.shape[0], self.L_yp.shape[0], self.L_uf.shape[0]])
        return np.split(window, sizes)


def reduce(stack, n_x_bar, clip_order=False):
    """Reduce a stacked SMM to the parsimonious form with ``n_x_bar`` output directions.

    One LQ factorisation of [H_up; H_yp; H_uf; H_yf] gives the past input
    factor, the past-output factor and the future blocks' coefficients on
    every past direction. The past-output residual factor is truncated to its
    ``n_x_bar`` dominant singular directions; the future rows keep their
    coefficients on those directions and their residual factors conditioned
    on the whole past.

    With ``clip_order`` an order bound above the numerical rank of the
    output residual factor is lowered to that rank instead of raising.
    """
    spec = stack.horizon.with_order(n_x_bar)
    a, b = stack.H_up.shape[0], stack.H_yp.shape[0]
    c = stack.H_uf.shape[0]
    M = stack.columns
    ab, abc = a + b, a + b + c
    total_rows = abc + stack.H_yf.shape[0]
    if M < total_rows:
        raise InsufficientDataError(f"{M} Hankel columns for {total_rows} rows, need more data")

    rows = stack.reordered()
    _, R = la.qr(rows.T, mode='economic')
    L = R.T
    L11 = L[:a, :a]
    if is_singular_triangle(L11, M):
        raise ExcitationError("past extended-input block is rank deficient (insufficient excitation)")
    L22 = L[a:ab, a:ab]

    U, s, Vt = la.svd(L22)
    rank = numerical_rank(s, (b, M))
    if n_x_bar > rank:
        if not clip_order:
            raise ExcitationError(
                f"order bound n_x_bar={n_x_bar} exceeds the numerical rank {rank} of the output residual factor")
        logger.warning(f"order bound n_x_bar={n_x_bar} lowered to the output rank {rank}")
        n_x_bar = rank
        spec = stack.horizon.with_order(n_x_bar)
    V, V_rest = Vt[:n_x_bar].T, Vt[n_x_bar:].T

    L33 = L[ab:abc, ab:abc]
    if is_singular_triangle(L33, M):
        raise ExcitationError("future extended-input block is rank deficient (insufficient excitation)")
    L44 = L[abc:, abc:]
    on_outputs = L[ab:, a:ab]

    energy = float(np.sum(s ** 2))
    dropped = float(np.sum(s[n_x_bar:] ** 2))
    unexplained = dropped + np.linalg.norm(on_outputs @ V_rest) ** 2 + np.linalg.norm(L44) ** 2
    total = np.linalg.norm(rows)
    diagnostics = {
        "columns": int(M),
        "cond_L_up": float(np.linalg.cond(L11)),
        "cond_L_uf": float(np.linalg.cond(L33)),
        "output_singular_values": s.tolist(),
        "output_rank": int(rank),
        "discarded_mass": float(np.sqrt(dropped / energy)) if energy > 0 else 0.0,
        "reconstruction_residual": float(np.sqrt(unexplained) / total),
    }
    logger.debug(f"SMM reduced: cond(L_up) {diagnostics['cond_L_up']:.3g}, "
                 f"discarded mass {diagnostics['discarded_mass']:.3g}, "
                 f"residual {diagnostics['reconstruction_residual']:.3g}")

    return ParsimoniousSMM(
        L_up=L11,
        L_yup=L[a:ab, :a],
        L_yp=U[:, :n_x_bar] * s[:n_x_bar],
        S_uu=L[ab:abc, :a],
        S_uy=L[ab:abc, a:ab] @ V,
        L_uf=L33,
        S_yu=L[abc:, :a],
        S_yy=L[abc:, a:ab] @ V,
        L_yuf=L[abc:, ab:abc],
        horizon=spec,
        n_aux=stack.n_aux,
        diagnostics=diagnostics,
    )


def range_residual(smm, window):
    """Distance from a window column to the model's column space, relative to the window norm."""
    window = np.asarray(window, dtype=float).reshape(-1)
    if window.size != smm.window_size:
        raise DimensionError(f"window of size {window.size}, expected {smm.window_size}")
    norm = np.linalg.norm(window)
    if norm == 0:
        return 0.0
    matrix = smm.matrix()
    g, _, _, _ = la.lstsq(matrix, window)
    return float(np.linalg.norm(window - matrix @ g) / norm)
