"""End-to-end construction of a data-driven predictor from recorded data."""
from dataclasses import dataclass, field, replace
import logging

import numpy as np

from ddkf.ddss import build_ddss, replay_residual
from ddkf.innovations import estimate_innovations, select_past_horizon
from ddkf.kalman import DARE_MAX_ITER, DARE_TOL, make_filter
from ddkf.predictor import build_prediction_matrices
from ddkf.smm import build_stacked, reduce
from ddkf.trajectory import stack

logger = logging.getLogger(__name__)

# auxiliary channels whose RMS falls below this fraction of the output RMS carry no information
NEGLIGIBLE_AUX = 1e-8


@dataclass(eq=False)
class DataDrivenModel:
    smm: object
    ddss: object
    matrices: object
    kalman: object = None
    estimate: object = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def horizon(self):
        return self.smm.horizon


def _rms(samples):
    samples = np.asarray(samples, dtype=float)
    return float(np.sqrt(np.mean(samples ** 2))) if samples.size else 0.0


def is_negligible(aux, y):
    """Auxiliary record that is numerically zero next to the outputs."""
    return _rms(aux.samples) <= NEGLIGIBLE_AUX * _rms(y.samples)


def build_data_model(u, aux, y, spec, aux_cov=None, meas_cov=None, clip_order=False, dare_tol=DARE_TOL,
                     dare_max_iter=DARE_MAX_ITER):
    """SMM, data-based state space, prediction matrices and (with auxiliary channels) the Kalman predictor.

    A numerically zero auxiliary record, or a zero ``aux_cov``, leaves nothing
    to filter: the model falls back to the deterministic SMM of (u, y) with
    the order bound lowered to the numerical rank of the data if needed.

    Args:
        u (Trajectory): Inputs.
        aux (Trajectory or None): Auxiliary extended-input channels.
        y (Trajectory): Outputs.
        spec (HorizonSpec): Horizons and order bound.
        aux_cov (np.ndarray, optional): Covariance of ``aux``; needed for the filter.
        meas_cov (np.ndarray, optional): Extra measurement noise covariance for the filter.
        clip_order (bool): Lower an order bound above the numerical output rank instead of raising.

    Returns:
        DataDrivenModel
    """
    if aux is not None and (is_negligible(aux, y) or (aux_cov is not None and not np.any(aux_cov))):
        logger.warning("Auxiliary channels are numerically zero, building the deterministic model")
        aux, aux_cov, clip_order = None, None, True
    smm = reduce(build_stacked(u, aux, y, spec), spec.n_x_bar, clip_order=clip_order)
    ddss = build_ddss(smm)
    ubar = u if aux is None else stack(u, aux)
    diagnostics = dict(smm.diagnostics)
    diagnostics["replay_residual"] = replay_residual(ddss, smm, ubar, y)
    kalman = None
    if aux is not None and aux_cov is not None:
        kalman = make_filter(ddss, aux_cov, meas_cov, tol=dare_tol, max_iter=dare_max_iter)
        diagnostics["dare"] = kalman.solution.as_dict()
    matrices = build_prediction_matrices(smm)
    logger.info(f"Built data model: state dimension {ddss.state_dim}, "
                f"replay residual {diagnostics['replay_residual']:.3g}")
    return DataDrivenModel(smm, ddss, matrices, kalman, None, diagnostics)


def innovations_model(u, y, L, spec, meas_cov=None, L_candidates=None, dare_tol=DARE_TOL,
                      dare_max_iter=DARE_MAX_ITER):
    """Estimate innovations and build the innovations-driven model on the aligned record.

    With ``L_candidates`` the past horizon is chosen by AIC among the
    candidates not above ``L`` and applied from sample L - chosen, so the
    estimate covers samples L onwards whichever horizon wins.
    """
    selected = None
    if L_candidates:
        candidates = [c for c in L_candidates if c <= L]
        selected, _ = select_past_horizon(u, y, candidates)
        offset = L - selected
        u, y = u.segment(offset, u.length - 1), y.segment(offset, y.length - 1)
        L = selected
    estimate = estimate_innovations(u, y, L)
    model = build_data_model(estimate.aligned(u), estimate.as_trajectory(u.dt), estimate.aligned(y), spec,
                             aux_cov=estimate.lambda_hat, meas_cov=meas_cov,
                             dare_tol=dare_tol, dare_max_iter=dare_max_iter)
    if selected is not None:
        model.diagnostics["selected_L"] = selected
    return replace(model, estimate=estimate)
