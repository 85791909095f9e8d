"""State estimators compared in the Monte Carlo study.

Each method exposes ``matrices`` (the prediction matrices its tracking
controller uses), ``reset()`` and ``observe(u_t, y_t)`` which returns the
state the prediction matrices expect after sample t has been seen.
"""
from collections import deque
import logging

import numpy as np

from ddkf.benchmark.simulation import oracle_kf
from ddkf.pipeline import build_data_model, innovations_model

logger = logging.getLogger(__name__)


class FilteredMethod:
    """Data-driven predictor whose state comes from a stationary Kalman filter."""

    def __init__(self, name, model):
        self.name = name
        self.model = model
        self.matrices = model.matrices

    def reset(self):
        self.model.kalman.reset()

    def observe(self, u_t, y_t):
        return self.model.kalman.step(u_t, y_t)


class RawWindowMethod:
    """Data-driven predictor whose state comes from the raw past window (zero before the start)."""

    def __init__(self, name, model):
        self.name = name
        self.model = model
        self.matrices = model.matrices
        self.reset()

    def reset(self):
        spec = self.model.horizon
        self._u = deque([np.zeros(spec.n_u)] * spec.T_p, maxlen=spec.T_p)
        self._y = deque([np.zeros(spec.n_y)] * spec.T_p, maxlen=spec.T_p)

    def observe(self, u_t, y_t):
        self._u.append(np.asarray(u_t, dtype=float).reshape(-1))
        self._y.append(np.asarray(y_t, dtype=float).reshape(-1))
        return self.model.smm.state(np.concatenate(self._u), np.concatenate(self._y))


class OracleMethod:
    """The model-based Kalman predictor of the true plant."""

    def __init__(self, name, oracle, T_f):
        self.name = name
        self.oracle = oracle
        self.matrices = oracle.prediction_matrices(T_f)

    def reset(self):
        self.oracle.reset()

    def observe(self, u_t, y_t):
        return self.oracle.observe(u_t, y_t)


def _data_method(name, model):
    if model.kalman is None:
        return RawWindowMethod(name, model)
    return FilteredMethod(name, model)


def innovations_method(identification, config):
    """innov-smm-kal: innovations estimated from (u, y) only."""
    model = innovations_model(identification.u, identification.y, config.L, config.horizon,
                              L_candidates=config.past_horizons,
                              dare_tol=config.dare_tol, dare_max_iter=config.dare_max_iter)
    return _data_method("innov-smm-kal", model)


def disturbance_method(identification, config):
    """smm-kal: the measured process disturbance w is the auxiliary channel."""
    segment = (config.L, config.L + config.N - 1)
    model = build_data_model(identification.u.segment(*segment), identification.w.segment(*segment),
                             identification.y.segment(*segment), config.horizon,
                             aux_cov=config.covariance("Sigma_w"), meas_cov=config.covariance("Sigma_v"),
                             dare_tol=config.dare_tol, dare_max_iter=config.dare_max_iter)
    return _data_method("smm-kal", model)


def unfiltered_method(identification, config):
    """unfiltered-smm: input-only SMM, state from the raw past window."""
    segment = (config.L, config.L + config.N - 1)
    model = build_data_model(identification.u.segment(*segment), None,
                             identification.y.segment(*segment), config.horizon, clip_order=True)
    return RawWindowMethod("unfiltered-smm", model)


def oracle_method(plant, config):
    oracle = oracle_kf(plant, config.covariance("Sigma_w"), config.covariance("Sigma_v"),
                       tol=config.dare_tol, max_iter=config.dare_max_iter)
    return OracleMethod("oracle-kf", oracle, config.T_f)


def build_method(name, plant, identification, config):
    if name == "innov-smm-kal":
        return innovations_method(identification, config)
    if name == "smm-kal":
        return disturbance_method(identification, config)
    if name == "unfiltered-smm":
        return unfiltered_method(identification, config)
    if name == "oracle-kf":
        return oracle_method(plant, config)
    raise ValueError(f"unknown method {name!r}")
