from dataclasses import dataclass
import logging

import numpy as np

from ddkf.errors import DimensionError

logger = logging.getLogger(__name__)

# Settling band as a fraction of the largest reference step
SETTLING_FRACTION = 0.05


@dataclass(frozen=True)
class PerformanceIndices:
    tracking_rmse: tuple
    input_energy: float
    prediction_rmse: dict
    settling_time: tuple

    def as_row(self):
        """Flat mapping used as one row of the per-run table."""
        row = {f"tracking_rmse_y{i + 1}": value for i, value in enumerate(self.tracking_rmse)}
        row["tracking_rmse"] = float(np.sqrt(np.mean(np.square(self.tracking_rmse))))
        row["input_energy"] = self.input_energy
        row.update({f"prediction_rmse_k{k}": value for k, value in self.prediction_rmse.items()})
        row.update({f"settling_time_y{i + 1}": value for i, value in enumerate(self.settling_time)})
        return row


def settling_time(error, dt, band):
    """Time after the first sample until |error| stays within ``band`` for good (censored at the window end)."""
    outside = np.flatnonzero(np.abs(error) > band)
    if outside.size == 0:
        return 0.0
    return float(min(outside[-1] + 1, error.size) * dt)


def performance_indices(y_clean, u, reference, predictions, step_index, dt, steps):
    """Indices of one closed-loop run.

    Args:
        y_clean (np.ndarray): (n_y, K) noise-free closed-loop output.
        u (np.ndarray): (n_u, K) applied inputs.
        reference (np.ndarray): (n_y, K) reference.
        predictions (dict): k -> (predicted, realised) arrays of k-step predictions
            and the noise-free outputs they predict.
        step_index (int): First sample of the post-step window.
        dt (float): Sample period.
        steps (iterable): Prediction depths to report.

    Returns:
        PerformanceIndices
    """
    y_clean, u, reference = (np.atleast_2d(a) for a in (y_clean, u, reference))
    if y_clean.shape != reference.shape or u.shape[1] != y_clean.shape[1]:
        raise DimensionError(
            f"closed-loop logs are not aligned: y {y_clean.shape}, u {u.shape}, reference {reference.shape}")
    if not 0 <= step_index < y_clean.shape[1]:
        raise DimensionError(f"step index {step_index} outside a run of {y_clean.shape[1]} samples")

    error = y_clean[:, step_index:] - reference[:, step_index:]
    tracking = tuple(float(x) for x in np.sqrt(np.mean(error ** 2, axis=1)))
    energy = float(np.sum(u ** 2) * dt)

    prediction_rmse = {}
    for k in steps:
        predicted, realised = predictions[k]
        if predicted.shape != realised.shape:
            raise DimensionError(f"{k}-step predictions {predicted.shape} vs realised {realised.shape}")
        prediction_rmse[k] = float(np.sqrt(np.mean((predicted - realised) ** 2)))

    step_size = np.max(np.abs(reference))
    band = SETTLING_FRACTION * (step_size if step_size > 0 else 1.0)
    settling = tuple(settling_time(channel, dt, band) for channel in error)
    return PerformanceIndices(tracking, energy, prediction_rmse, settling)
