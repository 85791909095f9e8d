"""File formats: trajectory CSV, the model JSON container and result bundles.

Trajectory CSV: a header of channel names whose prefix before ':' gives the
role (u, y, w, e, ...), one row per time step, '.' decimal separator, 17
significant digits. An optional leading ``t`` column carries sample times.

Model JSON: ``{"format": "ddkf-model", "version": 1, "horizon": {...},
"n_aux": int, "matrices": {name: {"shape": [rows, cols], "data": [[...]]}}}``.
"""
import hashlib
import json
import logging
import os
import tempfile

import numpy as np
import pandas as pd

from ddkf.ddss import DataStateSpace
from ddkf.errors import DataFormatError, SchemaError
from ddkf.predictor import PredictionMatrices
from ddkf.smm import ParsimoniousSMM
from ddkf.trajectory import HorizonSpec, Trajectory

logger = logging.getLogger(__name__)

MODEL_FORMAT = "ddkf-model"
MODEL_VERSION = 1
FLOAT_FORMAT = '%.17g'
SMM_BLOCKS = ("L_up", "L_yup", "L_yp", "S_uu", "S_uy", "L_uf", "S_yu", "S_yy", "L_yuf")


def atomic_write_text(path, text):
    """Write ``text`` to a temp file in the target folder and rename it into place."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def write_json(path, payload):
    atomic_write_text(path, json.dumps(payload, indent=4, sort_keys=True) + "\n")


def read_json(path):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise DataFormatError(f"file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise DataFormatError(f"invalid JSON in {path}: {e}") from e


def sha256_text(text):
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def write_trajectory_csv(path, traj, with_time=False):
    frame = pd.DataFrame(traj.samples.T, columns=list(traj.channel_names))
    if with_time and traj.dt is not None:
        frame.insert(0, "t", np.arange(traj.length) * traj.dt)
    atomic_write_text(path, frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n'))


def read_trajectory_csv(path):
    """Read a trajectory CSV written by ``write_trajectory_csv`` (or by hand)."""
    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except FileNotFoundError as e:
        raise DataFormatError(f"file not found: {path}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataFormatError(f"cannot parse {path}: {e}") from e
    columns = [str(c).strip() for c in frame.columns]
    if len(set(columns)) != len(columns) or any(c.startswith("Unnamed") for c in columns):
        raise DataFormatError(f"{path}: channel names must be unique and non-empty, got {columns}")
    frame.columns = columns
    dt = None
    if "t" in frame.columns:
        times = pd.to_numeric(frame.pop("t"), errors='coerce').to_numpy()
        if times.size > 1:
            steps = np.diff(times)
            if not np.all(np.isfinite(steps)) or not np.allclose(steps, steps[0], rtol=1e-9) or steps[0] <= 0:
                raise DataFormatError(f"{path}: the t column must be uniformly increasing")
            dt = float(steps[0])
    if frame.empty or frame.shape[1] == 0:
        raise DataFormatError(f"{path}: no samples")
    values = frame.apply(pd.to_numeric, errors='coerce').to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        raise DataFormatError(f"{path}: all samples must be finite decimal numbers")
    return Trajectory(values.T, list(frame.columns), dt)


def role(traj, name, required=True):
    """Channels of one role, or None when absent and not required."""
    if not required and not traj.has_role(name):
        return None
    try:
        return traj.select_role(name)
    except ValueError as e:
        raise DataFormatError(str(e)) from e


def _encode(matrix):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    return {"shape": list(matrix.shape), "data": matrix.tolist()}


def _decode(entry, name):
    try:
        shape = tuple(int(n) for n in entry["shape"])
        data = np.asarray(entry["data"], dtype=float)
    except (KeyError, TypeError, ValueError) as e:
        raise DataFormatError(f"malformed matrix {name!r}: {e}") from e
    if 0 in shape:
        return np.zeros(shape)
    if data.shape != shape:
        raise DataFormatError(f"matrix {name!r} has shape {data.shape}, header says {shape}")
    return data


def model_payload(model):
    """JSON container of a DataDrivenModel's named matrices and diagnostics."""
    spec = model.horizon
    matrices = {name: _encode(getattr(model.smm, name)) for name in SMM_BLOCKS}
    matrices.update({
        "A_p": _encode(model.ddss.A_p),
        "B_up": _encode(model.ddss.B_up),
        "B_ep": _encode(model.ddss.B_ep),
        "C_p": _encode(model.ddss.C_p),
        "E_xu": _encode(model.matrices.E_xu),
        "E_xy": _encode(model.matrices.E_xy),
        "E_uf": _encode(model.matrices.E_uf),
    })
    if model.kalman is not None:
        matrices["K_pred"] = _encode(model.kalman.gain)
        matrices["P"] = _encode(model.kalman.riccati_solution)
        matrices["Lambda"] = _encode(model.kalman.noise.Lambda)
        matrices["Lambda2"] = _encode(model.kalman.noise.Lambda2)
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "horizon": {"T_p": spec.T_p, "T_f": spec.T_f, "n_x_bar": spec.n_x_bar, "n_u": spec.n_u, "n_y": spec.n_y},
        "n_aux": model.smm.n_aux,
        "n_xu": model.ddss.n_xu,
        "matrices": matrices,
        "diagnostics": model.diagnostics,
    }


def save_model(path, model):
    write_json(path, model_payload(model))


class StoredModel:
    """A model read back from its JSON container."""

    def __init__(self, horizon, n_aux, smm, ddss, matrices, gain=None):
        self.horizon = horizon
        self.n_aux = n_aux
        self.smm = smm
        self.ddss = ddss
        self.matrices = matrices
        self.gain = gain

    @property
    def filtered(self):
        return self.gain is not None

    def filtered_state(self, u, y):
        """Run the stored stationary predictor over a past record from a zero state."""
        x = np.zeros(self.ddss.state_dim)
        for t in range(u.shape[1]):
            propagated = self.ddss.A_p @ x + self.ddss.B_up @ u[:, t]
            x = propagated + self.gain @ (y[:, t] - self.ddss.C_p @ propagated)
        return x


def load_model(path):
    payload = read_json(path)
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise DataFormatError(f"{path} is not a {MODEL_FORMAT} file")
    if payload.get("version") != MODEL_VERSION:
        raise DataFormatError(f"unsupported model version {payload.get('version')!r}")
    try:
        horizon = HorizonSpec(**payload["horizon"])
        n_aux = int(payload["n_aux"])
        stored = payload["matrices"]
        blocks = {name: _decode(stored[name], name) for name in SMM_BLOCKS}
        smm = ParsimoniousSMM(**blocks, horizon=horizon, n_aux=n_aux)
        ddss = DataStateSpace(_decode(stored["A_p"], "A_p"), _decode(stored["B_up"], "B_up"),
                              _decode(stored["B_ep"], "B_ep"), _decode(stored["C_p"], "C_p"),
                              int(payload.get("n_xu", 0)))
        matrices = PredictionMatrices(_decode(stored["E_xu"], "E_xu"), _decode(stored["E_xy"], "E_xy"),
                                      _decode(stored["E_uf"], "E_uf"), horizon.n_u, horizon.n_y, horizon.T_f)
        gain = _decode(stored["K_pred"], "K_pred") if "K_pred" in stored else None
    except (KeyError, TypeError) as e:
        raise DataFormatError(f"{path}: incomplete model container ({e})") from e
    return StoredModel(horizon, n_aux, smm, ddss, matrices, gain)


# Required top-level keys of a benchmark result payload and their JSON types
RESULT_SCHEMA = {
    "schema_version": int,
    "tool_version": str,
    "config": dict,
    "provenance": dict,
    "methods": list,
    "comparisons": dict,
    "boxplot_summary": dict,
    "runs": list,
}
PROVENANCE_KEYS = ("config_sha256", "master_seed", "tool_version")


def validate_result(payload):
    """Check a result payload against RESULT_SCHEMA; raises SchemaError."""
    if not isinstance(payload, dict):
        raise SchemaError("result payload must be a JSON object")
    for key, kind in RESULT_SCHEMA.items():
        if key not in payload:
            raise SchemaError(f"result payload lacks {key!r}")
        if not isinstance(payload[key], kind):
            raise SchemaError(f"result field {key!r} must be {kind.__name__}")
    for key in PROVENANCE_KEYS:
        if key not in payload["provenance"]:
            raise SchemaError(f"provenance lacks {key!r}")
    for method, indices in payload["boxplot_summary"].items():
        for index, entry in indices.items():
            missing = {"min", "q1", "median", "q3", "max"} - set(entry)
            if missing:
                raise SchemaError(f"boxplot entry {method}/{index} lacks {sorted(missing)}")
    return payload
