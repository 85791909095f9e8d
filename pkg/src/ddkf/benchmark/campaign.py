"""Monte Carlo campaign: identification data, per-method closed loops,
performance indices and their aggregation."""
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
import logging

import numpy as np
import pandas as pd
from prettytable import PrettyTable
from tqdm import tqdm

from ddkf.benchmark.aircraft import benchmark_plant
from ddkf.benchmark.config import METHODS
from ddkf.benchmark.indices import performance_indices
from ddkf.benchmark.methods import build_method
from ddkf.benchmark.simulation import gaussian, noise_generators, oracle_kf, simulate_seeded
from ddkf.errors import DDKFError, SchemaError
from ddkf.innovations import channel_correlation, whiteness
from ddkf.predictor import TrackingProblem, predict, solve_tracking

logger = logging.getLogger(__name__)

SUMMARY_QUANTILES = {"min": 0.0, "q1": 0.25, "median": 0.5, "q3": 0.75, "max": 1.0}
CLOSED_LOOP_STAGE = 1


@dataclass(eq=False)
class ClosedLoopLog:
    u: np.ndarray
    y: np.ndarray
    y_clean: np.ndarray
    reference: np.ndarray
    states: np.ndarray
    kkt_residual: np.ndarray


def reference_signal(config, length):
    """Per-output step of size ``reference_step`` at ``step_time``, zero before."""
    reference = np.zeros((config.n_y, length))
    reference[:, config.step_index:] = np.asarray(config.reference_step)[:, None]
    return reference


def run_closed_loop(method, plant, config, w, v):
    """Receding-horizon tracking: at sample t the method absorbs (u(t), y(t)) and u(t+1) is chosen."""
    K, T_f, n_u = config.closed_loop_steps, config.T_f, config.n_u
    reference = reference_signal(config, K + T_f + 1)
    Q = np.diag(config.Q_weight)
    R = np.diag(config.R_weight)
    method.reset()

    x = np.zeros(plant.n_x)
    u_next = np.zeros(n_u)
    log = ClosedLoopLog(np.empty((n_u, K)), np.empty((config.n_y, K)), np.empty((config.n_y, K)),
                        reference[:, :K], None, np.empty(K))
    states = []
    for t in range(K):
        u_t = u_next
        y_clean_t = plant.output(x, u_t)
        y_t = y_clean_t + v[:, t]
        state = method.observe(u_t, y_t)
        problem = TrackingProblem(reference[:, t + 1:t + 1 + T_f].T.reshape(-1), Q, R, config.u_min, config.u_max)
        solution = solve_tracking(method.matrices, state, problem)
        u_next = solution.first_input(n_u)

        log.u[:, t] = u_t
        log.y[:, t] = y_t
        log.y_clean[:, t] = y_clean_t
        log.kkt_residual[t] = solution.kkt_residual
        states.append(state)
        x = plant.step(x, u_t, w[:, t])
    log.states = np.column_stack(states)
    return log


def prediction_log(matrices, log, steps):
    """k-step predictions from the logged states and the inputs that were actually applied."""
    T_f, n_y = matrices.T_f, matrices.n_y
    K = log.u.shape[1]
    windows = range(K - T_f)
    predicted = {k: np.empty((n_y, len(windows))) for k in steps}
    realised = {k: np.empty((n_y, len(windows))) for k in steps}
    for i, t in enumerate(windows):
        u_f = log.u[:, t + 1:t + 1 + T_f].T.reshape(-1)
        y_f = predict(matrices, log.states[:, t], u_f).reshape(T_f, n_y)
        for k in steps:
            predicted[k][:, i] = y_f[k - 1]
            realised[k][:, i] = log.y_clean[:, t + k]
    return {k: (predicted[k], realised[k]) for k in steps}


def innovations_diagnostics(method, identification, oracle, config):
    """Estimated versus true innovations and one-step optimality of the data-driven filter."""
    model = method.model
    estimate = model.estimate
    first, last = config.L, config.L + config.N - 1
    e_true = oracle.innovations(identification.u.samples, identification.y.samples)[:, first:last + 1]
    correlation = channel_correlation(estimate.e_hat, e_true)
    report = whiteness(estimate.e_hat)

    _, residuals = model.kalman.run(identification.u.samples[:, first:last + 1],
                                    identification.y.samples[:, first:last + 1])
    model.kalman.reset()
    burn = min(config.L, residuals.shape[1] - 1)
    ratio = float(np.mean(residuals[:, burn:] ** 2) / np.mean(e_true[:, burn:] ** 2))
    row = {f"innovations_corr_y{i + 1}": float(c) for i, c in enumerate(correlation)}
    row["whiteness_min_fraction"] = float(np.min(report.fraction_within))
    row["whiteness_passed"] = report.passed
    row["optimality_ratio"] = ratio
    row["innovations_L"] = int(estimate.L)
    return row


def _failure(base, error):
    category = getattr(error, "category", "numerical")
    logger.warning(f"Run {base['run']} method {base['method']} failed ({category}): {error}")
    return dict(base, status="failed", error=f"{category}: {error}")


def run_single(config, run_index, methods=None, plant=None):
    """One Monte Carlo replicate; returns (rows of the run table, diagnostics row)."""
    methods = tuple(methods or config.methods)
    seed = config.run_seed(run_index)
    plant = plant or benchmark_plant(config.gust, config.dt)
    Sigma_w, Sigma_v = config.covariance("Sigma_w"), config.covariance("Sigma_v")
    identification = simulate_seeded(plant, config.N + config.L, seed, Sigma_w, Sigma_v)
    loop_rngs = noise_generators((seed, CLOSED_LOOP_STAGE))
    K = config.closed_loop_steps
    w = gaussian(loop_rngs["process"], Sigma_w, K)
    v = gaussian(loop_rngs["measurement"], Sigma_v, K)

    rows = []
    diagnostics = {"run": run_index, "seed": seed}
    for name in methods:
        base = {"run": run_index, "seed": seed, "method": name}
        try:
            method = build_method(name, plant, identification, config)
            if name == "innov-smm-kal" and method.model.kalman is not None:
                try:
                    oracle = oracle_kf(plant, Sigma_w, Sigma_v, tol=config.dare_tol, max_iter=config.dare_max_iter)
                    diagnostics.update(innovations_diagnostics(method, identification, oracle, config))
                except DDKFError as e:
                    logger.warning(f"Run {run_index}: innovations diagnostics unavailable: {e}")
            log = run_closed_loop(method, plant, config, w, v)
            indices = performance_indices(log.y_clean, log.u, log.reference,
                                          prediction_log(method.matrices, log, config.prediction_steps),
                                          config.step_index, config.dt, config.prediction_steps)
        except (DDKFError, np.linalg.LinAlgError) as e:
            rows.append(_failure(base, e))
            continue
        row = dict(base, status="ok", error="")
        row.update(indices.as_row())
        row["max_kkt_residual"] = float(np.max(log.kkt_residual))
        rows.append(row)
    return rows, diagnostics


def _run_chunk(config, run_indices, methods):
    plant = benchmark_plant(config.gust, config.dt)
    return [run_single(config, i, methods, plant) for i in run_indices]


@dataclass(eq=False)
class MonteCarloResult:
    runs: pd.DataFrame
    diagnostics: pd.DataFrame
    methods: tuple = field(default_factory=tuple)

    def index_columns(self):
        fixed = {"run", "seed", "method", "status", "error"}
        return [c for c in self.runs.columns if c not in fixed]

    def boxplot_summary(self):
        """min / q1 / median / q3 / max per method per index over the successful runs."""
        summary = {}
        ok = self.runs[self.runs["status"] == "ok"]
        for method in self.methods:
            group = ok[ok["method"] == method]
            summary[method] = {}
            for column in self.index_columns():
                values = pd.to_numeric(group[column], errors='coerce').dropna()
                if values.empty:
                    continue
                quantiles = values.quantile(list(SUMMARY_QUANTILES.values()))
                entry = {name: float(q) for name, q in zip(SUMMARY_QUANTILES, quantiles)}
                entry["n"] = int(values.size)
                summary[method][column] = entry
        return summary

    def comparisons(self, T_f):
        """Median prediction-RMSE ratios and per-run win rates between methods at depth T_f."""
        column = f"prediction_rmse_k{T_f}"
        ok = self.runs[self.runs["status"] == "ok"]
        if column not in ok.columns:
            return {}
        pivot = ok.pivot(index="run", columns="method", values=column)
        result = {"failures": {m: int(((self.runs["method"] == m) & (self.runs["status"] != "ok")).sum())
                               for m in self.methods}}

        def both(a, b):
            return a in pivot.columns and b in pivot.columns

        if both("innov-smm-kal", "smm-kal"):
            result["median_ratio_innov_vs_smm_kal"] = float(
                pivot["innov-smm-kal"].median() / pivot["smm-kal"].median())
        for baseline in ("innov-smm-kal", "oracle-kf"):
            if both(baseline, "unfiltered-smm"):
                paired = pivot[[baseline, "unfiltered-smm"]].dropna()
                if not paired.empty:
                    result[f"win_rate_{baseline}_vs_unfiltered"] = float(
                        (paired[baseline] < paired["unfiltered-smm"]).mean())
        return result

    def summary_table(self, columns=None):
        summary = self.boxplot_summary()
        columns = columns or [c for c in self.index_columns() if c.startswith(("prediction_rmse", "tracking_rmse",
                                                                               "input_energy"))]
        table = PrettyTable(["Method", "Index", "Median", "IQR", "Runs"])
        for method, indices in summary.items():
            for column in columns:
                if column in indices:
                    entry = indices[column]
                    table.add_row([method, column, f"{entry['median']:.4g}",
                                   f"{entry['q3'] - entry['q1']:.4g}", entry["n"]])
        return table


def run_monte_carlo(config, methods=None, threads=1, progress=True):
    """Run ``config.mc_runs`` independent replicates, in ``threads`` worker processes when > 1.

    A failing method is recorded in its run's row and the campaign continues.
    """
    methods = tuple(methods or config.methods)
    unknown = sorted(set(methods) - set(METHODS))
    if unknown:
        raise SchemaError(f"unknown methods {unknown}")
    methods = tuple(m for m in METHODS if m in methods)
    run_indices = list(range(config.mc_runs))
    results = []
    if threads <= 1:
        plant = benchmark_plant(config.gust, config.dt)
        for i in tqdm(run_indices, disable=not progress, desc="Monte Carlo"):
            results.append(run_single(config, i, methods, plant))
    else:
        # split the runs into one interleaved group per worker
        groups = [run_indices[i::threads] for i in range(threads)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_chunk, config, group, methods) for group in groups if group]
            with tqdm(total=len(run_indices), disable=not progress, desc="Monte Carlo") as bar:
                for future in as_completed(futures):
                    chunk = future.result()
                    results.extend(chunk)
                    bar.update(len(chunk))

    results.sort(key=lambda item: item[1]["run"])
    rows = [row for run_rows, _ in results for row in run_rows]
    runs = pd.DataFrame(rows)
    runs["method"] = pd.Categorical(runs["method"], categories=list(methods), ordered=True)
    runs = runs.sort_values(["run", "method"]).reset_index(drop=True)
    runs["method"] = runs["method"].astype(str)
    diagnostics = pd.DataFrame([d for _, d in results]).sort_values("run").reset_index(drop=True)
    failed = int((runs["status"] != "ok").sum())
    logger.info(f"Monte Carlo finished: {config.mc_runs} runs, {len(methods)} methods, {failed} failures")
    return MonteCarloResult(runs, diagnostics, methods)
