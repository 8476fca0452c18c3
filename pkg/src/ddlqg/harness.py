"""Monte Carlo convergence study and concentration-lemma checks.

For each dataset size N in the grid and each repetition, a fresh open-loop
dataset is drawn and the data-driven objects are compared against the
model-based oracles computed at the start of the same run:

    a  ||K_LQR^D - K_LQR||_2
    b  ||L_T^D - L_T^KF||_2
    c  aggregate over t of ||xh_D(t) - xh_KF(t)|| on a fresh test trajectory
    d  ||u_dLQG - u_LQG|| over one episode (shared noise by default)
    e  ||K_LQG^D - K_LQG||_2

Cells (N, rep) are independent and may run in worker processes; every random
stream is keyed by (seed, stream, N, rep), and results are merged in sorted
order, so the report does not depend on the worker count.
"""

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np
from scipy import stats
from threadpoolctl import threadpool_limits

from .closedloop import StackedFilterController, draw_noise, simulate_closed_loop
from .errors import DDLQGError, ValidationError
from .kalman import filter_bank_from_data
from .lqg import collect_closed_loop_dataset, lqg_gain_from_data
from .lqr import build_synthesis, default_initial_states, lqr_gain_from_data
from .oracle import feedback_trajectory, kalman_oracle, lqg_static_gain, lqr_gain
from .system import (CostWeights, ExperimentInputSpec, LinearSystem, derive_seed,
                     generate_open_loop_dataset, make_rng, simulate_trajectory)

log = logging.getLogger(__name__)

PANELS = ("a", "b", "c", "d", "e")
PANEL_METRICS = {
    "a": "||K_LQR^D - K_LQR||_2",
    "b": "||L_T^D - L_T^KF||_2",
    "c": "agg_t ||xhat_D(t) - xhat_KF(t)||_2",
    "d": "||u_dLQG - u_LQG||_2",
    "e": "||K_LQG^D - K_LQG||_2",
}
STREAM_DATASET, STREAM_TEST, STREAM_EPISODE, STREAM_CLOSED_LOOP = 0, 3, 4, 5
MEDIAN_SE_FACTOR = math.sqrt(math.pi / 2)


@dataclass(frozen=True)
class ExperimentConfig:
    system: LinearSystem
    weights: CostWeights
    Sigma_u: np.ndarray
    T: int
    N_grid: tuple
    repetitions: int
    panels: tuple = PANELS
    seed: int = 0
    M: int = 100
    x0_set: tuple = None
    state_error_aggregate: str = "max"
    input_pairing: str = "shared"
    thresholds: dict = field(default_factory=dict)

    def __post_init__(self):
        grid = tuple(int(N) for N in self.N_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValidationError(f"N_grid must be non-empty and strictly increasing, got {grid}")
        object.__setattr__(self, "N_grid", grid)
        if self.repetitions < 1:
            raise ValidationError("repetitions must be >= 1")
        panels = tuple(sorted(set(self.panels)))
        if not panels or any(p not in PANELS for p in panels):
            raise ValidationError(f"panels must be a non-empty subset of {PANELS}, got {self.panels}")
        object.__setattr__(self, "panels", panels)
        if self.state_error_aggregate not in ("max", "mean"):
            raise ValidationError("state_error_aggregate must be 'max' or 'mean'")
        if self.input_pairing not in ("shared", "independent"):
            raise ValidationError("input_pairing must be 'shared' or 'independent'")
        if self.x0_set is None:
            object.__setattr__(self, "x0_set", tuple(default_initial_states(self.system.n)))
        else:
            object.__setattr__(self, "x0_set",
                               tuple(np.asarray(x, dtype=float).reshape(-1) for x in self.x0_set))
        ExperimentInputSpec(self.Sigma_u, self.T, 1)  # validates Sigma_u and T

    @classmethod
    def from_config(cls, cfg, seed=None):
        h = cfg.get("harness", {})
        return cls(system=LinearSystem.from_config(cfg), weights=CostWeights.from_config(cfg),
                   Sigma_u=np.atleast_2d(np.asarray(cfg["Sigma_u"], dtype=float)), T=cfg["T"],
                   N_grid=h.get("N_grid", [cfg["N"]]), repetitions=h.get("repetitions", 1),
                   panels=tuple(h.get("panels", PANELS)),
                   seed=cfg.get("seed", 0) if seed is None else seed, M=h.get("M", 100),
                   x0_set=h.get("x0_set"),
                   state_error_aggregate=h.get("state_error_aggregate", "max"),
                   input_pairing=h.get("input_pairing", "shared"),
                   thresholds=h.get("thresholds", {}))

    def describe(self):
        return {"N_grid": list(self.N_grid), "repetitions": self.repetitions,
                "panels": list(self.panels), "seed": self.seed, "T": self.T, "M": self.M,
                "x0_set": [x.tolist() for x in self.x0_set],
                "state_error_aggregate": self.state_error_aggregate,
                "input_pairing": self.input_pairing,
                "system": {k: getattr(self.system, k).tolist()
                           for k in ("A", "B", "C", "Q_w", "R_v", "Sigma0")},
                "weights": {"Q_x": self.weights.Q_x.tolist(), "R_u": self.weights.R_u.tolist()},
                "Sigma_u": np.asarray(self.Sigma_u).tolist()}


@dataclass(frozen=True)
class Oracles:
    K_lqr: np.ndarray
    kalman: object
    static: object
    references: list


def build_oracles(config):
    """Model-based ground truth for one run. Failures here abort the run."""
    K = lqr_gain(config.system, config.weights)
    static = lqg_static_gain(config.system, config.weights) if "e" in config.panels else None
    refs = [feedback_trajectory(config.system, K, x0, config.T)[1] for x0 in config.x0_set]
    return Oracles(K_lqr=K, kalman=kalman_oracle(config.system, config.T), static=static,
                   references=refs)


def _failure(exc):
    return f"failed: {type(exc).__name__}: {exc}"


def run_cell(config, oracles, N, rep):
    """Errors for every requested panel at one (N, rep).

    Returns:
        (results, diagnostics) where results maps panel -> (value or None,
        status string).
    """
    system, T = config.system, config.T
    panels = config.panels
    results = {}
    diag = {"N": N, "rep": rep}
    spec = ExperimentInputSpec(config.Sigma_u, T, N, derive_seed(config.seed, STREAM_DATASET, N, rep))
    dataset = generate_open_loop_dataset(system, spec)

    K_d = bank = None
    lqr_error = bank_error = None
    if any(p in panels for p in "ade"):
        try:
            synth = build_synthesis(dataset, config.weights)
            est = lqr_gain_from_data(dataset, config.weights, config.x0_set,
                                     reference=oracles.references, synth=synth)
            K_d = est.K
            diag.update(kappa=est.kappa, sigma_min_xm=est.sigma_min_xm,
                        sigma_min_data=synth.sigma_min_data)
        except DDLQGError as exc:
            lqr_error = exc
    if any(p in panels for p in "bcde"):
        try:
            bank = filter_bank_from_data(dataset)
            diag["min_sigma_Z"] = float(np.min(bank.conditioning))
        except DDLQGError as exc:
            bank_error = exc

    if "a" in panels:
        results["a"] = ((float(np.linalg.norm(K_d - oracles.K_lqr, 2)), "ok") if K_d is not None
                        else (None, _failure(lqr_error)))
    if "b" in panels:
        if bank is None:
            results["b"] = (None, _failure(bank_error))
        else:
            errs = [np.linalg.norm(bank.gains[t] - oracles.kalman.gains[t], 2) for t in range(T + 1)]
            results["b"] = (float(errs[T]), "ok")
            diag["b_max_over_t"] = float(max(errs))
    if "c" in panels:
        results["c"] = (_state_error(config, oracles, bank, N, rep), "ok") if bank is not None \
            else (None, _failure(bank_error))
    if "d" in panels or "e" in panels:
        missing = lqr_error or bank_error
        for p in ("d", "e"):
            if p in panels and missing is not None:
                results[p] = (None, _failure(missing))
        if missing is None:
            if "d" in panels:
                try:
                    results["d"] = (_input_error(config, oracles, K_d, bank, N, rep), "ok")
                except DDLQGError as exc:
                    results["d"] = (None, _failure(exc))
            if "e" in panels:
                try:
                    cl = collect_closed_loop_dataset(
                        system, K_d, bank, config.M,
                        derive_seed(config.seed, STREAM_CLOSED_LOOP, N, rep))
                    est = lqg_gain_from_data(cl, K_d, bank)
                    err = float(np.linalg.norm(est.K - oracles.static.K, 2))
                    results["e"] = (err, "ok")
                    diag.update(c4_norm=est.c4_norm, e_over_c4=err / est.c4_norm)
                except DDLQGError as exc:
                    results["e"] = (None, _failure(exc))
    return results, diag


def _state_error(config, oracles, bank, N, rep):
    system, T = config.system, config.T
    test_seed = derive_seed(config.seed, STREAM_TEST, N, rep)
    rng = make_rng(test_seed, 1)
    x0 = np.linalg.cholesky(system.Sigma0) @ rng.standard_normal(system.n)
    u = np.linalg.cholesky(config.Sigma_u) @ rng.standard_normal((system.m, T))
    traj = simulate_trajectory(system, u, x0, test_seed)
    u_flat = traj.inputs.T.reshape(-1)
    y_flat = traj.outputs.T.reshape(-1)
    errs = []
    for t in range(T + 1):
        z = np.concatenate([u_flat[:system.m * t], y_flat[:system.p * (t + 1)]])
        errs.append(np.linalg.norm((bank.gains[t] - oracles.kalman.gains[t]) @ z))
    return float(max(errs) if config.state_error_aggregate == "max" else np.mean(errs))


def _input_error(config, oracles, K_d, bank, N, rep):
    system, T = config.system, config.T
    seed = derive_seed(config.seed, STREAM_EPISODE, N, rep)
    noise = draw_noise(system, T + 1, [seed])
    noise_oracle = noise if config.input_pairing == "shared" else \
        draw_noise(system, T + 1, [derive_seed(config.seed, STREAM_EPISODE, N, rep, 1)])
    dd = simulate_closed_loop(system, StackedFilterController(K_d, bank), noise)
    ref = simulate_closed_loop(system, StackedFilterController(oracles.K_lqr, oracles.kalman),
                               noise_oracle)
    return float(np.linalg.norm(dd.inputs - ref.inputs))


def _cell_task(config, oracles, key):
    with threadpool_limits(limits=1):
        return key, run_cell(config, oracles, *key)


# -- statistics ---------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    half_width: float
    n_points: int


def fit_rate(errors, confidence=0.95):
    """OLS fit of log(value) = intercept + slope * log(N).

    Args:
        errors: iterable of (N, value) pairs; repeated N values are fine.

    Returns:
        :class:`RateFit` with the two-sided ``confidence`` half-width of the
        slope (Student t, from the residual variance).

    Raises:
        ValidationError: fewer than 3 distinct N, or a nonpositive value.
    """
    pts = [(float(N), float(v)) for N, v in errors]
    if any(v <= 0 or not math.isfinite(v) for _, v in pts) or any(N <= 0 for N, _ in pts):
        raise ValidationError("rate fitting needs strictly positive N and error values")
    if len({N for N, _ in pts}) < 3:
        raise ValidationError("rate fitting needs at least 3 distinct N values")
    x = np.log([N for N, _ in pts])
    y = np.log([v for _, v in pts])
    k = len(pts)
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    dof = k - 2
    s2 = float(np.sum(resid ** 2) / dof)
    half = float(stats.t.ppf(0.5 + confidence / 2, dof) * math.sqrt(s2 / sxx))
    return RateFit(slope, intercept, half, k)


def summarize(values):
    v = np.asarray(values, dtype=float)
    k = len(v)
    if k == 0:
        return dict(median=None, mean=None, std=None, stderr_median=None, n_ok=0)
    std = float(np.std(v, ddof=1)) if k > 1 else None
    return dict(median=float(np.median(v)), mean=float(np.mean(v)), std=std,
                stderr_median=MEDIAN_SE_FACTOR * std / math.sqrt(k) if std is not None else None,
                n_ok=k)


def monotone_check(rows, max_inversions=1):
    """Non-increasing medians along N, tolerating a few small inversions.

    An inversion (median rising from one N to the next) is tolerated only if
    the rise is within one combined standard error of the two medians.

    Returns:
        (passed, detail)
    """
    rows = sorted(rows, key=lambda r: r["N"])
    missing = [r["N"] for r in rows if r["median"] is None]
    if missing:
        return False, f"no successful cells at N={missing}"
    inversions = []
    for a, b in zip(rows, rows[1:]):
        rise = b["median"] - a["median"]
        if rise > 0:
            se = math.hypot(a["stderr_median"] or 0.0, b["stderr_median"] or 0.0)
            inversions.append((a["N"], b["N"], rise, se))
    bad = [inv for inv in inversions if inv[2] > inv[3]]
    passed = len(inversions) <= max_inversions and not bad
    detail = "medians " + ", ".join(f"{r['N']}:{r['median']:.4g}" for r in rows)
    if inversions:
        detail += "; inversions " + ", ".join(f"{a}->{b} rise {r:.3g} (se {s:.3g})"
                                              for a, b, r, s in inversions)
    return passed, detail


# -- report -------------------------------------------------------------------

@dataclass
class ConvergenceReport:
    """Plain-data report: everything is JSON serializable as is."""

    config: dict
    cells: list
    diagnostics: list
    summary: list
    fits: dict
    checks: list

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks)

    def to_dict(self):
        return {"config": self.config, "cells": self.cells, "diagnostics": self.diagnostics,
                "summary": self.summary, "fits": self.fits, "checks": self.checks}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in ("config", "cells", "diagnostics", "summary", "fits",
                                          "checks")})

    @classmethod
    def empty(cls):
        return cls(config={}, cells=[], diagnostics=[], summary=[], fits={}, checks=[])

    def panel_rows(self, panel):
        return [r for r in self.summary if r["panel"] == panel]

    def panel_values(self, panel):
        return [(c["N"], c["error"]) for c in self.cells
                if c["panel"] == panel and c["error"] is not None]


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, (np.floating,)):
        return _clean(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def evaluate_thresholds(report, thresholds):
    """Checks embedded in the config.

    Recognized keys:
        slope_range: {"panels": [...], "range": [lo, hi]}
        monotone: {"panels": [...], "max_inversions": k}
        negative_slope: {"panels": [...]}   (upper confidence bound < 0)
    """
    checks = []
    if "slope_range" in thresholds:
        lo, hi = thresholds["slope_range"]["range"]
        for p in thresholds["slope_range"]["panels"]:
            fit = report.fits.get(p, {})
            s = fit.get("slope")
            ok = s is not None and lo <= s <= hi
            checks.append({"name": f"slope_range[{p}]", "passed": ok,
                           "detail": f"slope {s} vs [{lo}, {hi}]" if s is not None
                           else f"slope undefined: {fit.get('note')}"})
    if "monotone" in thresholds:
        k = thresholds["monotone"].get("max_inversions", 1)
        for p in thresholds["monotone"]["panels"]:
            ok, detail = monotone_check(report.panel_rows(p), k)
            checks.append({"name": f"monotone[{p}]", "passed": ok, "detail": detail})
    if "negative_slope" in thresholds:
        for p in thresholds["negative_slope"]["panels"]:
            fit = report.fits.get(p, {})
            s = fit.get("slope")
            ok = s is not None and s + fit["half_width"] < 0
            checks.append({"name": f"negative_slope[{p}]", "passed": ok,
                           "detail": f"slope {s} +/- {fit.get('half_width')}" if s is not None
                           else f"slope undefined: {fit.get('note')}"})
    return checks


def run_convergence(config, workers=1):
    """Run every (N, rep) cell and assemble a :class:`ConvergenceReport`.

    Oracle failures propagate; data-driven failures are recorded per cell.
    The headline slope per panel is an OLS fit over all successful cells,
    which gives a usable confidence half-width; ``median_slope`` fits the
    per-N medians instead and is reported alongside.
    """
    oracles = build_oracles(config)
    keys = [(N, rep) for N in config.N_grid for rep in range(config.repetitions)]
    task = partial(_cell_task, config, oracles)
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = dict(pool.map(task, keys))
    else:
        outcomes = dict(map(task, keys))

    cells, diagnostics = [], []
    for key in sorted(outcomes):
        results, diag = outcomes[key]
        diagnostics.append({k: _clean(v) for k, v in diag.items()})
        for p in config.panels:
            value, status = results[p]
            cells.append({"panel": p, "N": key[0], "rep": key[1], "error": _clean(value),
                          "status": status})
            if value is None:
                log.info("panel %s N=%d rep=%d %s", p, key[0], key[1], status)

    summary, fits = [], {}
    for p in config.panels:
        for N in config.N_grid:
            vals = [c["error"] for c in cells if c["panel"] == p and c["N"] == N
                    and c["error"] is not None]
            row = {"panel": p, "N": N, **summarize(vals),
                   "n_failed": config.repetitions - len(vals)}
            summary.append(row)
        pts = [(c["N"], c["error"]) for c in cells if c["panel"] == p and c["error"] is not None]
        try:
            fit = fit_rate(pts)
            fits[p] = {"slope": fit.slope, "intercept": fit.intercept,
                       "half_width": _clean(fit.half_width), "n_points": fit.n_points,
                       "note": None}
        except ValidationError as exc:
            fits[p] = {"slope": None, "intercept": None, "half_width": None,
                       "n_points": len(pts), "note": str(exc)}
        medians = [(r["N"], r["median"]) for r in summary
                   if r["panel"] == p and r["median"] is not None]
        try:
            fits[p]["median_slope"] = fit_rate(medians).slope
        except ValidationError:
            fits[p]["median_slope"] = None
    report = ConvergenceReport(config=config.describe(), cells=cells, diagnostics=diagnostics,
                               summary=summary, fits=fits, checks=[])
    report.checks = evaluate_thresholds(report, config.thresholds)
    return report


# -- emission -----------------------------------------------------------------

CELL_FIELDS = ["panel", "N", "rep", "error", "status"]
SUMMARY_FIELDS = ["panel", "N", "median", "mean", "std", "stderr_median", "n_ok", "n_failed",
                  "slope", "intercept", "half_width", "median_slope"]
DIAG_FIELDS = ["N", "rep", "kappa", "sigma_min_xm", "sigma_min_data", "min_sigma_Z",
               "b_max_over_t", "c4_norm", "e_over_c4"]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv_text(fields, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for r in rows:
        writer.writerow([_fmt(r.get(f)) for f in fields])
    return buf.getvalue()


def report_json(report):
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def emit_report(report, path, fmt="csv"):
    """Write the report under directory ``path``.

    csv: one ``panel_<x>.csv`` per panel (panel,N,rep,error,status),
    ``summary.csv`` (per-N statistics with the panel's fitted slope) and
    ``diagnostics.csv``. json: ``report.json`` holding the full report.

    Returns:
        list of written paths.
    """
    path = Path(path)
    files = {}
    if fmt == "json":
        files["report.json"] = report_json(report)
    elif fmt == "csv":
        panels = sorted({c["panel"] for c in report.cells} | {r["panel"] for r in report.summary})
        for p in panels:
            files[f"panel_{p}.csv"] = _csv_text(CELL_FIELDS,
                                                [c for c in report.cells if c["panel"] == p])
        rows = [{**r, **{k: report.fits.get(r["panel"], {}).get(k)
                         for k in ("slope", "intercept", "half_width", "median_slope")}}
                for r in report.summary]
        files["summary.csv"] = _csv_text(SUMMARY_FIELDS, rows)
        files["diagnostics.csv"] = _csv_text(DIAG_FIELDS, report.diagnostics)
    else:
        raise ValidationError(f"unknown report format {fmt!r}")
    written = []
    try:
        path.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            target = path / name
            with open(target, "w", newline="") as fh:
                fh.write(text)
            written.append(target)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return written


def load_report(path):
    with open(path) as fh:
        return ConvergenceReport.from_dict(json.load(fh))


# -- concentration lemmas -----------------------------------------------------

@dataclass(frozen=True)
class ProductCheck:
    frequency: float
    threshold: float
    reps: int


@dataclass(frozen=True)
class SingularValueCheck:
    freq_min: float
    freq_max: float
    reps: int

    def __iter__(self):
        return iter((self.freq_min, self.freq_max))


def gaussian_product_min_N(n, m, delta):
    return 2 * (n + m) * math.log(1 / delta)


def singular_value_min_N(n, delta):
    return 8 * n + 16 * math.log(1 / delta)


def lemma_check_gaussian_product(n, m, N, delta=0.05, reps=500, seed=0, Sigma_a=None,
                                 Sigma_b=None):
    """Empirical frequency of ||A B'||_2 exceeding the product bound.

    A is n x N with columns N(0, Sigma_a), B is m x N with columns
    N(0, Sigma_b); the bound is
    4 ||Sigma_a||^1/2 ||Sigma_b||^1/2 sqrt(N (n+m) log(9/delta)).
    """
    if N < gaussian_product_min_N(n, m, delta):
        raise ValidationError(f"need N >= 2(n+m)log(1/delta) = "
                              f"{gaussian_product_min_N(n, m, delta):.2f}, got N={N}")
    Sa = np.eye(n) if Sigma_a is None else np.atleast_2d(np.asarray(Sigma_a, dtype=float))
    Sb = np.eye(m) if Sigma_b is None else np.atleast_2d(np.asarray(Sigma_b, dtype=float))
    rng = make_rng(seed, 11)
    La, Lb = np.linalg.cholesky(Sa), np.linalg.cholesky(Sb)
    A = La @ rng.standard_normal((reps, n, N))
    B = Lb @ rng.standard_normal((reps, m, N))
    norms = np.linalg.norm(A @ B.transpose(0, 2, 1), ord=2, axis=(1, 2))
    threshold = 4 * math.sqrt(np.linalg.norm(Sa, 2) * np.linalg.norm(Sb, 2)) \
        * math.sqrt(N * (n + m) * math.log(9 / delta))
    return ProductCheck(float(np.mean(norms > threshold)), threshold, reps)


def lemma_check_singular_values(n, N, delta=0.05, reps=1000, seed=0):
    """Frequencies of sigma_min < sqrt(N)/2 and sigma_max > 3 sqrt(N)/2 for n x N Gaussians."""
    if N < singular_value_min_N(n, delta):
        raise ValidationError(f"need N >= 8n + 16 log(1/delta) = "
                              f"{singular_value_min_N(n, delta):.2f}, got N={N}")
    rng = make_rng(seed, 12)
    s = np.linalg.svd(rng.standard_normal((reps, n, N)), compute_uv=False)
    root = math.sqrt(N)
    return SingularValueCheck(float(np.mean(s[:, -1] < root / 2)),
                              float(np.mean(s[:, 0] > 1.5 * root)), reps)
