"""Replicate runs of the clustered estimator against the Local and Oracle baselines."""
from __future__ import annotations

import csv
import io
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .admm import SolverConfig, Surrogate
from .core import ClusterSolution, PenaltySpec
from .local import ConvergenceWarning, LassoConfig, cv_lasso, debias, make_packet
from .metrics import METRIC_COLUMNS, replicate_metrics
from .selection import default_grids, grid_search
from .simulate import ScenarioSpec, generate, true_active, true_theta, truth

log = logging.getLogger(__name__)

METHODS = ("ICR", "Local", "Oracle")


def local_baseline(datasets, cfg: LassoConfig = LassoConfig(), debiased: bool = True,
                   threshold: float = 1e-8) -> np.ndarray:
    """Per-client estimates with no sharing: CV-Lasso, optional debiasing, hard threshold.

    Returns the p x K coefficient matrix.
    """
    cols = []
    for data in datasets:
        _, beta = cv_lasso(data, cfg)
        if debiased:
            beta = debias(data, beta, cfg)
        cols.append(np.where(np.abs(beta) > threshold, beta, 0.0))
    return np.column_stack(cols)


def oracle_baseline(packets, truth_partition, truth_active) -> ClusterSolution:
    """Aggregated quadratic minimized per true cluster over the true support.

    The intercept row is always part of the support.
    """
    sur = packets if isinstance(packets, Surrogate) else Surrogate(packets)
    support = sorted({0, *(int(j) for j in truth_active)})
    theta = np.zeros((sur.p, sur.K))
    labels = np.empty(sur.K, dtype=int)
    for m, members in enumerate(truth_partition):
        members = list(members)
        H = np.einsum("k,kij->ij", sur.frac[members], sur.V[members])[np.ix_(support, support)]
        b = (sur.zeta[:, members] @ sur.frac[members])[support]
        try:
            coef = np.linalg.solve(H, b)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"oracle block for cluster {m} is singular") from exc
        theta[np.ix_(support, members)] = coef[:, None]
        labels[members] = m
    return ClusterSolution.from_labels(theta, labels, converged=True)


@dataclass(frozen=True)
class BenchConfig:
    methods: tuple = ("ICR", "Oracle")
    replicates: int = 20
    n_lambda1: int = 5
    n_lambda2: int = 5
    lambda1_grid: tuple | None = None
    lambda2_grid: tuple | None = None
    penalty: PenaltySpec = PenaltySpec()
    solver: SolverConfig = SolverConfig()
    lasso: LassoConfig = LassoConfig()
    local_debiased: bool = True

    def __post_init__(self):
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if self.replicates < 1:
            raise ValueError("replicates must be positive")


def run_replicate(spec: ScenarioSpec, replicate: int, cfg: BenchConfig) -> dict:
    """Every requested method on one replicate; returns ``{method: metrics}``."""
    datasets = generate(spec, replicate)
    lasso = replace(cfg.lasso, seed=spec.seed)
    theta_star = true_theta(spec)
    _, partition = truth(spec)
    active = true_active(spec)
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        packets = [make_packet(d, lasso, str(k)) for k, d in enumerate(datasets)]
        sur = Surrogate(packets)
        if "ICR" in cfg.methods:
            d1, d2 = default_grids(sur, cfg.penalty, cfg.n_lambda1, cfg.n_lambda2)
            grid = grid_search(sur, cfg.lambda1_grid or d1, cfg.lambda2_grid or d2, cfg.penalty, cfg.solver)
            sol = grid.best
            out["ICR"] = replicate_metrics(sol.theta_hat, sol.labels, theta_star, partition, active)
        if "Local" in cfg.methods:
            theta = local_baseline(datasets, lasso, cfg.local_debiased)
            out["Local"] = replicate_metrics(theta, np.arange(spec.K), theta_star, partition, active)
        if "Oracle" in cfg.methods:
            sol = oracle_baseline(sur, partition, active)
            out["Oracle"] = replicate_metrics(sol.theta_hat, sol.labels, theta_star, partition, active)
    return out


def _run_one(args):
    spec, r, cfg = args
    return r, run_replicate(spec, r, cfg)


def run_replicates(spec: ScenarioSpec, cfg: BenchConfig = BenchConfig(), threads: int = 1):
    """Run ``cfg.replicates`` replicates and collect per-replicate metrics.

    Replicates are independent and seeded by (seed, replicate, client), so
    the result does not depend on ``threads``.

    Returns
    -------
    list of dict
        One ``{method: metrics}`` entry per replicate, in replicate order.
    """
    jobs = [(spec, r, cfg) for r in range(cfg.replicates)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = dict(pool.map(_run_one, jobs))
    else:
        results = dict(map(_run_one, jobs))
    return [results[r] for r in range(cfg.replicates)]


def summarize(per_replicate, methods=None) -> dict:
    """Mean and sd (ddof=0) of every metric per method."""
    methods = methods or [m for m in METHODS if m in per_replicate[0]]
    table = {}
    for m in methods:
        vals = np.array([[rep[m][c] for c in METRIC_COLUMNS] for rep in per_replicate])
        table[m] = {c: (float(vals[:, i].mean()), float(vals[:, i].std())) for i, c in enumerate(METRIC_COLUMNS)}
    return table


def table_csv(summary: dict, digits: int = 3) -> str:
    """Render a summary as CSV cells ``mean (sd)``, one row per method."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("method",) + METRIC_COLUMNS)
    for m, row in summary.items():
        w.writerow([m] + [f"{row[c][0]:.{digits}f} ({row[c][1]:.{digits}f})" for c in METRIC_COLUMNS])
    return buf.getvalue()


def replicates_csv(per_replicate) -> str:
    """Long-form per-replicate metrics with full float precision."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("replicate", "method") + METRIC_COLUMNS)
    for r, rep in enumerate(per_replicate):
        for m in METHODS:
            if m in rep:
                w.writerow([r, m] + [repr(float(rep[m][c])) for c in METRIC_COLUMNS])
    return buf.getvalue()
