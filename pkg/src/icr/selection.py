"""Tuning of (lambda1, lambda2) by the modified BIC."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, replace

import numpy as np

from .admm import SolverConfig, SolverDivergence, Surrogate, full_objective, solve
from .core import ClusterSolution, PenaltySpec, apply_difference

log = logging.getLogger(__name__)

TIE_RTOL = 1e-9

SCORE_COLUMNS = ("lambda1", "lambda2", "mbic", "m_hat", "q_hat", "converged")


def count_distinct_nonzero(psi: np.ndarray, mode: str = "values") -> int:
    """Model complexity of a fitted coefficient matrix.

    ``mode="values"`` sums, over variables, the number of distinct nonzero
    values across clusters. ``mode="vectors"`` counts distinct nonzero
    cluster coefficient vectors times p, the vector-level reading.
    """
    psi = np.asarray(psi)
    if mode == "values":
        return int(sum(len(np.unique(row[row != 0])) for row in psi))
    if mode == "vectors":
        cols = {tuple(c) for c in psi.T if np.any(c != 0)}
        return len(cols) * psi.shape[0]
    raise ValueError(f"unknown complexity mode {mode!r}")


def complexity_constant(K: int, p: int) -> float:
    if K * p <= np.e:
        raise ValueError("log(log(K p)) needs K p > e")
    return float(np.log(np.log(K * p)))


def mbic(packets, solution: ClusterSolution, mode: str = "values") -> float:
    """Surrogate loss plus ``log(log(Kp)) * log(N)/N * q``."""
    sur = packets if isinstance(packets, Surrogate) else Surrogate(packets)
    loss, penalty = mbic_parts(sur, solution, mode)
    return loss + penalty


def mbic_parts(sur: Surrogate, solution: ClusterSolution, mode: str = "values") -> tuple[float, float]:
    q = count_distinct_nonzero(solution.psi, mode)
    c = complexity_constant(sur.K, sur.p)
    return sur.loss(solution.theta_hat), c * np.log(sur.N) / sur.N * q


def default_grids(sur: Surrogate, spec: PenaltySpec = PenaltySpec(), n1: int = 5, n2: int = 5):
    """Data-driven grids on the scale of the local estimates.

    Started from the local estimates, MCP keeps a group whose norm is well
    above ``tau * lambda`` and zeroes one well below it, so both grids are
    multiples of ``s = median_j ||theta_tilde_j|| / tau`` (rows j >= 1), a
    noise-level row norm since most rows are inactive. lambda1 spans
    ``[1, 3] * s`` and lambda2 ``[0.5, 4] * s``; the top of the lambda2 range
    fuses clients whose estimates differ by noise on the selected rows.
    """
    rows = np.linalg.norm(sur.theta_tilde[1:], axis=1)
    s = float(np.median(rows)) / spec.tau
    if not s > 0:
        s = 1.0 / spec.tau
    lam1 = s * np.logspace(0.0, np.log10(3.0), n1)
    lam2 = s * np.logspace(np.log10(0.5), np.log10(4.0), n2)
    return lam1, lam2


@dataclass
class GridResult:
    best: ClusterSolution
    table: list
    solutions: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for row in self.table:
            w.writerow([repr(float(row["lambda1"])), repr(float(row["lambda2"])), repr(float(row["mbic"])),
                        row["m_hat"], row["q_hat"], int(row["converged"])])
        return buf.getvalue()


def _fit_point(sur, spec, cfg, starts, mode):
    """Solve from each start; keep the lowest mBIC (then lowest objective)."""
    best = None
    for theta0, xi0 in starts:
        try:
            sol, _ = solve(sur, spec, cfg, theta_init=theta0, xi_init=xi0)
        except SolverDivergence as exc:
            log.warning("solver diverged at lambda=(%g, %g): %s", spec.lambda1, spec.lambda2, exc)
            continue
        loss, pen = mbic_parts(sur, sol, mode)
        key = (loss + pen, full_objective(sur, sol.theta_hat, spec))
        if best is None or key < best[0]:
            best = (key, sol)
    return None if best is None else best[1]


def grid_search(packets, lambda1_grid=None, lambda2_grid=None, spec_base: PenaltySpec = PenaltySpec(),
                cfg: SolverConfig = SolverConfig(), mode: str = "values", warm_start: bool = True) -> GridResult:
    """Fit every (lambda1, lambda2) pair and return the mBIC minimizer.

    For each lambda1 the lambda2 path is walked from large to small. Every
    point is solved from the local estimates and, with ``warm_start``, also
    from the previous solution on the same path. The objective is nonconvex
    and a fused path can stay stuck in a fused state its penalized objective
    favours, so among the starts the one with the lower mBIC is kept. Scores
    within a relative 1e-9 of the minimum are ties, broken toward larger
    lambda2, then larger lambda1.

    Returns
    -------
    GridResult
        ``table`` rows follow the grid order (lambda1 ascending, lambda2
        descending) and ``solutions`` is keyed by the same (i, j) indices.
    """
    sur = packets if isinstance(packets, Surrogate) else Surrogate(packets)
    d1, d2 = default_grids(sur, spec_base)
    lam1 = np.sort(np.asarray(d1 if lambda1_grid is None else lambda1_grid, dtype=float))
    lam2 = np.sort(np.asarray(d2 if lambda2_grid is None else lambda2_grid, dtype=float))[::-1]
    if lam1.size == 0 or lam2.size == 0:
        raise ValueError("empty tuning grid")

    table, sols = [], {}
    for i, l1 in enumerate(lam1):
        prev = None
        for j, l2 in enumerate(lam2):
            spec = replace(spec_base, lambda1=float(l1), lambda2=float(l2))
            starts = [(None, None)]
            if warm_start and prev is not None:
                starts.append((prev.info["theta_raw"], prev.info["xi"]))
            sol = _fit_point(sur, spec, cfg, starts, mode)
            if sol is None:
                table.append(dict(lambda1=float(l1), lambda2=float(l2), mbic=np.inf, m_hat=0, q_hat=0,
                                  converged=False))
                continue
            prev = sol
            loss, pen = mbic_parts(sur, sol, mode)
            sol.info["mbic"] = loss + pen
            sols[(i, j)] = sol
            if not sol.converged:
                log.warning("grid point lambda=(%g, %g) did not converge", l1, l2)
            table.append(dict(lambda1=float(l1), lambda2=float(l2), mbic=loss + pen, m_hat=sol.n_clusters,
                              q_hat=count_distinct_nonzero(sol.psi, mode), converged=sol.converged))

    if not sols:
        raise SolverDivergence("no grid point produced a solution")
    # scores within solver noise of the minimum count as ties
    low = min(row["mbic"] for row in table)
    tied = [r for r, row in enumerate(table) if row["mbic"] <= low + TIE_RTOL * (1.0 + abs(low))]
    pick = max(tied, key=lambda r: (table[r]["lambda2"], table[r]["lambda1"]))
    i, j = divmod(pick, len(lam2))
    return GridResult(best=sols[(i, j)], table=table, solutions=sols)
