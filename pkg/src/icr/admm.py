"""Proximal ADMM for the clustered regression objective.

The server-side problem is::

    (1/N) sum_k n_k (theta_k' V_k theta_k - 2 theta_k' zeta_k)
        + sum_{j>=2} p(||theta_j||, lambda1)                 (row sparsity)
        + sum_{k<k'} p(||theta_k - theta_k'||, lambda2)      (client fusion)

The fusion penalty is linearized (LLA) into weighted group norms of the
pairwise differences ``alpha = theta A``. The outer loop is a method of
multipliers on that constraint; each inner problem in theta alone is smooth
plus the row penalty once alpha is minimized out, and is solved by FISTA.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .core import (ClusterSolution, FusionState, PenaltySpec, SummaryPacket, apply_difference,
                   apply_difference_adjoint, check_packets, pair_arrays)
from .penalties import group_prox, penalty_deriv, penalty_value, project_ball, weighted_group_soft

log = logging.getLogger(__name__)


class SolverDivergence(RuntimeError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


@dataclass(frozen=True)
class SolverConfig:
    outer_max: int = 100
    outer_tol: float = 1e-5
    inner_max: int = 500
    inner_tol: float = 1e-6
    cluster_merge_from_alpha: bool = True
    inner_weight_refresh: bool = True
    momentum_reset_after: int = 10

    def __post_init__(self):
        if self.outer_tol <= 0 or self.inner_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.outer_max < 1 or self.inner_max < 1:
            raise ValueError("iteration limits must be positive")


@dataclass
class SolveTrace:
    objective: list = field(default_factory=list)
    primal_residual: list = field(default_factory=list)
    dual_residual: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    converged: bool = False

    def __len__(self):
        return len(self.objective)


class Surrogate:
    """Quadratic surrogate loss assembled from client packets.

    Holds the stacked Hessians ``V`` (K x p x p), ``zeta`` (p x K) and the
    column weights ``n_k / N``.
    """

    def __init__(self, packets):
        packets = list(packets)
        self.p = check_packets(packets)
        self.K = len(packets)
        n = np.array([pk.n for pk in packets], dtype=float)
        self.N = float(n.sum())
        self.frac = n / self.N
        self.V = np.stack([pk.hessian_tilde for pk in packets])
        self.zeta = np.column_stack([pk.zeta for pk in packets])
        self.theta_tilde = np.column_stack([pk.theta_tilde for pk in packets])

    def _Vtheta(self, theta):
        return np.matmul(self.V, theta.T[:, :, None])[:, :, 0].T

    def loss(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        quad = np.sum(theta * self._Vtheta(theta), axis=0) - 2.0 * np.sum(theta * self.zeta, axis=0)
        return float(np.dot(self.frac, quad))

    def gradient(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return 2.0 * self.frac * (self._Vtheta(theta) - self.zeta)

    def lipschitz(self) -> float:
        """Largest curvature of the loss term over all columns."""
        top = np.array([np.linalg.eigvalsh(Vk)[-1] for Vk in self.V])
        return float(np.max(2.0 * self.frac * top))

    def pooled_minimizer(self, members=None) -> np.ndarray:
        """Minimizer of the loss when the given clients share one coefficient vector."""
        idx = np.arange(self.K) if members is None else np.asarray(members)
        H = np.einsum("k,kij->ij", self.frac[idx], self.V[idx])
        b = self.zeta[:, idx] @ self.frac[idx]
        return np.linalg.solve(H, b)


def surrogate_loss(packets, theta) -> float:
    return Surrogate(packets).loss(theta)


def surrogate_gradient(packets, theta) -> np.ndarray:
    return Surrogate(packets).gradient(theta)


def lla_weights(theta_ref, spec: PenaltySpec) -> np.ndarray:
    d = apply_difference(theta_ref)
    return penalty_deriv(np.linalg.norm(d, axis=0), spec.lambda2, spec.tau, spec.family)


def _fusion_dual(theta, xi, weights, nu):
    return project_ball(nu * apply_difference(theta) + xi, weights, axis=0)


def eta2_gradient(sur: Surrogate, theta, xi, weights, nu: float) -> np.ndarray:
    """Gradient of the loss plus the alpha-minimized augmented Lagrangian terms."""
    g = sur.gradient(theta)
    if sur.K < 2:
        return g
    return g + apply_difference_adjoint(_fusion_dual(theta, xi, weights, nu), sur.K)


def eta2_value(sur: Surrogate, theta, xi, weights, nu: float) -> float:
    """Loss plus ``min_alpha`` of the weighted-norm / multiplier / quadratic terms."""
    val = sur.loss(theta)
    if sur.K < 2:
        return val
    d = apply_difference(theta)
    alpha = weighted_group_soft(d + xi / nu, weights / nu, axis=0)
    r = d - alpha
    return (val + float(np.dot(weights, np.linalg.norm(alpha, axis=0)))
            + float(np.sum(xi * r)) + 0.5 * nu * float(np.sum(r * r)))


def dual_step(theta, xi_prev, weights, nu: float) -> np.ndarray:
    return _fusion_dual(theta, xi_prev, weights, nu)


def recover_alpha(theta, xi, weights, nu: float) -> np.ndarray:
    return weighted_group_soft(apply_difference(theta) + xi / nu, np.asarray(weights) / nu, axis=0)


def row_penalty(theta, spec: PenaltySpec) -> float:
    norms = np.linalg.norm(np.asarray(theta)[1:], axis=1)
    return float(np.sum(penalty_value(norms, spec.lambda1, spec.tau, spec.family)))


def fusion_penalty(theta, spec: PenaltySpec) -> float:
    norms = np.linalg.norm(apply_difference(theta), axis=0)
    return float(np.sum(penalty_value(norms, spec.lambda2, spec.tau, spec.family)))


def full_objective(sur: Surrogate, theta, spec: PenaltySpec) -> float:
    """The unlinearized objective: surrogate loss plus both concave penalties."""
    return sur.loss(theta) + row_penalty(theta, spec) + fusion_penalty(theta, spec)


def step_size(sur: Surrogate, nu: float) -> float:
    """Reciprocal Lipschitz bound ``max(1, L_loss) + 2 nu (K-1)`` of the smooth part."""
    return 1.0 / (max(1.0, sur.lipschitz()) + 2.0 * nu * (sur.K - 1))


def _prox_rows(z, sigma, spec: PenaltySpec):
    out = z.copy()
    if spec.lambda1 > 0:
        out[1:] = group_prox(z[1:], sigma, spec.lambda1, spec.tau, spec.family, axis=1)
    return out


def fista_theta_step(sur: Surrogate, theta0, xi, spec: PenaltySpec, cfg: SolverConfig = SolverConfig(),
                     weights=None, sigma=None):
    """Approximately minimize ``eta2 + h2`` over theta with the duals held fixed.

    Returns ``(theta, weights, n_iter)`` where ``weights`` are the LLA
    weights in force at the last step.
    """
    sigma = step_size(sur, spec.nu) if sigma is None else sigma
    theta = np.array(theta0, dtype=float)
    u = theta.copy()
    rho = 1.0
    if weights is None or cfg.inner_weight_refresh:
        weights = lla_weights(u, spec) if sur.K > 1 else np.zeros(0)
    ref = None
    bad_run = 0
    prev_obj = np.inf
    for s in range(1, cfg.inner_max + 1):
        if cfg.inner_weight_refresh and sur.K > 1:
            weights = lla_weights(u, spec)
        grad = eta2_gradient(sur, u, xi, weights, spec.nu)
        new = _prox_rows(u - sigma * grad, sigma, spec)
        rho_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * rho * rho))
        change = np.max(np.abs(new - theta))
        u = new + ((rho - 1.0) / rho_next) * (new - theta)
        theta, rho = new, rho_next

        if cfg.momentum_reset_after:
            obj = eta2_value(sur, theta, xi, weights, spec.nu) + row_penalty(theta, spec)
            if ref is None:
                ref = abs(obj) + 1.0
            if not np.isfinite(obj) or obj - prev_obj > 1e3 * ref:
                raise SolverDivergence(f"inner objective diverged at step {s} (value {obj:g})")
            bad_run = bad_run + 1 if obj > prev_obj else 0
            prev_obj = obj
            if bad_run >= cfg.momentum_reset_after:
                rho, u, bad_run = 1.0, theta.copy(), 0
        if change <= cfg.inner_tol:
            return theta, weights, s
    return theta, weights, cfg.inner_max


def _components(alpha, K):
    first, second = pair_arrays(K)
    fused = ~np.any(alpha != 0, axis=0)
    graph = coo_matrix((np.ones(fused.sum()), (first[fused], second[fused])), shape=(K, K))
    _, labels = connected_components(graph, directed=False)
    return labels


def _components_by_value(theta, tol):
    K = theta.shape[1]
    first, second = pair_arrays(K)
    close = np.max(np.abs(apply_difference(theta)), axis=0) <= tol if K > 1 else np.zeros(0, bool)
    graph = coo_matrix((np.ones(close.sum()), (first[close], second[close])), shape=(K, K))
    return connected_components(graph, directed=False)[1]


def solve(packets, spec: PenaltySpec, cfg: SolverConfig = SolverConfig(), theta_init=None, xi_init=None):
    """Fit the clustered model from client packets.

    Parameters
    ----------
    packets : sequence of SummaryPacket, or a prebuilt :class:`Surrogate`
    spec : PenaltySpec
    cfg : SolverConfig
    theta_init : p x K array, optional
        Starting coefficients; defaults to the clients' local estimates.
    xi_init : p x K(K-1)/2 array, optional
        Starting duals; defaults to zero.

    Returns
    -------
    (ClusterSolution, SolveTrace)
    """
    sur = packets if isinstance(packets, Surrogate) else Surrogate(packets)
    K, p = sur.K, sur.p
    sigma = step_size(sur, spec.nu)
    if spec.family == "mcp" and not spec.tau > sigma:
        raise ValueError(f"tau={spec.tau} must exceed the step size {sigma:g}")

    theta = sur.theta_tilde.copy() if theta_init is None else np.array(theta_init, dtype=float)
    if theta.shape != (p, K):
        raise ValueError(f"theta_init has shape {theta.shape}, expected {(p, K)}")
    state = FusionState.zeros(p, K)
    if xi_init is not None:
        state.xi = np.array(xi_init, dtype=float)
    state.weights = lla_weights(theta, spec) if K > 1 else np.zeros(0)

    trace = SolveTrace()
    start_obj = full_objective(sur, theta, spec)
    best = (start_obj, theta.copy(), state.xi.copy(), state.weights.copy())
    alpha_prev = recover_alpha(theta, state.xi, state.weights, spec.nu) if K > 1 else state.alpha
    converged = False
    for t in range(1, cfg.outer_max + 1):
        new, inner_w, n_inner = fista_theta_step(sur, theta, state.xi, spec, cfg, state.weights, sigma)
        if K > 1:
            state.weights = lla_weights(new, spec)
            state.xi = dual_step(new, state.xi, state.weights, spec.nu)
            alpha = recover_alpha(new, state.xi, state.weights, spec.nu)
            primal = float(np.linalg.norm(apply_difference(new) - alpha))
            dual = float(spec.nu * np.linalg.norm(apply_difference_adjoint(alpha - alpha_prev, K)))
            alpha_prev = alpha
        else:
            primal = dual = 0.0
        change = float(np.max(np.abs(new - theta)))
        theta = new
        obj = full_objective(sur, theta, spec)
        trace.objective.append(obj)
        trace.primal_residual.append(primal)
        trace.dual_residual.append(dual)
        trace.inner_iterations.append(n_inner)
        if obj <= best[0]:
            best = (obj, theta.copy(), state.xi.copy(), state.weights.copy())
        if change <= cfg.outer_tol:
            converged = True
            break

    if not converged:
        log.info("ADMM hit outer_max=%d without converging; returning best iterate", cfg.outer_max)
        _, theta, state.xi, state.weights = best
    trace.converged = converged

    if K > 1 and cfg.cluster_merge_from_alpha:
        state.alpha = recover_alpha(theta, state.xi, state.weights, spec.nu)
        labels = _components(state.alpha, K)
    elif K > 1:
        labels = _components_by_value(theta, 10 * cfg.outer_tol)
    else:
        labels = np.zeros(1, dtype=int)
    sol = ClusterSolution.from_labels(theta, labels, converged=converged,
                                      lambda1=spec.lambda1, lambda2=spec.lambda2)
    sol.info.update(outer_iterations=len(trace), objective_start=start_obj,
                    objective=full_objective(sur, sol.theta_hat, spec), theta_raw=theta, xi=state.xi)
    return sol, trace
