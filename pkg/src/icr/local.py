"""Client-side estimation: local fit, debiasing, and the summary packet."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from numba import njit
from scipy.special import expit

from .core import SummaryPacket
from .losses import LocalDataset, empirical_gradient, empirical_hessian, empirical_loss


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LassoConfig:
    """Settings for the client-side Lasso and its debiasing.

    ``lambda_grid=None`` builds ``n_lambda`` log-spaced values from
    ``lambda_max`` down to ``lambda_min_ratio * lambda_max``.
    """

    lambda_grid: Optional[Sequence[float]] = None
    n_lambda: int = 30
    lambda_min_ratio: float = 0.01
    cv_folds: int = 5
    nodewise_lambda_scale: float = 1.0
    max_iter: int = 10000
    tol: float = 1e-8
    # per-client scaling would put clients on different coefficient scales
    standardize: bool = False
    # unpenalized local fit only when p < ratio * n
    unpenalized_ratio: float = 0.5
    logistic_unpenalized_ratio: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.lambda_grid is not None:
            grid = np.asarray(self.lambda_grid, dtype=float)
            if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0):
                raise ValueError("lambda_grid must be a nonempty vector of positive values")
            if np.any(np.diff(grid) >= 0):
                raise ValueError("lambda_grid must be strictly descending")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be at least 2")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@njit(cache=True)
def _sweep(G, c, lam_vec, diag, beta, Gb, coords):
    """One cyclic pass over ``coords``; returns the largest scaled coordinate move."""
    p = G.shape[0]
    max_delta = 0.0
    for j in coords:
        old = beta[j]
        rho = c[j] - Gb[j] + diag[j] * old
        lam = lam_vec[j]
        if rho > lam:
            new = (rho - lam) / diag[j]
        elif rho < -lam:
            new = (rho + lam) / diag[j]
        else:
            new = 0.0
        if new != old:
            delta = new - old
            for i in range(p):
                Gb[i] += G[i, j] * delta
            beta[j] = new
            max_delta = max(max_delta, abs(delta) * np.sqrt(diag[j]))
    return max_delta


@njit(cache=True)
def _cd_kernel(G, c, lam_vec, beta, max_sweeps, tol):
    p = c.shape[0]
    Gb = G @ beta
    diag = np.diag(G).copy()
    everything = np.arange(p)
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        if _sweep(G, c, lam_vec, diag, beta, Gb, everything) < tol:
            return True
        active = np.flatnonzero(beta)
        while sweeps < max_sweeps:
            sweeps += 1
            if _sweep(G, c, lam_vec, diag, beta, Gb, active) < tol:
                break
    return False


def _cd_quadratic(G, c, lam_vec, beta, max_sweeps, tol):
    """Cyclic coordinate descent on ``0.5 b'Gb - c'b + sum lam_j |b_j|``.

    After each full pass the nonzero coordinates are iterated alone until
    they settle; convergence is declared only on a full pass. Every pass
    is exact coordinate minimization, so the objective never increases.
    Returns ``(beta, converged)``. ``G`` must have a positive diagonal.
    """
    beta = np.array(beta, dtype=np.float64)
    G = np.ascontiguousarray(G, dtype=np.float64)
    ok = _cd_kernel(G, np.asarray(c, dtype=np.float64), np.asarray(lam_vec, dtype=np.float64),
                    beta, int(max_sweeps), float(tol))
    return beta, bool(ok)


def _kkt_residual(grad, beta, lam_vec):
    """Max violation of the Lasso optimality conditions."""
    res = np.where(beta != 0, np.abs(grad + lam_vec * np.sign(beta)), np.maximum(np.abs(grad) - lam_vec, 0.0))
    return float(res.max())


def lambda_max(data: LocalDataset) -> float:
    """Smallest lambda at which every non-intercept Lasso coefficient is zero."""
    r = data.y - data.y.mean()
    return float(np.max(np.abs(data.X[:, 1:].T @ r)) / data.n)


def fit_lasso(data: LocalDataset, lam: float, cfg: LassoConfig = LassoConfig(),
              beta0: Optional[np.ndarray] = None) -> np.ndarray:
    """Minimize ``empirical_loss + lam * sum_{j>=2} |theta_j|``.

    Squared loss is solved by coordinate descent on the Gram matrix; the
    logistic loss by an outer loop of weighted quadratic approximations
    (IRLS) each solved the same way. The intercept is never penalized.
    A :class:`ConvergenceWarning` is issued if ``max_iter`` is exhausted,
    and the last iterate is returned.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    X, y, n, p = data.X, data.y, data.n, data.p
    lam_vec = np.full(p, float(lam))
    lam_vec[0] = 0.0
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    if beta0 is None:
        ybar = y.mean()
        if data.loss_kind == "squared":
            beta[0] = ybar
        else:
            ybar = min(max(ybar, 1e-6), 1 - 1e-6)
            beta[0] = np.log(ybar / (1 - ybar))

    if data.loss_kind == "squared":
        G = X.T @ X / n
        c = X.T @ y / n
        G = G + 1e-12 * np.eye(p)
        beta, ok = _cd_quadratic(G, c, lam_vec, beta, cfg.max_iter, cfg.tol)
        if not ok:
            warnings.warn(f"lasso coordinate descent did not converge (lam={lam:g})", ConvergenceWarning)
        return beta

    # logistic: IRLS outer loop, each step a weighted Lasso
    obj = empirical_loss(data, beta) + np.sum(lam_vec * np.abs(beta))
    for _ in range(min(cfg.max_iter, 200)):
        eta = X @ beta
        mu = expit(eta)
        w = np.maximum(mu * (1 - mu), 1e-5)
        z = eta + (y - mu) / w
        G = (X * w[:, None]).T @ X / n + 1e-12 * np.eye(p)
        c = X.T @ (w * z) / n
        cand, _ = _cd_quadratic(G, c, lam_vec, beta, cfg.max_iter, cfg.tol)
        # step halving keeps the penalized objective monotone
        step = 1.0
        while True:
            trial = beta + step * (cand - beta)
            new_obj = empirical_loss(data, trial) + np.sum(lam_vec * np.abs(trial))
            if new_obj <= obj + 1e-15 or step < 1e-8:
                break
            step *= 0.5
        change = np.max(np.abs(trial - beta))
        beta, obj = trial, new_obj
        if change < cfg.tol:
            grad = empirical_gradient(data, beta)
            if _kkt_residual(grad, beta, lam_vec) <= max(cfg.tol, 1e-6):
                return beta
    warnings.warn(f"logistic lasso did not converge (lam={lam:g})", ConvergenceWarning)
    return beta


def lasso_path(data: LocalDataset, grid, cfg: LassoConfig = LassoConfig()) -> np.ndarray:
    """Warm-started fits along a descending grid; rows of the result are the fits."""
    out = np.empty((len(grid), data.p))
    beta = None
    for i, lam in enumerate(grid):
        beta = fit_lasso(data, lam, cfg, beta0=beta)
        out[i] = beta
    return out


def default_lambda_grid(data: LocalDataset, cfg: LassoConfig) -> np.ndarray:
    if cfg.lambda_grid is not None:
        return np.asarray(cfg.lambda_grid, dtype=float)
    lmax = max(lambda_max(data), 1e-10)
    return lmax * np.logspace(0, np.log10(cfg.lambda_min_ratio), cfg.n_lambda)


def cv_lasso(data: LocalDataset, cfg: LassoConfig = LassoConfig()) -> tuple[float, np.ndarray]:
    """Pick lambda by ``cv_folds``-fold CV of the held-out loss; refit on all data.

    Returns ``(lambda, coefficients)``.
    """
    grid = default_lambda_grid(data, cfg)
    n = data.n
    rng = np.random.default_rng(cfg.seed)
    folds = rng.permutation(n) % cfg.cv_folds
    cv_err = np.zeros(len(grid))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for f in range(cfg.cv_folds):
            train, test = folds != f, folds == f
            try:
                tr = LocalDataset(data.X[train], data.y[train], data.loss_kind)
                te = LocalDataset(data.X[test], data.y[test], data.loss_kind)
            except ValueError:
                continue
            path = lasso_path(tr, grid, cfg)
            for i in range(len(grid)):
                cv_err[i] += empirical_loss(te, path[i]) * te.n
    best = int(np.argmin(cv_err))
    lam = float(grid[best])
    full = lasso_path(data, grid[: best + 1], cfg)[-1]
    return lam, full


def fit_unpenalized(data: LocalDataset, cfg: LassoConfig = LassoConfig()) -> np.ndarray:
    """Unpenalized minimizer of the empirical loss (OLS, or the logistic MLE by Newton)."""
    X, y = data.X, data.y
    if data.loss_kind == "squared":
        return np.linalg.lstsq(X, y, rcond=None)[0]
    beta = np.zeros(data.p)
    obj = empirical_loss(data, beta)
    for _ in range(200):
        g = empirical_gradient(data, beta)
        H = empirical_hessian(data, beta)
        try:
            direction = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            direction = np.linalg.lstsq(H, g, rcond=None)[0]
        step = 1.0
        while True:
            trial = beta - step * direction
            new_obj = empirical_loss(data, trial)
            if new_obj <= obj or step < 1e-10:
                break
            step *= 0.5
        change = np.max(np.abs(trial - beta))
        beta, obj = trial, new_obj
        if change < 1e-10 * (1 + np.max(np.abs(beta))):
            return beta
    warnings.warn("logistic MLE did not converge (possible separation)", ConvergenceWarning)
    return beta


def _nodewise_inverse(H: np.ndarray, lam: float, cfg: LassoConfig) -> np.ndarray:
    """Approximate inverse of H by nodewise Lasso regressions on its Gram form.

    Row j regresses coordinate j on the others: minimizes
    ``0.5 g'H_{-j,-j}g - H_{-j,j}'g + lam*|g|_1`` (intercept coordinate left
    unpenalized), then scales by ``tau_j^2 = H_jj - H_{j,-j} g``.
    """
    p = H.shape[0]
    Theta = np.zeros((p, p))
    Hreg = H + 1e-10 * np.eye(p)
    for j in range(p):
        idx = np.r_[0:j, j + 1:p]
        lam_vec = np.full(p - 1, lam)
        if j != 0:
            lam_vec[0] = 0.0
        gamma, _ = _cd_quadratic(Hreg[np.ix_(idx, idx)], Hreg[idx, j], lam_vec, np.zeros(p - 1),
                                 cfg.max_iter, cfg.tol)
        tau2 = H[j, j] - H[j, idx] @ gamma
        tau2 = max(tau2, 1e-8 * max(H[j, j], 1e-12))
        Theta[j, j] = 1.0 / tau2
        Theta[j, idx] = -gamma / tau2
    return Theta


def approximate_inverse_hessian(data: LocalDataset, theta: np.ndarray, cfg: LassoConfig = LassoConfig()) -> np.ndarray:
    H = empirical_hessian(data, theta)
    p, n = data.p, data.n
    if p < n:
        try:
            c = np.linalg.cond(H)
            if not np.isfinite(c) or c > 1e12:
                raise np.linalg.LinAlgError("ill-conditioned")
            return np.linalg.inv(H)
        except np.linalg.LinAlgError:
            warnings.warn("local Hessian is singular; using a ridge-regularized inverse", ConvergenceWarning)
            return np.linalg.inv(H + 1e-8 * np.eye(p))
    lam = cfg.nodewise_lambda_scale * np.sqrt(np.log(p) / n)
    return _nodewise_inverse(H, lam, cfg)


def debias(data: LocalDataset, theta_lasso, cfg: LassoConfig = LassoConfig()) -> np.ndarray:
    """One Newton-type correction of the Lasso estimate: ``theta - Theta @ grad``."""
    theta_lasso = np.asarray(theta_lasso, dtype=float)
    Theta = approximate_inverse_hessian(data, theta_lasso, cfg)
    return theta_lasso - Theta @ empirical_gradient(data, theta_lasso)


def standardize(data: LocalDataset) -> LocalDataset:
    """Center and scale the non-intercept columns to unit (population) variance."""
    Z = data.X[:, 1:]
    sd = Z.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    X = np.column_stack([np.ones(data.n), (Z - Z.mean(axis=0)) / sd])
    return LocalDataset(X, data.y, data.loss_kind)


def local_estimate(data: LocalDataset, cfg: LassoConfig = LassoConfig()) -> np.ndarray:
    """Unpenalized fit for comfortably low dimension, otherwise the debiased CV-Lasso.

    The logistic MLE is badly inflated (or fails to exist under separation)
    well before ``p`` reaches ``n/2``, hence its smaller ratio.
    """
    ratio = cfg.logistic_unpenalized_ratio if data.loss_kind == "logistic" else cfg.unpenalized_ratio
    if data.p < ratio * data.n:
        return fit_unpenalized(data, cfg)
    _, beta = cv_lasso(data, cfg)
    return debias(data, beta, cfg)


def make_packet(data: LocalDataset, cfg: LassoConfig = LassoConfig(), client_id: str = "0") -> SummaryPacket:
    """Fit locally and return the statistics the client shares with the server."""
    if cfg.standardize:
        data = standardize(data)
    theta = local_estimate(data, cfg)
    return SummaryPacket(
        client_id=str(client_id),
        n=data.n,
        theta_tilde=theta,
        grad_tilde=empirical_gradient(data, theta),
        hessian_tilde=empirical_hessian(data, theta),
        loss_kind=data.loss_kind,
    )


def zeta(packet: SummaryPacket) -> np.ndarray:
    return packet.hessian_tilde @ packet.theta_tilde - packet.grad_tilde


def with_standardize(cfg: LassoConfig, flag: bool) -> LassoConfig:
    return replace(cfg, standardize=flag)
