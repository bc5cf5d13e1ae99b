"""Per-observation losses f(a, y) and the empirical local loss, gradient and Hessian."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import LOSS_KINDS, LossKind


@dataclass(frozen=True)
class LocalDataset:
    """One client's raw data. ``X`` carries the intercept as its first column."""

    X: np.ndarray
    y: np.ndarray
    loss_kind: LossKind = "squared"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError(f"X {X.shape} and y {y.shape} are inconsistent")
        if X.shape[1] < 2:
            raise ValueError("need an intercept plus at least one covariate")
        if not np.all(X[:, 0] == 1.0):
            raise ValueError("first column of X must be all ones (intercept)")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")
        if self.loss_kind == "logistic" and not np.all((y == 0) | (y == 1)):
            raise ValueError("logistic responses must be coded 0/1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def _softplus(a):
    # log(1 + e^a) without overflow for large |a|
    a = np.asarray(a, dtype=float)
    return np.where(a > 30, a + np.log1p(np.exp(-np.abs(a))), np.log1p(np.exp(np.minimum(a, 30))))


def loss_scalar(a, y, kind: LossKind = "squared"):
    if kind == "squared":
        return 0.5 * (np.asarray(y) - np.asarray(a)) ** 2
    if kind == "logistic":
        return _softplus(a) - np.asarray(y) * np.asarray(a)
    raise ValueError(f"unknown loss kind {kind!r}")


def loss_d1(a, y, kind: LossKind = "squared"):
    if kind == "squared":
        return np.asarray(a, dtype=float) - np.asarray(y)
    if kind == "logistic":
        return expit(a) - np.asarray(y)
    raise ValueError(f"unknown loss kind {kind!r}")


def loss_d2(a, y, kind: LossKind = "squared"):
    if kind == "squared":
        return np.ones_like(np.asarray(a, dtype=float))
    if kind == "logistic":
        s = expit(a)
        return s * (1.0 - s)
    raise ValueError(f"unknown loss kind {kind!r}")


def _linpred(data: LocalDataset, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (data.p,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({data.p},)")
    return data.X @ theta


def empirical_loss(data: LocalDataset, theta) -> float:
    a = _linpred(data, theta)
    return float(np.mean(loss_scalar(a, data.y, data.loss_kind)))


def empirical_gradient(data: LocalDataset, theta) -> np.ndarray:
    a = _linpred(data, theta)
    return data.X.T @ loss_d1(a, data.y, data.loss_kind) / data.n


def empirical_hessian(data: LocalDataset, theta) -> np.ndarray:
    a = _linpred(data, theta)
    w = loss_d2(a, data.y, data.loss_kind)
    H = (data.X * w[:, None]).T @ data.X / data.n
    return 0.5 * (H + H.T)
