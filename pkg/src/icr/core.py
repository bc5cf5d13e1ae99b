"""Shared domain types and the pairwise-difference operator.

Clients are indexed ``0..K-1`` internally. Pairs ``(k, k')`` with ``k < k'``
are ordered lexicographically; that ordering is also the column order of
every ``p x K(K-1)/2`` matrix (differences, auxiliaries, duals) and is part
of the on-disk format, so it must not change.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal

import numpy as np

LossKind = Literal["logistic", "squared"]
LOSS_KINDS = ("logistic", "squared")


def n_pairs(K: int) -> int:
    return K * (K - 1) // 2


def pair_index(k: int, k_prime: int, K: int) -> int:
    """Column index of the pair ``(k, k_prime)`` using 1-based client labels.

    >>> pair_index(2, 4, 4)
    4
    """
    if not (1 <= k < k_prime <= K):
        raise ValueError(f"need 1 <= k < k' <= K, got ({k}, {k_prime}) with K={K}")
    i = k - 1
    # pairs before row i: sum_{r<i} (K-1-r)
    return i * (2 * K - i - 1) // 2 + (k_prime - k - 1)


@lru_cache(maxsize=64)
def pair_arrays(K: int) -> tuple[np.ndarray, np.ndarray]:
    """0-based ``(first, second)`` client arrays in canonical pair order."""
    first, second = np.triu_indices(K, k=1)
    first.setflags(write=False)
    second.setflags(write=False)
    return first, second


def difference_matrix(K: int) -> np.ndarray:
    """Dense ``K x K(K-1)/2`` matrix A with column (k,k') = e_k - e_k'.

    Only for tests and small K; the solver uses the matvec forms below.
    """
    first, second = pair_arrays(K)
    A = np.zeros((K, n_pairs(K)))
    cols = np.arange(n_pairs(K))
    A[first, cols] = 1.0
    A[second, cols] = -1.0
    return A


def apply_difference(theta: np.ndarray) -> np.ndarray:
    """Return ``theta @ A``: column (k,k') is theta[:, k] - theta[:, k']."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2:
        raise ValueError("theta must be a p x K matrix")
    first, second = pair_arrays(theta.shape[1])
    return theta[:, first] - theta[:, second]


@lru_cache(maxsize=64)
def _adjoint_operator(K: int):
    # dense A^T for small K, sparse otherwise; memory grows as K^3 when dense
    if K <= 16:
        return difference_matrix(K).T.copy()
    from scipy import sparse

    first, second = pair_arrays(K)
    m = n_pairs(K)
    rows = np.concatenate([np.arange(m), np.arange(m)])
    cols = np.concatenate([first, second])
    vals = np.concatenate([np.ones(m), -np.ones(m)])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(m, K))


def apply_difference_adjoint(m: np.ndarray, K: int) -> np.ndarray:
    """Return ``m @ A.T``: column k adds pairs where k is first, subtracts where second."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[1] != n_pairs(K):
        raise ValueError(f"expected p x {n_pairs(K)} matrix, got shape {m.shape}")
    if K == 1:
        return np.zeros((m.shape[0], 1))
    At = _adjoint_operator(K)
    if isinstance(At, np.ndarray):
        return m @ At
    return np.asarray((At.T @ m.T).T)


@dataclass(frozen=True)
class SummaryPacket:
    """The statistics one client sends to the server.

    ``theta_tilde`` is the local estimate, ``grad_tilde`` and
    ``hessian_tilde`` the per-observation-averaged gradient and Hessian of
    the local loss at that estimate, and ``n`` the local sample size.
    """

    client_id: str
    n: int
    theta_tilde: np.ndarray
    grad_tilde: np.ndarray
    hessian_tilde: np.ndarray
    loss_kind: LossKind = "squared"

    def __post_init__(self):
        theta = np.array(self.theta_tilde, dtype=float)
        grad = np.array(self.grad_tilde, dtype=float)
        hess = np.array(self.hessian_tilde, dtype=float)
        for arr in (theta, grad, hess):
            arr.setflags(write=False)
        object.__setattr__(self, "theta_tilde", theta)
        object.__setattr__(self, "grad_tilde", grad)
        object.__setattr__(self, "hessian_tilde", hess)

        if int(self.n) != self.n or self.n <= 0:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")
        p = theta.shape[0]
        if theta.ndim != 1 or p < 2:
            raise ValueError("theta_tilde must be a vector of length p >= 2")
        if grad.shape != (p,) or hess.shape != (p, p):
            raise ValueError("grad_tilde/hessian_tilde dimensions do not match theta_tilde")
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
            raise ValueError("packet contains non-finite values")
        scale = max(np.abs(hess).max(), 1.0)
        if np.abs(hess - hess.T).max() > 1e-10 * scale:
            raise ValueError("hessian_tilde is not symmetric")
        spec_norm = np.linalg.norm(hess, 2)
        if np.linalg.eigvalsh(hess).min() < -1e-8 * max(spec_norm, 1e-300):
            raise ValueError("hessian_tilde is not positive semidefinite")

    @property
    def p(self) -> int:
        return self.theta_tilde.shape[0]

    @property
    def zeta(self) -> np.ndarray:
        return self.hessian_tilde @ self.theta_tilde - self.grad_tilde


def check_packets(packets) -> int:
    """Validate a packet collection and return the shared dimension p."""
    packets = list(packets)
    if not packets:
        raise ValueError("need at least one packet")
    p = packets[0].p
    for pk in packets:
        if pk.p != p:
            raise ValueError(f"packet {pk.client_id!r} has p={pk.p}, expected {p}")
    return p


@dataclass(frozen=True)
class PenaltySpec:
    family: Literal["mcp", "scad"] = "mcp"
    tau: float = 3.0
    lambda1: float = 0.0
    lambda2: float = 0.0
    nu: float = 1.0

    def __post_init__(self):
        if self.family not in ("mcp", "scad"):
            raise ValueError(f"unknown penalty family {self.family!r}")
        if self.tau <= 1:
            raise ValueError("tau must exceed 1")
        if self.family == "scad" and self.tau <= 2:
            raise ValueError("SCAD needs tau > 2")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("tuning parameters must be nonnegative")
        if self.nu <= 0:
            raise ValueError("nu must be positive")


@dataclass
class FusionState:
    """Auxiliary differences, duals and LLA weights, one column per client pair."""

    alpha: np.ndarray
    xi: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        m = self.weights.shape[0]
        if self.alpha.shape[1] != m or self.xi.shape[1] != m:
            raise ValueError("alpha/xi column counts must equal the number of pairs")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")

    @classmethod
    def zeros(cls, p: int, K: int) -> "FusionState":
        m = n_pairs(K)
        return cls(np.zeros((p, m)), np.zeros((p, m)), np.zeros(m))


@dataclass
class ClusterSolution:
    """Fitted partition of clients with cluster-level and client-level coefficients.

    ``partition`` lists 0-based client indices per cluster, clusters ordered
    by their smallest member. ``psi`` is ``p x M`` and ``theta_hat`` is
    ``p x K`` with column k equal to the psi column of k's cluster.
    """

    partition: list[list[int]]
    psi: np.ndarray
    theta_hat: np.ndarray
    active_set: list[int]
    converged: bool = True
    lambda1: float = float("nan")
    lambda2: float = float("nan")
    info: dict = field(default_factory=dict)

    @property
    def n_clusters(self) -> int:
        return len(self.partition)

    @property
    def labels(self) -> np.ndarray:
        lab = np.empty(self.theta_hat.shape[1], dtype=int)
        for m, members in enumerate(self.partition):
            lab[members] = m
        return lab

    @classmethod
    def from_labels(cls, theta: np.ndarray, labels, **kw) -> "ClusterSolution":
        """Average columns of ``theta`` within each label and build the solution."""
        theta = np.asarray(theta, dtype=float)
        labels = np.asarray(labels)
        partition = partition_from_labels(labels)
        psi = np.column_stack([theta[:, members].mean(axis=1) for members in partition])
        theta_hat = np.empty_like(theta)
        for m, members in enumerate(partition):
            theta_hat[:, members] = psi[:, [m]]
        active = [0] + [j for j in range(1, theta.shape[0]) if np.any(theta_hat[j] != 0)]
        return cls(partition=partition, psi=psi, theta_hat=theta_hat, active_set=active, **kw)


def partition_from_labels(labels) -> list[list[int]]:
    """Group indices by label; groups are ordered by their first member."""
    groups: dict = {}
    for i, lab in enumerate(np.asarray(labels).tolist()):
        groups.setdefault(lab, []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])
