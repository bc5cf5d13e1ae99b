"""Simulation designs with known cluster structure.

Examples 1 and 2 are logistic, 3 and 4 linear with Gaussian noise; 1/3 have
two clusters of coefficient vectors and 2/4 have four. Covariates 2..p are
Gaussian AR(rho) (``cov = rho^|w-t|``) and the first column is the intercept.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .losses import LocalDataset

N_CLUSTERS = {1: 2, 2: 4, 3: 2, 4: 4}

# full-size settings; desk defaults are smaller
FULL_SCALE = {
    1: dict(K=32, n=200, p=100),
    2: dict(K=64, n=400, p=100),
    3: dict(K=32, n=100, p=100, sigma=1.0),
    4: dict(K=64, n=200, p=100, sigma=1.0),
}


@dataclass(frozen=True)
class ScenarioSpec:
    example_id: int = 1
    K: int = 8
    n: int = 200
    p: int = 50
    sigma: float = 1.0
    rho: float = 0.5
    seed: int = 0
    desk_scale: bool = True

    def __post_init__(self):
        if self.example_id not in N_CLUSTERS:
            raise ValueError(f"example_id must be 1..4, got {self.example_id}")
        if self.K % N_CLUSTERS[self.example_id]:
            raise ValueError(f"K={self.K} is not divisible by {N_CLUSTERS[self.example_id]} clusters")
        if self.p < 9:
            raise ValueError("p must be at least 9 (intercept + 8 signal variables)")
        if self.n < 2 or self.sigma < 0 or not -1 < self.rho < 1:
            raise ValueError("invalid n, sigma or rho")

    @property
    def loss_kind(self) -> str:
        return "logistic" if self.example_id in (1, 2) else "squared"

    @property
    def n_clusters(self) -> int:
        return N_CLUSTERS[self.example_id]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        known = cls.__dataclass_fields__
        return cls(**{k: v for k, v in d.items() if k in known})

    @classmethod
    def load(cls, path) -> "ScenarioSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _signal_patterns(example_id: int) -> list[np.ndarray]:
    if example_id in (1, 3):
        a = np.full(8, 0.4)
        return [a, -a]
    b = 0.6
    one = np.r_[np.full(4, b), np.full(4, -b)]
    two = np.tile(np.r_[b, b, -b, -b], 2)
    return [one, two, -two, -one]


def truth(spec: ScenarioSpec):
    """True coefficients and cluster memberships.

    Returns
    -------
    psi : (p, M) array
        Row 0 is the intercept (zero); rows 1..8 carry the signal.
    partition : list of lists
        Consecutive equal-size blocks of 0-based client indices.
    """
    patterns = _signal_patterns(spec.example_id)
    M = len(patterns)
    psi = np.zeros((spec.p, M))
    for m, pat in enumerate(patterns):
        psi[1:9, m] = pat
    size = spec.K // M
    partition = [list(range(m * size, (m + 1) * size)) for m in range(M)]
    return psi, partition


def true_theta(spec: ScenarioSpec) -> np.ndarray:
    psi, partition = truth(spec)
    theta = np.empty((spec.p, spec.K))
    for m, members in enumerate(partition):
        theta[:, members] = psi[:, [m]]
    return theta


def true_active(spec: ScenarioSpec) -> list[int]:
    """0-based row indices of the true non-intercept signal variables."""
    return list(range(1, 9))


def client_rng(seed: int, replicate: int, client: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, replicate, client)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, replicate, client])))


def ar_covariates(rng: np.random.Generator, n: int, d: int, rho: float) -> np.ndarray:
    Z = rng.standard_normal((n, d))
    X = np.empty_like(Z)
    X[:, 0] = Z[:, 0]
    s = np.sqrt(1.0 - rho * rho)
    for j in range(1, d):
        X[:, j] = rho * X[:, j - 1] + s * Z[:, j]
    return X


def generate(spec: ScenarioSpec, replicate: int = 0) -> list[LocalDataset]:
    """Draw one replicate's client datasets, deterministic in (seed, replicate)."""
    theta = true_theta(spec)
    out = []
    for k in range(spec.K):
        rng = client_rng(spec.seed, replicate, k)
        X = np.column_stack([np.ones(spec.n), ar_covariates(rng, spec.n, spec.p - 1, spec.rho)])
        eta = X @ theta[:, k]
        if spec.loss_kind == "logistic":
            y = (rng.random(spec.n) < expit(eta)).astype(float)
        else:
            y = eta + spec.sigma * rng.standard_normal(spec.n)
        out.append(LocalDataset(X, y, spec.loss_kind))
    return out
