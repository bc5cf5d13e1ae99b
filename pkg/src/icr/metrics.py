"""Evaluation measures for variable selection, clustering and estimation."""
from __future__ import annotations

from math import comb

import numpy as np

from .selection import count_distinct_nonzero

METRIC_COLUMNS = ("TPR", "FPR", "MS", "M_hat", "Per", "RI", "ARI", "RMSE")


def _as_labels(partition, K=None) -> np.ndarray:
    """Label vector from either a label sequence or a list of index blocks."""
    partition = list(partition)
    if partition and isinstance(partition[0], (list, tuple, set, frozenset, np.ndarray)):
        size = sum(len(b) for b in partition) if K is None else K
        labels = np.full(size, -1, dtype=int)
        for m, block in enumerate(partition):
            labels[list(block)] = m
        if np.any(labels < 0):
            raise ValueError("partition does not cover every client")
        return labels
    return np.asarray(partition, dtype=int)


def _canonical(partition) -> frozenset:
    labels = _as_labels(partition)
    return frozenset(frozenset(np.flatnonzero(labels == m).tolist()) for m in np.unique(labels))


def selection_metrics(theta_hat, truth_active, p: int | None = None):
    """True/false positive rates over non-intercept rows and the model size.

    MS sums, over every row including the intercept, the number of distinct
    nonzero values; a zero intercept therefore adds nothing.

    Parameters
    ----------
    theta_hat : (p, K) or (p, M) array
        Client- or cluster-level coefficients; row 0 is the intercept.
    truth_active : iterable of int
        0-based row indices of the truly active covariates (all >= 1).

    Returns
    -------
    (TPR, FPR, MS)
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    p = theta_hat.shape[0] if p is None else p
    if theta_hat.shape[0] != p:
        raise ValueError("theta_hat row count does not match p")
    active = set(int(j) for j in truth_active)
    if 0 in active:
        raise ValueError("the intercept row is not a selection target")
    selected = {j for j in range(1, p) if np.any(theta_hat[j] != 0)}
    inactive = set(range(1, p)) - active
    tpr = len(selected & active) / len(active) if active else 0.0
    fpr = len(selected & inactive) / len(inactive) if inactive else 0.0
    ms = count_distinct_nonzero(theta_hat, "values")
    return tpr, fpr, ms


def pair_counts(partition_a, partition_b):
    """(TP, FP, FN, TN) over client pairs, 'positive' meaning together in b."""
    a, b = _as_labels(partition_a), _as_labels(partition_b)
    if a.shape != b.shape:
        raise ValueError("partitions cover different numbers of clients")
    i, j = np.triu_indices(a.size, 1)
    same_a, same_b = a[i] == a[j], b[i] == b[j]
    tp = int(np.sum(same_a & same_b))
    fp = int(np.sum(same_a & ~same_b))
    fn = int(np.sum(~same_a & same_b))
    tn = int(np.sum(~same_a & ~same_b))
    return tp, fp, fn, tn


def rand_index(partition_a, partition_b) -> float:
    tp, fp, fn, tn = pair_counts(partition_a, partition_b)
    total = tp + fp + fn + tn
    return 1.0 if total == 0 else (tp + tn) / total


def adjusted_rand_index(partition_a, partition_b) -> float:
    """Hubert-Arabie adjusted Rand index from the contingency table."""
    a, b = _as_labels(partition_a), _as_labels(partition_b)
    if a.shape != b.shape:
        raise ValueError("partitions cover different numbers of clients")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    index = sum(comb(int(x), 2) for x in table.ravel())
    rows = sum(comb(int(x), 2) for x in table.sum(1))
    cols = sum(comb(int(x), 2) for x in table.sum(0))
    total = comb(a.size, 2)
    if total == 0:
        return 1.0
    expected = rows * cols / total
    top = 0.5 * (rows + cols)
    if top == expected:
        # both partitions all-singletons or both one block
        return 1.0
    return (index - expected) / (top - expected)


def rmse(theta_hat, theta_star, truth_active, K: int | None = None) -> float:
    """``sqrt(sum_{j in A} ||theta_hat_j - theta*_j||^2 / K)`` over client-level rows."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    if theta_hat.shape != theta_star.shape:
        raise ValueError("theta_hat and theta_star differ in shape")
    K = theta_hat.shape[1] if K is None else K
    rows = list(truth_active)
    return float(np.sqrt(np.sum((theta_hat[rows] - theta_star[rows]) ** 2) / K))


def clustering_summary(partitions, truth_partition):
    """Mean number of clusters, exact-recovery rate and mean RI / ARI.

    Returns
    -------
    (M_hat, Per, RI, ARI)
    """
    partitions = list(partitions)
    if not partitions:
        raise ValueError("no partitions to summarize")
    truth = _canonical(truth_partition)
    m = [len(_canonical(P)) for P in partitions]
    per = [_canonical(P) == truth for P in partitions]
    ri = [rand_index(P, truth_partition) for P in partitions]
    ari = [adjusted_rand_index(P, truth_partition) for P in partitions]
    return float(np.mean(m)), float(np.mean(per)), float(np.mean(ri)), float(np.mean(ari))


def replicate_metrics(theta_hat, partition, theta_star, truth_partition, truth_active) -> dict:
    """All per-replicate measures, keyed by :data:`METRIC_COLUMNS`."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    labels = _as_labels(partition, theta_hat.shape[1])
    tpr, fpr, ms = selection_metrics(theta_hat, truth_active)
    return {
        "TPR": tpr, "FPR": fpr, "MS": float(ms),
        "M_hat": float(len(np.unique(labels))),
        "Per": float(_canonical(labels) == _canonical(truth_partition)),
        "RI": rand_index(labels, truth_partition),
        "ARI": adjusted_rand_index(labels, truth_partition),
        "RMSE": rmse(theta_hat, theta_star, truth_active),
    }
