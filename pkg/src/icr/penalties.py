"""Concave penalties (MCP, SCAD) and the group proximal maps used by the solver.

All functions take the penalty argument as a norm ``t >= 0``. The group
versions act on a vector through its Euclidean norm, or columnwise on a
matrix when called with ``axis=0``.
"""
from __future__ import annotations

import numpy as np


def penalty_value(t, lam: float, tau: float = 3.0, family: str = "mcp"):
    t = np.abs(np.asarray(t, dtype=float))
    if family == "mcp":
        return np.where(t <= tau * lam, lam * t - t**2 / (2 * tau), 0.5 * tau * lam**2)
    if family == "scad":
        mid = (2 * tau * lam * t - t**2 - lam**2) / (2 * (tau - 1))
        return np.where(t <= lam, lam * t, np.where(t <= tau * lam, mid, 0.5 * lam**2 * (tau + 1)))
    raise ValueError(f"unknown penalty family {family!r}")


def penalty_deriv(t, lam: float, tau: float = 3.0, family: str = "mcp"):
    """Derivative in t; at t = 0 the right limit (= lam) is returned."""
    t = np.abs(np.asarray(t, dtype=float))
    if family == "mcp":
        return np.maximum(lam - t / tau, 0.0)
    if family == "scad":
        return np.where(t <= lam, lam, np.maximum(tau * lam - t, 0.0) / (tau - 1))
    raise ValueError(f"unknown penalty family {family!r}")


def _norms(z, axis):
    return np.linalg.norm(z, axis=axis, keepdims=axis is not None)


def group_prox(z, sigma: float, lam: float, tau: float = 3.0, family: str = "mcp", axis=None):
    """Proximal map of ``sigma * p_tau(||.||_2, lam)``.

    Single-valued only when the penalty's concavity is dominated by the
    quadratic, i.e. ``tau > sigma`` for MCP and ``tau - 1 > sigma`` for SCAD.

    Parameters
    ----------
    z : array
        A vector, or a matrix whose groups are its columns (``axis=0``) or rows (``axis=1``).
    sigma : float
        Step size.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    z = np.asarray(z, dtype=float)
    r = _norms(z, axis)
    safe = np.where(r > 0, r, 1.0)
    if family == "mcp":
        if tau <= sigma:
            raise ValueError(f"MCP prox needs tau > sigma (tau={tau}, sigma={sigma})")
        shrunk = np.maximum(r - sigma * lam, 0.0) / (1.0 - sigma / tau)
        scale = np.where(r <= tau * lam, shrunk / safe, 1.0)
    elif family == "scad":
        if tau - 1 <= sigma:
            raise ValueError(f"SCAD prox needs tau - 1 > sigma (tau={tau}, sigma={sigma})")
        # three regions in the norm; each is the 1-D SCAD prox applied to r
        r1 = np.maximum(r - sigma * lam, 0.0)
        r2 = ((tau - 1) * r - sigma * tau * lam) / (tau - 1 - sigma)
        out = np.where(r <= lam * (1 + sigma), r1, np.where(r <= tau * lam, r2, r))
        scale = out / safe
    else:
        raise ValueError(f"unknown penalty family {family!r}")
    return z * np.where(r > 0, scale, 0.0)


def weighted_group_soft(z, w, axis=None):
    """Group soft-threshold: the prox of ``w * ||.||_2``.

    With ``axis=0`` each column of ``z`` is thresholded at its own entry of ``w``.
    """
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    r = _norms(z, axis)
    safe = np.where(r > 0, r, 1.0)
    return z * np.maximum(1.0 - w / safe, 0.0)


def project_ball(z, r, axis=None):
    """Euclidean projection onto the ball of radius ``r`` (columnwise with ``axis=0``)."""
    z = np.asarray(z, dtype=float)
    r = np.asarray(r, dtype=float)
    nrm = _norms(z, axis)
    safe = np.where(nrm > 0, nrm, 1.0)
    return z * np.where(nrm <= r, 1.0, r / safe)
