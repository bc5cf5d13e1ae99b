import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from icr.penalties import group_prox, penalty_deriv, penalty_value, project_ball, weighted_group_soft


def brute_prox_2d(z, objective):
    """Dense grid, then local refinement from the best grid points.

    ``objective`` maps an (m, 2) array of candidates to m values.
    """
    r = np.linalg.norm(z) + 1.0
    g = np.linspace(-r, r, 401)
    V = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    vals = objective(V)
    starts = list(V[np.argsort(vals)[:3]]) + [np.zeros(2), np.asarray(z, float)]
    scalar = lambda v: float(objective(np.atleast_2d(v))[0])
    best = None
    for s in starts:
        res = minimize(scalar, s, method="Nelder-Mead", options=dict(xatol=1e-10, fatol=1e-14, maxiter=4000))
        if best is None or res.fun < best.fun:
            best = res
    return best.x, best.fun


def test_value_examples():
    for fam in ("mcp", "scad"):
        assert penalty_value(0.0, 2.0, 3.7, fam) == 0.0
    assert penalty_value(6.0, 2.0, 3.0) == 6.0
    assert penalty_value(60.0, 2.0, 3.0) == 6.0
    assert penalty_value(3.0, 2.0, 3.0) == pytest.approx(4.5)


def test_deriv_examples():
    assert penalty_deriv(0.0, 2.0, 3.0) == 2.0
    assert penalty_deriv(3.0, 2.0, 3.0) == pytest.approx(1.0)
    assert penalty_deriv(6.0, 2.0, 3.0) == 0.0
    assert penalty_deriv(0.0, 2.0, 3.7, "scad") == 2.0


@pytest.mark.parametrize("family,tau", [("mcp", 3.0), ("scad", 3.7)])
def test_deriv_matches_differences(rng, family, tau):
    lam = 1.3
    h = 1e-6
    kinks = [lam, tau * lam]
    for t in rng.uniform(0.01, 2 * tau * lam, 200):
        if min(abs(t - k) for k in kinks) < 1e-3:
            continue
        fd = (penalty_value(t + h, lam, tau, family) - penalty_value(t - h, lam, tau, family)) / (2 * h)
        assert penalty_deriv(t, lam, tau, family) == pytest.approx(fd, abs=1e-6)


def test_prox_examples():
    assert np.array_equal(group_prox(np.zeros(2), 0.3, 2.0, 3.0), np.zeros(2))
    assert np.array_equal(group_prox(np.array([10.0, 0.0]), 0.3, 2.0, 3.0), np.array([10.0, 0.0]))
    assert np.allclose(group_prox(np.array([3.0, 4.0]), 1.0, 2.0, 3.0), [2.7, 3.6], atol=1e-14)
    # 1-D check of the same example on the norm
    f = lambda v: 1.0 * penalty_value(abs(v), 2.0, 3.0) + 0.5 * (5 - v) ** 2
    v = minimize(lambda a: f(a[0]), [1.0], method="Nelder-Mead", options=dict(xatol=1e-12, fatol=1e-14)).x[0]
    assert v == pytest.approx(4.5, abs=1e-6)


def test_prox_rejects_multivalued_setting():
    with pytest.raises(ValueError):
        group_prox(np.ones(2), 3.0, 1.0, 3.0)
    with pytest.raises(ValueError):
        group_prox(np.ones(2), 2.7, 1.0, 3.7, "scad")
    with pytest.raises(ValueError):
        group_prox(np.ones(2), 0.0, 1.0, 3.0)


@pytest.mark.parametrize("family,tau", [("mcp", 3.0), ("scad", 3.7)])
def test_group_prox_matches_brute_force(family, tau):
    rng = np.random.default_rng(11 if family == "mcp" else 12)
    worst = 0.0
    for _ in range(100):
        z = rng.normal(scale=3.0, size=2)
        lam = rng.uniform(0.1, 2.0)
        sigma = rng.uniform(0.05, 0.9)
        obj = lambda V: (sigma * penalty_value(np.linalg.norm(V, axis=1), lam, tau, family)
                         + 0.5 * np.sum((z - V) ** 2, axis=1))
        v_ref, f_ref = brute_prox_2d(z, obj)
        v = group_prox(z, sigma, lam, tau, family)
        assert obj(v[None])[0] <= f_ref + 1e-10
        worst = max(worst, np.max(np.abs(v - v_ref)))
    assert worst <= 1e-4


def test_weighted_soft_examples():
    z = np.array([3.0, 4.0])
    assert np.array_equal(weighted_group_soft(z, 0.0), z)
    assert np.array_equal(weighted_group_soft(z, 5.0), np.zeros(2))
    assert np.allclose(weighted_group_soft(z, 2.0), [1.8, 2.4], atol=1e-15)


def test_weighted_soft_matches_brute_force():
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(100):
        z = rng.normal(scale=2.0, size=2)
        w = rng.uniform(0, 3)
        obj = lambda V: w * np.linalg.norm(V, axis=1) + 0.5 * np.sum((z - V) ** 2, axis=1)
        v_ref, f_ref = brute_prox_2d(z, obj)
        v = weighted_group_soft(z, w)
        assert obj(v[None])[0] <= f_ref + 1e-10
        worst = max(worst, np.max(np.abs(v - v_ref)))
    assert worst <= 1e-4


def test_project_ball_examples():
    z = np.array([3.0, 4.0])
    assert np.array_equal(project_ball(z, 10.0), z)
    assert np.allclose(project_ball(z, 2.0), [1.2, 1.6], atol=1e-15)
    assert np.array_equal(project_ball(z, 0.0), np.zeros(2))


def test_project_ball_matches_brute_force():
    rng = np.random.default_rng(14)
    worst = 0.0
    for _ in range(100):
        z = rng.normal(scale=2.0, size=2)
        r = rng.uniform(0, 3)
        cons = {"type": "ineq", "fun": lambda v: r * r - v @ v, "jac": lambda v: -2 * v}
        v_ref = minimize(lambda v: 0.5 * np.sum((v - z) ** 2), np.zeros(2), jac=lambda v: v - z, method="SLSQP",
                         constraints=[cons], options={"ftol": 1e-14, "maxiter": 500}).x
        worst = max(worst, np.max(np.abs(project_ball(z, r) - v_ref)))
    assert worst <= 1e-4


def test_moreau_identity_columnwise(rng):
    for nu in (0.5, 1.0, 3.0):
        U = rng.normal(size=(4, 7))
        w = rng.uniform(0, 2, size=7)
        lhs = nu * weighted_group_soft(U / nu, w / nu, axis=0) + project_ball(U, w, axis=0)
        assert np.max(np.abs(lhs - U)) <= 1e-12


def test_axis_handling(rng):
    Z = rng.normal(size=(3, 5))
    cols = group_prox(Z, 0.2, 0.8, 3.0, axis=0)
    rows = group_prox(Z, 0.2, 0.8, 3.0, axis=1)
    for k in range(5):
        assert np.allclose(cols[:, k], group_prox(Z[:, k], 0.2, 0.8, 3.0))
    for j in range(3):
        assert np.allclose(rows[j], group_prox(Z[j], 0.2, 0.8, 3.0))


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=5), st.floats(0.01, 3), st.floats(0.01, 0.9))
@settings(max_examples=200, deadline=None)
def test_prox_shrinks_inside_and_fixes_outside(z, lam, sigma):
    z = np.asarray(z)
    out = group_prox(z, sigma, lam, 3.0)
    r = np.linalg.norm(z)
    if r <= 3.0 * lam:
        assert np.linalg.norm(out) <= r + 1e-12
    else:
        assert np.array_equal(out, z)
    # direction preserved
    assert np.all(out * z >= -1e-15)
