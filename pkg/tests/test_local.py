import warnings

import numpy as np
import pytest
from scipy.optimize import minimize

from icr.local import (ConvergenceWarning, LassoConfig, _cd_quadratic, approximate_inverse_hessian, cv_lasso,
                       debias, fit_lasso, fit_unpenalized, lambda_max, local_estimate, make_packet, zeta)
from icr.losses import LocalDataset, empirical_gradient, empirical_hessian, empirical_loss


def sparse_data(rng, n=30, p=5, kind="squared", beta=None):
    X = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    beta = np.r_[0.3, 1.0, -0.8, np.zeros(p - 3)] if beta is None else beta
    eta = X @ beta
    if kind == "logistic":
        y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    else:
        y = eta + 0.5 * rng.standard_normal(n)
    return LocalDataset(X, y, kind)


def lasso_objective(data, beta, lam):
    return empirical_loss(data, beta) + lam * np.sum(np.abs(beta[1:]))


def oracle_lasso(data, lam):
    """Split beta = u - v (u, v >= 0 on penalized coordinates) and use a bound-constrained solver."""
    p = data.p

    def unpack(z):
        return np.r_[z[0], z[1:p] - z[p:]]

    def f(z):
        b = unpack(z)
        g = empirical_gradient(data, b)
        val = empirical_loss(data, b) + lam * np.sum(z[1:])
        grad = np.r_[g[0], g[1:] + lam, -g[1:] + lam]
        return val, grad

    bounds = [(None, None)] + [(0, None)] * (2 * (p - 1))
    res = minimize(f, np.zeros(2 * p - 1), jac=True, method="L-BFGS-B", bounds=bounds,
                   options=dict(ftol=1e-15, gtol=1e-12, maxiter=20000))
    return unpack(res.x)


def test_lambda_zero_is_ols(rng):
    data = sparse_data(rng)
    ols = np.linalg.lstsq(data.X, data.y, rcond=None)[0]
    assert np.allclose(fit_lasso(data, 0.0), ols, atol=1e-6)


@pytest.mark.parametrize("kind", ["squared", "logistic"])
def test_lambda_max_zeroes_everything(rng, kind):
    data = sparse_data(rng, kind=kind)
    beta = fit_lasso(data, lambda_max(data) * 1.0001)
    assert np.all(beta[1:] == 0)
    assert np.any(fit_lasso(data, lambda_max(data) * 0.9)[1:] != 0)


@pytest.mark.parametrize("kind", ["squared", "logistic"])
@pytest.mark.parametrize("frac", [0.05, 0.3])
def test_matches_bound_constrained_oracle(kind, frac):
    rng = np.random.default_rng(7)
    data = sparse_data(rng, kind=kind)
    lam = frac * lambda_max(data)
    ours = fit_lasso(data, lam)
    ref = oracle_lasso(data, lam)
    assert lasso_objective(data, ours, lam) == pytest.approx(lasso_objective(data, ref, lam), abs=1e-6)
    assert lasso_objective(data, ours, lam) <= lasso_objective(data, ref, lam) + 1e-9


def test_kkt_at_solution(rng):
    data = sparse_data(rng, n=40, p=8)
    lam = 0.1
    beta = fit_lasso(data, lam)
    g = empirical_gradient(data, beta)
    assert abs(g[0]) <= 1e-6
    on = np.flatnonzero(beta[1:]) + 1
    off = np.setdiff1d(np.arange(1, 8), on)
    assert np.allclose(g[on], -lam * np.sign(beta[on]), atol=1e-6)
    assert np.all(np.abs(g[off]) <= lam + 1e-6)


def test_coordinate_descent_objective_is_monotone(rng):
    data = sparse_data(rng, n=25, p=12)
    G = data.X.T @ data.X / data.n
    c = data.X.T @ data.y / data.n
    lam = np.r_[0.0, np.full(11, 0.05)]
    vals = []
    for sweeps in range(1, 15):
        b, _ = _cd_quadratic(G, c, lam, np.zeros(12), sweeps, 1e-14)
        vals.append(0.5 * b @ G @ b - c @ b + lam @ np.abs(b))
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))


def test_nonconvergence_warns(rng):
    data = sparse_data(rng, n=25, p=12)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        fit_lasso(data, 1e-4, LassoConfig(max_iter=1, tol=1e-14))
    assert any(issubclass(w.category, ConvergenceWarning) for w in rec)


def test_cv_is_deterministic(rng):
    data = sparse_data(rng, n=60, p=10)
    cfg = LassoConfig(seed=3)
    a, b = cv_lasso(data, cfg), cv_lasso(data, cfg)
    assert a[0] == b[0] and np.array_equal(a[1], b[1])


def test_config_validation():
    for bad in (dict(lambda_grid=[0.1, 0.2]), dict(lambda_grid=[0.1, -1.0]), dict(cv_folds=1), dict(tol=0)):
        with pytest.raises(ValueError):
            LassoConfig(**bad)
    LassoConfig(lambda_grid=[0.3, 0.2, 0.1])


@pytest.mark.parametrize("seed", range(3))
def test_debias_exact_inverse_gives_ols(seed):
    rng = np.random.default_rng(seed)
    data = sparse_data(rng, n=40, p=6)
    ols = np.linalg.lstsq(data.X, data.y, rcond=None)[0]
    for start in (fit_lasso(data, 0.2), rng.standard_normal(6), np.zeros(6)):
        assert np.allclose(debias(data, start), ols, atol=1e-8, rtol=0)


def test_debias_identity_at_minimizer(rng):
    data = sparse_data(rng, kind="logistic", n=80)
    mle = fit_unpenalized(data)
    assert np.allclose(debias(data, mle), mle, atol=1e-8)


def test_singular_hessian_falls_back_to_ridge(rng):
    data = sparse_data(rng, n=30, p=4)
    X = np.column_stack([data.X, data.X[:, 1]])
    dup = LocalDataset(X, data.y, "squared")
    with pytest.warns(ConvergenceWarning):
        Theta = approximate_inverse_hessian(dup, np.zeros(5))
    assert np.all(np.isfinite(Theta))


def test_nodewise_inverse_approximates_inverse_when_p_large():
    rng = np.random.default_rng(1)
    n, p = 40, 60
    X = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    data = LocalDataset(X, rng.standard_normal(n), "squared")
    Theta = approximate_inverse_hessian(data, np.zeros(p))
    H = empirical_hessian(data, np.zeros(p))
    # the nodewise construction gives unit diagonal of Theta H up to the KKT slack
    assert Theta.shape == (p, p)
    assert np.max(np.abs(np.diag(Theta @ H) - 1)) < 0.5
    assert np.all(np.diag(Theta) > 0)


def _bias_trial(r):
    rng = np.random.default_rng(r)
    n, p = 50, 100
    theta = np.zeros(p)
    theta[1:4] = [1.5, -1.0, 1.0]
    X = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    data = LocalDataset(X, X @ theta + rng.standard_normal(n), "squared")
    _, lasso = cv_lasso(data)
    return theta, lasso, debias(data, lasso)


def test_debias_beats_lasso_in_l2_monte_carlo():
    """As stated: full-vector l2 error of the debiased estimate below the Lasso's in >= 80% of 50 runs."""
    wins = 0
    for r in range(50):
        theta, lasso, deb = _bias_trial(r)
        wins += np.linalg.norm(deb - theta) < np.linalg.norm(lasso - theta)
    assert wins >= 40, f"debiased estimate closer in l2 in only {wins}/50 replicates"


def test_debias_reduces_error_on_true_support():
    wins = 0
    for r in range(50):
        theta, lasso, deb = _bias_trial(r)
        S = slice(1, 4)
        wins += np.linalg.norm((deb - theta)[S]) < np.linalg.norm((lasso - theta)[S])
    assert wins >= 40


def test_estimator_switch(rng):
    low = sparse_data(rng, n=40, p=6)
    assert np.allclose(local_estimate(low), np.linalg.lstsq(low.X, low.y, rcond=None)[0], atol=1e-8)
    high = sparse_data(rng, n=30, p=20, beta=np.r_[0.3, 1.0, -0.8, np.zeros(17)])
    _, lasso = cv_lasso(high)
    assert np.allclose(local_estimate(high), debias(high, lasso))


def test_packet_contents(rng):
    data = sparse_data(rng, n=40, p=6)
    pk = make_packet(data, client_id="c7")
    assert pk.client_id == "c7" and pk.n == 40 and pk.p == 6
    assert np.array_equal(pk.hessian_tilde, empirical_hessian(data, pk.theta_tilde))
    assert np.allclose(pk.hessian_tilde, data.X.T @ data.X / 40, rtol=1e-14)
    z = zeta(pk)
    assert z.shape == (6,) and np.all(np.isfinite(z))
    assert np.allclose(z, pk.hessian_tilde @ pk.theta_tilde - pk.grad_tilde)


def test_lsa_is_exact_for_squared_loss(rng):
    data = sparse_data(rng, n=40, p=6)
    pk = make_packet(data)
    V, z = pk.hessian_tilde, pk.zeta
    diffs = []
    for _ in range(5):
        th = rng.standard_normal(6)
        diffs.append(th @ V @ th - 2 * th @ z - 2 * empirical_loss(data, th))
    assert np.ptp(diffs) <= 1e-8
