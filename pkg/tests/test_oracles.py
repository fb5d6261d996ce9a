import math

import numpy as np
import pytest

from conftest import sphere_point
from fkbismut import fields, geometry, oracles


def test_gaussian_heat_examples():
    r = oracles.gaussian_heat(1.0, [0.0], "sin")
    assert r.value[0] == 0.0 and abs(r.grad[0, 0] - math.exp(-0.5)) < 1e-15
    r = oracles.gaussian_heat(0.8, [[0.3, -1.0]], "linear", coef=[2.0, 1.0])
    assert np.isclose(r.value[0], -0.4) and np.allclose(r.grad, [2, 1]) and np.all(r.hess == 0)
    r = oracles.gaussian_heat(0.6, [1.5], "quadratic")
    assert np.isclose(r.value[0], 2.25 + 0.6) and np.isclose(r.hess[0, 0, 0], 2.0)
    with pytest.raises(oracles.OracleMissing):
        oracles.gaussian_heat(1.0, [0.0], "cap")


def test_gauss_hermite_bump_matches_closed_form():
    x, c, w, t = np.array([0.4, -0.1]), np.array([0.0, 0.5]), 0.7, 0.9
    r = oracles.gaussian_heat(t, x, "gaussian_bump", center=c, width=w)
    s2 = w * w + t
    exact = (w * w / s2) * math.exp(-np.sum((x - c) ** 2) / (2 * s2))
    assert abs(r.value[0] - exact) < 1e-8
    assert np.allclose(r.grad[0], -(x - c) / s2 * exact, atol=1e-8)


def test_ou_examples():
    r = oracles.ou_mehler(1.3, [0.7], 0.5, "linear", coef=[1.0])
    assert np.isclose(r.value[0], 0.7 * math.exp(-0.65)) and np.isclose(r.grad[0, 0], math.exp(-0.65))
    r = oracles.ou_mehler(1.0, [0.0], 1.0, "quadratic")
    assert np.isclose(r.value[0], (1 - math.exp(-2)) / 2) and np.isclose(r.hess[0, 0, 0], 2 * math.exp(-2))
    r = oracles.ou_mehler(0.0, [0.4], 2.0, "sin")
    assert r.value[0] == math.sin(0.4)


def test_harmonic_examples():
    assert abs(oracles.harmonic_feynman_kac(1.0, [0.0], 0.5).value[0] - 0.8050) < 5e-5
    r = oracles.harmonic_feynman_kac(1.0, [1.0], 0.5)
    th = math.tanh(1.0)
    assert abs(r.value[0] - 0.5501) < 5e-5
    assert abs(r.grad[0, 0] + th * math.cosh(1.0) ** -0.5 * math.exp(-th / 2)) < 1e-14
    assert abs(r.grad[0, 0] + 0.419) < 1e-4
    assert oracles.harmonic_feynman_kac(0.0, [2.0], 0.5).value[0] == 1.0


def test_sphere_examples():
    v, _, _, _ = oracles.sphere_spectral(1.0, np.array([0.0]), lambda u: u)
    assert abs(v[0] - math.exp(-1)) < 1e-12
    v, _, _, _ = oracles.sphere_spectral(0.3, np.array([0.2, 2.0]), lambda u: np.ones_like(u))
    assert np.allclose(v, 1.0)
    case = oracles.lookup(geometry.sphere(2), fields.FieldSpec(payoff=fields.payoff_height()))
    x = sphere_point(math.pi / 3)
    F = geometry.sphere(2).default_frame(x)
    assert abs(case.quantity("hessian", 1.0, x, F, [1, 0], [1, 0]) + math.exp(-1) * 0.5) < 1e-12
    # Hess(cos) = -cos g in every direction
    assert abs(case.quantity("hessian", 1.0, x, F, [0, 1], [0, 1]) + math.exp(-1) * 0.5) < 1e-12
    assert abs(case.quantity("hessian", 1.0, x, F, [1, 0], [0, 1])) < 1e-12


def test_spectral_truncation_error():
    with pytest.raises(oracles.OracleError):
        oracles.sphere_spectral(0.01, np.array([0.5]), lambda u: (u > 0.3).astype(float), ell_max=4)


CASES = [
    (geometry.Euclidean(1), fields.FieldSpec(payoff=fields.payoff_sin()), [[0.3], [1.2]]),
    (geometry.Euclidean(2), fields.FieldSpec(payoff=fields.payoff_gaussian_bump([0.2, -0.3], 0.8)), [[0.1, 0.4]]),
    (geometry.Euclidean(1), fields.FieldSpec(payoff=fields.payoff_quadratic()), [[0.5]]),
    (geometry.Euclidean(1), fields.FieldSpec(drift=fields.drift_ou(1.0), payoff=fields.payoff_sin()), [[0.7]]),
    (geometry.Euclidean(2), fields.FieldSpec(drift=fields.drift_ou(0.5), payoff=fields.payoff_gaussian_bump([0, 0.5])),
     [[0.3, -0.2]]),
    (geometry.Euclidean(1), fields.FieldSpec(potential=fields.potential_quadratic(0.5)), [[0.0], [1.0]]),
    (geometry.Euclidean(2), fields.FieldSpec(potential=fields.potential_quadratic(0.3)), [[0.4, -0.6]]),
    (geometry.Euclidean(1), fields.FieldSpec(potential=fields.potential_constant(0.4), payoff=fields.payoff_sin()), [[0.9]]),
    (geometry.sphere(2), fields.FieldSpec(payoff=fields.payoff_height()), [sphere_point(0.4)]),
    (geometry.sphere(2), fields.FieldSpec(payoff=fields.payoff_legendre(3)), [sphere_point(1.1, 0.3), sphere_point(0.0)]),
    (geometry.sphere(2), fields.FieldSpec(payoff=fields.payoff_cap(math.pi / 3)), [sphere_point(0.8)]),
    (geometry.sphere(2, 2.0), fields.FieldSpec(payoff=fields.payoff_legendre(2, 1 / math.sqrt(2))),
     [sphere_point(0.6, c=2.0)]),
]


@pytest.mark.parametrize("model,fs,X", CASES)
def test_pde_residual(model, fs, X):
    case = oracles.lookup(model, fs)
    for t in (0.3, 1.0):
        assert np.abs(case.pde_residual(t, np.asarray(X))).max() < 1e-6


@pytest.mark.parametrize("model,fs,X", [c for c in CASES if c[0].kind == "euclidean"])
def test_euclidean_derivatives_match_differences(model, fs, X):
    case = oracles.lookup(model, fs)
    X = np.asarray(X, dtype=float)
    t, h = 0.7, 1e-4
    r = case.at(t, X)
    n = X.shape[1]
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        g_fd = (case.value(t, X + e) - case.value(t, X - e)) / (2 * h)
        assert np.allclose(r.grad[:, i], g_fd, atol=1e-6)
        gp, gm = case.at(t, X + e).grad, case.at(t, X - e).grad
        assert np.allclose(r.hess[:, :, i], (gp - gm) / (2 * h), atol=1e-6)
    # generator = 1/2 trace Hess + Z . grad
    lam = case.params.get("lam", 0.0)
    assert np.allclose(r.generator, 0.5 * np.trace(r.hess, axis1=1, axis2=2) - lam * np.sum(X * r.grad, 1))


def test_sphere_derivatives_match_differences():
    case = oracles.lookup(geometry.sphere(2), fields.FieldSpec(payoff=fields.payoff_cap(1.0)))
    S = geometry.sphere(2)
    x = sphere_point(0.7, 0.4)
    F = S.default_frame(x)
    h = 1e-4
    for a in range(2):
        v = np.eye(2)[a]
        fd = (case.value(0.5, S.project_point(x + h * F @ v)) - case.value(0.5, S.project_point(x - h * F @ v))) / (2 * h)
        assert abs(case.quantity("gradient", 0.5, x, F, v) - fd[0]) < 1e-6
        # second derivative along the geodesic through x in direction v
        pts = [geometry.exp_map(x, s * v, S) for s in (-h * 10, 0, h * 10)]
        vals = case.value(0.5, np.array(pts))
        d2 = (vals[0] - 2 * vals[1] + vals[2]) / (h * 10) ** 2
        assert abs(case.quantity("hessian", 0.5, x, F, v, v) - d2) < 1e-5


def test_lookup_missing():
    with pytest.raises(oracles.OracleMissing):
        oracles.lookup(geometry.hyperbolic(2), fields.FieldSpec())
    with pytest.raises(oracles.OracleMissing):
        oracles.lookup(geometry.Euclidean(1), fields.FieldSpec(potential=fields.potential_quadratic(1.0),
                                                               payoff=fields.payoff_sin()))
