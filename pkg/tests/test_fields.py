import numpy as np
import pytest

from fkbismut import fields, geometry


def test_builtin_potentials_pass_derivative_probe(rng):
    X = rng.standard_normal((10, 3))
    for pot in (fields.potential_zero(), fields.potential_constant(0.7), fields.potential_quadratic(0.5)):
        fields.FieldSpec(potential=pot).check_derivatives(X)


def test_derivative_probe_catches_wrong_gradient(rng):
    bad = fields.Potential("bad", lambda t, X: np.sum(X**2, -1), lambda t, X: X, lambda t, X: np.zeros(X.shape + X.shape[-1:]),
                           v_min=0.0)
    with pytest.raises(fields.FieldError):
        fields.FieldSpec(potential=bad).check_derivatives(rng.standard_normal((4, 2)))


def test_negative_quadratic_rejected():
    with pytest.raises(fields.FieldError):
        fields.potential_quadratic(-1.0)


def test_payoffs():
    X = np.array([[0.5, 0.0, np.sqrt(0.75)]])
    assert np.allclose(fields.payoff_height()(X), np.sqrt(0.75))
    assert np.allclose(fields.payoff_legendre(2)(X), 0.5 * (3 * 0.75 - 1))
    assert fields.payoff_cap(np.pi / 3)(X)[0] == 1.0
    assert np.allclose(fields.payoff_sin()(np.array([[np.pi / 2]])), 1.0)
    assert np.allclose(fields.payoff_quadratic(2.0)(np.array([[1.0, 2.0]])), 10.0)


def test_ou_frame_quantities():
    E = geometry.Euclidean(2)
    X = np.array([[0.3, -0.4]])
    F = np.eye(2)[None]
    dr = fields.drift_ou(1.5)
    assert np.allclose(dr.frame_value(E, X, F), [[-0.45, 0.6]])
    assert np.allclose(dr.frame_grad(E, X, F), -1.5 * np.eye(2))
    assert np.allclose(dr.frame_hess(E, X, F), 0)


def test_chart_drift_hess_matches_flat_for_flat_metric():
    flat = geometry.Chart(2, lambda X: np.broadcast_to(np.eye(2), X.shape + (2,)).copy())
    dr = fields.Drift("cubic", lambda X: np.stack([X[:, 0] ** 3, X[:, 0] * X[:, 1]], 1),
                      lambda X: np.stack([np.stack([3 * X[:, 0] ** 2, 0 * X[:, 0]], 1),
                                          np.stack([X[:, 1], X[:, 0]], 1)], 1))
    X = np.array([[0.4, -0.3]])
    F = np.eye(2)[None]
    H = dr.frame_hess(flat, X, F)
    # [a, b, c]: c-component of d_a d_b Z
    assert abs(H[0, 0, 0, 0] - 6 * 0.4) < 1e-5
    assert abs(H[0, 0, 1, 1] - 1) < 1e-5 and abs(H[0, 1, 0, 1] - 1) < 1e-5
    assert abs(H[0, 1, 1, 1]) < 1e-5


def test_kernel_codes():
    assert fields.FieldSpec().kernel_codes() == ((fields.V_ZERO, 0.0), (fields.Z_ZERO, 0.0))
    custom = fields.Potential("x", lambda t, X: X[:, 0] ** 2, lambda t, X: X, lambda t, X: X, 0.0)
    assert fields.FieldSpec(potential=custom).kernel_codes() is None
