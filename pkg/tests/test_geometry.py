import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from conftest import sphere_point
from fkbismut import fields, geometry
from fkbismut.geometry import exp_map, parallel_transport_step, curvature_pack


def test_flat_exp_is_translation():
    assert np.allclose(exp_map([0.0, 0.0], [1.0, 2.0], geometry.Euclidean(2)), [1, 2])


def test_sphere_antipode():
    S = geometry.sphere(2)
    y = exp_map([0, 0, 1.0], [math.pi, 0], S)
    assert np.allclose(y, [0, 0, -1], atol=1e-12)


def test_sphere_quarter_turn_matches_ode():
    S = geometry.sphere(2)
    N = np.array([0, 0, 1.0])
    F = S.default_frame(N)
    v = np.array([0.6, 0.8]) * (math.pi / 2)
    y = exp_map(N, v, S)
    # geodesic ODE x'' = -|x'|^2 x on the unit sphere
    u0 = F @ v

    def rhs(t, z):
        x, u = z[:3], z[3:]
        return np.r_[u, -np.dot(u, u) * x]

    sol = solve_ivp(rhs, (0, 1), np.r_[N, u0], rtol=1e-11, atol=1e-12)
    assert np.allclose(y, sol.y[:3, -1], atol=1e-8)
    assert abs(y[2]) < 1e-12
    assert np.allclose(y[:2], [0.6, 0.8], atol=1e-12)


def test_hyperbolic_exp_stays_on_hyperboloid():
    H = geometry.hyperbolic(2, -0.5)
    x = H.project_point([0.3, -0.2, 0.0])
    y = exp_map(x, [0.7, -1.1], H)
    assert abs(y[0] ** 2 + y[1] ** 2 - y[2] ** 2 + 1 / 0.5) < 1e-10


def test_flat_transport_identity():
    F = np.eye(2)
    assert np.array_equal(parallel_transport_step([0, 0.0], [0.3, 1.0], F, geometry.Euclidean(2)), F)


def _walk(S, x, F, direction_amb, length):
    v = F.T @ direction_amb * length
    x_new = exp_map(x, v, S, frame=F)
    F_new = parallel_transport_step(x, v, F, S)
    return x_new, F_new


def test_great_circle_holonomy_trivial():
    S = geometry.sphere(2)
    x = np.array([0, 0, 1.0])
    F0 = S.default_frame(x)
    F = F0.copy()
    for _ in range(8):
        v = np.array([math.pi / 4, 0.0])
        x, F = exp_map(x, v, S, frame=F), parallel_transport_step(x, v, F, S)
    assert np.allclose(x, [0, 0, 1], atol=1e-12)
    assert np.allclose(F, F0, atol=1e-10)


def test_right_triangle_holonomy():
    # N -> (1,0,0) -> (0,1,0) -> N encloses area pi/2
    S = geometry.sphere(2)
    N = np.array([0, 0, 1.0])
    F0 = S.default_frame(N)
    x, F = N, F0
    for target in ([1, 0, 0.0], [0, 1, 0.0], [0, 0, 1.0]):
        target = np.asarray(target)
        # initial direction of the great circle from x to target
        d = target - np.dot(target, x) * x
        x, F = _walk(S, x, F, d / np.linalg.norm(d), math.pi / 2)
    assert np.allclose(x, N, atol=1e-12)
    cosang = np.clip(np.dot(F[:, 0], F0[:, 0]), -1, 1)
    assert abs(math.acos(cosang) - math.pi / 2) < 1e-9


def test_curvature_pack_examples():
    E = geometry.Euclidean(3)
    x = np.zeros(3)
    cp = curvature_pack(E, fields.drift_zero())
    assert np.array_equal(cp.ricci_z(x, np.eye(3)), np.zeros((3, 3)))
    assert np.array_equal(cp.riemann(x, np.eye(3), [1, 0, 0], [0, 1, 0], [0, 1, 0]), np.zeros(3))
    cp = curvature_pack(E, fields.FieldSpec(drift=fields.drift_ou(1.0)))
    assert np.allclose(cp.ricci_z(x + 0.3, np.eye(3)), 2 * np.eye(3))
    S = geometry.sphere(2)
    p = sphere_point(0.4, 1.0)
    cp = curvature_pack(S, fields.drift_zero(), need_second=True)
    assert np.allclose(cp.ricci_z(p, S.default_frame(p)), np.eye(2))
    assert np.allclose(cp.dstar_r(p, S.default_frame(p), [1, 0], [0, 1]), 0)


def test_curvature_pack_refuses_second_order_on_quadric_with_drift():
    dr = fields.Drift("rot", lambda X: 0 * X, lambda X: np.zeros(X.shape + X.shape[-1:]))
    with pytest.raises(geometry.GeometryError):
        curvature_pack(geometry.sphere(2), dr, need_second=True)


def test_constant_curvature_riemann_formula():
    S = geometry.sphere(3, 2.0)
    p = S.project_point([0.2, -0.1, 0.5, 0.4])
    cp = curvature_pack(S, fields.drift_zero())
    F = S.default_frame(p)
    rng = np.random.default_rng(0)
    u, v, w = rng.standard_normal((3, 3))
    got = cp.riemann(p, F, u, v, w)
    assert np.allclose(got, 2.0 * (np.dot(v, w) * u - np.dot(u, w) * v))
    assert np.allclose(got, -cp.riemann(p, F, v, u, w))


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5),
       st.sampled_from([1.0, 0.5, -1.0, -2.0]))
@settings(max_examples=60, deadline=None)
def test_quadric_step_properties(a, b, v1, v2, c):
    M = geometry.sphere(2, c) if c > 0 else geometry.hyperbolic(2, c)
    x = M.project_point(np.array([a, b, 1.0]))
    F = M.default_frame(x)
    U = F @ np.array([v1, v2])
    Xn, Fn, ok = M.geodesic_step(x[None], U[None], F[None])
    Xn, Fn = M.retract(Xn, Fn)
    assert ok[0]
    # stays on the model and keeps the frame orthonormal
    assert abs(M._ip(Xn[0], Xn[0]) - 1 / c) < 1e-9 * max(1, abs(M._ip(Xn[0], Xn[0])))
    assert M.frame_error(Xn, Fn)[0] < 1e-8
    # geodesic distance equals the speed (unit time)
    ip = M._ip(x, Xn[0]) * c
    dist = math.acos(min(1, max(-1, ip))) if c > 0 else math.acosh(max(1, ip))
    speed = math.hypot(v1, v2) * math.sqrt(abs(c))
    if c > 0 and speed > math.pi:
        return
    assert abs(dist - speed) < 1e-6 * max(1, speed)


def test_frame_orthonormal_on_chart_step():
    C = geometry.gaussian_bump_metric(2)
    dt = 1e-3
    rng = np.random.default_rng(5)
    X = rng.uniform(-1, 1, (20, 2))
    F = np.stack([C.default_frame(x) for x in X])
    U = np.einsum("pia,pa->pi", F, rng.standard_normal((20, 2)) * math.sqrt(dt))
    Xn, Fn, ok = C.geodesic_step(X, U, F)
    assert ok.all()
    assert C.frame_error(Xn, Fn).max() <= 10 * dt**2
    Xn, Fn = C.retract(Xn, Fn)
    assert C.frame_error(Xn, Fn).max() <= 10 * dt**2


@pytest.mark.parametrize("chart,c", [(geometry.stereographic_sphere, 1.0), (geometry.poincare_ball, -1.0),
                                     (geometry.stereographic_sphere, 0.5)])
def test_chart_matches_closed_form(chart, c):
    C = chart(2, c)
    X = np.array([[0.1, -0.2], [0.3, 0.25], [0.0, 0.0]])
    F = np.stack([C.default_frame(x) for x in X])
    loc = C.local(X, F, need_nabla=True)
    assert np.abs(loc.ricci - c * np.eye(2)).max() < 1e-4
    rng = np.random.default_rng(2)
    a, b, w = rng.standard_normal((3, 3, 2))
    want = c * (np.sum(b * w, 1)[:, None] * a - np.sum(a * w, 1)[:, None] * b)
    assert np.abs(loc.riemann_apply(a, b, w) - want).max() < 1e-4
    assert np.abs(loc.nabla_ricci).max() < 1e-4
    assert np.abs(loc.dstar_r()).max() < 1e-4


def test_dstar_r_identity_on_variable_curvature_chart():
    C = geometry.gaussian_bump_metric(2, amplitude=0.4, width=0.8)
    X = np.array([[0.3, -0.2], [0.5, 0.4], [-0.7, 0.1]])
    F = np.stack([C.default_frame(x) for x in X])
    direct = C.dstar_r_direct(X, F)
    via_ricci = C.local(X, F, need_nabla=True).dstar_r()
    assert np.abs(direct).max() > 0.05  # curvature really varies here
    assert np.abs(direct - via_ricci).max() < 1e-4


def test_chart_exp_matches_sphere():
    # stereographic chart from the south pole: compare distances travelled
    C = geometry.stereographic_sphere(2, 1.0)
    x = np.array([0.2, 0.1])
    v = np.array([0.3, -0.4])
    y = exp_map(x, v, C)

    def to_sphere(p):
        r2 = p @ p
        return np.r_[2 * p, 1 - r2] / (1 + r2)

    ang = math.acos(np.clip(to_sphere(x) @ to_sphere(y), -1, 1))
    assert abs(ang - 0.5) < 1e-6


def test_chart_domain_error():
    C = geometry.poincare_ball(2, -1.0)
    with pytest.raises(geometry.ChartDomainError):
        exp_map([0.9, 0.0], [20.0, 0.0], C)
