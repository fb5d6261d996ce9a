"""Closed-form reference values for P_t^V f and its derivatives.

These share no code with the simulator beyond numpy: Euclidean cases use
explicit Gaussian formulas or 64-point Gauss-Hermite quadrature, the sphere
case a Legendre expansion.  ``t`` is always the semigroup horizon, so the
martingale checker evaluates ``case.value(T - s, x_s)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import hermite_e, legendre


class OracleError(ValueError):
    pass


class OracleMissing(OracleError):
    """No closed form for the requested model/fields."""


GH_POINTS = 64
_gh_nodes, _gh_weights = hermite_e.hermegauss(GH_POINTS)
_gh_weights = _gh_weights / math.sqrt(2 * math.pi)


# ---------------------------------------------------------------------------
# one-dimensional building blocks: each returns (g, g', g'') at the points m
# for E h(m + sigma xi), xi ~ N(0, 1), differentiated in m.


def _gauss_expect(h, dh, d2h, m, sigma):
    y = m[..., None] + sigma * _gh_nodes
    w = _gh_weights
    return h(y) @ w, dh(y) @ w, d2h(y) @ w


def _bump_1d(c, width):
    w2 = width * width
    h = lambda y: np.exp(-((y - c) ** 2) / (2 * w2))
    dh = lambda y: -(y - c) / w2 * h(y)
    d2h = lambda y: ((y - c) ** 2 / (w2 * w2) - 1 / w2) * h(y)
    return h, dh, d2h


@dataclass
class OracleValue:
    value: np.ndarray
    grad: np.ndarray  # ambient gradient (tangent on the sphere)
    hess: np.ndarray  # ambient bilinear form acting on tangent vectors
    generator: np.ndarray  # (L P_t f)(x), L = 1/2 Laplacian + Z


@dataclass
class OracleCase:
    """Closed form for one (model, fields) family; ``evaluate(t, X)`` gives
    P_t^V f and its derivatives at a batch of points."""

    id: str
    model_kind: str
    dim: int
    evaluate: Callable
    potential: Callable  # V(X), time independent in every oracle
    drift: Callable  # Z(X)
    params: dict = field(default_factory=dict)

    def value(self, t, X):
        return self.evaluate(t, np.atleast_2d(np.asarray(X, dtype=float))).value

    def at(self, t, X):
        return self.evaluate(t, np.atleast_2d(np.asarray(X, dtype=float)))

    def quantity(self, kind, T, x0, frame, v=None, w=None):
        """Oracle for one estimator at x0; v, w are frame components."""
        r = self.at(T, x0)
        if kind == "semigroup":
            return float(r.value[0])
        va = frame @ v if v is not None else None
        if kind == "gradient":
            return float(r.grad[0] @ va)
        if kind == "generator":
            return float(r.generator[0])
        if kind == "hessian":
            wa = frame @ w
            return float(va @ r.hess[0] @ wa)
        raise OracleError(f"unknown quantity {kind!r}")

    def pde_residual(self, t, X, ht=1e-4, hx=1e-3):
        """d_t phi - (L - V) phi from finite differences of values only."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        dphi_dt = (self.value(t + ht, X) - self.value(t - ht, X)) / (2 * ht)
        phi = self.value(t, X)
        if self.model_kind == "euclidean":
            lap = np.zeros(len(X))
            drift_term = np.zeros(len(X))
            Zx = self.drift(X)
            for i in range(X.shape[1]):
                e = np.zeros(X.shape[1])
                e[i] = hx
                up, dn = self.value(t, X + e), self.value(t, X - e)
                lap += (up - 2 * phi + dn) / hx**2
                drift_term += Zx[:, i] * (up - dn) / (2 * hx)
            Lphi = 0.5 * lap + drift_term
        elif self.model_kind == "sphere":
            c = self.params["curvature"]
            R = 1 / math.sqrt(c)
            theta = np.arccos(np.clip(X[:, -1] / R, -1, 1))

            def at_theta(th):
                return self.value(t, np.stack([R * np.sin(th), np.zeros_like(th), R * np.cos(th)], axis=1))

            up, dn = at_theta(theta + hx), at_theta(theta - hx)
            u2 = (up - 2 * phi + dn) / hx**2
            u1 = (up - dn) / (2 * hx)
            with np.errstate(divide="ignore", invalid="ignore"):
                polar = np.where(np.sin(theta) < 1e-6, u2, np.cos(theta) / np.sin(theta) * u1)
            Lphi = 0.5 * c * (u2 + polar)
        else:
            raise OracleError(self.model_kind)
        return dphi_dt - (Lphi - self.potential(X) * phi)


# ---------------------------------------------------------------------------
# Euclidean: heat and Ornstein-Uhlenbeck


def _ou_eval(t, X, lam, payoff, params):
    """P_t f for dX = -lam X dt + dB with f separable / polynomial."""
    P, n = X.shape
    decay = math.exp(-lam * t)
    var = t if lam == 0 else (1 - math.exp(-2 * lam * t)) / (2 * lam)
    m = X * decay
    value = np.empty(P)
    grad = np.zeros((P, n))
    hess = np.zeros((P, n, n))
    if payoff in ("one", "constant"):
        cval = params.get("c", 1.0)
        value[:] = cval
    elif payoff == "linear":
        coef = np.asarray(params["coef"], dtype=float)
        value = m @ coef
        grad[:] = decay * coef
    elif payoff == "quadratic":
        a = params.get("a", 1.0)
        value = a * (np.sum(m * m, axis=1) + n * var)
        grad = 2 * a * decay * m
        hess[:] = 2 * a * decay * decay * np.eye(n)
    elif payoff == "sin":
        k = params.get("freq", 1.0)
        i = params.get("coord", 0)
        damp = math.exp(-0.5 * k * k * var)
        value = damp * np.sin(k * m[:, i])
        grad[:, i] = damp * k * decay * np.cos(k * m[:, i])
        hess[:, i, i] = -damp * (k * decay) ** 2 * np.sin(k * m[:, i])
    elif payoff == "gaussian_bump":
        center = np.asarray(params["center"], dtype=float)
        width = params.get("width", 1.0)
        G = np.empty((3, P, n))
        for i in range(n):
            G[:, :, i] = _gauss_expect(*_bump_1d(center[i], width), m[:, i], math.sqrt(var))
        value = np.prod(G[0], axis=1)
        for i in range(n):
            others = np.prod(np.delete(G[0], i, axis=1), axis=1)
            grad[:, i] = decay * G[1][:, i] * others
            hess[:, i, i] = decay**2 * G[2][:, i] * others
            for j in range(i + 1, n):
                rest = np.prod(np.delete(G[0], [i, j], axis=1), axis=1)
                hess[:, i, j] = hess[:, j, i] = decay**2 * G[1][:, i] * G[1][:, j] * rest
    else:
        raise OracleMissing(f"no Euclidean oracle for payoff {payoff!r}")
    gen = 0.5 * np.trace(hess, axis1=1, axis2=2) - lam * np.sum(X * grad, axis=1)
    return OracleValue(value, grad, hess, gen)


def gaussian_heat(t, x, payoff="sin", **params):
    """P_t f for L = 1/2 Laplacian on R^n (no drift, no potential)."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    return _ou_eval(float(t), X, 0.0, payoff, params)


def ou_mehler(t, x, lam=1.0, payoff="linear", **params):
    """P_t f for the OU generator 1/2 Laplacian - lam x . grad (Mehler)."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    return _ou_eval(float(t), X, float(lam), payoff, params)


# ---------------------------------------------------------------------------
# Euclidean Feynman-Kac with V = a |x|^2, f = 1


def harmonic_feynman_kac(t, x, a=0.5):
    """E exp(-a int_0^t |x + B_s|^2 ds), product over coordinates of
    (cosh wt)^{-1/2} exp(-x^2 (w/2) tanh wt), w = sqrt(2a)."""
    if a <= 0:
        raise OracleError("harmonic oracle needs a > 0")
    X = np.atleast_2d(np.asarray(x, dtype=float))
    P, n = X.shape
    om = math.sqrt(2 * a)
    beta = om * math.tanh(om * t)
    u = math.cosh(om * t) ** -0.5 * np.exp(-0.5 * X * X * beta)  # per coordinate
    du = -X * beta * u
    d2u = (X * X * beta * beta - beta) * u
    value = np.prod(u, axis=1)
    grad = np.empty((P, n))
    hess = np.zeros((P, n, n))
    for i in range(n):
        others = np.prod(np.delete(u, i, axis=1), axis=1)
        grad[:, i] = du[:, i] * others
        hess[:, i, i] = d2u[:, i] * others
        for j in range(i + 1, n):
            rest = np.prod(np.delete(u, [i, j], axis=1), axis=1)
            hess[:, i, j] = hess[:, j, i] = du[:, i] * du[:, j] * rest
    gen = 0.5 * np.trace(hess, axis1=1, axis2=2)
    return OracleValue(value, grad, hess, gen)


# ---------------------------------------------------------------------------
# sphere: zonal payoffs, Legendre expansion


def legendre_coefficients(zonal, ell_max, nodes=None):
    """c_l with f(u) = sum c_l P_l(u) on [-1, 1]."""
    nq = nodes or max(2 * ell_max + 2, 200)
    u, wq = legendre.leggauss(nq)
    fu = zonal(u)
    coefs = np.empty(ell_max + 1)
    for ell in range(ell_max + 1):
        e = np.zeros(ell + 1)
        e[ell] = 1.0
        coefs[ell] = (2 * ell + 1) / 2 * np.sum(wq * fu * legendre.legval(u, e))
    return coefs


def _tail_bound(fmax, t, c, ell_max, order):
    ell = np.arange(ell_max + 1, ell_max + 2000)
    return float(fmax * np.sum((2 * ell + 1) * (ell * (ell + 1) * c) ** (order / 2) * np.exp(-ell * (ell + 1) * c * t / 2)))


def sphere_spectral(t, theta, zonal, ell_max=None, curvature=1.0, tol=1e-10, fmax=None):
    """Zonal P_t f on S^2 of curvature c as functions of the polar angle.

    Returns (u, du/ds, d2u/ds2, polar) with s = arc length and
    polar = cot-term (du/ds) cos(theta)/(R sin(theta)), continued by d2u/ds2 at the poles.
    """
    t = float(t)
    theta = np.asarray(theta, dtype=float)
    c = float(curvature)
    if fmax is None:
        fmax = float(np.max(np.abs(zonal(np.linspace(-1, 1, 2001)))))
    if t <= 0:
        # no smoothing: only exact for polynomial payoffs of degree <= ell_max
        ell_max = 64 if ell_max is None else ell_max
    elif ell_max is None:
        ell_max = 2
        while _tail_bound(fmax, t, c, ell_max, 2) > tol:
            ell_max += 4
            if ell_max > 600:
                raise OracleError("spectral truncation does not reach the requested tolerance")
    elif _tail_bound(fmax, t, c, ell_max, 2) > tol:
        raise OracleError(f"truncation bound exceeds tolerance {tol} at ell_max={ell_max}")
    coefs = legendre_coefficients(zonal, ell_max)
    ell = np.arange(ell_max + 1)
    coefs = coefs * np.exp(-ell * (ell + 1) * c * t / 2)
    u = np.cos(theta)
    st = np.sin(theta)
    d1 = legendre.legder(coefs)
    d2 = legendre.legder(coefs, 2)
    val = legendre.legval(u, coefs)
    p1 = legendre.legval(u, d1)
    p2 = legendre.legval(u, d2)
    sq = math.sqrt(c)
    du = -st * p1 * sq  # d/ds = sqrt(c) d/dtheta
    d2u = (st * st * p2 - u * p1) * c
    polar = -u * p1 * c  # cot(theta) u_theta = -cos(theta) P'(u)
    return val, du, d2u, polar


def _sphere_eval(t, X, zonal, curvature):
    c = curvature
    R = 1 / math.sqrt(c)
    P, d = X.shape
    cos_t = np.clip(X[:, -1] / R, -1, 1)
    theta = np.arccos(cos_t)
    val, du, d2u, polar = sphere_spectral(t, theta, zonal, curvature=c)
    N = np.zeros(d)
    N[-1] = 1.0
    xh = X / R
    st = np.sin(theta)
    safe = st > 1e-12
    e_th = np.zeros((P, d))
    e_th[safe] = (cos_t[safe, None] * xh[safe] - N) / st[safe, None]
    grad = du[:, None] * e_th
    Ptan = np.eye(d) - np.einsum("pi,pj->pij", xh, xh)
    ee = np.einsum("pi,pj->pij", e_th, e_th)
    hess = d2u[:, None, None] * ee + polar[:, None, None] * (Ptan - ee)
    gen = 0.5 * (d2u + polar)
    return OracleValue(val, grad, hess, gen)


# ---------------------------------------------------------------------------
# lookup


def _scaled(case: OracleCase, vconst: float) -> OracleCase:
    """V = const on top of an oracle: every quantity picks up exp(-c t)."""
    inner = case.evaluate

    def evaluate(t, X):
        r = inner(t, X)
        s = math.exp(-vconst * t)
        return OracleValue(s * r.value, s * r.grad, s * r.hess, s * r.generator)

    base_pot = case.potential
    return OracleCase(case.id + f"+V={vconst}", case.model_kind, case.dim, evaluate,
                      lambda X: base_pot(X) + vconst, case.drift, dict(case.params, v_const=vconst))


def lookup(model, fields) -> OracleCase:
    """Closed-form oracle for the configured model and fields, or raise
    :class:`OracleMissing`."""
    pot, drift, payoff = fields.potential, fields.drift, fields.payoff
    kind = model.kind
    n = model.dim
    zero_v = lambda X: np.zeros(len(X))
    zero_z = lambda X: np.zeros_like(X)
    vconst = 0.0
    pname = pot.name
    if pname == "constant":
        vconst = pot.params["c"]
        pname = "zero"
    case = None
    if kind == "euclidean" and pname == "zero" and drift.name in ("zero", "ou"):
        lam = drift.params.get("lam", 0.0) if drift.name == "ou" else 0.0
        if payoff.name not in ("one", "constant", "linear", "quadratic", "sin", "gaussian_bump"):
            raise OracleMissing(f"no Euclidean oracle for payoff {payoff.name!r}")
        name, params = payoff.name, dict(payoff.params)
        case = OracleCase(
            "ou_mehler" if lam else "gaussian_heat", "euclidean", n,
            lambda t, X: _ou_eval(t, X, lam, name, params), zero_v,
            (lambda X: -lam * X) if lam else zero_z, {"lam": lam, "payoff": name},
        )
    elif kind == "euclidean" and pname == "quadratic" and drift.name == "zero" and payoff.name in ("one", "constant"):
        a = pot.params["a"]
        scale = payoff.params.get("c", 1.0)

        def evaluate(t, X):
            r = harmonic_feynman_kac(t, X, a)
            return OracleValue(scale * r.value, scale * r.grad, scale * r.hess, scale * r.generator)

        case = OracleCase("harmonic_feynman_kac", "euclidean", n, evaluate,
                          lambda X: a * np.sum(X * X, axis=1), zero_z, {"a": a})
    elif kind == "sphere" and n == 2 and pname == "zero" and drift.name == "zero" and payoff.zonal is not None:
        c = model.curvature
        radius = payoff.params.get("radius", 1.0)
        if abs(radius - 1 / math.sqrt(c)) > 1e-12 and payoff.name != "constant":
            raise OracleMissing("payoff radius does not match the sphere")
        case = OracleCase("sphere_spectral", "sphere", 2,
                          lambda t, X: _sphere_eval(t, X, payoff.zonal, c), zero_v, zero_z,
                          {"curvature": c, "payoff": payoff.name})
    if case is None:
        raise OracleMissing(f"no oracle for {kind} with potential {pot.name!r}, drift {drift.name!r}, "
                            f"payoff {payoff.name!r}")
    return _scaled(case, vconst) if vconst else case
