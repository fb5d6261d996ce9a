"""Problem data: potential V(t, x), drift Z(x) and payoff f(x).

All callables are vectorised over a leading path axis and work in ambient
(embedding) or chart coordinates.  Conversion to frame components goes
through the manifold model, since frame components depend on the frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import FD_STEP_1, FD_STEP_3, GeometryError, ManifoldModel


class FieldError(ValueError):
    pass


# kernel codes; anything without a code runs on the numpy backend
V_ZERO, V_CONST, V_QUAD = 0, 1, 2
Z_ZERO, Z_OU = 0, 1


@dataclass
class Potential:
    """V(t, x) with ambient gradient and Hessian.

    ``v_min`` is a declared lower bound checked at run time.
    """

    name: str
    value: Callable
    grad: Callable
    hess: Callable
    v_min: float
    params: dict = field(default_factory=dict)
    code: tuple | None = None

    @property
    def is_zero(self):
        return self.code is not None and self.code[0] == V_ZERO


def potential_zero():
    return Potential(
        "zero",
        lambda t, X: np.zeros(len(X)),
        lambda t, X: np.zeros_like(X),
        lambda t, X: np.zeros(X.shape + X.shape[-1:]),
        v_min=0.0,
        code=(V_ZERO, 0.0),
    )


def potential_constant(c: float):
    c = float(c)
    return Potential(
        "constant",
        lambda t, X: np.full(len(X), c),
        lambda t, X: np.zeros_like(X),
        lambda t, X: np.zeros(X.shape + X.shape[-1:]),
        v_min=c,
        params={"c": c},
        code=(V_CONST, c),
    )


def potential_quadratic(a: float):
    """V(x) = a |x|^2 with a >= 0."""
    a = float(a)
    if a < 0:
        raise FieldError("quadratic potential needs a >= 0 to be bounded below")

    def hess(t, X):
        return np.broadcast_to(2 * a * np.eye(X.shape[-1]), X.shape + X.shape[-1:]).copy()

    return Potential(
        "quadratic",
        lambda t, X: a * np.sum(X * X, axis=-1),
        lambda t, X: 2 * a * X,
        hess,
        v_min=0.0,
        params={"a": a},
        code=(V_QUAD, a),
    )


@dataclass
class Drift:
    """Vector field Z with Jacobian ``jac[i, j] = d_j Z^i`` and optional
    second derivative ``hess[i, j, k] = d_j d_k Z^i`` (coordinates)."""

    name: str
    value: Callable
    jac: Callable
    hess: Callable | None = None
    params: dict = field(default_factory=dict)
    code: tuple | None = None

    @property
    def is_zero(self):
        return self.code is not None and self.code[0] == Z_ZERO

    def has_second_order(self, model: ManifoldModel) -> bool:
        if self.is_zero or model.kind in ("euclidean", "chart"):
            return True
        return False

    def frame_value(self, model, X, F):
        return model.vec_to_frame(X, F, self.value(X))

    def frame_grad(self, model, X, F):
        """(P, n, n), [a, b] = a-component of nabla_{e_b} Z."""
        P, n = len(X), model.dim
        if self.is_zero:
            return np.zeros((P, n, n))
        return model.jac_to_frame(X, F, self.jac(X), self.value(X))

    def frame_hess(self, model, X, F):
        """(P, n, n, n), [a, b, c] = c-component of nabla^2_{e_a, e_b} Z."""
        P, n = len(X), model.dim
        if self.is_zero:
            return np.zeros((P, n, n, n))
        if model.kind == "euclidean":
            H = self.hess(X) if self.hess is not None else _fd_jac(self.jac, X)
            # H[i, j, k] = d_j d_k Z^i; nabla^2_{a,b} Z = D^2 Z(a, b)
            return np.einsum("pijk,pja,pkb,pic->pabc", H, F, F, F)
        if model.kind == "chart":
            return _chart_drift_hess(model, self, X, F)
        raise GeometryError(f"nabla nabla Z unavailable for drift {self.name!r} on {model.kind}")


def _fd_jac(jac, X):
    """d_k of jac, returned as [i, j, k]."""
    P, n = X.shape
    h = FD_STEP_3 * np.maximum(1.0, np.abs(X).max(axis=-1))
    out = np.empty((P, n, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        dX = h[:, None] * e
        out[..., k] = (jac(X + dX) - jac(X - dX)) / (2 * h[:, None, None])
    return out


def _chart_nabla_z_coords(model, drift, X):
    """(nabla_j Z)^i in coordinates, [i, j]."""
    Gam = model.christoffel(X)
    return drift.jac(X) + np.einsum("pijk,pk->pij", Gam, drift.value(X))


def _chart_drift_hess(model, drift, X, F):
    P, n = X.shape
    h = FD_STEP_3 * np.maximum(1.0, np.abs(X).max(axis=-1))
    dN = np.empty((P, n, n, n))  # [a, i, b] = d_a (nabla_b Z)^i
    for a in range(n):
        e = np.zeros(n)
        e[a] = 1.0
        dX = h[:, None] * e
        dN[:, a] = (_chart_nabla_z_coords(model, drift, X + dX) - _chart_nabla_z_coords(model, drift, X - dX)) / (
            2 * h[:, None, None]
        )
    Gam = model.christoffel(X)
    NZ = _chart_nabla_z_coords(model, drift, X)
    # (nabla_a nabla Z)^i_b = d_a N^i_b + Gam^i_ac N^c_b - Gam^c_ab N^i_c
    full = dN + np.einsum("piac,pcb->paib", Gam, NZ) - np.einsum("pcab,pic->paib", Gam, NZ)
    G = model.metric(X)
    return np.einsum("paib,pax,pby,pij,pjz->pxyz", full, F, F, G, F)


def drift_zero():
    return Drift(
        "zero",
        lambda X: np.zeros_like(X),
        lambda X: np.zeros(X.shape + X.shape[-1:]),
        lambda X: np.zeros(X.shape + X.shape[-1:] * 2),
        code=(Z_ZERO, 0.0),
    )


def drift_ou(lam: float):
    """Z(x) = -lam x (Ornstein-Uhlenbeck)."""
    lam = float(lam)

    def jac(X):
        return np.broadcast_to(-lam * np.eye(X.shape[-1]), X.shape + X.shape[-1:]).copy()

    return Drift(
        "ou",
        lambda X: -lam * X,
        jac,
        lambda X: np.zeros(X.shape + X.shape[-1:] * 2),
        params={"lam": lam},
        code=(Z_OU, lam),
    )


@dataclass
class Payoff:
    """Bounded (or polynomially growing) payoff ``f(X)``.

    ``zonal`` gives f as a function of cos(theta) for payoffs on the sphere
    that only depend on the polar angle about the last axis.
    """

    name: str
    func: Callable
    params: dict = field(default_factory=dict)
    zonal: Callable | None = None

    def __call__(self, X):
        return self.func(np.asarray(X, dtype=float))


def payoff_one():
    return Payoff("one", lambda X: np.ones(len(X)), zonal=lambda u: np.ones_like(u))


def payoff_constant(c):
    c = float(c)
    return Payoff("constant", lambda X: np.full(len(X), c), {"c": c}, zonal=lambda u: np.full_like(u, c))


def payoff_sin(coord=0, freq=1.0):
    return Payoff("sin", lambda X: np.sin(freq * X[:, coord]), {"coord": coord, "freq": freq})


def payoff_linear(coef):
    coef = np.asarray(coef, dtype=float)
    return Payoff("linear", lambda X: X @ coef, {"coef": coef.tolist()})


def payoff_quadratic(a=1.0):
    """f(x) = a |x|^2."""
    return Payoff("quadratic", lambda X: a * np.sum(X * X, axis=-1), {"a": a})


def payoff_gaussian_bump(center, width=1.0):
    center = np.asarray(center, dtype=float)
    return Payoff(
        "gaussian_bump",
        lambda X: np.exp(-np.sum((X - center) ** 2, axis=-1) / (2 * width**2)),
        {"center": center.tolist(), "width": width},
    )


def payoff_height(radius=1.0):
    """cos(theta) = x_last / radius on a sphere (first zonal harmonic)."""
    return Payoff("height", lambda X: X[:, -1] / radius, {"radius": radius}, zonal=lambda u: u)


def payoff_legendre(ell: int, radius=1.0):
    from numpy.polynomial import legendre

    coefs = np.zeros(ell + 1)
    coefs[ell] = 1.0
    return Payoff(
        "legendre",
        lambda X: legendre.legval(X[:, -1] / radius, coefs),
        {"ell": ell, "radius": radius},
        zonal=lambda u: legendre.legval(u, coefs),
    )


def payoff_cap(theta_c: float, radius=1.0):
    """Indicator of the polar cap theta < theta_c."""
    uc = math.cos(theta_c)
    return Payoff(
        "cap",
        lambda X: (X[:, -1] / radius > uc).astype(float),
        {"theta_c": theta_c, "radius": radius},
        zonal=lambda u: (u > uc).astype(float),
    )


@dataclass
class FieldSpec:
    potential: Potential = field(default_factory=potential_zero)
    drift: Drift = field(default_factory=drift_zero)
    payoff: Payoff = field(default_factory=payoff_one)

    # accessors by role name
    def V(self, t, X):
        return self.potential.value(t, X)

    def dV(self, t, X):
        return self.potential.grad(t, X)

    def hessV(self, t, X):
        return self.potential.hess(t, X)

    def Z(self, X):
        return self.drift.value(X)

    def gradZ(self, X):
        return self.drift.jac(X)

    def f(self, X):
        return self.payoff(X)

    @property
    def v_min(self):
        return self.potential.v_min

    def kernel_codes(self):
        if self.potential.code is None or self.drift.code is None:
            return None
        return self.potential.code, self.drift.code

    def check_derivatives(self, X, t=0.0, rtol=1e-4):
        """Compare dV and hessV with central differences of V at points ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        P, d = X.shape
        h = FD_STEP_1 * np.maximum(1.0, np.abs(X).max(axis=-1))
        g_fd = np.empty((P, d))
        H_fd = np.empty((P, d, d))
        hh = 1e-4 * np.maximum(1.0, np.abs(X).max(axis=-1))
        for i in range(d):
            e = np.zeros(d)
            e[i] = 1.0
            g_fd[:, i] = (self.V(t, X + h[:, None] * e) - self.V(t, X - h[:, None] * e)) / (2 * h)
            H_fd[:, :, i] = (self.dV(t, X + hh[:, None] * e) - self.dV(t, X - hh[:, None] * e)) / (2 * hh[:, None])
        g = self.dV(t, X)
        H = self.hessV(t, X)
        scale_g = max(1.0, np.abs(g).max())
        scale_H = max(1.0, np.abs(H).max())
        if np.abs(g - g_fd).max() > rtol * scale_g:
            raise FieldError(f"dV of potential {self.potential.name!r} disagrees with finite differences")
        if np.abs(H - H_fd).max() > rtol * scale_H:
            raise FieldError(f"hessV of potential {self.potential.name!r} disagrees with finite differences")
