"""Metric, connection and curvature data for the supported manifold models.

Three families are supported:

* ``Euclidean`` -- flat R^n in Cartesian coordinates.
* ``Quadric`` -- the sphere (c > 0) and hyperbolic space (c < 0), embedded as
  the quadric <x, x> = 1/c in R^{n+1} (Euclidean inner product for the
  sphere, Minkowski signature (+,...,+,-) for the hyperboloid).  Geodesics and
  parallel transport are closed form.
* ``Chart`` -- a single coordinate chart with a user supplied metric
  ``g(x)``; Christoffel symbols and curvature come from central finite
  differences of ``g``.

Tangent vectors at a point are handled in two ways: as ambient (or
coordinate) vectors, and as components with respect to an orthonormal frame
``F`` whose columns are ambient vectors.  Every batched routine takes arrays
with a leading path axis ``P``.

Curvature sign convention: R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z
- nabla_[X,Y] Z, so that on constant curvature c
R(u,v)w = c(<v,w>u - <u,w>v) and Ric = (n-1) c g.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


class GeometryError(ValueError):
    """Raised on invalid geometric input."""


class ChartDomainError(GeometryError):
    """A geodesic left the region where the chart is valid."""


# finite difference steps by derivative order (relative to max(1, |x|))
FD_STEP_1 = 1e-5
FD_STEP_2 = 1e-4
FD_STEP_3 = 1e-3


def _q(a):
    """sin(a)/a, stable at 0."""
    return np.where(np.abs(a) < 1e-8, 1.0 - a * a / 6.0, np.sin(a) / np.where(a == 0, 1.0, a))


def _qh(a):
    return np.where(np.abs(a) < 1e-8, 1.0 + a * a / 6.0, np.sinh(a) / np.where(a == 0, 1.0, a))


class ManifoldModel:
    """Base class; see :class:`Euclidean`, :class:`Quadric`, :class:`Chart`."""

    kind: str
    dim: int
    curvature: float = 0.0

    @property
    def ambient_dim(self) -> int:
        return self.dim

    @property
    def constant_curvature(self) -> bool:
        return self.kind in ("euclidean", "sphere", "hyperbolic")

    # -- points and frames -------------------------------------------------
    def project_point(self, x):
        return np.asarray(x, dtype=float)

    def default_frame(self, x):
        """Deterministic orthonormal frame at ``x`` (Gram-Schmidt of the
        projected standard basis)."""
        x = self.project_point(x)
        d = self.ambient_dim
        cols = []
        for i in range(d):
            e = np.zeros(d)
            e[i] = 1.0
            u = self._tangent_part(x, e)
            for c in cols:
                u = u - self._inner1(x, u, c) * c
            nrm2 = self._inner1(x, u, u)
            if nrm2 > 1e-12:
                cols.append(u / math.sqrt(nrm2))
            if len(cols) == self.dim:
                break
        return np.stack(cols, axis=1)

    def _tangent_part(self, x, u):
        return u

    def _inner1(self, x, a, b):
        return float(np.sum(a * b * self.metric_diag))

    def frame_error(self, X, F):
        """max_ij |F^T G F - I| per path."""
        M = self.gram(X, F)
        return np.abs(M - np.eye(self.dim)).max(axis=(-2, -1))

    def gram(self, X, F):
        raise NotImplementedError

    # -- geodesic step -----------------------------------------------------
    def geodesic_step(self, X, U, F):
        """Move along the geodesic with initial velocity ``U`` (ambient) for
        unit time; parallel transport ``F``.  Returns ``(X, F, ok)``."""
        raise NotImplementedError

    def retract(self, X, F):
        return X, F

    # -- conversions to frame components -----------------------------------
    def vec_to_frame(self, X, F, U):
        return np.einsum("pia,pi->pa", F, U * self.metric_diag)

    def covec_to_frame(self, F, grad):
        return np.einsum("pi,pia->pa", grad, F)

    def hess_to_frame(self, X, F, H, grad):
        return np.einsum("pia,pij,pjb->pab", F, H, F)

    def jac_to_frame(self, X, F, J, Zv):
        """Frame components of nabla Z from the ambient Jacobian ``J[i,j] =
        d_j Z^i``; entry [a, b] is the a-component of nabla_{e_b} Z."""
        GJ = J * self.metric_diag[:, None]
        return np.einsum("pia,pij,pjb->pab", F, GJ, F)

    # -- curvature ---------------------------------------------------------
    def local(self, X, F, need_nabla=False):
        """Frame curvature data at a batch of points; see :class:`LocalCurvature`."""
        raise NotImplementedError


@dataclass
class LocalCurvature:
    """Frame components of curvature at a batch of points.

    ``ricci``  -- (P, n, n), Ric^sharp.
    ``riem``   -- (P, n, n, n, n) with riem[p,a,b,c,d] the d-component of
                  R(e_a, e_b) e_c, or None for constant curvature (use ``c``).
    ``nabla_ricci`` -- (P, n, n, n), [a, b, c] = c-component of
                  (nabla_{e_a} Ric^sharp)(e_b), or None when identically zero.
    """

    c: float | None
    ricci: np.ndarray
    riem: np.ndarray | None = None
    nabla_ricci: np.ndarray | None = None

    def riemann_apply(self, a, b, w):
        """R(a, b) w for batched frame-component vectors."""
        if self.riem is None:
            bw = np.sum(b * w, axis=-1)[:, None]
            aw = np.sum(a * w, axis=-1)[:, None]
            return self.c * (bw * a - aw * b)
        return np.einsum("pabcd,pa,pb,pc->pd", self.riem, a, b, w)

    def dstar_r(self):
        """(P, n, n, n) with [a, b, c] = c-component of d*R(e_a) e_b, or None."""
        if self.nabla_ricci is None:
            return None
        N = self.nabla_ricci
        # <d*R(v1)v2, v3> = (nabla_{v2}Ric)(v1, v3) - (nabla_{v3}Ric)(v1, v2)
        return np.einsum("pbac->pabc", N) - np.einsum("pcab->pabc", N)


class Euclidean(ManifoldModel):
    kind = "euclidean"

    def __init__(self, dim: int):
        if dim < 1:
            raise GeometryError("dim must be >= 1")
        self.dim = int(dim)
        self.curvature = 0.0
        self.metric_diag = np.ones(self.dim)

    def __repr__(self):
        return f"Euclidean(dim={self.dim})"

    def gram(self, X, F):
        return np.einsum("pia,pib->pab", F, F)

    def geodesic_step(self, X, U, F):
        return X + U, F, np.ones(len(X), dtype=bool)

    def local(self, X, F, need_nabla=False):
        P, n = len(X), self.dim
        return LocalCurvature(c=0.0, ricci=np.zeros((P, n, n)))


class Quadric(ManifoldModel):
    """Sphere (c > 0) or hyperbolic space (c < 0) as an embedded quadric."""

    def __init__(self, dim: int, curvature: float):
        if dim < 1:
            raise GeometryError("dim must be >= 1")
        if curvature == 0:
            raise GeometryError("quadric models need non-zero curvature")
        self.dim = int(dim)
        self.curvature = float(curvature)
        self.kind = "sphere" if curvature > 0 else "hyperbolic"
        self.radius = 1.0 / math.sqrt(abs(curvature))
        g = np.ones(self.dim + 1)
        if curvature < 0:
            g[-1] = -1.0
        self.metric_diag = g

    def __repr__(self):
        return f"Quadric(kind={self.kind!r}, dim={self.dim}, curvature={self.curvature})"

    @property
    def ambient_dim(self):
        return self.dim + 1

    def base_point(self):
        x = np.zeros(self.dim + 1)
        x[-1] = self.radius
        return x

    def _ip(self, a, b):
        return np.sum(a * b * self.metric_diag, axis=-1)

    def project_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim + 1:
            raise GeometryError(f"expected ambient coordinates of length {self.dim + 1}")
        if self.curvature > 0:
            nrm = np.linalg.norm(x, axis=-1, keepdims=True)
            if np.any(nrm == 0):
                raise GeometryError("cannot project the origin onto the sphere")
            return x * (self.radius / nrm)
        y = x.copy()
        spatial = np.sum(y[..., :-1] ** 2, axis=-1)
        y[..., -1] = np.sqrt(self.radius**2 + spatial)
        return y

    def _tangent_part(self, x, u):
        return u - self._ip(x, u) * self.curvature * x

    def gram(self, X, F):
        return np.einsum("pia,pi,pib->pab", F, self.metric_diag[None], F)

    def geodesic_step(self, X, U, F):
        c = self.curvature
        s2 = np.maximum(self._ip(U, U), 0.0)
        s = np.sqrt(s2)
        a = math.sqrt(abs(c)) * s
        if c > 0:
            C = np.cos(a)
            qa = _q(a)
            qh = _q(a / 2)
        else:
            C = np.cosh(a)
            qa = _qh(a)
            qh = _qh(a / 2)
        cm1_s2 = -0.5 * c * qh * qh  # (C - 1) / s^2
        Xn = C[:, None] * X + qa[:, None] * U
        # xi -> xi + <xi, U> [ (C-1)/s^2 U - c (S/s) X ]
        coef = np.einsum("pia,pi->pa", F, U * self.metric_diag)
        dirv = cm1_s2[:, None] * U - (c * qa)[:, None] * X
        Fn = F + dirv[:, :, None] * coef[:, None, :]
        return Xn, Fn, np.ones(len(X), dtype=bool)

    def retract(self, X, F):
        X = self.project_point(X)
        # remove normal drift, then a first-order polar correction
        proj = np.einsum("pi,pia->pa", X * self.metric_diag, F)
        F = F - self.curvature * X[:, :, None] * proj[:, None, :]
        M = self.gram(X, F)
        corr = 1.5 * np.eye(self.dim) - 0.5 * M
        return X, F @ corr

    def local(self, X, F, need_nabla=False):
        P, n = len(X), self.dim
        ric = np.broadcast_to(self.curvature * (n - 1) * np.eye(n), (P, n, n)).copy()
        return LocalCurvature(c=self.curvature, ricci=ric)

    def hess_to_frame(self, X, F, H, grad):
        # Hess_M V(u, w) = D^2 V(u, w) + dV(II(u, w)),  II(u, w) = -c <u, w> x
        base = np.einsum("pia,pij,pjb->pab", F, H, F)
        normal = np.sum(grad * X, axis=-1)
        return base - self.curvature * normal[:, None, None] * np.eye(self.dim)


def sphere(dim: int = 2, curvature: float = 1.0) -> Quadric:
    if curvature <= 0:
        raise GeometryError("sphere needs curvature > 0")
    return Quadric(dim, curvature)


def hyperbolic(dim: int = 2, curvature: float = -1.0) -> Quadric:
    if curvature >= 0:
        raise GeometryError("hyperbolic space needs curvature < 0")
    return Quadric(dim, curvature)


# ---------------------------------------------------------------------------
# chart backend


class Chart(ManifoldModel):
    """Single-chart Riemannian manifold with metric ``metric(X) -> (P, n, n)``.

    ``valid`` returns a boolean mask of points inside the chart's validity
    region.  ``substep`` bounds the geodesic length per RK4 substep.
    """

    kind = "chart"

    def __init__(self, dim, metric: Callable, valid: Callable | None = None, name="chart", substep=0.05):
        self.dim = int(dim)
        self.curvature = 0.0
        self._metric = metric
        self._valid = valid
        self.name = name
        self.substep = substep
        self.metric_diag = np.ones(self.dim)

    def __repr__(self):
        return f"Chart(name={self.name!r}, dim={self.dim})"

    def metric(self, X):
        return np.asarray(self._metric(np.asarray(X, dtype=float)), dtype=float)

    def valid(self, X):
        if self._valid is None:
            return np.all(np.isfinite(X), axis=-1)
        return np.asarray(self._valid(X), dtype=bool) & np.all(np.isfinite(X), axis=-1)

    def _inner1(self, x, a, b):
        return float(a @ self.metric(x[None])[0] @ b)

    def _tangent_part(self, x, u):
        return u

    def gram(self, X, F):
        return np.einsum("pia,pij,pjb->pab", F, self.metric(X), F)

    # derivatives of g -----------------------------------------------------
    def _h(self, X, base):
        return base * np.maximum(1.0, np.abs(X).max(axis=-1))

    def metric_derivs(self, X, second=False):
        """g, dg[k,i,j] = d_k g_ij and optionally d2g[k,l,i,j]."""
        P, n = X.shape
        g = self.metric(X)
        h1 = self._h(X, FD_STEP_1)
        dg = np.empty((P, n, n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = 1.0
            dX = h1[:, None] * e
            dg[:, k] = (self.metric(X + dX) - self.metric(X - dX)) / (2 * h1[:, None, None])
        if not second:
            return g, dg, None
        h2 = self._h(X, FD_STEP_2)
        d2g = np.empty((P, n, n, n, n))
        for k in range(n):
            ek = np.zeros(n)
            ek[k] = 1.0
            for l in range(k, n):
                el = np.zeros(n)
                el[l] = 1.0
                if k == l:
                    dX = h2[:, None] * ek
                    val = (self.metric(X + dX) - 2 * g + self.metric(X - dX)) / (h2**2)[:, None, None]
                else:
                    a = h2[:, None] * ek
                    b = h2[:, None] * el
                    val = (
                        self.metric(X + a + b) - self.metric(X + a - b) - self.metric(X - a + b) + self.metric(X - a - b)
                    ) / (4 * h2**2)[:, None, None]
                d2g[:, k, l] = val
                d2g[:, l, k] = val
        return g, dg, d2g

    @staticmethod
    def _lowered(dg):
        # [i, j, l] -> d_i g_jl + d_j g_il - d_l g_ij
        return dg + dg.transpose(0, 2, 1, 3) - dg.transpose(0, 2, 3, 1)

    @classmethod
    def _christoffel(cls, ginv, dg):
        """Gamma[p, k, i, j] = Gamma^k_ij."""
        return 0.5 * np.einsum("pkl,pijl->pkij", ginv, cls._lowered(dg))

    def christoffel(self, X):
        g, dg, _ = self.metric_derivs(X)
        return self._christoffel(np.linalg.inv(g), dg)

    def riemann_coords(self, X):
        """R[p,i,j,k,l] = R_{ijk}^l with R(d_i, d_j) d_k = R_{ijk}^l d_l."""
        g, dg, d2g = self.metric_derivs(X, second=True)
        ginv = np.linalg.inv(g)
        Gam = self._christoffel(ginv, dg)
        S = self._lowered(dg)
        # dS[m, j, k, a] = d_m d_j g_ka + d_m d_k g_ja - d_m d_a g_jk
        dS = d2g + d2g.transpose(0, 1, 3, 2, 4) - d2g.transpose(0, 1, 3, 4, 2)
        dginv = -np.einsum("pla,pmab,pbc->pmlc", ginv, dg, ginv)
        # dGam[m, l, j, k] = d_m Gamma^l_jk
        dGam = 0.5 * (np.einsum("pmla,pjka->pmljk", dginv, S) + np.einsum("pla,pmjka->pmljk", ginv, dS))
        term1 = np.einsum("piljk->pijkl", dGam)
        term2 = np.einsum("pjlik->pijkl", dGam)
        # Gamma^m_jk Gamma^l_im - Gamma^m_ik Gamma^l_jm
        quad = np.einsum("pmjk,plim->pijkl", Gam, Gam) - np.einsum("pmik,pljm->pijkl", Gam, Gam)
        return term1 - term2 + quad

    def ricci_coords(self, X):
        R = self.riemann_coords(X)
        return np.einsum("pijki->pjk", R)

    def nabla_ricci_coords(self, X):
        """(nabla_m Ric)_jk, shape (P, m, j, k)."""
        P, n = X.shape
        h3 = self._h(X, FD_STEP_3)
        dRic = np.empty((P, n, n, n))
        for m in range(n):
            e = np.zeros(n)
            e[m] = 1.0
            dX = h3[:, None] * e
            dRic[:, m] = (self.ricci_coords(X + dX) - self.ricci_coords(X - dX)) / (2 * h3[:, None, None])
        Gam = self.christoffel(X)
        Ric = self.ricci_coords(X)
        return dRic - np.einsum("pamj,pak->pmjk", Gam, Ric) - np.einsum("pamk,pja->pmjk", Gam, Ric)

    # geodesic step --------------------------------------------------------
    def _rhs(self, x, u, F):
        Gam = self.christoffel(x)
        acc = -np.einsum("pkij,pi,pj->pk", Gam, u, u)
        dF = -np.einsum("pkij,pi,pja->pka", Gam, u, F)
        return u, acc, dF

    def geodesic_step(self, X, U, F):
        G = self.metric(X)
        length = np.sqrt(np.maximum(np.einsum("pi,pij,pj->p", U, G, U), 0.0))
        m = max(1, int(math.ceil(float(length.max(initial=0.0)) / self.substep)))
        h = 1.0 / m
        x, u, Fc = X.copy(), U.copy(), F.copy()
        ok = self.valid(x)
        for _ in range(m):
            k1 = self._rhs(x, u, Fc)
            k2 = self._rhs(x + 0.5 * h * k1[0], u + 0.5 * h * k1[1], Fc + 0.5 * h * k1[2])
            k3 = self._rhs(x + 0.5 * h * k2[0], u + 0.5 * h * k2[1], Fc + 0.5 * h * k2[2])
            k4 = self._rhs(x + h * k3[0], u + h * k3[1], Fc + h * k3[2])
            x = x + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            u = u + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            Fc = Fc + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            ok &= self.valid(x)
        return x, Fc, ok

    def retract(self, X, F):
        M = self.gram(X, F)
        corr = 1.5 * np.eye(self.dim) - 0.5 * M
        return X, F @ corr

    # conversions ----------------------------------------------------------
    def vec_to_frame(self, X, F, U):
        return np.einsum("pia,pij,pj->pa", F, self.metric(X), U)

    def hess_to_frame(self, X, F, H, grad):
        Gam = self.christoffel(X)
        cov = H - np.einsum("pkij,pk->pij", Gam, grad)
        return np.einsum("pia,pij,pjb->pab", F, cov, F)

    def jac_to_frame(self, X, F, J, Zv):
        Gam = self.christoffel(X)
        cov = J + np.einsum("pijk,pk->pij", Gam, Zv)  # (nabla_j Z)^i
        return np.einsum("pia,pij,pjk,pkb->pab", F, self.metric(X), cov, F)

    def frame_tensor_riemann(self, X, F):
        R = self.riemann_coords(X)
        Finv = np.einsum("pia,pij->paj", F, self.metric(X))
        return np.einsum("pijkl,pia,pjb,pkc,pdl->pabcd", R, F, F, F, Finv)

    def local(self, X, F, need_nabla=False):
        riem = self.frame_tensor_riemann(X, F)
        # Ric^sharp(e_a) = sum_b R(e_a, e_b) e_b ; entry [c, a]
        ric = np.einsum("pabbc->pca", riem)
        nab = None
        if need_nabla:
            N = self.nabla_ricci_coords(X)
            nab = np.einsum("pmjk,pma,pjb,pkc->pabc", N, F, F, F)
        return LocalCurvature(c=None, ricci=ric, riem=riem, nabla_ricci=nab)

    def dstar_r_direct(self, X, F):
        """d*R(e_a) e_b = -sum_i (nabla_{e_i} R)(e_i, e_a) e_b by finite
        differences of the Riemann tensor; entry [a, b, c]."""
        P, n = X.shape
        h3 = self._h(X, FD_STEP_3)
        dR = np.empty((P, n, n, n, n, n))
        for m in range(n):
            e = np.zeros(n)
            e[m] = 1.0
            dX = h3[:, None] * e
            dR[:, m] = (self.riemann_coords(X + dX) - self.riemann_coords(X - dX)) / (2 * h3[:, None, None, None, None])
        Gam = self.christoffel(X)
        R = self.riemann_coords(X)
        nR = (
            dR
            - np.einsum("pami,pajkl->pmijkl", Gam, R)
            - np.einsum("pamj,piakl->pmijkl", Gam, R)
            - np.einsum("pamk,pijal->pmijkl", Gam, R)
            + np.einsum("plma,pijka->pmijkl", Gam, R)
        )
        ginv = np.linalg.inv(self.metric(X))
        dstar = -np.einsum("pmi,pmijkl->pjkl", ginv, nR)
        Finv = np.einsum("pia,pij->paj", F, self.metric(X))
        return np.einsum("pjkl,pja,pkb,pcl->pabc", dstar, F, F, Finv)


def stereographic_sphere(dim=2, curvature=1.0) -> Chart:
    """Constant curvature c > 0 in stereographic coordinates:
    g = 4 / (1 + c|x|^2)^2 * I."""
    c = float(curvature)

    def metric(X):
        r2 = np.sum(X * X, axis=-1)
        fac = 4.0 / (1.0 + c * r2) ** 2
        return fac[..., None, None] * np.eye(X.shape[-1])

    def valid(X):
        # the chart degenerates at the projection pole (|x| -> infinity)
        return c * np.sum(X * X, axis=-1) < 1e4

    return Chart(dim, metric, valid=valid, name=f"stereographic_sphere(c={c})")


def poincare_ball(dim=2, curvature=-1.0) -> Chart:
    """Constant curvature c < 0 in the Poincare ball of radius 1/sqrt(-c)."""
    c = float(curvature)

    def metric(X):
        r2 = np.sum(X * X, axis=-1)
        fac = 4.0 / (1.0 + c * r2) ** 2
        return fac[..., None, None] * np.eye(X.shape[-1])

    def valid(X):
        return np.sum(X * X, axis=-1) * (-c) < 0.98

    return Chart(dim, metric, valid=valid, name=f"poincare_ball(c={c})")


def gaussian_bump_metric(dim=2, amplitude=0.3, width=1.0) -> Chart:
    """Conformal metric exp(2 a exp(-|x|^2 / w^2)) * I with variable curvature."""

    def metric(X):
        r2 = np.sum(X * X, axis=-1)
        fac = np.exp(2 * amplitude * np.exp(-r2 / width**2))
        return fac[..., None, None] * np.eye(X.shape[-1])

    return Chart(dim, metric, name=f"gaussian_bump(a={amplitude}, w={width})")


# ---------------------------------------------------------------------------
# single-point public API


def _frame_or_default(model, x, frame):
    x = model.project_point(x)
    F = model.default_frame(x) if frame is None else np.asarray(frame, dtype=float)
    return x, F


def exp_map(x, v, model: ManifoldModel, frame=None):
    """Point at unit time along the geodesic from ``x`` with initial velocity
    given by frame components ``v`` (w.r.t. ``frame``, default the model's
    canonical frame at ``x``)."""
    x, F = _frame_or_default(model, x, frame)
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise GeometryError("non-finite tangent vector")
    U = F @ v
    Xn, _, ok = model.geodesic_step(x[None], U[None], F[None])
    if not ok[0]:
        raise ChartDomainError(f"geodesic from {x} left the chart")
    Xn, _ = model.retract(Xn, F[None])
    return Xn[0]


def parallel_transport_step(x, v, F, model: ManifoldModel):
    """Frame at ``exp_map(x, v)`` obtained by parallel transport of the
    orthonormal frame ``F`` along the geodesic (``v`` in components of ``F``)."""
    x = model.project_point(x)
    F = np.asarray(F, dtype=float)
    U = F @ np.asarray(v, dtype=float)
    Xn, Fn, ok = model.geodesic_step(x[None], U[None], F[None])
    if not ok[0]:
        raise ChartDomainError(f"geodesic from {x} left the chart")
    Xn, Fn = model.retract(Xn, Fn)
    return Fn[0]


@dataclass
class CurvaturePack:
    """Frame-component curvature evaluators at points ``x`` with frame ``F``."""

    model: ManifoldModel
    drift: object
    with_nabla: bool = False

    def _local(self, x, F):
        x = self.model.project_point(x)
        return self.model.local(x[None], np.asarray(F, float)[None], need_nabla=self.with_nabla), x

    def ricci_z(self, x, F):
        loc, x = self._local(x, F)
        gz = self.drift.frame_grad(self.model, x[None], np.asarray(F, float)[None])
        return (loc.ricci - 2 * gz)[0]

    def riemann(self, x, F, u, v, w):
        loc, _ = self._local(x, F)
        return loc.riemann_apply(np.atleast_2d(u), np.atleast_2d(v), np.atleast_2d(w))[0]

    def dstar_r(self, x, F, v1, v2):
        loc, _ = self._local(x, F)
        n = self.model.dim
        D = loc.dstar_r()
        if D is None:
            return np.zeros(n)
        return np.einsum("abc,a,b->c", D[0], v1, v2)

    def nabla_ricci_z(self, x, F, v1, v2):
        loc, x = self._local(x, F)
        F = np.asarray(F, float)
        n = self.model.dim
        N = loc.nabla_ricci[0] if loc.nabla_ricci is not None else np.zeros((n, n, n))
        H = self.drift.frame_hess(self.model, x[None], F[None])[0]
        return np.einsum("abc,a,b->c", N - 2 * H, v1, v2)


def curvature_pack(model: ManifoldModel, drift, need_second=False) -> CurvaturePack:
    """Curvature evaluators for ``model`` with drift ``drift``.  Raises if
    second order drift data (nabla nabla Z) is needed but unavailable.
    ``drift`` may also be a FieldSpec."""
    drift = getattr(drift, "drift", drift)
    if need_second and not drift.has_second_order(model):
        raise GeometryError(f"nabla Ric_Z unavailable for drift {drift.name!r} on {model.kind}")
    return CurvaturePack(model, drift, with_nabla=need_second)
