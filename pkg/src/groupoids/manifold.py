"""Embedded-manifold numerics.

Every space in this package is a submanifold of some R^N described by a
membership test, a (closest-point style) projection, and a field of tangent
projectors.  Charts are tangent-space parametrizations composed with the
projection, i.e. retraction charts; all metric computations happen in charts.
Differentials default to central finite differences along tangent frames,
with analytic Jacobians plugged in wherever a construction has one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    CaptureRadiusExceeded,
    ChartEscape,
    GeometryError,
    RankDeficient,
    SamplingFailure,
    StepCountInvalid,
)
from .report import Report

# Tolerance regime: geometry membership is roundoff-limited, verification
# defaults separate FD truncation from genuine defects.
GEOMETRY_TOL = 1e-9
DEFAULT_TOL = 1e-6
FD_CHECK_TOL = 1e-4
FD_STEP = 1e-5
RANK_CUTOFF = 1e-7

_PROJECT_TOL = 1e-13
_GN_MAX_ITER = 60


def _as_coords(x) -> np.ndarray:
    if isinstance(x, Point):
        return x.coords
    return np.asarray(x, dtype=float)


class Manifold:
    """Base class: an embedded submanifold of R^ambient_dim.

    Subclasses implement ``contains``, ``project`` and ``tangent_projector``;
    everything else (tangent frames, charts, finite-difference calculus) is
    derived from those three.
    """

    kind = "abstract"

    def __init__(self, ambient_dim: int, dim: int, name: str = "",
                 chart_radius: float = math.inf):
        self.ambient_dim = int(ambient_dim)
        self.dim = int(dim)
        self.name = name or self.kind
        self.chart_radius = float(chart_radius)

    # -- interface -------------------------------------------------------

    def contains(self, x, tol: float = GEOMETRY_TOL) -> bool:
        raise NotImplementedError

    def project(self, x) -> np.ndarray:
        raise NotImplementedError

    def tangent_projector(self, x) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def project_jacobian(self, y) -> Optional[np.ndarray]:
        """d(project) at an ambient point near the manifold, if analytic."""
        return None

    # -- derived machinery -------------------------------------------------

    def tangent_basis(self, x) -> np.ndarray:
        """Orthonormal (ambient) basis of T_xM as columns, shape (N, dim)."""
        if self.dim == 0:
            return np.zeros((self.ambient_dim, 0))
        P = self.tangent_projector(_as_coords(x))
        w, V = np.linalg.eigh(P)
        return V[:, -self.dim:]

    def chart_at(self, x) -> "Chart":
        """Retraction chart centered at a member point."""
        c = self.project(_as_coords(x))
        return Chart(self, c, self.tangent_basis(c), self.chart_radius)

    def point(self, x) -> "Point":
        return Point(self, _as_coords(x).copy())

    def __repr__(self):
        return f"<{type(self).__name__} {self.name!r} dim={self.dim} in R^{self.ambient_dim}>"


@dataclass(eq=False)
class Point:
    """A location on a manifold, stored in ambient coordinates."""

    manifold: Manifold
    coords: np.ndarray

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)

    def is_valid(self, tol: float = GEOMETRY_TOL) -> bool:
        return self.manifold.contains(self.coords, tol)


@dataclass(eq=False)
class TangentVector:
    """An ambient vector attached to a base point, expected tangent there."""

    point: Point
    vec: np.ndarray

    def __post_init__(self):
        self.vec = np.asarray(self.vec, dtype=float)

    def tangency_defect(self) -> float:
        P = self.point.manifold.tangent_projector(self.point.coords)
        return float(np.linalg.norm(P @ self.vec - self.vec))


# ---------------------------------------------------------------------------
# concrete manifolds
# ---------------------------------------------------------------------------

class Euclidean(Manifold):
    """R^n, with samples drawn from a centered box."""

    kind = "euclidean"

    def __init__(self, n: int, name: str = "", halfwidth: float = 1.5):
        super().__init__(n, n, name or f"R^{n}")
        self.halfwidth = float(halfwidth)

    def contains(self, x, tol=GEOMETRY_TOL):
        return _as_coords(x).shape == (self.ambient_dim,)

    def project(self, x):
        return np.array(_as_coords(x), dtype=float)

    def tangent_projector(self, x):
        return np.eye(self.ambient_dim)

    def project_jacobian(self, y):
        return np.eye(self.ambient_dim)

    def sample(self, rng, n):
        return rng.uniform(-self.halfwidth, self.halfwidth, size=(n, self.ambient_dim))


class Sphere(Manifold):
    """Round sphere of given radius in R^n (circle for n=2)."""

    kind = "sphere"

    def __init__(self, ambient_dim: int, radius: float = 1.0, name: str = ""):
        super().__init__(ambient_dim, ambient_dim - 1,
                         name or f"S^{ambient_dim - 1}",
                         chart_radius=radius)
        self.radius = float(radius)

    def contains(self, x, tol=GEOMETRY_TOL):
        x = _as_coords(x)
        return abs(np.linalg.norm(x) - self.radius) < tol * max(1.0, self.radius)

    def project(self, x):
        x = _as_coords(x)
        r = np.linalg.norm(x)
        if r < 1e-12 * self.radius:
            raise CaptureRadiusExceeded("cannot project the center of the sphere")
        return x * (self.radius / r)

    def tangent_projector(self, x):
        u = _as_coords(x) / self.radius
        return np.eye(self.ambient_dim) - np.outer(u, u)

    def project_jacobian(self, y):
        y = _as_coords(y)
        r = np.linalg.norm(y)
        u = y / r
        return (self.radius / r) * (np.eye(self.ambient_dim) - np.outer(u, u))

    def sample(self, rng, n):
        g = rng.normal(size=(n, self.ambient_dim))
        return g * (self.radius / np.linalg.norm(g, axis=1))[:, None]


_SO2_GEN = np.array([[0.0, -1.0], [1.0, 0.0]])


class RotationGroup2(Manifold):
    """SO(2) as 2x2 matrices, flattened row-major into R^4."""

    kind = "matrix-group"

    def __init__(self, name: str = "SO(2)"):
        super().__init__(4, 1, name, chart_radius=1.0)

    @staticmethod
    def from_angle(theta: float) -> np.ndarray:
        c, s = math.cos(theta), math.sin(theta)
        return np.array([c, -s, s, c])

    @staticmethod
    def mul(a, b) -> np.ndarray:
        return (_as_coords(a).reshape(2, 2) @ _as_coords(b).reshape(2, 2)).ravel()

    @staticmethod
    def inv(a) -> np.ndarray:
        return _as_coords(a).reshape(2, 2).T.ravel()

    identity = property(lambda self: np.array([1.0, 0.0, 0.0, 1.0]))

    def contains(self, x, tol=GEOMETRY_TOL):
        X = _as_coords(x).reshape(2, 2)
        return (np.linalg.norm(X.T @ X - np.eye(2)) < tol) and np.linalg.det(X) > 0

    def project(self, x):
        X = _as_coords(x).reshape(2, 2)
        U, _, Vt = np.linalg.svd(X)
        R = U @ Vt
        if np.linalg.det(R) < 0:
            R = U @ np.diag([1.0, -1.0]) @ Vt
        return R.ravel()

    def tangent_projector(self, x):
        X = _as_coords(x).reshape(2, 2)
        v = (X @ _SO2_GEN).ravel() / math.sqrt(2.0)
        return np.outer(v, v)

    def sample(self, rng, n):
        thetas = rng.uniform(0.0, 2.0 * math.pi, size=n)
        return np.stack([self.from_angle(t) for t in thetas])


class FiniteSet(Manifold):
    """A finite collection of ambient points, as a 0-dimensional manifold."""

    kind = "finite-set"

    def __init__(self, points, name: str = "finite-set"):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        super().__init__(pts.shape[1], 0, name)
        self.points = pts

    def contains(self, x, tol=GEOMETRY_TOL):
        d = np.linalg.norm(self.points - _as_coords(x)[None, :], axis=1)
        return bool(d.min() < tol)

    def project(self, x):
        d = np.linalg.norm(self.points - _as_coords(x)[None, :], axis=1)
        return self.points[int(np.argmin(d))].copy()

    def tangent_projector(self, x):
        return np.zeros((self.ambient_dim, self.ambient_dim))

    def project_jacobian(self, y):
        return np.zeros((self.ambient_dim, self.ambient_dim))

    def sample(self, rng, n):
        idx = rng.integers(0, len(self.points), size=n)
        return self.points[idx].copy()


class Product(Manifold):
    """Direct product, with ambient coordinates concatenated blockwise."""

    kind = "product"

    def __init__(self, factors: Sequence[Manifold], name: str = ""):
        factors = list(factors)
        super().__init__(sum(f.ambient_dim for f in factors),
                         sum(f.dim for f in factors),
                         name or " x ".join(f.name for f in factors),
                         chart_radius=min(f.chart_radius for f in factors))
        self.factors = factors
        self.slices = []
        off = 0
        for f in factors:
            self.slices.append(slice(off, off + f.ambient_dim))
            off += f.ambient_dim

    def split(self, x) -> list[np.ndarray]:
        x = _as_coords(x)
        return [x[s] for s in self.slices]

    def contains(self, x, tol=GEOMETRY_TOL):
        return all(f.contains(xi, tol) for f, xi in zip(self.factors, self.split(x)))

    def project(self, x):
        return np.concatenate([f.project(xi) for f, xi in zip(self.factors, self.split(x))])

    def tangent_projector(self, x):
        P = np.zeros((self.ambient_dim, self.ambient_dim))
        for f, s, xi in zip(self.factors, self.slices, self.split(x)):
            P[s, s] = f.tangent_projector(xi)
        return P

    def project_jacobian(self, y):
        blocks = [f.project_jacobian(yi) for f, yi in zip(self.factors, self.split(y))]
        if any(b is None for b in blocks):
            return None
        J = np.zeros((self.ambient_dim, self.ambient_dim))
        for s, b in zip(self.slices, blocks):
            J[s, s] = b
        return J

    def sample(self, rng, n):
        return np.hstack([f.sample(rng, n) for f in self.factors])


class LevelSet(Manifold):
    """Zero set of a constraint map restricted to an ambient manifold.

    The constraint must be evaluable in an ambient neighborhood, and its
    differential restricted to the ambient tangent space must have constant
    rank equal to ``codim`` along the zero set.  Projection is Gauss-Newton
    on the constraint interleaved with the ambient projection.
    """

    kind = "fiber-product"

    def __init__(self, ambient: Manifold, constraint: Callable, codim: int,
                 name: str = "", constraint_jacobian: Optional[Callable] = None,
                 chart_radius: Optional[float] = None, kind: Optional[str] = None):
        super().__init__(ambient.ambient_dim, ambient.dim - codim, name,
                         chart_radius=chart_radius if chart_radius is not None
                         else min(1.0, ambient.chart_radius))
        self.ambient = ambient
        self.constraint = constraint
        self.codim = int(codim)
        self.constraint_jacobian = constraint_jacobian
        if kind is not None:
            self.kind = kind

    def _cjac(self, x) -> np.ndarray:
        if self.constraint_jacobian is not None:
            return np.atleast_2d(self.constraint_jacobian(x))
        return fd_map_jacobian(self.constraint, self.ambient, x)

    def contains(self, x, tol=GEOMETRY_TOL):
        x = _as_coords(x)
        if not self.ambient.contains(x, tol):
            return False
        return float(np.linalg.norm(np.atleast_1d(self.constraint(x)))) < tol

    def project(self, x):
        y = self.ambient.project(_as_coords(x))
        best, best_res = y, np.inf
        for _ in range(_GN_MAX_ITER):
            c = np.atleast_1d(self.constraint(y))
            res = float(np.linalg.norm(c))
            if res < best_res:
                best, best_res = y, res
            if res < _PROJECT_TOL:
                return y
            J = self._cjac(y) @ self.ambient.tangent_projector(y)
            step, *_ = np.linalg.lstsq(J, c, rcond=None)
            y = self.ambient.project(y - step)
        if best_res < GEOMETRY_TOL:
            return best
        raise CaptureRadiusExceeded(
            f"constraint projection stalled at residual {best_res:.3e} on {self.name}")

    def tangent_projector(self, x):
        x = _as_coords(x)
        P = self.ambient.tangent_projector(x)
        if self.codim == 0:
            return P
        J = self._cjac(x) @ P
        U, s, Vt = np.linalg.svd(J)
        if s.size < self.codim or s[self.codim - 1] < RANK_CUTOFF * max(1.0, s[0]):
            raise RankDeficient(
                f"constraint rank below declared codim {self.codim} on {self.name}")
        Q = Vt[: self.codim]
        return P - Q.T @ Q

    def sample(self, rng, n):
        out = []
        budget = 40 * n + 200
        while len(out) < n and budget > 0:
            raw = self.ambient.sample(rng, 1)[0]
            budget -= 1
            try:
                y = self.project(raw)
            except GeometryError:
                continue
            if self.contains(y):
                out.append(y)
        if len(out) < n:
            raise SamplingFailure(f"drew {len(out)}/{n} samples on {self.name}")
        return np.stack(out)


# ---------------------------------------------------------------------------
# charts
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Chart:
    """Tangent-space parametrization u -> project(center + basis @ u)."""

    manifold: Manifold
    center: np.ndarray
    basis: np.ndarray  # (N, d), orthonormal columns
    radius: float

    def to_manifold(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.manifold.project(self.center + self.basis @ u)

    def jacobian(self, u) -> np.ndarray:
        """d(to_manifold) at u, shape (N, d)."""
        u = np.asarray(u, dtype=float)
        y = self.center + self.basis @ u
        DP = self.manifold.project_jacobian(y)
        if DP is not None:
            return DP @ self.basis
        d = self.basis.shape[1]
        cols = np.empty((self.manifold.ambient_dim, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = FD_STEP
            cols[:, j] = (self.to_manifold(u + e) - self.to_manifold(u - e)) / (2 * FD_STEP)
        return cols

    def to_coords(self, x) -> np.ndarray:
        """Invert the chart on its image by Gauss-Newton."""
        x = _as_coords(x)
        u = self.basis.T @ (x - self.center)
        for _ in range(40):
            r = self.to_manifold(u) - x
            if np.linalg.norm(r) < _PROJECT_TOL:
                return u
            J = self.jacobian(u)
            step, *_ = np.linalg.lstsq(J, r, rcond=None)
            u = u - step
        if np.linalg.norm(self.to_manifold(u) - x) < GEOMETRY_TOL:
            return u
        raise ChartEscape("chart inversion did not converge")


# ---------------------------------------------------------------------------
# smooth maps and finite-difference calculus
# ---------------------------------------------------------------------------

def fd_map_jacobian(fn: Callable, domain: Manifold, x, h: float = FD_STEP) -> np.ndarray:
    """Central-difference differential of fn along the tangent frame at x.

    Returns an ambient matrix whose restriction to T_xM is d(fn); directions
    normal to the domain are annihilated.  Arguments are retracted back onto
    the domain before evaluation, so fn only ever sees member points.
    """
    x = _as_coords(x)
    E = domain.tangent_basis(x)
    f0 = np.atleast_1d(np.asarray(fn(x), dtype=float))
    cols = np.zeros((f0.shape[0], E.shape[1]))
    for j in range(E.shape[1]):
        xp = domain.project(x + h * E[:, j])
        xm = domain.project(x - h * E[:, j])
        cols[:, j] = (np.atleast_1d(fn(xp)) - np.atleast_1d(fn(xm))) / (2 * h)
    return cols @ E.T


@dataclass(eq=False)
class SmoothMap:
    """A map between embedded manifolds with an optional analytic Jacobian.

    ``jac(x)`` may be any ambient matrix whose restriction to T_x(domain)
    agrees with the differential; callers only contract it with tangent
    vectors.
    """

    domain: Manifold
    codomain: Manifold
    fn: Callable
    jac: Optional[Callable] = None
    name: str = ""

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.fn(_as_coords(x)), dtype=float)

    def jacobian(self, x) -> np.ndarray:
        if self.jac is not None:
            return np.asarray(self.jac(_as_coords(x)), dtype=float)
        return fd_map_jacobian(self.fn, self.domain, x)


def linear_map(domain: Manifold, codomain: Manifold, A: np.ndarray,
               name: str = "") -> SmoothMap:
    A = np.asarray(A, dtype=float)
    return SmoothMap(domain, codomain, lambda x: A @ x, jac=lambda x: A, name=name)


def coordinate_projection(product: Product, index: int) -> SmoothMap:
    """Projection of a product manifold onto one factor (analytic Jacobian)."""
    s = product.slices[index]
    target = product.factors[index]
    A = np.zeros((target.ambient_dim, product.ambient_dim))
    A[:, s] = np.eye(target.ambient_dim)
    return linear_map(product, target, A, name=f"pr_{index}")


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Metric:
    """Point-dependent symmetric ambient form, positive-definite on tangents."""

    manifold: Manifold
    matrix: Callable[[np.ndarray], np.ndarray]
    name: str = ""

    def at(self, x) -> np.ndarray:
        A = np.asarray(self.matrix(_as_coords(x)), dtype=float)
        return 0.5 * (A + A.T)

    def inner(self, x, v, w) -> float:
        return float(v @ self.at(x) @ w)

    def norm(self, x, v) -> float:
        return math.sqrt(max(self.inner(x, v, v), 0.0))

    def gram(self, x, V: np.ndarray) -> np.ndarray:
        """Gram matrix of column vectors V at x."""
        G = self.at(x)
        return V.T @ G @ V

    def cached(self) -> "Metric":
        memo: dict[bytes, np.ndarray] = {}

        def fn(x):
            key = x.tobytes()
            got = memo.get(key)
            if got is None:
                got = self.at(x)
                memo[key] = got
            return got

        return Metric(self.manifold, fn, name=self.name + "+cache")


def euclidean_metric(m: Manifold, name: str = "euclidean") -> Metric:
    eye = np.eye(m.ambient_dim)
    return Metric(m, lambda x: eye, name=name)


def pullback_metric(f: SmoothMap, g: Metric, name: str = "") -> Metric:
    def matrix(x):
        J = f.jacobian(x)
        return J.T @ g.at(f(x)) @ J

    return Metric(f.domain, matrix, name=name or f"{f.name}*{g.name}")


def combine_metrics(manifold: Manifold, terms: Sequence[tuple[float, Metric]],
                    name: str = "") -> Metric:
    def matrix(x):
        total = np.zeros((manifold.ambient_dim, manifold.ambient_dim))
        for c, g in terms:
            total += c * g.at(x)
        return total

    return Metric(manifold, matrix, name=name)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def project_to_manifold(m: Manifold, x, capture_radius: float = 10.0) -> Point:
    """Nearest-member projection; errors if nothing is found nearby."""
    x = _as_coords(x)
    try:
        y = m.project(x)
    except GeometryError as exc:
        raise CaptureRadiusExceeded(str(exc)) from exc
    if np.linalg.norm(y - x) > capture_radius:
        raise CaptureRadiusExceeded(
            f"nearest member at distance {np.linalg.norm(y - x):.3g} "
            f"exceeds capture radius {capture_radius:.3g}")
    if not m.contains(y, tol=1e-6):
        raise CaptureRadiusExceeded("projection did not land on the manifold")
    return Point(m, y)


def _chart_metric(chart: Chart, metric: Metric, u: np.ndarray) -> np.ndarray:
    J = chart.jacobian(u)
    y = chart.to_manifold(u)
    return J.T @ metric.at(y) @ J


def _geodesic_acceleration(chart: Chart, metric: Metric, u: np.ndarray,
                           udot: np.ndarray, h: float) -> np.ndarray:
    d = u.shape[0]
    G0 = _chart_metric(chart, metric, u)
    term = np.zeros(d)
    D = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        D.append((_chart_metric(chart, metric, u + e)
                  - _chart_metric(chart, metric, u - e)) / (2 * h))
    for j in range(d):
        term += 2.0 * udot[j] * (D[j] @ udot)
    term -= np.array([udot @ D[l] @ udot for l in range(d)])
    return -0.5 * np.linalg.solve(G0, term)


def geodesic_path(metric: Metric, start: TangentVector,
                  step_count: Optional[int] = None,
                  fd_step: float = FD_STEP) -> list[tuple[np.ndarray, np.ndarray]]:
    """Integrate the geodesic through ``start`` over unit parameter time.

    Classical fixed-step RK4 in retraction charts; Christoffel contraction
    from central differences of the pulled-back metric.  The chart is
    recentered whenever the parameter leaves the half-radius ball.  Returns
    the trajectory as (ambient point, ambient velocity) pairs, one per step.
    """
    m = metric.manifold
    p = _as_coords(start.point)
    vec = np.asarray(start.vec, dtype=float)
    if step_count is None:
        speed = metric.norm(p, vec)
        step_count = max(16, int(math.ceil(64.0 * speed)))
    if step_count < 1:
        raise StepCountInvalid(f"step_count={step_count}")
    if m.dim == 0:
        return [(p.copy(), vec.copy())] * (step_count + 1)

    chart = m.chart_at(p)
    u = np.zeros(m.dim)
    udot = chart.basis.T @ vec
    dt = 1.0 / step_count
    half = 0.5 * chart.radius
    traj = [(p.copy(), vec.copy())]

    def rhs(uu, vv):
        if np.linalg.norm(uu) > chart.radius:
            raise ChartEscape("integration stage left the chart ball")
        return vv, _geodesic_acceleration(chart, metric, uu, vv, fd_step)

    for _ in range(step_count):
        if np.linalg.norm(u) > half:
            x = chart.to_manifold(u)
            w = chart.jacobian(u) @ udot
            chart = m.chart_at(x)
            half = 0.5 * chart.radius
            u = np.zeros(m.dim)
            udot = chart.basis.T @ w
        k1u, k1v = rhs(u, udot)
        k2u, k2v = rhs(u + 0.5 * dt * k1u, udot + 0.5 * dt * k1v)
        k3u, k3v = rhs(u + 0.5 * dt * k2u, udot + 0.5 * dt * k2v)
        k4u, k4v = rhs(u + dt * k3u, udot + dt * k3v)
        u = u + (dt / 6.0) * (k1u + 2 * k2u + 2 * k3u + k4u)
        udot = udot + (dt / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        x = chart.to_manifold(u)
        traj.append((x, chart.jacobian(u) @ udot))
    return traj


def geodesic_exp(metric: Metric, start: TangentVector,
                 step_count: Optional[int] = None) -> Point:
    """Endpoint gamma(1) of the geodesic with gamma(0), gamma'(0) = start."""
    traj = geodesic_path(metric, start, step_count)
    return Point(metric.manifold, traj[-1][0])


def _horizontal_basis(f: SmoothMap, g_total: Metric, x: np.ndarray,
                      base_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """g_total-orthonormal basis of the horizontal space at x and its image.

    Returns (H, W): H columns span the orthogonal complement of ker df inside
    T_xM, orthonormal for g_total; W = df @ H are their images.
    """
    E = f.domain.tangent_basis(x)
    A = f.jacobian(x) @ E  # (N_base_amb, d)
    U, s, Vt = np.linalg.svd(A)
    rank = int(np.sum(s > RANK_CUTOFF * max(1.0, s[0] if s.size else 1.0)))
    if rank < base_dim:
        raise RankDeficient(
            f"df has rank {rank} < base dim {base_dim} at sample")
    Vker = Vt[rank:].T  # (d, d-rank) kernel coords
    G = E.T @ g_total.at(x) @ E
    if Vker.shape[1] == 0:
        Hc = np.eye(E.shape[1])
    else:
        M = Vker.T @ G  # horizontal = null space of this
        _, s2, Vt2 = np.linalg.svd(M)
        Hc = Vt2[Vker.shape[1]:].T
    Gh = Hc.T @ G @ Hc
    L = np.linalg.cholesky(0.5 * (Gh + Gh.T))
    Hon = Hc @ np.linalg.inv(L).T
    H = E @ Hon
    return H, f.jacobian(x) @ H


def riemannian_submersion_check(f: SmoothMap, g_total: Metric, g_base: Metric,
                                samples: Sequence, tol: float = DEFAULT_TOL) -> Report:
    """Isometry defect of df on the horizontal space, over sample points.

    The per-sample defect is max_i |s_i - 1| over singular values s_i of the
    map (horizontal, g_total) -> (base tangent, g_base) in orthonormal bases;
    zero iff fibers are equidistant through those points.
    """
    base_dim = g_base.manifold.dim
    defects = []
    for pt in samples:
        x = _as_coords(pt)
        H, W = _horizontal_basis(f, g_total, x, base_dim)
        y = f(x)
        B = W.T @ g_base.at(y) @ W
        lam = np.linalg.eigvalsh(0.5 * (B + B.T))
        defects.append(float(np.max(np.abs(np.sqrt(np.clip(lam, 0.0, None)) - 1.0))))
    return Report(op="riemannian_submersion_check", tol=tol, defects=defects,
                  extra={"map": f.name, "total": g_total.name, "base": g_base.name})


def pushforward_metric(f: SmoothMap, g_total: Metric, y, fiber_point) -> np.ndarray:
    """Metric at y declaring df an isometry on the horizontal space at fiber_point."""
    x = _as_coords(fiber_point)
    if np.linalg.norm(f(x) - _as_coords(y)) > 1e-6:
        raise GeometryError("fiber_point does not lie over y")
    H, W = _horizontal_basis(f, g_total, x, f.codomain.dim)
    return np.linalg.pinv(W @ W.T, hermitian=True)
