"""Lie groupoids over embedded manifolds, with the standard example zoo.

Arrows of the pair/submersion groupoids are written (x, y) for x -> y, so the
source is the first block.  Composition follows (y,z)(x,y) = (x,z): the left
factor acts second.  Products first check |s(g) - t(h)| against the
composability tolerance and then retract the naive formula onto the arrow
manifold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    GeometryError,
    InvalidParams,
    LiftFailure,
    NotComposable,
    NotSaturated,
    RankDeficient,
    RankDeficientSubmersion,
    SamplingFailure,
)
from .manifold import (
    GEOMETRY_TOL,
    RANK_CUTOFF,
    Euclidean,
    FiniteSet,
    LevelSet,
    Manifold,
    Point,
    Product,
    RotationGroup2,
    SmoothMap,
    _as_coords,
    coordinate_projection,
    linear_map,
)
from .report import Report

COMPOSABILITY_TOL = 1e-9


@dataclass(eq=False)
class GroupAction:
    """A Lie-group (or finite-group) action on a manifold.

    ``haar`` is any object with ``nodes``/``weights`` usable for averaging
    over the group; the metric module's QuadratureRule satisfies this.
    Optional ``*_jac`` hooks supply analytic differentials; finite-difference
    fallbacks are used otherwise.
    """

    group: Manifold
    space: Manifold
    act: Callable
    mul: Callable
    inv: Callable
    identity: np.ndarray
    haar: Optional[object] = None
    name: str = "action"
    act_jac_k: Optional[Callable] = None
    act_jac_x: Optional[Callable] = None
    mul_jac: Optional[Callable] = None
    inv_jac: Optional[Callable] = None
    # Lie-algebra data for the algebroid module (matrix groups only).
    algebra_dim: int = 0
    algebra_action: Optional[Callable] = None  # (xi_coords, x) -> vector at x
    algebra_bracket: Optional[Callable] = None  # (xi, eta) -> coords
    compact: bool = False
    proper: bool = False

    def check(self, rng: np.random.Generator, n: int = 20,
              tol: float = 1e-8) -> None:
        """Validate act(e, x) = x and the composition law on samples."""
        ks = self.group.sample(rng, n)
        xs = self.space.sample(rng, n)
        for k1, k2, x in zip(ks, np.roll(ks, 1, axis=0), xs):
            if np.linalg.norm(self.act(self.identity, x) - x) > tol:
                raise InvalidParams("action does not fix points under the identity")
            lhs = self.act(k1, self.act(k2, x))
            rhs = self.act(self.mul(k1, k2), x)
            if np.linalg.norm(lhs - rhs) > tol:
                raise InvalidParams("action violates the composition law")


@dataclass(eq=False)
class ArrowSample:
    arrow: Point
    src: Point
    tgt: Point


@dataclass(eq=False)
class LieGroupoid:
    name: str
    kind: str
    objects: Manifold
    arrows: Manifold
    source: SmoothMap
    target: SmoothMap
    unit: SmoothMap
    inverse: SmoothMap
    mul_raw: Callable  # (g, h) -> naive product coordinates
    mul_jac: Optional[Callable] = None  # (g, h) -> (N_G, 2 N_G)
    proper: bool = False
    s_proper: bool = False
    composability_tol: float = COMPOSABILITY_TOL
    arrows_from: Optional[Callable] = None  # (x, rng, n) -> (n, N_G)
    orbit_sampler: Optional[Callable] = None  # (x, rng, budget) -> (k, N_M)
    isotropy_sampler: Optional[Callable] = None  # (x, rng, budget, tol) -> (k, N_G)
    action: Optional[GroupAction] = None
    parent: Optional["LieGroupoid"] = None

    # -- basic operations --------------------------------------------------

    def s(self, g) -> np.ndarray:
        return self.source(_as_coords(g))

    def t(self, g) -> np.ndarray:
        return self.target(_as_coords(g))

    def u(self, x) -> np.ndarray:
        return self.unit(_as_coords(x))

    def i(self, g) -> np.ndarray:
        return self.inverse(_as_coords(g))

    def compose(self, g, h, tol: Optional[float] = None) -> np.ndarray:
        """Product g.h (h applied first); retracts onto the arrow manifold."""
        g, h = _as_coords(g), _as_coords(h)
        tol = self.composability_tol if tol is None else tol
        if tol is not None and math.isfinite(tol):
            gap = np.linalg.norm(self.s(g) - self.t(h))
            if gap > tol:
                raise NotComposable(f"|s(g)-t(h)| = {gap:.3e} > {tol:.1e}")
        return self.arrows.project(self.mul_raw(g, h))

    def arrow_sample(self, g) -> ArrowSample:
        g = _as_coords(g)
        return ArrowSample(Point(self.arrows, g),
                           Point(self.objects, self.s(g)),
                           Point(self.objects, self.t(g)))

    # -- sampling ------------------------------------------------------------

    def sample_arrows(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.arrows_from is not None:
            xs = self.objects.sample(rng, n)
            return np.stack([self.arrows_from(x, rng, 1)[0] for x in xs])
        return self.arrows.sample(rng, n)

    def sample_strings(self, rng: np.random.Generator, n: int,
                       length: int) -> np.ndarray:
        """Composable strings (g_1, ..., g_L) with s(g_i) = t(g_{i+1}), stacked."""
        if length < 1:
            raise InvalidParams("string length must be >= 1")
        out = []
        for _ in range(n):
            g = self.sample_arrows(rng, 1)[0]
            string = [g]
            for _ in range(length - 1):
                x = self.t(string[-1])
                if self.arrows_from is None:
                    raise SamplingFailure(
                        f"groupoid {self.name} has no source-fiber sampler")
                nxt = self.arrows_from(x, rng, 1)[0]
                string.append(nxt)
            # built right-to-left: string[k] needs s(string[k]) = t(string[k+1])
            out.append(np.concatenate(string[::-1]))
        return np.stack(out)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def unit_groupoid(M: Manifold, name: str = "") -> LieGroupoid:
    ident = np.eye(M.ambient_dim)
    idmap = linear_map(M, M, ident, name="id")

    def arrows_from(x, rng, n):
        return np.tile(_as_coords(x), (n, 1))

    return LieGroupoid(
        name=name or f"unit({M.name})", kind="unit", objects=M, arrows=M,
        source=idmap, target=idmap, unit=idmap, inverse=idmap,
        mul_raw=lambda g, h: _as_coords(g),
        mul_jac=lambda g, h: np.hstack([ident, np.zeros_like(ident)]),
        proper=True, s_proper=True,
        arrows_from=arrows_from,
        orbit_sampler=lambda x, rng, budget: _as_coords(x)[None, :],
        isotropy_sampler=lambda x, rng, budget, tol: _as_coords(x)[None, :],
    )


def _pair_like(M: Manifold, arrows: Manifold, kind: str, name: str,
               s_proper: bool) -> LieGroupoid:
    n = M.ambient_dim
    Z, I = np.zeros((n, n)), np.eye(n)
    src = SmoothMap(arrows, M, lambda g: g[:n], jac=lambda g: np.hstack([I, Z]),
                    name="s")
    tgt = SmoothMap(arrows, M, lambda g: g[n:], jac=lambda g: np.hstack([Z, I]),
                    name="t")
    unit = SmoothMap(M, arrows, lambda x: np.concatenate([x, x]),
                     jac=lambda x: np.vstack([I, I]), name="u")
    inv = SmoothMap(arrows, arrows,
                    lambda g: np.concatenate([g[n:], g[:n]]),
                    jac=lambda g: np.block([[Z, I], [I, Z]]), name="i")
    # g = (y, z), h = (x, y): product (x, z)
    mul_raw = lambda g, h: np.concatenate([h[:n], g[n:]])
    MJ = np.zeros((2 * n, 4 * n))
    MJ[:n, 2 * n:3 * n] = I
    MJ[n:, n:2 * n] = I
    return LieGroupoid(
        name=name, kind=kind, objects=M, arrows=arrows,
        source=src, target=tgt, unit=unit, inverse=inv,
        mul_raw=mul_raw, mul_jac=lambda g, h: MJ,
        proper=True, s_proper=s_proper,
    )


def pair_groupoid(M: Manifold, name: str = "", compact: bool = False) -> LieGroupoid:
    arrows = Product([M, M], name=f"{M.name}^2")
    G = _pair_like(M, arrows, "pair", name or f"pair({M.name})", s_proper=compact)

    def arrows_from(x, rng, n):
        ys = M.sample(rng, n)
        return np.hstack([np.tile(_as_coords(x), (n, 1)), ys])

    G.arrows_from = arrows_from
    G.orbit_sampler = lambda x, rng, budget: M.sample(rng, budget)
    G.isotropy_sampler = lambda x, rng, budget, tol: np.concatenate(
        [_as_coords(x), _as_coords(x)])[None, :]
    return G


def submersion_groupoid(M: Manifold, N: Manifold, pi: SmoothMap,
                        name: str = "", pi_proper: bool = False,
                        fiber_sampler: Optional[Callable] = None,
                        rank_check_samples: int = 5,
                        rng: Optional[np.random.Generator] = None) -> LieGroupoid:
    """Fiber-product groupoid M x_N M of a surjective submersion pi."""
    rng = rng or np.random.default_rng(0)
    for x in M.sample(rng, rank_check_samples):
        J = pi.jacobian(x) @ M.tangent_basis(x)
        s = np.linalg.svd(J, compute_uv=False)
        if s.size < N.dim or s[N.dim - 1] < RANK_CUTOFF * max(1.0, s[0]):
            raise RankDeficientSubmersion(
                f"d(pi) rank below {N.dim} at a sampled point")

    prod = Product([M, M])
    n = M.ambient_dim

    def constraint(z):
        return pi(z[:n]) - pi(z[n:])

    cjac = None
    if pi.jac is not None:
        def cjac(z):
            return np.hstack([pi.jacobian(z[:n]), -pi.jacobian(z[n:])])

    arrows = LevelSet(prod, constraint, codim=N.dim,
                      name=f"{M.name}x_{N.name}{M.name}",
                      constraint_jacobian=cjac, kind="fiber-product")
    G = _pair_like(M, arrows, "submersion",
                   name or f"submersion({pi.name or 'pi'})", s_proper=pi_proper)
    G.proper = True

    if fiber_sampler is None:
        def fiber_sampler(x, rng, n_pts):
            x = _as_coords(x)
            fiber = LevelSet(M, lambda y: pi(y) - pi(x), codim=N.dim,
                             name="fiber",
                             constraint_jacobian=(lambda y: pi.jacobian(y))
                             if pi.jac is not None else None)
            return fiber.sample(rng, n_pts)

    def arrows_from(x, rng, n_pts):
        ys = fiber_sampler(x, rng, n_pts)
        return np.hstack([np.tile(_as_coords(x), (n_pts, 1)), ys])

    G.arrows_from = arrows_from
    G.orbit_sampler = lambda x, rng, budget: fiber_sampler(x, rng, budget)
    G.isotropy_sampler = lambda x, rng, budget, tol: np.concatenate(
        [_as_coords(x), _as_coords(x)])[None, :]
    G.submersion = pi
    G.base = N
    return G


def action_groupoid(action: GroupAction, name: str = "",
                    rng: Optional[np.random.Generator] = None) -> LieGroupoid:
    """Arrows (k, x): x -> act(k, x), with composition (k1, k2x)(k2, x) = (k1 k2, x)."""
    rng = rng or np.random.default_rng(0)
    action.check(rng)
    K, M = action.group, action.space
    arrows = Product([K, M], name=f"{K.name}x{M.name}")
    nk, nm = K.ambient_dim, M.ambient_dim
    Zk = np.zeros((nm, nk))
    src = SmoothMap(arrows, M, lambda g: g[nk:],
                    jac=lambda g: np.hstack([Zk, np.eye(nm)]), name="s")

    def t_fn(g):
        return action.act(g[:nk], g[nk:])

    t_jac = None
    if action.act_jac_k is not None and action.act_jac_x is not None:
        def t_jac(g):
            return np.hstack([action.act_jac_k(g[:nk], g[nk:]),
                              action.act_jac_x(g[:nk], g[nk:])])

    tgt = SmoothMap(arrows, M, t_fn, jac=t_jac, name="t")
    unit = SmoothMap(M, arrows, lambda x: np.concatenate([action.identity, x]),
                     jac=lambda x: np.vstack([np.zeros((nk, nm)), np.eye(nm)]),
                     name="u")

    def i_fn(g):
        return np.concatenate([action.inv(g[:nk]), action.act(g[:nk], g[nk:])])

    i_jac = None
    if action.inv_jac is not None and t_jac is not None:
        def i_jac(g):
            top = np.hstack([action.inv_jac(g[:nk]), np.zeros((nk, nm))])
            return np.vstack([top, t_jac(g)])

    inv = SmoothMap(arrows, arrows, i_fn, jac=i_jac, name="i")

    def mul_raw(g, h):
        return np.concatenate([action.mul(g[:nk], h[:nk]), h[nk:]])

    mul_jac = None
    if action.mul_jac is not None:
        def mul_jac(g, h):
            J = np.zeros((nk + nm, 2 * (nk + nm)))
            KJ = action.mul_jac(g[:nk], h[:nk])  # (nk, 2nk)
            J[:nk, :nk] = KJ[:, :nk]
            J[:nk, nk + nm:2 * nk + nm] = KJ[:, nk:]
            J[nk:, 2 * nk + nm:] = np.eye(nm)
            return J

    def arrows_from(x, rng, n_pts):
        ks = K.sample(rng, n_pts)
        return np.hstack([ks, np.tile(_as_coords(x), (n_pts, 1))])

    def orbit_sampler(x, rng, budget):
        if action.haar is not None and len(action.haar.nodes) >= budget:
            ks = np.asarray(action.haar.nodes)[:budget]
        else:
            ks = K.sample(rng, budget)
        return np.stack([action.act(k, _as_coords(x)) for k in ks])

    def isotropy_sampler(x, rng, budget, tol):
        x = _as_coords(x)
        ks = (np.asarray(action.haar.nodes) if action.haar is not None
              else K.sample(rng, budget))
        hits = [k for k in ks[:budget]
                if np.linalg.norm(action.act(k, x) - x) < tol]
        if not hits:
            return np.zeros((0, nk + nm))
        return np.hstack([np.stack(hits), np.tile(x, (len(hits), 1))])

    return LieGroupoid(
        name=name or f"{K.name}|>{M.name}", kind="action",
        objects=M, arrows=arrows,
        source=src, target=tgt, unit=unit, inverse=inv,
        mul_raw=mul_raw, mul_jac=mul_jac,
        proper=action.proper, s_proper=action.compact,
        arrows_from=arrows_from, orbit_sampler=orbit_sampler,
        isotropy_sampler=isotropy_sampler, action=action,
    )


_BUILDERS = {
    "unit": lambda p: unit_groupoid(**p),
    "pair": lambda p: pair_groupoid(**p),
    "submersion": lambda p: submersion_groupoid(**p),
    "action": lambda p: action_groupoid(**p),
}


def build_groupoid(kind: str, params: dict) -> LieGroupoid:
    if kind not in _BUILDERS:
        raise InvalidParams(f"unknown groupoid kind {kind!r}")
    try:
        return _BUILDERS[kind](dict(params))
    except TypeError as exc:
        raise InvalidParams(str(exc)) from exc


# ---------------------------------------------------------------------------
# checks and derived samplers
# ---------------------------------------------------------------------------

def check_axioms(G: LieGroupoid, n_samples: int = 200, tol: float = 1e-10,
                 seed: int = 0) -> Report:
    """Sampled residuals of the unit, inverse and associativity laws.

    Also verifies that ds and dt have full rank (= dim M) at sampled arrows;
    a rank drop is folded in as a unit defect so the report fails.
    """
    rng = np.random.default_rng(seed)
    strings = G.sample_strings(rng, n_samples, 3)
    ng = G.arrows.ambient_dim
    defects = []
    law_max = {"associativity": 0.0, "unit": 0.0, "inverse": 0.0}
    rank_fail = 0
    for row in strings:
        g, h, k = row[:ng], row[ng:2 * ng], row[2 * ng:]
        worst = 0.0
        r = np.linalg.norm(G.compose(G.compose(g, h), k)
                           - G.compose(g, G.compose(h, k)))
        law_max["associativity"] = max(law_max["associativity"], r)
        worst = max(worst, r)
        r = max(np.linalg.norm(G.compose(G.u(G.t(g)), g) - g),
                np.linalg.norm(G.compose(g, G.u(G.s(g))) - g))
        law_max["unit"] = max(law_max["unit"], r)
        worst = max(worst, r)
        ig = G.i(g)
        r = max(np.linalg.norm(G.compose(g, ig) - G.u(G.t(g))),
                np.linalg.norm(G.compose(ig, g) - G.u(G.s(g))))
        law_max["inverse"] = max(law_max["inverse"], r)
        worst = max(worst, r)
        defects.append(worst)
    for g in strings[: min(25, n_samples), :ng]:
        E = G.arrows.tangent_basis(g)
        for m in (G.source, G.target):
            s = np.linalg.svd(m.jacobian(g) @ E, compute_uv=False)
            rank = int(np.sum(s > RANK_CUTOFF * max(1.0, s[0])))
            if rank < G.objects.dim:
                rank_fail += 1
                defects.append(1.0)
    return Report(op="check_axioms", tol=tol, defects=defects,
                  extra={"groupoid": G.name, "law_max": law_max,
                         "rank_failures": rank_fail})


def orbit_sample(G: LieGroupoid, x: Point, budget: int = 500,
                 seed: int = 0) -> list[Point]:
    """Points of t(s^{-1}(x)) up to the sampling budget."""
    rng = np.random.default_rng(seed)
    if G.orbit_sampler is not None:
        pts = G.orbit_sampler(_as_coords(x), rng, budget)
    elif G.arrows_from is not None:
        arr = G.arrows_from(_as_coords(x), rng, budget)
        pts = np.stack([G.t(a) for a in arr])
    else:
        raise SamplingFailure(f"no orbit sampler for {G.name}")
    return [Point(G.objects, p) for p in pts]


def isotropy_sample(G: LieGroupoid, x: Point, budget: int = 500,
                    tol: float = 1e-6, seed: int = 0) -> list[Point]:
    """Arrows with both endpoints within tol of x, from a grid search."""
    rng = np.random.default_rng(seed)
    x = _as_coords(x)
    if G.isotropy_sampler is not None:
        arr = G.isotropy_sampler(x, rng, budget, tol)
    else:
        cand = G.sample_arrows(rng, budget)
        keep = [g for g in cand
                if np.linalg.norm(G.s(g) - x) < tol
                and np.linalg.norm(G.t(g) - x) < tol]
        arr = np.stack(keep) if keep else np.zeros((0, G.arrows.ambient_dim))
    return [Point(G.arrows, g) for g in arr]


def restrict_to_saturated(G: LieGroupoid, S: Manifold, seed: int = 0,
                          orbit_budget: int = 40, check_points: int = 8,
                          tol: float = 1e-8) -> LieGroupoid:
    """Restricted groupoid G_S over a saturated submanifold S of the objects.

    Saturation is verified by sampling: orbits of S-points must stay within
    tol of S.  The restricted arrow space is the arrow-manifold subset
    {g : s(g) in S} cut out by the distance-to-S constraint.
    """
    rng = np.random.default_rng(seed)
    seeds = S.sample(rng, check_points)
    for p in seeds:
        for q in orbit_sample(G, Point(G.objects, p), budget=orbit_budget,
                              seed=seed + 1):
            gap = np.linalg.norm(q.coords - S.project(q.coords))
            if gap > tol:
                raise NotSaturated(
                    f"orbit of a point of {S.name} escapes by {gap:.3e}")

    codim = G.objects.dim - S.dim

    def constraint(g):
        sx = G.source(g)
        return sx - S.project(sx)

    cjac = None
    if G.source.jac is not None and S.project_jacobian(seeds[0]) is not None:
        def cjac(g):
            sx = G.source(g)
            return (np.eye(S.ambient_dim) - S.project_jacobian(sx)) @ G.source.jacobian(g)

    arrows_S = LevelSet(G.arrows, constraint, codim=codim,
                        name=f"{G.name}|{S.name}", constraint_jacobian=cjac)
    sub = LieGroupoid(
        name=f"{G.name}_S", kind="restricted", objects=S, arrows=arrows_S,
        source=SmoothMap(arrows_S, S, G.source.fn, jac=G.source.jac, name="s"),
        target=SmoothMap(arrows_S, S, G.target.fn, jac=G.target.jac, name="t"),
        unit=SmoothMap(S, arrows_S, G.unit.fn, jac=G.unit.jac, name="u"),
        inverse=SmoothMap(arrows_S, arrows_S, G.inverse.fn, jac=G.inverse.jac,
                          name="i"),
        mul_raw=G.mul_raw, mul_jac=G.mul_jac,
        proper=G.proper, s_proper=G.s_proper,
        arrows_from=G.arrows_from, orbit_sampler=G.orbit_sampler,
        isotropy_sampler=G.isotropy_sampler, action=G.action, parent=G,
    )
    return sub


def normal_transport(G: LieGroupoid, g, v, normal_projector: Callable,
                     kernel_noise: float = 0.0,
                     rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Push a vector normal to an invariant submanifold across an arrow.

    Solves d_g s (w) = v in least squares over T_g G, applies d_g t, and
    projects with ``normal_projector(t(g))``.  The result is independent of
    the choice of lift; ``kernel_noise`` adds a random ker(ds) component to
    exercise exactly that invariance in tests.
    """
    g = _as_coords(g)
    v = np.asarray(v, dtype=float)
    E = G.arrows.tangent_basis(g)
    A = G.source.jacobian(g) @ E
    U, s, Vt = np.linalg.svd(A)
    rank = int(np.sum(s > RANK_CUTOFF * max(1.0, s[0] if s.size else 1.0)))
    if rank < G.objects.dim:
        raise LiftFailure("d_g s is rank deficient; cannot lift")
    coeffs, *_ = np.linalg.lstsq(A, v, rcond=None)
    if kernel_noise > 0.0 and rank < E.shape[1]:
        rng = rng or np.random.default_rng(0)
        ker = Vt[rank:].T
        coeffs = coeffs + ker @ rng.normal(scale=kernel_noise, size=ker.shape[1])
    w = G.target.jacobian(g) @ (E @ coeffs)
    return normal_projector(G.t(g)) @ w
