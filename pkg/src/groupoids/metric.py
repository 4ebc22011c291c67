"""Construction and verification of metrics on composable-string spaces.

An n-metric is a metric on G^(n) that is invariant under the permutation
action of S_{n+1} and makes every face map a Riemannian submersion.  Three
routes are implemented: the explicit submersion-groupoid family, averaging
over compact group actions, and the gauge construction that averages a
product metric on common-source tuples and pushes it down the gauge
projection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    FaceNotSubmersive,
    NotCompactGroup,
    NotRiemannianSubmersion,
    PushforwardInconsistent,
    QuadratureInvalid,
)
from .groupoid import GroupAction, LieGroupoid, normal_transport
from .manifold import (
    FiniteSet,
    Manifold,
    Metric,
    Product,
    RANK_CUTOFF,
    RotationGroup2,
    SmoothMap,
    _as_coords,
    combine_metrics,
    linear_map,
    pullback_metric,
    pushforward_metric,
    riemannian_submersion_check,
)
from .nerve import (
    all_permutations,
    face_smooth_map,
    gauge_projection_map,
    nerve_space,
    sample_gauge_tuples,
    sample_strings,
    sym_smooth_map,
    unit_lift,
)
from .report import Report


@dataclass(eq=False)
class QuadratureRule:
    """Nodes and weights for averaging over a compact group."""

    nodes: np.ndarray
    weights: np.ndarray
    name: str = "quadrature"

    def __post_init__(self):
        self.nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape[0] != self.nodes.shape[0]:
            raise QuadratureInvalid("node/weight length mismatch")
        if np.any(self.weights <= 0):
            raise QuadratureInvalid("weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise QuadratureInvalid("weights must sum to 1")


def finite_group_quadrature(elements) -> QuadratureRule:
    elements = np.atleast_2d(np.asarray(elements, dtype=float))
    n = elements.shape[0]
    return QuadratureRule(elements, np.full(n, 1.0 / n), name=f"finite({n})")


def circle_quadrature(n_nodes: int = 64) -> QuadratureRule:
    """Uniform rule on SO(2); spectrally accurate for smooth integrands."""
    thetas = 2.0 * math.pi * np.arange(n_nodes) / n_nodes
    nodes = np.stack([RotationGroup2.from_angle(t) for t in thetas])
    return QuadratureRule(nodes, np.full(n_nodes, 1.0 / n_nodes),
                          name=f"circle({n_nodes})")


@dataclass(eq=False)
class NMetric:
    """A candidate n-metric, with its provenance and (optional) certificate."""

    level: int
    metric: Metric
    groupoid: LieGroupoid
    provenance: str = "user"
    certificate: Optional[Report] = None


# ---------------------------------------------------------------------------
# linear-algebra helpers
# ---------------------------------------------------------------------------

def tangent_gram(metric: Metric, manifold: Manifold, x) -> tuple[np.ndarray, np.ndarray]:
    """(orthonormal tangent basis, Gram of the metric in that basis)."""
    x = _as_coords(x)
    E = manifold.tangent_basis(x)
    return E, E.T @ metric.at(x) @ E


def pullback_gram(metric: Metric, f: SmoothMap, x, E: np.ndarray) -> np.ndarray:
    """Gram of f*metric at x in the frame E."""
    J = f.jacobian(x) @ E
    return J.T @ metric.at(f(x)) @ J


def transverse_complement(metric: Metric, manifold: Manifold, x,
                          sub_basis: np.ndarray) -> np.ndarray:
    """Basis of the metric-orthogonal complement of a subspace of T_xM."""
    x = _as_coords(x)
    E = manifold.tangent_basis(x)
    if sub_basis.shape[1] == 0:
        return E
    M = sub_basis.T @ metric.at(x) @ E
    _, s, Vt = np.linalg.svd(M)
    rank = int(np.sum(s > RANK_CUTOFF * max(1.0, s[0] if s.size else 1.0)))
    return E @ Vt[rank:].T


def oblique_projector(metric: Metric, x, complement_basis: np.ndarray) -> np.ndarray:
    """Projector onto span(complement_basis) along its metric-orthogonal space.

    Applied to a tangent vector it returns the representative of the class
    modulo the original subspace, measured with the given metric.
    """
    B = complement_basis
    if B.shape[1] == 0:
        return np.zeros((B.shape[0], B.shape[0]))
    G = metric.at(x)
    A = B.T @ G @ B
    return B @ np.linalg.solve(A, B.T @ G)


def orbit_tangent_basis(G: LieGroupoid, x) -> np.ndarray:
    """Orthonormal basis of the orbit directions at x (the anchor image)."""
    x = _as_coords(x)
    ux = G.u(x)
    E = G.arrows.tangent_basis(ux)
    A = G.source.jacobian(ux) @ E
    U, s, Vt = np.linalg.svd(A)
    rank = int(np.sum(s > RANK_CUTOFF * max(1.0, s[0] if s.size else 1.0)))
    ker = Vt[rank:].T
    if ker.shape[1] == 0:
        return np.zeros((G.objects.ambient_dim, 0))
    img = G.target.jacobian(ux) @ (E @ ker)
    U2, s2, _ = np.linalg.svd(img, full_matrices=False)
    r2 = int(np.sum(s2 > RANK_CUTOFF * max(1.0, s2[0] if s2.size else 1.0)))
    return U2[:, :r2]


def _orthonormalize(metric: Metric, x, B: np.ndarray) -> np.ndarray:
    """Make the columns of B orthonormal for the metric at x."""
    if B.shape[1] == 0:
        return B
    Gm = B.T @ metric.at(x) @ B
    L = np.linalg.cholesky(0.5 * (Gm + Gm.T))
    return B @ np.linalg.inv(L).T


# ---------------------------------------------------------------------------
# explicit submersion-groupoid metrics
# ---------------------------------------------------------------------------

def submersion_groupoid_metrics(G: LieGroupoid, eta: Metric, eta_N: Metric,
                                precheck_samples: int = 12,
                                tol: float = 1e-8,
                                seed: int = 0) -> tuple[NMetric, NMetric, NMetric]:
    """The explicit family on a submersion groupoid M x_N M.

    Level 0 is eta itself; level 1 pulls eta back through both coordinate
    projections and subtracts the base pullback once; level 2 uses the three
    point projections and subtracts the base pullback twice.  Requires the
    defining submersion to be Riemannian for (eta, eta_N).
    """
    pi: SmoothMap = G.submersion
    rng = np.random.default_rng(seed)
    check = riemannian_submersion_check(
        pi, eta, eta_N, samples=G.objects.sample(rng, precheck_samples), tol=tol)
    if not check.passed:
        raise NotRiemannianSubmersion(
            f"pi is not Riemannian for these metrics "
            f"(defect {check.max_defect:.3e})")

    arrows = G.arrows
    n = G.objects.ambient_dim
    amb = arrows.ambient_dim
    p1 = SmoothMap(arrows, G.objects, lambda z: z[:n],
                   jac=lambda z: np.hstack([np.eye(n), np.zeros((n, n))]),
                   name="p1")
    p2 = SmoothMap(arrows, G.objects, lambda z: z[n:],
                   jac=lambda z: np.hstack([np.zeros((n, n)), np.eye(n)]),
                   name="p2")
    pN = SmoothMap(arrows, eta_N.manifold, lambda z: pi(z[:n]),
                   jac=(lambda z: pi.jacobian(z[:n]) @ p1.jacobian(z))
                   if pi.jac is not None else None,
                   name="pN")
    eta1 = combine_metrics(arrows, [
        (1.0, pullback_metric(p1, eta)),
        (1.0, pullback_metric(p2, eta)),
        (-1.0, pullback_metric(pN, eta_N)),
    ], name="eta^(1)")

    G2 = nerve_space(G, 2)
    # a string ((y,z),(x,y)) carries the three fiber points z, y, x
    sel = []
    for off in (n, 0, 2 * n):  # t(g1), s(g1), s(g2)
        A = np.zeros((n, 2 * amb))
        A[:, off:off + n] = np.eye(n)
        sel.append(linear_map(G2, G.objects, A))
    q1, q2, q3 = sel
    pN2 = SmoothMap(G2, eta_N.manifold, lambda z: pi(z[n:2 * n]),
                    jac=(lambda z: pi.jacobian(z[n:2 * n]) @ q1.jacobian(z))
                    if pi.jac is not None else None,
                    name="pN2")
    eta2 = combine_metrics(G2, [
        (1.0, pullback_metric(q1, eta)),
        (1.0, pullback_metric(q2, eta)),
        (1.0, pullback_metric(q3, eta)),
        (-2.0, pullback_metric(pN2, eta_N)),
    ], name="eta^(2)")

    return (NMetric(0, eta, G, "explicit-formula"),
            NMetric(1, eta1, G, "explicit-formula"),
            NMetric(2, eta2, G, "explicit-formula"))


# ---------------------------------------------------------------------------
# averaging
# ---------------------------------------------------------------------------

def average_metric(g: Metric, action: GroupAction,
                   quad: Optional[QuadratureRule] = None,
                   name: str = "") -> Metric:
    """Average of the pullbacks of g under the sampled group action.

    Exact for finite groups; otherwise accurate to the quadrature order.
    """
    quad = quad or action.haar
    if quad is None:
        raise QuadratureInvalid("no quadrature rule available for averaging")
    if abs(quad.weights.sum() - 1.0) > 1e-12 or np.any(quad.weights <= 0):
        raise QuadratureInvalid("invalid weights")
    M = action.space
    nodes, weights = quad.nodes, quad.weights

    def jac_x(k, x):
        if action.act_jac_x is not None:
            return action.act_jac_x(k, x)
        from .manifold import fd_map_jacobian
        return fd_map_jacobian(lambda y: action.act(k, y), M, x)

    def matrix(x):
        Gs = np.stack([g.at(action.act(k, x)) for k in nodes])
        Js = np.stack([jac_x(k, x) for k in nodes])
        return np.einsum('k,kji,kjl,klm->im', weights, Js, Gs, Js)

    return Metric(M, matrix, name=name or f"avg({g.name})")


# ---------------------------------------------------------------------------
# gauge construction
# ---------------------------------------------------------------------------

def left_invariant_arrow_metric(G: LieGroupoid, eta_M: Metric,
                                quad: Optional[QuadratureRule] = None) -> Metric:
    """Block metric on action-groupoid arrows: bi-invariant on K + averaged on M."""
    action = G.action
    avg = average_metric(eta_M, action, quad).cached()
    nk = action.group.ambient_dim
    nm = action.space.ambient_dim

    def matrix(g):
        out = np.zeros((nk + nm, nk + nm))
        out[:nk, :nk] = np.eye(nk)
        out[nk:, nk:] = avg.at(g[nk:])
        return out

    return Metric(G.arrows, matrix, name="left-invariant")


def _right_translation_jacobian(action: GroupAction, kappa: np.ndarray,
                                nk: int, nm: int) -> Callable:
    """d of (k, x) -> (k kappa, act(kappa^{-1}, x)) as a block matrix."""
    kappa_inv = action.inv(kappa)

    def jac(g):
        J = np.zeros((nk + nm, nk + nm))
        if action.mul_jac is not None:
            J[:nk, :nk] = action.mul_jac(g[:nk], kappa)[:, :nk]
        else:
            J[:nk, :nk] = np.eye(nk)  # 0-dim group tangent: block is never used
        if action.act_jac_x is not None:
            J[nk:, nk:] = action.act_jac_x(kappa_inv, g[nk:])
        else:
            from .manifold import fd_map_jacobian
            J[nk:, nk:] = fd_map_jacobian(
                lambda y: action.act(kappa_inv, y), action.space, g[nk:])
        return J

    return jac


def right_averaged_gauge_metric(G: LieGroupoid, arrow_metric: Metric,
                                n: int, quad: QuadratureRule) -> Metric:
    """Average the product metric on G^[n+1] over the right diagonal action.

    For an action groupoid the right orbit through (h_0, ..., h_n) is
    parametrized by the group: h_i = (k_i, x) moves to (k_i kappa,
    act(kappa^{-1}, x)).
    """
    action = G.action
    nk = action.group.ambient_dim
    nm = action.space.ambient_dim
    na = nk + nm
    tuples = n + 1
    space = Product([G.arrows] * tuples)

    node_maps = []
    for kappa in quad.nodes:
        kappa_inv = action.inv(kappa)
        jac = _right_translation_jacobian(action, kappa, nk, nm)

        def apply(z, kappa=kappa, kappa_inv=kappa_inv):
            out = np.empty_like(z)
            for i in range(tuples):
                h = z[i * na:(i + 1) * na]
                out[i * na:i * na + nk] = action.mul(h[:nk], kappa)
                out[i * na + nk:(i + 1) * na] = action.act(kappa_inv, h[nk:])
            return out

        node_maps.append((apply, jac))

    def product_at(z):
        total = np.zeros((tuples * na, tuples * na))
        for i in range(tuples):
            h = z[i * na:(i + 1) * na]
            total[i * na:(i + 1) * na, i * na:(i + 1) * na] = arrow_metric.at(h)
        return total

    weights = quad.weights

    def matrix(z):
        total = np.zeros((tuples * na, tuples * na))
        for (apply, jac), w in zip(node_maps, weights):
            zk = apply(z)
            Jfull = np.zeros((tuples * na, tuples * na))
            for i in range(tuples):
                h = z[i * na:(i + 1) * na]
                Jfull[i * na:(i + 1) * na, i * na:(i + 1) * na] = jac(h)
            total += w * (Jfull.T @ product_at(zk) @ Jfull)
        return total

    return Metric(space, matrix, name="gauge-averaged")


def build_proper_action_2metric(G: LieGroupoid,
                                eta_M: Optional[Metric] = None,
                                quad: Optional[QuadratureRule] = None,
                                samples: int = 12,
                                submersion_tol: float = 1e-6,
                                seed: int = 0,
                                verify: bool = False,
                                verify_tol: float = 1e-6) -> NMetric:
    """Gauge construction of a 2-metric for a proper action groupoid.

    Builds the left-invariant arrow metric, takes the product on
    common-source triples, averages it over the right diagonal action, pushes
    it down the gauge projection, and symmetrizes the result over S_3 by
    pullback.  Requires a compact group (finite, or with a quadrature rule).
    """
    action = G.action
    if action is None:
        raise NotCompactGroup("gauge construction needs an action groupoid")
    if quad is None:
        quad = action.haar
    if quad is None:
        if isinstance(action.group, FiniteSet):
            quad = finite_group_quadrature(action.group.points)
        else:
            raise NotCompactGroup("no quadrature rule for this group")
    if not action.compact:
        raise NotCompactGroup("group is not flagged compact")
    eta_M = eta_M or _default_euclidean(G.objects)

    arrow_metric = left_invariant_arrow_metric(G, eta_M, quad)
    gauge_metric = right_averaged_gauge_metric(G, arrow_metric, 2, quad)
    pi2 = gauge_projection_map(G, 2)

    rng = np.random.default_rng(seed)
    tuples = sample_gauge_tuples(G, 2, rng, samples)
    sub = riemannian_submersion_check(
        pi2,
        Metric(pi2.domain, gauge_metric.matrix, name=gauge_metric.name),
        _pushforward_along(pi2, gauge_metric, G),
        samples=tuples, tol=submersion_tol)
    if not sub.passed:
        raise PushforwardInconsistent(
            f"gauge projection not Riemannian after averaging "
            f"(defect {sub.max_defect:.3e})")

    pushed = _pushforward_along(pi2, gauge_metric, G).cached()
    sym_maps = [sym_smooth_map(G, 2, s) for s in all_permutations(2)]

    def matrix(z):
        total = np.zeros((z.shape[0], z.shape[0]))
        for smap in sym_maps:
            J = smap.jacobian(z)
            total += J.T @ pushed.at(smap(z)) @ J
        return total / len(sym_maps)

    eta2 = Metric(nerve_space(G, 2), matrix, name="gauge-2-metric").cached()
    nm = NMetric(2, eta2, G, "gauge-trick")
    if verify:
        nm.certificate = verify_n_metric(G, nm, samples=samples,
                                         tol=verify_tol, seed=seed)
    return nm


def _default_euclidean(m: Manifold) -> Metric:
    eye = np.eye(m.ambient_dim)
    return Metric(m, lambda x: eye, name="euclidean")


def _pushforward_along(pi2: SmoothMap, gauge_metric: Metric,
                       G: LieGroupoid) -> Metric:
    def matrix(q):
        lift = unit_lift(G, 2, q)
        return pushforward_metric(pi2, gauge_metric, q, lift)

    return Metric(pi2.codomain, matrix, name="pi2-pushforward")


# ---------------------------------------------------------------------------
# induction and verification
# ---------------------------------------------------------------------------

def face_section(G: LieGroupoid, n: int, i: int) -> Callable:
    """Right inverse of the i-th face map G^(n) -> G^(n-1), built from units."""
    from .nerve import split_arrows

    def section(q):
        q = _as_coords(q)
        if n == 1:
            return G.u(q)
        gs = split_arrows(G, q, n - 1)
        if i == 0:
            return np.concatenate([G.u(G.t(gs[0]))] + gs)
        if i == n:
            return np.concatenate(gs + [G.u(G.s(gs[-1]))])
        ident = G.u(G.s(gs[i - 1]))
        return np.concatenate(gs[:i] + [ident] + gs[i:])

    return section


def induce_lower_metric(G: LieGroupoid, candidate: NMetric, face_index: int,
                        check_samples: int = 8, tol: float = 1e-6,
                        seed: int = 0) -> NMetric:
    """Pushforward of an n-metric along one face map, with a submersion check."""
    n = candidate.level
    face = face_smooth_map(G, n, face_index)
    section = face_section(G, n, face_index)

    def matrix(q):
        return pushforward_metric(face, candidate.metric, q, section(q))

    induced = Metric(face.codomain, matrix,
                     name=f"induced(e_{face_index})").cached()
    if check_samples:
        rng = np.random.default_rng(seed)
        pts = sample_strings(G, n, rng, check_samples)
        rep = riemannian_submersion_check(face, candidate.metric, induced,
                                          samples=pts, tol=tol)
        if not rep.passed:
            raise FaceNotSubmersive(
                f"face {face_index} defect {rep.max_defect:.3e} > {tol:.1e}")
    return NMetric(n - 1, induced, G, candidate.provenance)


def verify_n_metric(G: LieGroupoid, candidate: NMetric, samples: int = 25,
                    tol: float = 1e-8, seed: int = 0) -> Report:
    """Certificate for the n-metric properties, by sampling.

    Reports (a) the S_{n+1}-invariance defect under pullback by the
    permutation action, (b) the Riemannian-submersion defect of every face
    map against its induced metric, and (c) the agreement of the metrics
    induced through different faces.  At level 0 it instead checks that the
    normal representations of sampled arrows act by isometries of the
    transverse form.
    """
    n = candidate.level
    rng = np.random.default_rng(seed)
    defects: list[float] = []
    extra: dict = {"level": n, "provenance": candidate.provenance}

    if n == 0:
        eta0 = candidate.metric
        arrows = G.sample_arrows(rng, samples)
        worst = 0.0
        for g in arrows:
            x, y = G.s(g), G.t(g)
            nu_x = _orthonormalize(eta0, x,
                                   transverse_complement(eta0, G.objects, x,
                                                         orbit_tangent_basis(G, x)))
            nu_y = transverse_complement(eta0, G.objects, y,
                                         orbit_tangent_basis(G, y))
            proj = oblique_projector(eta0, y, nu_y)
            if nu_x.shape[1] == 0:
                defects.append(0.0)
                continue
            W = np.column_stack([
                normal_transport(G, g, nu_x[:, j], lambda yy: proj)
                for j in range(nu_x.shape[1])])
            Gram = W.T @ eta0.at(y) @ W
            d = float(np.linalg.norm(Gram - np.eye(Gram.shape[0]), 2))
            defects.append(d)
            worst = max(worst, d)
        extra["normal_isometry_max"] = worst
        return Report(op="verify_n_metric", tol=tol, defects=defects, extra=extra)

    space = nerve_space(G, n)
    pts = sample_strings(G, n, rng, samples)

    # (a) invariance under the permutation action
    inv_max = 0.0
    sym_maps = [(s, sym_smooth_map(G, n, s)) for s in all_permutations(n)
                if s != tuple(range(n + 1))]
    for z in pts:
        E = space.tangent_basis(z)
        base = E.T @ candidate.metric.at(z) @ E
        for _, smap in sym_maps:
            gram = pullback_gram(candidate.metric, smap, z, E)
            d = float(np.linalg.norm(gram - base, 2))
            defects.append(d)
            inv_max = max(inv_max, d)
    extra["invariance_max"] = inv_max

    # eigenvalue floor: candidate must be positive-definite on tangents
    min_eig = math.inf
    for z in pts:
        E = space.tangent_basis(z)
        gram = E.T @ candidate.metric.at(z) @ E
        min_eig = min(min_eig, float(np.linalg.eigvalsh(gram).min()))
    extra["min_tangent_eigenvalue"] = min_eig
    if min_eig <= 0:
        defects.append(1.0)

    # (b) face maps are Riemannian submersions onto their induced metrics
    induced = []
    face_max = 0.0
    for i in range(n + 1):
        face = face_smooth_map(G, n, i)
        section = face_section(G, n, i)
        metric_i = Metric(face.codomain,
                          lambda q, face=face, section=section:
                          pushforward_metric(face, candidate.metric, q,
                                             section(q)),
                          name=f"induced(e_{i})").cached()
        induced.append(metric_i)
        rep = riemannian_submersion_check(face, candidate.metric, metric_i,
                                          samples=pts, tol=tol)
        defects.extend(rep.defects)
        face_max = max(face_max, rep.max_defect)
    extra["face_submersion_max"] = face_max

    # (c) induced metrics agree across faces
    lower_pts = sample_strings(G, n - 1, rng, samples)
    lower_space = nerve_space(G, n - 1)
    cross_max = 0.0
    for q in lower_pts:
        E = lower_space.tangent_basis(q)
        grams = [E.T @ m.at(q) @ E for m in induced]
        for a in range(len(grams)):
            for b in range(a + 1, len(grams)):
                d = float(np.linalg.norm(grams[a] - grams[b], 2))
                defects.append(d)
                cross_max = max(cross_max, d)
    extra["cross_face_max"] = cross_max

    return Report(op="verify_n_metric", tol=tol, defects=defects, extra=extra)
