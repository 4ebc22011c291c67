"""Composable-string spaces, simplicial structure maps, and the gauge projection.

Strings are tuples (g_1, ..., g_n) with s(g_i) = t(g_{i+1}), stored as the
concatenation of arrow coordinates.  Permutations of {0..n} act through
common-source lifts: lift the string, permute the tuple, project back.  For
n <= 2 the action is dispatched to closed forms in terms of multiplication
and inversion, with Jacobians chained from the groupoid's analytic ones.
"""
from __future__ import annotations

from itertools import permutations as _permutations
from typing import Callable, Optional

import numpy as np

from .errors import IndexOutOfRange, NotCommonSource, UnsupportedLevel
from .groupoid import LieGroupoid
from .manifold import LevelSet, Manifold, Product, SmoothMap, _as_coords


def split_arrows(G: LieGroupoid, string, count: int) -> list[np.ndarray]:
    ng = G.arrows.ambient_dim
    string = _as_coords(string)
    return [string[i * ng:(i + 1) * ng] for i in range(count)]


def nerve_space(G: LieGroupoid, n: int) -> Manifold:
    """The space G^(n) of n-strings of composable arrows."""
    if n < 0:
        raise IndexOutOfRange(f"nerve level {n}")
    if n == 0:
        return G.objects
    if n == 1:
        return G.arrows
    cache = getattr(G, "_nerve_cache", None)
    if cache is None:
        cache = G._nerve_cache = {}
    if n in cache:
        return cache[n]
    prod = Product([G.arrows] * n)
    ng = G.arrows.ambient_dim
    nm = G.objects.ambient_dim

    def constraint(z):
        gs = [z[i * ng:(i + 1) * ng] for i in range(n)]
        return np.concatenate([G.s(gs[i]) - G.t(gs[i + 1]) for i in range(n - 1)])

    cjac = None
    if G.source.jac is not None and G.target.jac is not None:
        def cjac(z):
            gs = [z[i * ng:(i + 1) * ng] for i in range(n)]
            J = np.zeros(((n - 1) * nm, n * ng))
            for i in range(n - 1):
                J[i * nm:(i + 1) * nm, i * ng:(i + 1) * ng] = G.source.jacobian(gs[i])
                J[i * nm:(i + 1) * nm, (i + 1) * ng:(i + 2) * ng] = \
                    -G.target.jacobian(gs[i + 1])
            return J

    space = LevelSet(prod, constraint, codim=(n - 1) * G.objects.dim,
                     name=f"{G.name}^({n})", constraint_jacobian=cjac)
    cache[n] = space
    return space


def gauge_space(G: LieGroupoid, n: int) -> Manifold:
    """G^[n+1]: (n+1)-tuples of arrows with a common source."""
    tuples = n + 1
    prod = Product([G.arrows] * tuples)
    ng = G.arrows.ambient_dim
    nm = G.objects.ambient_dim

    def constraint(z):
        hs = [z[i * ng:(i + 1) * ng] for i in range(tuples)]
        return np.concatenate([G.s(hs[i]) - G.s(hs[0]) for i in range(1, tuples)])

    cjac = None
    if G.source.jac is not None:
        def cjac(z):
            hs = [z[i * ng:(i + 1) * ng] for i in range(tuples)]
            J = np.zeros((n * nm, tuples * ng))
            J0 = G.source.jacobian(hs[0])
            for i in range(1, tuples):
                J[(i - 1) * nm:i * nm, i * ng:(i + 1) * ng] = G.source.jacobian(hs[i])
                J[(i - 1) * nm:i * nm, 0:ng] = -J0
            return J

    return LevelSet(prod, constraint, codim=n * G.objects.dim,
                    name=f"{G.name}^[{tuples}]", constraint_jacobian=cjac)


def sample_strings(G: LieGroupoid, n: int, rng: np.random.Generator,
                   count: int) -> np.ndarray:
    if n == 0:
        return G.objects.sample(rng, count)
    return G.sample_strings(rng, count, n)


def sample_gauge_tuples(G: LieGroupoid, n: int, rng: np.random.Generator,
                        count: int) -> np.ndarray:
    """Common-source tuples in G^[n+1], built exactly from source fibers."""
    xs = G.objects.sample(rng, count)
    rows = []
    for x in xs:
        hs = G.arrows_from(x, rng, n + 1)
        rows.append(np.concatenate(list(hs)))
    return np.stack(rows)


# ---------------------------------------------------------------------------
# face and degeneracy maps
# ---------------------------------------------------------------------------

def face_map(G: LieGroupoid, n: int, i: int, string) -> np.ndarray:
    """The i-th face of an n-string: omit the i-th object.

    Interior faces multiply the adjacent arrows; the boundary faces drop the
    end arrow.  For n = 1 the faces are object-valued: e_0 = s, e_1 = t.
    """
    if n < 1 or not 0 <= i <= n:
        raise IndexOutOfRange(f"face index {i} at level {n}")
    if n == 1:
        g = _as_coords(string)
        return G.s(g) if i == 0 else G.t(g)
    gs = split_arrows(G, string, n)
    if i == 0:
        return np.concatenate(gs[1:])
    if i == n:
        return np.concatenate(gs[:-1])
    merged = G.compose(gs[i - 1], gs[i])
    return np.concatenate(gs[: i - 1] + [merged] + gs[i + 1:])


def face_smooth_map(G: LieGroupoid, n: int, i: int) -> SmoothMap:
    """Face map as a SmoothMap, with Jacobian assembled blockwise."""
    if n == 1:
        return (G.source, G.target)[_check_face_index(n, i)]
    _check_face_index(n, i)
    dom = nerve_space(G, n)
    cod = nerve_space(G, n - 1)
    ng = G.arrows.ambient_dim

    jac = None
    if G.mul_jac is not None:
        def jac(z):
            gs = split_arrows(G, z, n)
            J = np.zeros((cod.ambient_dim, dom.ambient_dim))
            out = 0
            for k in range(n):
                if i == 0 and k == 0:
                    continue
                if i == n and k == n - 1:
                    continue
                if 0 < i < n and k == i - 1:
                    MJ = G.mul_jac(gs[i - 1], gs[i])
                    J[out:out + ng, (i - 1) * ng:i * ng] = MJ[:, :ng]
                    J[out:out + ng, i * ng:(i + 1) * ng] = MJ[:, ng:]
                    out += ng
                elif not (0 < i < n and k == i):
                    J[out:out + ng, k * ng:(k + 1) * ng] = np.eye(ng)
                    out += ng
            return J

    return SmoothMap(dom, cod, lambda z: face_map(G, n, i, z), jac=jac,
                     name=f"face_{i}^{n}")


def _check_face_index(n: int, i: int) -> int:
    if not 0 <= i <= n:
        raise IndexOutOfRange(f"face index {i} at level {n}")
    return i


def degeneracy_map(G: LieGroupoid, n: int, i: int, string) -> np.ndarray:
    """Insert an identity arrow at the i-th object (i = 1..n)."""
    if n < 1 or not 1 <= i <= n:
        raise IndexOutOfRange(f"degeneracy index {i} at level {n}")
    gs = split_arrows(G, string, n)
    ident = G.u(G.s(gs[i - 1]))
    return np.concatenate(gs[:i] + [ident] + gs[i:])


# ---------------------------------------------------------------------------
# symmetric action
# ---------------------------------------------------------------------------

def all_permutations(n: int) -> list[tuple[int, ...]]:
    """Elements of S_{n+1}, as tuples sigma with sigma[j] = image of j."""
    return [tuple(p) for p in _permutations(range(n + 1))]

def compose_perms(sigma: tuple, tau: tuple) -> tuple:
    """(sigma o tau)(j) = sigma(tau(j))."""
    return tuple(sigma[t] for t in tau)

def invert_perm(sigma: tuple) -> tuple:
    inv = [0] * len(sigma)
    for j, sj in enumerate(sigma):
        inv[sj] = j
    return tuple(inv)


def unit_lift(G: LieGroupoid, n: int, string) -> np.ndarray:
    """Common-source lift with h_n = u(s(g_n)), h_i = g_{i+1} ... g_n."""
    gs = split_arrows(G, string, n)
    hs = [None] * (n + 1)
    hs[n] = G.u(G.s(gs[n - 1]))
    for i in range(n - 1, -1, -1):
        hs[i] = G.compose(gs[i], hs[i + 1])
    return np.concatenate(hs)


def gauge_projection(G: LieGroupoid, n: int, tuple_coords,
                     tol: float = 1e-8) -> np.ndarray:
    """pi^(n): (h_0, ..., h_n) -> (h_0 h_1^{-1}, ..., h_{n-1} h_n^{-1})."""
    hs = split_arrows(G, tuple_coords, n + 1)
    src = G.s(hs[0])
    for h in hs[1:]:
        if np.linalg.norm(G.s(h) - src) > tol:
            raise NotCommonSource("tuple entries have different sources")
    return np.concatenate([G.compose(hs[i], G.i(hs[i + 1]))
                           for i in range(n)])


def gauge_projection_map(G: LieGroupoid, n: int) -> SmoothMap:
    dom = gauge_space(G, n)
    cod = nerve_space(G, n)
    ng = G.arrows.ambient_dim

    jac = None
    if G.mul_jac is not None and G.inverse.jac is not None:
        def jac(z):
            hs = split_arrows(G, z, n + 1)
            J = np.zeros((cod.ambient_dim, dom.ambient_dim))
            for i in range(n):
                inv_next = G.i(hs[i + 1])
                MJ = G.mul_jac(hs[i], inv_next)
                J[i * ng:(i + 1) * ng, i * ng:(i + 1) * ng] = MJ[:, :ng]
                J[i * ng:(i + 1) * ng, (i + 1) * ng:(i + 2) * ng] = \
                    MJ[:, ng:] @ G.inverse.jacobian(hs[i + 1])
            return J

    return SmoothMap(dom, cod, lambda z: gauge_projection(G, n, z), jac=jac,
                     name=f"pi^({n})")


def _sym_closed_forms(G: LieGroupoid, sigma: tuple):
    """Closed-form action of sigma in S_2 or S_3 on 1- or 2-strings.

    Each entry returns (fn, jac-or-None); formulas follow from permuting the
    canonical unit lift and projecting back.
    """
    ng = G.arrows.ambient_dim
    have = G.mul_jac is not None and G.inverse.jac is not None

    def two(fa, fb, ja=None, jb=None):
        def fn(z):
            g1, g2 = z[:ng], z[ng:]
            return np.concatenate([fa(g1, g2), fb(g1, g2)])

        jac = None
        if have and ja is not None and jb is not None:
            def jac(z):
                g1, g2 = z[:ng], z[ng:]
                return np.vstack([ja(g1, g2), jb(g1, g2)])
        return fn, jac

    inv_j = (lambda g: G.inverse.jacobian(g)) if have else None

    def j_first(g1, g2):  # d(g1) w.r.t. (g1, g2)
        return np.hstack([np.eye(ng), np.zeros((ng, ng))])

    def j_second(g1, g2):
        return np.hstack([np.zeros((ng, ng)), np.eye(ng)])

    def j_inv_first(g1, g2):
        return inv_j(g1) @ j_first(g1, g2)

    def j_inv_second(g1, g2):
        return inv_j(g2) @ j_second(g1, g2)

    def j_prod(g1, g2):  # d(g1 g2)
        return G.mul_jac(g1, g2)

    def j_inv_prod(g1, g2):
        return inv_j(G.compose(g1, g2)) @ G.mul_jac(g1, g2)

    prod = lambda g1, g2: G.compose(g1, g2)
    invp = lambda g1, g2: G.i(G.compose(g1, g2))

    table = {
        (0, 1, 2): two(lambda a, b: a, lambda a, b: b, j_first, j_second),
        (2, 1, 0): two(lambda a, b: G.i(b), lambda a, b: G.i(a),
                       j_inv_second, j_inv_first),
        (1, 2, 0): two(invp, lambda a, b: a, j_inv_prod, j_first),
        (2, 0, 1): two(lambda a, b: b, invp, j_second, j_inv_prod),
        (1, 0, 2): two(lambda a, b: G.i(a), prod, j_inv_first, j_prod),
        (0, 2, 1): two(prod, lambda a, b: G.i(b), j_prod, j_inv_second),
    }
    return table[sigma]


def sym_action(G: LieGroupoid, n: int, sigma: tuple, string) -> np.ndarray:
    """Action of sigma in S_{n+1} on an n-string.

    Levels 1 and 2 use closed forms; higher levels lift to G^[n+1] with the
    unit lift, permute the tuple, and project back (any lift gives the same
    answer since the action descends along the gauge projection).
    """
    sigma = tuple(sigma)
    if len(sigma) != n + 1 or sorted(sigma) != list(range(n + 1)):
        raise UnsupportedLevel(f"{sigma} is not a permutation of 0..{n}")
    string = _as_coords(string)
    if n == 1:
        return string if sigma == (0, 1) else G.i(string)
    if n == 2:
        fn, _ = _sym_closed_forms(G, sigma)
        return fn(string)
    lifted = unit_lift(G, n, string)
    hs = split_arrows(G, lifted, n + 1)
    inv = invert_perm(sigma)
    permuted = np.concatenate([hs[inv[j]] for j in range(n + 1)])
    return gauge_projection(G, n, permuted)


def sym_smooth_map(G: LieGroupoid, n: int, sigma: tuple) -> SmoothMap:
    sigma = tuple(sigma)
    space = nerve_space(G, n)
    if n == 1:
        if sigma == (0, 1):
            ng = G.arrows.ambient_dim
            return SmoothMap(space, space, lambda z: z,
                             jac=lambda z: np.eye(ng), name="sym(0,1)")
        return SmoothMap(space, space, G.inverse.fn, jac=G.inverse.jac,
                         name="sym(1,0)")
    if n == 2:
        fn, jac = _sym_closed_forms(G, sigma)
        return SmoothMap(space, space, fn, jac=jac, name=f"sym{sigma}")
    return SmoothMap(space, space, lambda z: sym_action(G, n, sigma, z),
                     name=f"sym{sigma}")
