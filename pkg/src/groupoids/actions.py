"""Ready-made group actions: rotations of the plane, reflection of a line,
and the trivial action.  All carry analytic differentials so downstream
metric constructions stay at roundoff accuracy.
"""
from __future__ import annotations

import numpy as np

from .groupoid import GroupAction
from .manifold import Euclidean, FiniteSet, RotationGroup2
from .metric import circle_quadrature, finite_group_quadrature

_I2 = np.eye(2)


def so2_action_on_plane(n_quad: int = 64, halfwidth: float = 1.5) -> GroupAction:
    """SO(2) acting linearly on R^2; rotations stored as flattened matrices."""
    K = RotationGroup2()
    M = Euclidean(2, halfwidth=halfwidth)

    def act(k, x):
        return k.reshape(2, 2) @ x

    def mul_jac(a, b):
        A, B = a.reshape(2, 2), b.reshape(2, 2)
        return np.hstack([np.kron(_I2, B.T), np.kron(A, _I2)])

    # transposition of a flattened 2x2 matrix is the permutation (0,2,1,3)
    T = np.zeros((4, 4))
    for i, j in enumerate((0, 2, 1, 3)):
        T[i, j] = 1.0

    return GroupAction(
        group=K, space=M, act=act,
        mul=RotationGroup2.mul, inv=RotationGroup2.inv,
        identity=np.array([1.0, 0.0, 0.0, 1.0]),
        haar=circle_quadrature(n_quad),
        name="SO(2) on R^2",
        act_jac_k=lambda k, x: np.kron(_I2, x[None, :]).reshape(2, 4),
        act_jac_x=lambda k, x: k.reshape(2, 2).copy(),
        mul_jac=mul_jac,
        inv_jac=lambda k: T,
        algebra_dim=1,
        algebra_action=lambda xi, x: xi[0] * np.array([-x[1], x[0]]),
        algebra_bracket=lambda xi, eta: np.zeros(1),
        compact=True, proper=True,
    )


def z2_action_on_line(halfwidth: float = 1.5) -> GroupAction:
    """Z/2 = {+1, -1} acting on R by sign flips."""
    K = FiniteSet([[1.0], [-1.0]], name="Z/2")
    M = Euclidean(1, halfwidth=halfwidth)
    return GroupAction(
        group=K, space=M,
        act=lambda k, x: k[0] * x,
        mul=lambda a, b: np.array([a[0] * b[0]]),
        inv=lambda a: np.array([a[0]]),
        identity=np.array([1.0]),
        haar=finite_group_quadrature(K.points),
        name="Z/2 on R",
        act_jac_k=lambda k, x: x[:, None].copy(),
        act_jac_x=lambda k, x: np.array([[k[0]]]),
        mul_jac=lambda a, b: np.array([[b[0], a[0]]]),
        inv_jac=lambda a: np.array([[1.0]]),
        compact=True, proper=True,
    )


def trivial_action(space, halfwidth: float = 1.5) -> GroupAction:
    """The one-element group acting trivially (unit groupoid in disguise)."""
    K = FiniteSet([[0.0]], name="1")
    return GroupAction(
        group=K, space=space,
        act=lambda k, x: np.asarray(x, dtype=float),
        mul=lambda a, b: np.array([0.0]),
        inv=lambda a: np.array([0.0]),
        identity=np.array([0.0]),
        haar=finite_group_quadrature(K.points),
        name="trivial",
        act_jac_k=lambda k, x: np.zeros((space.ambient_dim, 1)),
        act_jac_x=lambda k, x: np.eye(space.ambient_dim),
        mul_jac=lambda a, b: np.zeros((1, 2)),
        inv_jac=lambda a: np.zeros((1, 1)),
        compact=True, proper=True,
    )
