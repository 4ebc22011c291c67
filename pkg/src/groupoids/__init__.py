"""Numerical Lie groupoids: nerves, n-metrics, and exponential-map linearization."""

from .manifold import (
    Euclidean,
    FiniteSet,
    LevelSet,
    Manifold,
    Metric,
    Point,
    Product,
    RotationGroup2,
    SmoothMap,
    Sphere,
    TangentVector,
    euclidean_metric,
    geodesic_exp,
    geodesic_path,
    project_to_manifold,
    pullback_metric,
    pushforward_metric,
    riemannian_submersion_check,
)

__all__ = [
    "Euclidean", "FiniteSet", "LevelSet", "Manifold", "Metric", "Point",
    "Product", "RotationGroup2", "SmoothMap", "Sphere", "TangentVector",
    "euclidean_metric", "geodesic_exp", "geodesic_path", "project_to_manifold",
    "pullback_metric", "pushforward_metric", "riemannian_submersion_check",
]
