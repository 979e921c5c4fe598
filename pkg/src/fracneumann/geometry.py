"""Domains, boundary distance, exterior truncation, and graded 1D meshes.

Supported shapes: 1D interval, the half line (0, inf), and in 2D the disc
and axis-aligned rectangle.  Exterior integrals are truncated at a finite
radius (a multiple of the domain diameter); integrands beyond it are handled
analytically by the callers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_TRUNCATION_FACTOR = 64.0  # times diameter; must stay >= 3


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise GeometryError(f"interval needs a < b, got ({self.a}, {self.b})")


@dataclass(frozen=True)
class HalfLine:
    """Omega = (0, inf); only valid in dimension 1."""


@dataclass(frozen=True)
class Disc:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("disc radius must be positive")


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned box given by two opposite corners."""

    lo: tuple[float, float]
    hi: tuple[float, float]

    def __post_init__(self):
        if not (self.lo[0] < self.hi[0] and self.lo[1] < self.hi[1]):
            raise GeometryError("rectangle corners must satisfy lo < hi componentwise")


@dataclass(frozen=True)
class DomainSpec:
    """Geometry of Omega plus the cap used for integrals over its complement."""

    shape: Interval | HalfLine | Disc | Rectangle
    truncation_radius: float | None = None

    def __post_init__(self):
        if self.truncation_radius is None:
            object.__setattr__(
                self, "truncation_radius",
                DEFAULT_TRUNCATION_FACTOR * self.diameter if not self.unbounded else math.inf,
            )
        elif not self.unbounded and self.truncation_radius < 3.0 * self.diameter:
            raise GeometryError(
                "truncation radius must be at least 3x the domain diameter"
            )

    @property
    def dimension(self) -> int:
        return 2 if isinstance(self.shape, (Disc, Rectangle)) else 1

    @property
    def unbounded(self) -> bool:
        return isinstance(self.shape, HalfLine)

    @property
    def diameter(self) -> float:
        s = self.shape
        if isinstance(s, Interval):
            return s.b - s.a
        if isinstance(s, Disc):
            return 2.0 * s.radius
        if isinstance(s, Rectangle):
            return math.hypot(s.hi[0] - s.lo[0], s.hi[1] - s.lo[1])
        return math.inf

    @property
    def measure(self) -> float:
        s = self.shape
        if isinstance(s, Interval):
            return s.b - s.a
        if isinstance(s, Disc):
            return math.pi * s.radius**2
        if isinstance(s, Rectangle):
            return (s.hi[0] - s.lo[0]) * (s.hi[1] - s.lo[1])
        return math.inf

    def contains(self, x) -> bool:
        s = self.shape
        if isinstance(s, Interval):
            return s.a < float(x) < s.b
        if isinstance(s, HalfLine):
            return float(x) > 0.0
        p = np.asarray(x, dtype=float)
        if isinstance(s, Disc):
            return float(np.hypot(p[0] - s.center[0], p[1] - s.center[1])) < s.radius
        return bool(s.lo[0] < p[0] < s.hi[0] and s.lo[1] < p[1] < s.hi[1])


def distance(domain: DomainSpec, x):
    """Unsigned distance from x to the boundary of Omega.

    Returns the same nonnegative quantity for interior and exterior points;
    both are needed by the exterior-interaction kernel.  Accepts scalars in
    1D and length-2 points (or (n, 2) arrays) in 2D; vectorized over leading
    axes.
    """
    s = domain.shape
    if isinstance(s, Interval):
        x = np.asarray(x, dtype=float)
        return np.minimum(np.abs(x - s.a), np.abs(x - s.b))
    if isinstance(s, HalfLine):
        return np.abs(np.asarray(x, dtype=float))
    p = np.asarray(x, dtype=float)
    if isinstance(s, Disc):
        r = np.hypot(p[..., 0] - s.center[0], p[..., 1] - s.center[1])
        return np.abs(r - s.radius)
    # rectangle: per-edge projection inside, nearest point (edge or corner) outside
    dx = np.maximum(np.maximum(s.lo[0] - p[..., 0], p[..., 0] - s.hi[0]), 0.0)
    dy = np.maximum(np.maximum(s.lo[1] - p[..., 1], p[..., 1] - s.hi[1]), 0.0)
    outside = np.hypot(dx, dy)
    inside = np.minimum(
        np.minimum(p[..., 0] - s.lo[0], s.hi[0] - p[..., 0]),
        np.minimum(p[..., 1] - s.lo[1], s.hi[1] - p[..., 1]),
    )
    return np.where(outside > 0.0, outside, np.maximum(inside, 0.0))


def pair_distance(domain: DomainSpec, x, y):
    """min(d(x), d(y)), the quantity governing the kernel estimates."""
    return np.minimum(distance(domain, x), distance(domain, y))


@dataclass(frozen=True)
class Mesh:
    """1D piecewise-linear mesh; nodes ascending, element e = [node_e, node_{e+1}]."""

    domain: DomainSpec
    nodes: np.ndarray
    grading: float = 1.0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or len(nodes) < 3:
            raise GeometryError("mesh needs at least 3 nodes")
        if np.any(np.diff(nodes) <= 0):
            raise GeometryError("mesh nodes must be strictly increasing")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.nodes) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    def interpolate(self, values: np.ndarray, x):
        """Evaluate the piecewise-linear interpolant with nodal `values` at x."""
        return np.interp(np.asarray(x, dtype=float), self.nodes, values)


def default_grading(s: float) -> float:
    """Grading that equidistributes the interpolation error of d^(2s-1) profiles."""
    if s > 0.5:
        return float(np.clip(2.0 / (2.0 * s - 1.0), 1.0, 6.0))
    return 2.0


def build_graded_mesh(domain: DomainSpec, n: int, mu: float,
                      two_sided: bool = False) -> Mesh:
    """Mesh of n elements on an interval, nodes clustered toward the boundary.

    With ``two_sided=False`` the nodes follow node_i = a + L*(i/n)^mu (power
    clustering toward the left endpoint).  ``two_sided=True`` grades toward
    both endpoints symmetrically, which is what the solver experiments use;
    it requires even n.  mu = 1 reproduces the uniform mesh either way.
    """
    if n < 4:
        raise GeometryError(f"need at least 4 elements, got {n}")
    if mu < 1.0:
        raise GeometryError(f"grading exponent must be >= 1, got {mu}")
    s = domain.shape
    if not isinstance(s, Interval):
        raise GeometryError("graded meshes are built on 1D intervals only")
    length = s.b - s.a
    if two_sided:
        if n % 2:
            raise GeometryError("two-sided grading requires an even element count")
        m = n // 2
        left = 0.5 * (2.0 * np.arange(m + 1) / n) ** mu
        ref = np.concatenate([left, 1.0 - left[:-1][::-1]])
    else:
        ref = (np.arange(n + 1) / n) ** mu
    nodes = s.a + length * ref
    nodes[0], nodes[-1] = s.a, s.b
    return Mesh(domain=domain, nodes=nodes, grading=mu)
