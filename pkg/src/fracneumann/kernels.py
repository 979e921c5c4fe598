"""Kernel evaluation: the fractional kernel, the exterior-interaction
correction, their sum, the regional and half-line variants, and the empirical
check of the two-sided comparability estimates.

The exterior correction at a pair (x, y) inside Omega is

    aux(x, y) = c * int_{Omega^c} dz / (|x-z|^{N+2s} |y-z|^{N+2s} D(z)),
    D(z)      = int_Omega |z-w|^{-N-2s} dw,

computed on a cached exterior quadrature grid with the far field beyond the
truncation radius restored by an analytic tail (centroid model for D).  In 1D
both D and the grid are closed-form / log-spaced; on the disc the grid is
polar with a radial D cache and per-pair adaptive angular panels; on the
rectangle a fixed strip-and-corner grid is used.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma

from .geometry import Disc, DomainSpec, HalfLine, Interval, Rectangle, distance, pair_distance
from .quadrature import gauss_rule, graded_edges, log_edges, panels

VARIANTS = ("full", "regional", "halfline")


class KernelError(ValueError):
    pass


def norm_constant(N: int, s: float) -> float:
    """Normalization 2^(2s) s Gamma(N/2+s) / (pi^(N/2) Gamma(1-s))."""
    return 2.0 ** (2 * s) * s * gamma(N / 2.0 + s) / (np.pi ** (N / 2.0) * gamma(1.0 - s))


@dataclass(frozen=True)
class KernelSpec:
    variant: str
    s: float
    N: int = 1
    norm_const: float = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise KernelError(f"unknown kernel variant {self.variant!r}")
        if not 0.0 < self.s < 1.0:
            raise KernelError(f"s must lie strictly inside (0, 1), got {self.s}")
        if self.variant == "halfline" and self.N != 1:
            raise KernelError("the half-line kernel is one-dimensional")
        if self.norm_const is None:
            object.__setattr__(self, "norm_const", norm_constant(self.N, self.s))
        elif self.norm_const <= 0:
            raise KernelError("normalization constant must be positive")

    @property
    def power(self) -> float:
        """Singularity exponent N + 2s."""
        return self.N + 2.0 * self.s


@dataclass(frozen=True)
class KernelValue:
    value: float
    fractional_part: float
    aux_part: float


def frac_kernel(spec: KernelSpec, x, y) -> float:
    """c * |x-y|^(-N-2s); rejects coincident points."""
    r = _sep(spec.N, x, y)
    if np.any(r == 0.0):
        raise KernelError("fractional kernel is singular at x = y")
    return spec.norm_const * r ** (-spec.power)


def _sep(N, x, y):
    if N == 1:
        return np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    dx = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return np.hypot(dx[..., 0], dx[..., 1])


# ------------------------------------------------------------------ denom D


def denom_integral(domain: DomainSpec, spec: KernelSpec, z) -> float:
    """D(z) = int_Omega |z-w|^(-N-2s) dw for an exterior point z."""
    if domain.contains(z) or distance(domain, z) == 0.0:
        raise KernelError(f"denominator integral needs an exterior point, got {z}")
    s = spec.s
    shape = domain.shape
    if isinstance(shape, Interval):
        z = float(z)
        a, b = shape.a, shape.b
        lo, hi = (a - z, b - z) if z < a else (z - b, z - a)
        return (lo ** (-2.0 * s) - hi ** (-2.0 * s)) / (2.0 * s)
    if isinstance(shape, HalfLine):
        return abs(float(z)) ** (-2.0 * s) / (2.0 * s)
    if isinstance(shape, Disc):
        rho = float(np.hypot(z[0] - shape.center[0], z[1] - shape.center[1]))
        return _denom_disc(shape.radius, rho, s)
    return _denom_rectangle(shape, np.asarray(z, dtype=float), s)


def _denom_disc(R: float, rho: float, s: float) -> float:
    """Angular integral of the closed-form radial chord contribution."""
    half = math.asin(min(R / rho, 1.0))

    def chord(phi):
        beta = -rho * math.cos(phi)
        disc = beta * beta - (rho * rho - R * R)
        if disc <= 0.0:
            return 0.0
        root = math.sqrt(disc)
        rm, rp = -beta - root, -beta + root
        return (rm ** (-2.0 * s) - rp ** (-2.0 * s)) / (2.0 * s)

    val, _ = quad(chord, -half, half, epsabs=0.0, epsrel=1e-9, limit=200)
    return val


def _axis_edges(lo, hi, target, m=8, beta=4.0):
    if target <= lo:
        return graded_edges(lo, hi, m, beta, toward="lo")
    if target >= hi:
        return graded_edges(lo, hi, m, beta, toward="hi")
    return np.unique(np.concatenate([
        graded_edges(lo, target, m, beta, toward="hi"),
        graded_edges(target, hi, m, beta, toward="lo")]))


def _denom_rectangle(shape: Rectangle, z, s: float) -> float:
    ex = _axis_edges(shape.lo[0], shape.hi[0], z[0])
    ey = _axis_edges(shape.lo[1], shape.hi[1], z[1])
    X, WX = panels(ex, 8)
    Y, WY = panels(ey, 8)
    r2 = (X[:, None] - z[0]) ** 2 + (Y[None, :] - z[1]) ** 2
    return float(np.einsum("i,j,ij->", WX, WY, r2 ** (-(1.0 + s))))


# --------------------------------------------------------- exterior z-grids


_GRID_CACHE: dict = {}


def _grid_key(domain: DomainSpec, s: float):
    return (domain.shape, round(domain.truncation_radius, 12), round(s, 14))


@dataclass(frozen=True)
class ExteriorGrid1D:
    """Quadrature nodes z on Omega^c with weights and cached D(z).

    ``tail`` is the analytic correction for |z - center| beyond the
    truncation radius, using D(z) ~ |Omega| d(z)^(-N-2s).
    """

    z: np.ndarray
    w: np.ndarray
    D: np.ndarray
    tail_lo: float  # leftmost covered |offset|
    tail_hi: float


def exterior_grid_1d(domain: DomainSpec, s: float,
                     per_decade: float = 3.0, floor_rel: float = 1e-14,
                     g: int = 8) -> ExteriorGrid1D:
    key = ("1d", _grid_key(domain, s), per_decade, floor_rel, g)
    if key in _GRID_CACHE:
        return _GRID_CACHE[key]
    shape = domain.shape
    a, b = shape.a, shape.b
    L = b - a
    t, w = panels(log_edges(floor_rel * L, domain.truncation_radius, per_decade), g)
    z = np.concatenate([a - t, b + t])
    W = np.concatenate([w, w])
    Dl = ((t) ** (-2.0 * s) - (t + L) ** (-2.0 * s)) / (2.0 * s)
    D = np.concatenate([Dl, Dl])
    grid = ExteriorGrid1D(z=z, w=W, D=D, tail_lo=floor_rel * L,
                          tail_hi=domain.truncation_radius)
    _GRID_CACHE[key] = grid
    return grid


def _aux_1d(domain, spec, x, y):
    s, c = spec.s, spec.norm_const
    grid = exterior_grid_1d(domain, s)
    X = np.asarray(x, dtype=float)[..., None]
    Y = np.asarray(y, dtype=float)[..., None]
    core = np.sum(grid.w / (np.abs(X - grid.z) ** spec.power
                            * np.abs(Y - grid.z) ** spec.power * grid.D), axis=-1)
    # analytic far tail with the centroid model D ~ |Omega| d^(-N-2s):
    # the integrand reduces to |z|^(-N-2s) / |Omega| beyond the truncation cap
    R = grid.tail_hi
    tail = 2.0 * R ** (-2.0 * s) / (2.0 * s * domain.measure)
    return c * (core + tail)


@dataclass(frozen=True)
class ExteriorGridDisc:
    rho: np.ndarray        # radial nodes (distances from center, > R)
    wr: np.ndarray
    D: np.ndarray          # denominator at each radial node
    R: float
    trunc: float


def exterior_grid_disc(domain: DomainSpec, s: float,
                       per_decade: float = 4.0, floor_rel: float = 1e-7,
                       g: int = 8) -> ExteriorGridDisc:
    key = ("disc", _grid_key(domain, s), per_decade, floor_rel, g)
    if key in _GRID_CACHE:
        return _GRID_CACHE[key]
    shape = domain.shape
    R = shape.radius
    t, w = panels(log_edges(floor_rel * 2 * R, domain.truncation_radius, per_decade), g)
    rho = R + t
    D = np.array([_denom_disc(R, r, s) for r in rho])
    grid = ExteriorGridDisc(rho=rho, wr=w, D=D, R=R, trunc=domain.truncation_radius)
    _GRID_CACHE[key] = grid
    return grid


def _angular_panels(theta_special, scale, per_decade=4.0, g=8):
    """Angular nodes on a full circle, graded toward each special angle."""
    edges = set()
    for th in theta_special:
        for sgn in (-1.0, 1.0):
            edges.update(th + sgn * log_edges(scale, np.pi, per_decade))
        edges.add(th)
    base = np.asarray(sorted(edges))
    # wrap into a window of width 2*pi centered at the first special angle
    th0 = theta_special[0]
    wrapped = (base - (th0 - np.pi)) % (2.0 * np.pi) + (th0 - np.pi)
    wrapped = np.unique(np.concatenate([wrapped, [th0 - np.pi, th0 + np.pi]]))
    return panels(wrapped, g)


def _aux_disc_pair(domain, spec, x, y):
    s, c = spec.s, spec.norm_const
    shape = domain.shape
    grid = exterior_grid_disc(domain, s)
    cx = np.asarray(shape.center, dtype=float)
    xl, yl = np.asarray(x, dtype=float) - cx, np.asarray(y, dtype=float) - cx
    dscale = max(min(distance(domain, x), distance(domain, y),
                     max(_sep(2, x, y), 1e-9)), 1e-7 * shape.radius)
    theta = [float(np.arctan2(xl[1], xl[0])), float(np.arctan2(yl[1], yl[0]))]
    th, wth = _angular_panels(theta, 0.25 * dscale / shape.radius)
    zx = grid.rho[:, None] * np.cos(th)[None, :]
    zy = grid.rho[:, None] * np.sin(th)[None, :]
    r2x = (zx - xl[0]) ** 2 + (zy - xl[1]) ** 2
    r2y = (zx - yl[0]) ** 2 + (zy - yl[1]) ** 2
    core = np.einsum("r,t,rt->", grid.wr * grid.rho / grid.D, wth,
                     (r2x * r2y) ** (-0.5 * spec.power))
    R = grid.trunc
    tail = 2.0 * np.pi * R ** (-2.0 * s) / (2.0 * s * domain.measure)
    return c * (core + tail)


@dataclass(frozen=True)
class ExteriorGrid2D:
    z: np.ndarray   # (n, 2)
    w: np.ndarray
    D: np.ndarray
    trunc: float


def exterior_grid_rectangle(domain: DomainSpec, s: float,
                            per_decade: float = 3.0, floor_rel: float = 1e-5,
                            g: int = 6, n_along: int = 12) -> ExteriorGrid2D:
    """Strip-and-corner decomposition of the truncated exterior of a box."""
    key = ("rect", _grid_key(domain, s), per_decade, floor_rel, g, n_along)
    if key in _GRID_CACHE:
        return _GRID_CACHE[key]
    shape = domain.shape
    lo, hi = np.asarray(shape.lo), np.asarray(shape.hi)
    diam = domain.diameter
    T = domain.truncation_radius
    out, wout = panels(log_edges(floor_rel * diam, T, per_decade), g)
    zs, ws = [], []
    for axis in (0, 1):
        other = 1 - axis
        along, walong = panels(np.linspace(lo[other], hi[other], n_along + 1), g)
        for side, sgn in ((lo[axis], -1.0), (hi[axis], 1.0)):
            A, O = np.meshgrid(along, out, indexing="ij")
            WA, WO = np.meshgrid(walong, wout, indexing="ij")
            pts = np.empty(A.shape + (2,))
            pts[..., axis] = side + sgn * O
            pts[..., other] = A
            zs.append(pts.reshape(-1, 2))
            ws.append((WA * WO).ravel())
    for cx_, cy_ in ((lo[0], lo[1]), (lo[0], hi[1]), (hi[0], lo[1]), (hi[0], hi[1])):
        sx = -1.0 if cx_ == lo[0] else 1.0
        sy = -1.0 if cy_ == lo[1] else 1.0
        U, V = np.meshgrid(out, out, indexing="ij")
        WU, WV = np.meshgrid(wout, wout, indexing="ij")
        pts = np.stack([cx_ + sx * U, cy_ + sy * V], axis=-1)
        zs.append(pts.reshape(-1, 2))
        ws.append((WU * WV).ravel())
    z = np.concatenate(zs)
    w = np.concatenate(ws)
    D = np.array([_denom_rectangle(shape, p, s) for p in z])
    grid = ExteriorGrid2D(z=z, w=w, D=D, trunc=T)
    _GRID_CACHE[key] = grid
    return grid


def _aux_rectangle(domain, spec, x, y):
    grid = exterior_grid_rectangle(domain, spec.s)
    X = np.asarray(x, dtype=float)
    Y = np.asarray(y, dtype=float)
    rx = np.hypot(grid.z[:, 0] - X[0], grid.z[:, 1] - X[1])
    ry = np.hypot(grid.z[:, 0] - Y[0], grid.z[:, 1] - Y[1])
    core = np.sum(grid.w / (rx ** spec.power * ry ** spec.power * grid.D))
    tail = 2.0 * np.pi * grid.trunc ** (-2.0 * spec.s) / (2.0 * spec.s * domain.measure)
    return spec.norm_const * (core + tail)


# ----------------------------------------------------------- public kernels


def aux_kernel_values(domain: DomainSpec, spec: KernelSpec, x, y):
    """Vectorized exterior correction, no admissibility checks (internal)."""
    if isinstance(domain.shape, Interval):
        return _aux_1d(domain, spec, x, y)
    if isinstance(domain.shape, Disc):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        out = np.array([_aux_disc_pair(domain, spec, xi, yi) for xi, yi in zip(x, y)])
        return out if out.size > 1 else float(out[0])
    if isinstance(domain.shape, Rectangle):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        out = np.array([_aux_rectangle(domain, spec, xi, yi) for xi, yi in zip(x, y)])
        return out if out.size > 1 else float(out[0])
    raise KernelError("exterior correction on the half line goes through halfline_aux_kernel")


def aux_kernel(domain: DomainSpec, spec: KernelSpec, x, y) -> float:
    """Exterior-interaction correction at an interior pair (diagonal allowed)."""
    for p in (x, y):
        if not domain.contains(p):
            raise KernelError(f"aux kernel needs interior points, got {p}")
    return float(aux_kernel_values(domain, spec, x, y))


def halfline_aux_kernel(spec: KernelSpec, x, y,
                        per_decade: float = 3.0, g: int = 10):
    """Half-line correction c*2s*int_0^inf t^{2s} (x+t)^{-1-2s}(y+t)^{-1-2s} dt."""
    s, c = spec.s, spec.norm_const
    X = np.asarray(x, dtype=float)[..., None]
    Y = np.asarray(y, dtype=float)[..., None]
    lo = 1e-8 * float(min(X.min(), Y.min()))
    hi = 1e8 * float(max(X.max(), Y.max()))
    t, w = panels(log_edges(lo, hi, per_decade), g)
    val = 2.0 * s * np.sum(w * t ** (2.0 * s)
                           * (X + t) ** (-1.0 - 2.0 * s)
                           * (Y + t) ** (-1.0 - 2.0 * s), axis=-1)
    return c * val


def full_kernel(domain: DomainSpec, spec: KernelSpec, x, y) -> KernelValue:
    """K(x, y) = fractional part + exterior correction, with the parts reported."""
    if spec.variant == "regional":
        return KernelValue(value=float(frac_kernel(spec, x, y)),
                           fractional_part=float(frac_kernel(spec, x, y)), aux_part=0.0)
    fr = float(frac_kernel(spec, x, y))
    if spec.variant == "halfline" or isinstance(domain.shape, HalfLine):
        aux = float(halfline_aux_kernel(spec, x, y))
    else:
        aux = aux_kernel(domain, spec, x, y)
    return KernelValue(value=fr + aux, fractional_part=fr, aux_part=aux)


# ------------------------------------------------------ estimate validation


@dataclass
class RegimeStats:
    count: int = 0
    ratio_min: float = math.inf
    ratio_max: float = -math.inf

    def update(self, r: float):
        self.count += 1
        self.ratio_min = min(self.ratio_min, r)
        self.ratio_max = max(self.ratio_max, r)


@dataclass
class EstimateReport:
    """Per-regime bounds of aux / (c * comparison form), plus the samples."""

    s: float
    domain: str
    bound: float
    boundary_regime: RegimeStats
    interior_regime: RegimeStats
    samples: list
    passed: bool = False

    def finalize(self):
        ok = True
        for st in (self.boundary_regime, self.interior_regime):
            ok = ok and st.count > 0 and st.ratio_min >= 1.0 / self.bound \
                and st.ratio_max <= self.bound
        self.passed = ok
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, default=float)


def _sample_pair(rng, domain, regime):
    """One admissible pair in the requested estimate regime."""
    diam = domain.diameter
    shape = domain.shape
    for _ in range(200):
        d = 10.0 ** rng.uniform(np.log10(2e-3), np.log10(0.2)) * diam
        if regime == "interior":
            sep = d * 10.0 ** rng.uniform(-2.5, 0.0)
        else:
            sep = d * 10.0 ** rng.uniform(0.0, 2.5)
        if isinstance(shape, Interval):
            side = shape.a if rng.random() < 0.5 else shape.b
            sgn = 1.0 if side == shape.a else -1.0
            x = side + sgn * d
            y = x + sgn * sep
            if not (domain.contains(x) and domain.contains(y)):
                continue
        else:
            th = rng.uniform(0.0, 2.0 * np.pi)
            cx = np.asarray(shape.center)
            x = cx + (shape.radius - d) * np.array([np.cos(th), np.sin(th)])
            phi = rng.uniform(0.0, 2.0 * np.pi)
            y = x + sep * np.array([np.cos(phi), np.sin(phi)])
            if not (domain.contains(x) and domain.contains(y)):
                continue
        dp = float(pair_distance(domain, x, y))
        actual = "interior" if dp >= sep else "boundary"
        if actual == regime and dp >= 1e-3 * diam:
            return x, y, dp, float(_sep(domain.dimension, x, y))
    raise KernelError(f"could not draw a sample in the {regime} regime")


def validate_estimates(domain: DomainSpec, spec: KernelSpec, sample_count: int = 200,
                       seed: int = 42, bound: float = 50.0) -> EstimateReport:
    """Sample interior pairs and compare aux against the two-sided estimate.

    The comparison is constant-free: the measured quantity is
    aux(x,y) / (c * RHS) with RHS = d_pair^(-N-2s) when d_pair >= |x-y| and
    (1 + |log(d_pair/|x-y|)|) / |x-y|^(N+2s) otherwise, and the verdict asks
    for containment in [1/bound, bound] in both regimes.
    """
    if spec.variant != "full":
        raise KernelError("estimate validation applies to the full Neumann kernel")
    rng = np.random.default_rng(seed)
    report = EstimateReport(s=spec.s, domain=repr(domain.shape), bound=bound,
                            boundary_regime=RegimeStats(), interior_regime=RegimeStats(),
                            samples=[])
    for i in range(sample_count):
        regime = "interior" if i % 2 == 0 else "boundary"
        x, y, dp, sep = _sample_pair(rng, domain, regime)
        k = float(aux_kernel_values(domain, spec, x, y))
        if regime == "interior":
            rhs = dp ** (-spec.power)
            report.interior_regime.update(k / (spec.norm_const * rhs))
        else:
            rhs = (1.0 + abs(np.log(dp / sep))) / sep ** spec.power
            report.boundary_regime.update(k / (spec.norm_const * rhs))
        ratio = k / (spec.norm_const * rhs)
        report.samples.append({
            "x": np.asarray(x).tolist(), "y": np.asarray(y).tolist(),
            "d_pair": dp, "separation": sep, "regime": regime, "ratio": ratio})
    return report.finalize()
