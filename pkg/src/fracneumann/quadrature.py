"""Singular-integral engines.

Three jobs: (1) composite Gauss panels with algebraic grading or logarithmic
spacing, (2) double integrals of weakly singular pair integrands over element
pairs (diagonal substitution for identical elements, corner-graded tensor
rules for touching ones), (3) pointwise evaluation of the nonlocal operator
with a symmetrized principal value on the interior ball B_{d/2}(x).

All rules are deterministic functions of geometry and kernel parameters, so
operator evaluation is exactly linear in the input function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.special import binom

from .geometry import DomainSpec, HalfLine, Interval, distance


class QuadratureError(ValueError):
    pass


# ---------------------------------------------------------------- rule tables


@lru_cache(maxsize=None)
def gauss_rule(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panels(edges, order: int = 10):
    """Composite Gauss nodes/weights on consecutive intervals given by edges."""
    gx, gw = gauss_rule(order)
    a = np.asarray(edges[:-1], dtype=float)
    b = np.asarray(edges[1:], dtype=float)
    nodes = (0.5 * (b - a)[:, None] * gx + 0.5 * (a + b)[:, None]).ravel()
    weights = (0.5 * (b - a)[:, None] * gw).ravel()
    return nodes, weights


def log_edges(lo: float, hi: float, per_decade: float = 4.0) -> np.ndarray:
    if not 0 < lo < hi:
        raise QuadratureError("log panel edges need 0 < lo < hi")
    n = max(int(np.ceil(per_decade * np.log10(hi / lo))), 1)
    return np.geomspace(lo, hi, n + 1)


def graded_edges(a: float, b: float, m: int, beta: float, toward: str = "lo") -> np.ndarray:
    """m panels on [a, b] clustered algebraically toward one endpoint."""
    t = (np.arange(m + 1) / m) ** beta
    if toward == "lo":
        return a + (b - a) * t
    return b - (b - a) * t[::-1]


def grading_exponent(s: float, lo: float = 2.0, hi: float = 30.0) -> float:
    """Panel grading 3/(2-2s) for the |x-y|^(-1-2s) diagonal, clamped."""
    return float(np.clip(3.0 / (2.0 - 2.0 * s), lo, hi))


def sym2_power(p: float, x, h):
    """(x+h)^p + (x-h)^p - 2 x^p without cancellation (series for h << x)."""
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    t = h / x
    out = np.empty(np.broadcast(x, h).shape)
    small = t < 0.25
    ts = np.broadcast_to(t, out.shape)[small]
    acc = np.zeros_like(ts)
    for k in range(1, 9):
        acc += 2.0 * binom(p, 2 * k) * ts ** (2 * k)
    xs = np.broadcast_to(x, out.shape)
    out[small] = xs[small] ** p * acc
    tl = np.broadcast_to(t, out.shape)[~small]
    out[~small] = xs[~small] ** p * ((1 + tl) ** p + (1 - tl) ** p - 2.0)
    return out


def int_pow(r1, r2, e):
    """integral of r^e between r1 and r2 (log branch at e = -1)."""
    if e == -1.0:
        return np.log(r2 / r1)
    return (r2 ** (e + 1) - r1 ** (e + 1)) / (e + 1)


# ----------------------------------------------------------- pair quadrature


class PairTransform(Enum):
    NONE = "none"
    DUFFY_SPLIT = "duffy_split"
    DIAGONAL_GRADED = "diagonal_graded"


@dataclass(frozen=True)
class QuadRule:
    """Point set for an element-pair integral: sum(w * f(x, y))."""

    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    order: int
    transform: PairTransform = PairTransform.NONE


@dataclass(frozen=True)
class PairRuleOptions:
    m_graded: int = 10
    g_sing: int = 8
    g_near: int = 8
    g_far: int = 4
    near_factor: float = 2.0  # gap below this many diameters counts as "near"


def _tensor(X, WX, Y, WY, order, transform):
    XX = np.repeat(X, len(Y))
    YY = np.tile(Y, len(X))
    WW = np.repeat(WX, len(Y)) * np.tile(WY, len(X))
    return QuadRule(XX, YY, WW, order, transform)


def pair_rule(element_x, element_y, s: float, opts: PairRuleOptions = PairRuleOptions()) -> QuadRule:
    """Quadrature for integrals over element_x x element_y against |x-y|^(-1-2s).

    Identical elements get the diagonal substitution u = x - y with panels
    graded toward u = 0 (the integrand must vanish quadratically there, which
    Galerkin differences do).  Elements sharing an endpoint get a tensor rule
    graded toward the common corner.  Disjoint elements get plain Gauss, with
    panel splitting when the gap is below a couple of diameters.
    """
    (a, b), (c, d) = element_x, element_y
    if not (a < b and c < d):
        raise QuadratureError("degenerate element")
    beta = grading_exponent(s)
    if (a, b) == (c, d):
        h = b - a
        ue, uw = panels(graded_edges(0.0, h, opts.m_graded, beta), opts.g_sing)
        xs, ws, ys = [], [], []
        gx, gw = gauss_rule(opts.g_sing)
        for u, wu in zip(ue, uw):
            base = a + (h - u) * (0.5 * gx + 0.5)
            wb = (h - u) * 0.5 * gw * wu
            xs += [base + u, base]
            ys += [base, base + u]
            ws += [wb, wb]
        return QuadRule(np.concatenate(xs), np.concatenate(ys), np.concatenate(ws),
                        opts.g_sing, PairTransform.DIAGONAL_GRADED)
    if b == c or d == a:  # touching at one vertex
        if b == c:
            X, WX = panels(graded_edges(a, b, opts.m_graded, beta, toward="hi"), opts.g_sing)
            Y, WY = panels(graded_edges(c, d, opts.m_graded, beta, toward="lo"), opts.g_sing)
        else:
            X, WX = panels(graded_edges(a, b, opts.m_graded, beta, toward="lo"), opts.g_sing)
            Y, WY = panels(graded_edges(c, d, opts.m_graded, beta, toward="hi"), opts.g_sing)
        return _tensor(X, WX, Y, WY, opts.g_sing, PairTransform.DUFFY_SPLIT)
    gap = max(c - b, a - d)
    if gap < 0:
        raise QuadratureError("overlapping but non-identical elements are unsupported")
    if gap < opts.near_factor * max(b - a, d - c):
        X, WX = panels(np.linspace(a, b, 3), opts.g_near)
        Y, WY = panels(np.linspace(c, d, 3), opts.g_near)
        return _tensor(X, WX, Y, WY, opts.g_near, PairTransform.NONE)
    X, WX = panels([a, b], opts.g_far)
    Y, WY = panels([c, d], opts.g_far)
    return _tensor(X, WX, Y, WY, opts.g_far, PairTransform.NONE)


def integrate_pair_singular(f, element_x, element_y, kernel_singularity_order: float,
                            opts: PairRuleOptions = PairRuleOptions()) -> float:
    """Integrate f(x, y) over element_x x element_y.

    f may blow up like |x-y|^(-order) on the diagonal provided it vanishes
    quadratically there (Galerkin difference structure); order must then stay
    below 3 in 1D.  Disjoint elements take any order.
    """
    identical = tuple(element_x) == tuple(element_y)
    touching = element_x[1] == element_y[0] or element_y[1] == element_x[0]
    if (identical or touching) and kernel_singularity_order >= 3.0:
        raise QuadratureError(
            f"singularity order {kernel_singularity_order} is not integrable "
            "on touching elements even with quadratic vanishing")
    s = max((kernel_singularity_order - 1.0) / 2.0, 0.05)
    rule = pair_rule(element_x, element_y, s, opts)
    return float(np.sum(rule.w * f(rule.x, rule.y)))


# ------------------------------------------------------- structured functions


@dataclass(frozen=True)
class PowerFunction:
    """u(y) = y^p on (0, inf); carries exact derivatives and safe differences."""

    p: float

    def __call__(self, y):
        return np.asarray(y, dtype=float) ** self.p

    def second_derivative(self, x: float) -> float:
        return self.p * (self.p - 1.0) * x ** (self.p - 2.0)

    def sym2(self, x: float, h):
        return sym2_power(self.p, x, h)


@dataclass(frozen=True)
class CompactFunction:
    """u supported on [lo, hi]; evaluates to 0 outside."""

    fn: object
    lo: float
    hi: float

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        m = (y >= self.lo) & (y <= self.hi)
        if np.any(m):
            out[m] = self.fn(y[m])
        return out


@dataclass(frozen=True)
class SumFunction:
    parts: tuple

    def __call__(self, y):
        return sum(p(y) for p in self.parts)


def _parts(u):
    return u.parts if isinstance(u, SumFunction) else (u,)


# -------------------------------------------------- pointwise operator (PV)


@dataclass(frozen=True)
class PVEvaluation:
    value: float
    near_part: float
    far_part: float
    error_estimate: float


@dataclass(frozen=True)
class OperatorQuadOptions:
    per_decade: float = 4.0
    g_panel: int = 10
    h_floor_rel: float = 1e-6       # inner cutoff of the symmetrized ball integral
    y_floor_rel: float = 1e-10      # clustering floor toward the domain boundary
    far_cut_factor: float = 50.0    # half-line integration range, in units of x
    fd_step_rel: float = 1e-3       # step for the u'' estimate in the floor term


def _second_derivative(part, x, opts):
    if isinstance(part, PowerFunction):
        return part.second_derivative(x)
    h = opts.fd_step_rel * x
    return float(part(np.array([x + h])) + part(np.array([x - h])) - 2.0 * part(np.array([x]))) / h**2


def _sym2(part, x, h):
    if isinstance(part, PowerFunction):
        return part.sym2(x, h)
    return part(x + h) + part(x - h) - 2.0 * part(np.array([x]))


def _near_fractional(u, x, rb, s, c, opts):
    """-c * int_0^rb (u(x+h)+u(x-h)-2u(x)) h^(-1-2s) dh, Taylor floor below h_floor."""
    hf = opts.h_floor_rel * rb
    h, wh = panels(log_edges(hf, rb, opts.per_decade), opts.g_panel)
    total = 0.0
    for part in _parts(u):
        upp = _second_derivative(part, x, opts)
        floor = upp * hf ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)
        total += -c * (floor + float(np.sum(wh * _sym2(part, x, h) * h ** (-1.0 - 2.0 * s))))
    return total


def eval_pointwise_operator(u, x: float, domain: DomainSpec, spec,
                            opts: OperatorQuadOptions = OperatorQuadOptions()) -> PVEvaluation:
    """L u(x) = PV int_Omega (u(x) - u(y)) K(x, y) dy at an interior point.

    The principal value is realized by pairing y = x + h with y = x - h on
    the interior ball B_{d/2}(x), where the kernel's even fractional part
    sees only the second symmetric difference of u; the bounded exterior
    correction is integrated directly.  The error estimate compares Gauss
    orders g and g+2 on identical panels.
    """
    from . import kernels  # deferred: kernels builds on this module

    d = float(distance(domain, x))
    if not domain.contains(x) or d <= 0.0:
        raise QuadratureError(f"operator evaluation needs an interior point, got {x}")
    v1 = _eval_operator_once(u, x, d, domain, spec, opts, kernels)
    bumped = replace(opts, g_panel=opts.g_panel + 2)
    v2 = _eval_operator_once(u, x, d, domain, spec, opts=bumped, kernels=kernels)
    err = abs(v2[0] + v2[1] - v1[0] - v1[1])
    return PVEvaluation(value=v1[0] + v1[1], near_part=v1[0], far_part=v1[1],
                        error_estimate=err + v1[2])


def _eval_operator_once(u, x, d, domain, spec, opts, kernels):
    s, c = spec.s, spec.norm_const
    rb = 0.5 * d
    near = _near_fractional(u, x, rb, s, c, opts)
    tail_bound = 0.0
    halfline = isinstance(domain.shape, HalfLine)
    if spec.variant != "regional":
        y, wy = panels(np.linspace(x - rb, x + rb, 3), opts.g_panel)
        if halfline:
            k = kernels.halfline_aux_kernel(spec, np.full_like(y, x), y)
        else:
            k = kernels.aux_kernel_values(domain, spec, np.full_like(y, x), y)
        near += float(np.sum(wy * (u(np.array([x])) - u(y)) * k))

    if halfline:
        far, tail_bound = _halfline_far(u, x, rb, s, c, spec, opts, kernels)
        return near, far, tail_bound

    a, b = domain.shape.a, domain.shape.b
    length = b - a
    far = 0.0
    ux = float(u(np.array([x])))
    for lo, hi, toward in ((a, x - rb, "lo"), (x + rb, b, "hi")):
        if hi - lo <= 0:
            continue
        floor = opts.y_floor_rel * length
        if toward == "lo":
            edges = np.concatenate([lo + log_edges(floor, hi - lo, opts.per_decade)])
            edges = np.concatenate([[lo], edges])
        else:
            edges = hi - log_edges(floor, hi - lo, opts.per_decade)[::-1]
            edges = np.concatenate([edges, [hi]])
        y, wy = panels(np.unique(np.clip(edges, lo, hi)), opts.g_panel)
        K = c * np.abs(x - y) ** (-1.0 - 2.0 * s)
        if spec.variant != "regional":
            K = K + kernels.aux_kernel_values(domain, spec, np.full_like(y, x), y)
        far += float(np.sum(wy * (ux - u(y)) * K))
    return near, far, tail_bound


def _halfline_far(u, x, rb, s, c, spec, opts, kernels):
    """Far field on (0, x-rb) u (x+rb, Y) plus analytic tails beyond Y."""
    full = spec.variant != "regional"
    support_hi = max((p.hi for p in _parts(u) if isinstance(p, CompactFunction)), default=0.0)
    Y = max(opts.far_cut_factor * x, 2.0 * support_hi + 4.0 * x)
    ux = float(u(np.array([x])))
    e_in = np.concatenate([[0.0], log_edges(opts.y_floor_rel * x, x - rb, opts.per_decade)])
    e_out = log_edges(x + rb, Y, opts.per_decade)
    breakpoints = sorted({p.lo for p in _parts(u) if isinstance(p, CompactFunction)}
                         | {p.hi for p in _parts(u) if isinstance(p, CompactFunction)})
    e_out = np.unique(np.concatenate([e_out, [b for b in breakpoints if x + rb < b < Y]]))
    y, wy = panels(np.unique(np.concatenate([e_in, e_out])), opts.g_panel)
    keep = (y < x - rb) | (y > x + rb)
    y, wy = y[keep], wy[keep]
    K = c * np.abs(x - y) ** (-1.0 - 2.0 * s)
    if full:
        K = K + kernels.halfline_aux_kernel(spec, np.full_like(y, x), y)
    far = float(np.sum(wy * (ux - u(y)) * K))

    # fractional tail beyond Y
    tail_bound = 0.0
    far += c * ux * (Y - x) ** (-2.0 * s) / (2.0 * s)
    for part in _parts(u):
        if isinstance(part, PowerFunction):
            if abs(part.p - (2.0 * s - 1.0)) < 1e-12:
                far -= c * ((1.0 - x / Y) ** (-2.0 * s) - 1.0) / (2.0 * s * x)
            else:
                t, wt = panels(log_edges(Y, 1e6 * Y, 2.0), opts.g_panel)
                far -= c * float(np.sum(wt * part(t) * (t - x) ** (-1.0 - 2.0 * s)))
                tail_bound += c * part(1e6 * Y) * (1e6 * Y) ** (-2.0 * s)
        elif not isinstance(part, CompactFunction):
            tail_bound += abs(c * ux * (Y - x) ** (-2.0 * s) / (2.0 * s))
    if full:
        far += _halfline_aux_tail(u, x, Y, s, c, opts)
    return far, tail_bound


def _halfline_aux_tail(u, x, Y, s, c, opts):
    """int_Y^inf (u(x) - u(y)) k(x, y) dy via the closed-in-y inner integrals."""
    t, wt = panels(log_edges(1e-8 * x, 1e8 * Y, 3.0), opts.g_panel)
    base = t ** (2.0 * s) * (x + t) ** (-1.0 - 2.0 * s)
    ux = float(u(np.array([x])))
    # int_Y^inf (y+t)^(-1-2s) dy = (Y+t)^(-2s)/(2s)
    tail = c * 2.0 * s * float(np.sum(wt * base * ux * (Y + t) ** (-2.0 * s) / (2.0 * s)))
    for part in _parts(u):
        if isinstance(part, PowerFunction) and abs(part.p - (2.0 * s - 1.0)) < 1e-12:
            # int_Y^inf y^(2s-1) (y+t)^(-1-2s) dy = (1 - (1+t/Y)^(-2s)) / (2s t)
            tail -= c * 2.0 * s * float(np.sum(
                wt * base * (1.0 - (1.0 + t / Y) ** (-2.0 * s)) / (2.0 * s * t)))
    return tail
