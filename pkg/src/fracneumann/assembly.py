"""Galerkin assembly of B(u, v) on piecewise-linear hats, 1D.

The bilinear form splits into the fractional part (assembled pair-by-pair
with singular quadrature; identical-element contributions are closed form)
and the exterior-interaction part.  The latter is separable on the exterior
quadrature grid,

    aux(x, y) = sum_z om_z * g_z(x) * g_z(y),      g_z(x) = |x - z|^(-1-2s),

so its Galerkin matrix is assembled from exact hat-function moments of g_z:
no pointwise aux evaluation and no log-singular 2D quadrature is needed.
The moment recurrences are evaluated in element-local coordinates when z is
close (stable) and by Gauss quadrature when z is far (no cancellation), and
the diagonal entries are defined through the row-sum identities so that
A @ 1 = 0 holds to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import backend
from .geometry import DomainSpec, Interval, Mesh
from .kernels import KernelSpec, exterior_grid_1d
from .quadrature import gauss_rule, graded_edges, grading_exponent, int_pow, panels


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class AssemblyOptions:
    m_graded: int = 10
    g_sing: int = 8
    g_near: int = 8
    g_far: int = 4
    near_factor: float = 2.0
    g_moment: int = 10          # gauss order for far-z aux moments
    z_per_decade: float = 3.0
    z_floor_rel: float = 1e-14
    chunk: int = 250_000        # max quadrature points per backend call


@dataclass
class StiffnessSystem:
    """Discrete system: A_ij = B(phi_i, phi_j), mass M, load F."""

    A: np.ndarray
    M: np.ndarray
    F: np.ndarray
    compat_residual: float
    mesh: Mesh
    domain: DomainSpec
    spec: KernelSpec
    mu_term: np.ndarray | None = None
    f_norm_q: float = 0.0
    q_exponent: float = 2.0


# ------------------------------------------------------------ fractional part


def _accumulate_identical(A, nodes, s, c):
    """Closed form: sum_{+-} int int (u/h)^2 |u|^(-1-2s) over the element square."""
    h = np.diff(nodes)
    v = c * 2.0 / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s)) * h ** (1.0 - 2.0 * s)
    n = len(nodes) - 1
    for e in range(n):
        A[e, e] += v[e]
        A[e + 1, e + 1] += v[e]
        A[e, e + 1] -= v[e]
        A[e + 1, e] -= v[e]


def _accumulate_touching(A, nodes, s, c, opts):
    """Pairs sharing a node, in local coordinates (xi toward the shared node)."""
    beta = grading_exponent(s)
    ref = (np.arange(opts.m_graded + 1) / opts.m_graded) ** beta
    h = np.diff(nodes)
    n = len(nodes) - 1
    for e in range(n - 1):
        h1, h2 = h[e], h[e + 1]
        XI, WXI = panels(h1 * ref, opts.g_sing)
        ET, WET = panels(h2 * ref, opts.g_sing)
        xi = np.repeat(XI, len(ET))
        et = np.tile(ET, len(XI))
        w = 2.0 * np.repeat(WXI, len(ET)) * np.tile(WET, len(XI))
        psi = np.stack([xi / h1, et / h2 - xi / h1, -et / h2], axis=1)
        idx = np.broadcast_to(np.array([e, e + 1, e + 2], dtype=np.int32),
                              (len(xi), 3)).copy()
        backend.power_pair_accumulate(A, xi, -et, w, np.ascontiguousarray(psi), idx,
                                      c, -(1.0 + 2.0 * s))


def _disjoint_rule(a, b, c2, d, gap, hmax, opts):
    if gap < opts.near_factor * hmax:
        X, WX = panels(np.linspace(a, b, 3), opts.g_near)
        Y, WY = panels(np.linspace(c2, d, 3), opts.g_near)
    else:
        X, WX = panels([a, b], opts.g_far)
        Y, WY = panels([c2, d], opts.g_far)
    return X, WX, Y, WY


def _accumulate_disjoint(A, nodes, s, c, opts):
    h = np.diff(nodes)
    n = len(nodes) - 1
    bufs = {"x": [], "y": [], "w": [], "psi": [], "idx": [], "count": 0}

    def flush():
        if bufs["count"] == 0:
            return
        x = np.concatenate(bufs["x"])
        y = np.concatenate(bufs["y"])
        w = np.concatenate(bufs["w"])
        psi = np.ascontiguousarray(np.concatenate(bufs["psi"]))
        idx = np.ascontiguousarray(np.concatenate(bufs["idx"]))
        backend.power_pair_accumulate(A, x, y, w, psi, idx, c, -(1.0 + 2.0 * s))
        for k in ("x", "y", "w", "psi", "idx"):
            bufs[k] = []
        bufs["count"] = 0

    gx_far, gw_far = gauss_rule(opts.g_far)
    for e in range(n):
        a, b = nodes[e], nodes[e + 1]
        fs = np.arange(e + 2, n)
        if len(fs) == 0:
            continue
        gaps = nodes[fs] - b
        near = gaps < opts.near_factor * np.maximum(h[e], h[fs])
        # near pairs: small count, build individually
        for f in fs[near]:
            X, WX, Y, WY = _disjoint_rule(a, b, nodes[f], nodes[f + 1],
                                          nodes[f] - b, max(h[e], h[f]), opts)
            _push_pair(bufs, X, WX, Y, WY, a, b, nodes[f], nodes[f + 1], e, f)
            if bufs["count"] >= opts.chunk:
                flush()
        # far pairs: vectorized tensor construction over all f at once
        ff = fs[~near]
        if len(ff):
            af, bf = nodes[ff], nodes[ff + 1]
            X = a + (b - a) * (0.5 * gx_far + 0.5)               # (g,)
            WX = (b - a) * 0.5 * gw_far
            Y = af[:, None] + (bf - af)[:, None] * (0.5 * gx_far + 0.5)   # (m, g)
            WY = (bf - af)[:, None] * 0.5 * gw_far
            m, g = Y.shape
            XX = np.broadcast_to(X[None, :, None], (m, g, g)).reshape(-1)
            YY = np.broadcast_to(Y[:, None, :], (m, g, g)).reshape(-1)
            WW = 2.0 * (WX[None, :, None] * WY[:, None, :]).reshape(-1)
            p0 = (b - XX) / (b - a)
            p1 = (XX - a) / (b - a)
            hf = np.repeat(bf - af, g * g)
            afr = np.repeat(af, g * g)
            bfr = np.repeat(bf, g * g)
            p2 = -(bfr - YY) / hf
            p3 = -(YY - afr) / hf
            psi = np.stack([p0, p1, p2, p3], axis=1)
            fr = np.repeat(ff, g * g).astype(np.int32)
            idx = np.stack([np.full_like(fr, e), np.full_like(fr, e + 1), fr, fr + 1],
                           axis=1)
            bufs["x"].append(XX)
            bufs["y"].append(YY)
            bufs["w"].append(WW)
            bufs["psi"].append(psi)
            bufs["idx"].append(idx.astype(np.int32))
            bufs["count"] += len(XX)
            if bufs["count"] >= opts.chunk:
                flush()
    flush()


def _push_pair(bufs, X, WX, Y, WY, a, b, c2, d, e, f):
    XX = np.repeat(X, len(Y))
    YY = np.tile(Y, len(X))
    WW = 2.0 * np.repeat(WX, len(Y)) * np.tile(WY, len(X))
    psi = np.stack([(b - XX) / (b - a), (XX - a) / (b - a),
                    -(d - YY) / (d - c2), -(YY - c2) / (d - c2)], axis=1)
    idx = np.broadcast_to(np.array([e, e + 1, f, f + 1], dtype=np.int32),
                          (len(XX), 4)).copy()
    bufs["x"].append(XX)
    bufs["y"].append(YY)
    bufs["w"].append(WW)
    bufs["psi"].append(psi)
    bufs["idx"].append(idx)
    bufs["count"] += len(XX)


def assemble_fractional(mesh: Mesh, spec: KernelSpec,
                        opts: AssemblyOptions = AssemblyOptions()) -> np.ndarray:
    """Galerkin matrix of the |x-y|^(-1-2s) part of the form (= regional B)."""
    nodes = mesh.nodes
    nn = len(nodes)
    A = np.zeros((nn, nn))
    s, c = spec.s, spec.norm_const
    _accumulate_identical(A, nodes, s, c)
    _accumulate_touching(A, nodes, s, c, opts)
    _accumulate_disjoint(A, nodes, s, c, opts)
    return A


# ------------------------------------------------------- exterior-interaction


def _hat_moments_side(nodes, delta, h, s, opts):
    """Moments of g(w) = (w + delta)^(-1-2s) against {far hat, near hat, product}
    on each element, w measured from the element end nearest to z.

    delta: (nz, ne) distances; returns v_near, v_far, m_x of shape (nz, ne).
    Closed forms where delta <= 10 h (stable there), Gauss where z is far.
    """
    e0 = -1.0 - 2.0 * s
    dl = delta
    hh = h[None, :]
    far = dl > 10.0 * hh
    J0 = int_pow(dl, dl + hh, e0)
    U1 = int_pow(dl, dl + hh, e0 + 1.0)
    U2 = int_pow(dl, dl + hh, e0 + 2.0)
    J1 = U1 - dl * J0
    J2 = U2 - 2.0 * dl * U1 + dl * dl * J0
    v_far = J1 / hh
    v_near = J0 - v_far
    m_x = (J1 * hh - J2) / (hh * hh)
    if np.any(far):
        # far z: the closed forms cancel catastrophically, plain Gauss does not
        gx, gw = gauss_rule(opts.g_moment)
        v_far_g = np.zeros_like(dl)
        v_near_g = np.zeros_like(dl)
        m_x_g = np.zeros_like(dl)
        for xk, wk in zip(0.5 * gx + 0.5, 0.5 * gw):
            gz = hh * wk * (dl + hh * xk) ** e0
            v_far_g += xk * gz
            v_near_g += (1.0 - xk) * gz
            m_x_g += xk * (1.0 - xk) * gz
        v_far = np.where(far, v_far_g, v_far)
        v_near = np.where(far, v_near_g, v_near)
        m_x = np.where(far, m_x_g, m_x)
    return v_near, v_far, m_x


def assemble_exterior_correction(mesh: Mesh, domain: DomainSpec, spec: KernelSpec,
                                 opts: AssemblyOptions = AssemblyOptions(),
                                 grid=None) -> np.ndarray:
    """Galerkin matrix of the exterior-interaction part of the form.

    Separable route: with the z-grid weights om_z = c w_z / D(z),

        A_ij = 2 sum_z om_z [ S_z P^z_ij - V^z_i V^z_j ],

    where V are hat moments of g_z, P the hat-product moments, and S_z the
    plain integral.  S and the P diagonals are tied to V by their exact
    row-sum identities, which keeps constants exactly in the null space.
    """
    if not isinstance(domain.shape, Interval):
        raise AssemblyError("exterior correction assembly is 1D (interval) only")
    nodes = mesh.nodes
    nn = len(nodes)
    ne = nn - 1
    a, b = nodes[0], nodes[-1]
    s = spec.s
    if grid is None:
        grid = exterior_grid_1d(domain, s, per_decade=opts.z_per_decade,
                                floor_rel=opts.z_floor_rel)
    h = np.diff(nodes)
    A = np.zeros((nn, nn))
    nz_half = len(grid.z) // 2
    t_off = a - grid.z[:nz_half]
    for side in ("L", "R"):
        zsel = slice(0, nz_half) if side == "L" else slice(nz_half, None)
        t = t_off
        om = spec.norm_const * grid.w[zsel] / grid.D[zsel]
        if side == "L":
            delta = (nodes[:-1] - a)[None, :] + t[:, None]
            i_near, i_far = np.arange(ne), np.arange(1, nn)
        else:
            delta = (b - nodes[1:])[None, :] + t[:, None]
            i_near, i_far = np.arange(1, nn), np.arange(ne)
        v_near, v_far, m_x = _hat_moments_side(nodes, delta, h, s, opts)
        m_near = v_near - m_x
        m_far = v_far - m_x
        V = np.zeros((len(t), nn))
        V.T[i_near] += v_near.T
        V.T[i_far] += v_far.T
        S = (v_near + v_far).sum(axis=1)
        wS = om * S
        A[i_near, i_near] += 2.0 * np.einsum("z,ze->e", wS, m_near)
        A[i_far, i_far] += 2.0 * np.einsum("z,ze->e", wS, m_far)
        off = 2.0 * np.einsum("z,ze->e", wS, m_x)
        np.add.at(A, (i_near, i_far), off)
        np.add.at(A, (i_far, i_near), off)
        G = (V.T * om) @ V
        A -= G + G.T
    # beyond the truncation radius g_z is flat over Omega (centroid model), so
    # the summed bracket limits to tail_sum * (|Omega| M_hat - v1 v1^T), which
    # annihilates constants exactly since M_hat @ 1 = v1 and v1 . 1 = |Omega|
    L = b - a
    tail_sum = spec.norm_const * grid.tail_hi ** (-2.0 * s) / (s * L)
    A += 2.0 * tail_sum * (L * _mass_like(nodes) - np.outer(_hat_integrals(nodes),
                                                            _hat_integrals(nodes)))
    return A


def _hat_integrals(nodes):
    nn = len(nodes)
    h = np.diff(nodes)
    v = np.zeros(nn)
    v[:-1] += 0.5 * h
    v[1:] += 0.5 * h
    return v


def _mass_like(nodes):
    nn = len(nodes)
    h = np.diff(nodes)
    M = np.zeros((nn, nn))
    for e in range(nn - 1):
        M[e, e] += h[e] / 3.0
        M[e + 1, e + 1] += h[e] / 3.0
        M[e, e + 1] += h[e] / 6.0
        M[e + 1, e] += h[e] / 6.0
    return M


# ------------------------------------------------------------------ assembly


def assemble_stiffness(mesh: Mesh, domain: DomainSpec, spec: KernelSpec,
                       opts: AssemblyOptions = AssemblyOptions()) -> np.ndarray:
    """A_ij = B(phi_i, phi_j) for the regional or full-Neumann form."""
    if spec.variant not in ("full", "regional"):
        raise AssemblyError("assembly supports the full and regional variants")
    A = assemble_fractional(mesh, spec, opts)
    if spec.variant == "full":
        A = A + assemble_exterior_correction(mesh, domain, spec, opts)
    bad = ~np.isfinite(A)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise AssemblyError(f"non-finite stiffness entry at nodes ({i}, {j})")
    return A


def assemble_mass(mesh: Mesh) -> np.ndarray:
    """Exact P1 mass matrix (tridiagonal, SPD)."""
    return _mass_like(mesh.nodes)


def assemble_load(mesh: Mesh, f, q_exponent: float = 2.0, g: int = 10,
                  breakpoints=()) -> tuple[np.ndarray, float, float]:
    """F_i = int f phi_i.

    Returns (F, compat_residual, ||f||_Lq): the residual sum(F) equals
    int_Omega f by partition of unity, and the L^q norm feeds the
    boundedness probe.
    """
    nodes = mesh.nodes
    nn = len(nodes)
    F = np.zeros(nn)
    fq = 0.0
    bps = np.asarray(sorted(breakpoints), dtype=float)
    for e in range(nn - 1):
        a, b = nodes[e], nodes[e + 1]
        inner = bps[(bps > a) & (bps < b)]
        X, W = panels(np.concatenate([[a], inner, [b]]), g)
        fv = np.asarray(f(X), dtype=float)
        h = b - a
        F[e] += float(np.sum(W * fv * (b - X) / h))
        F[e + 1] += float(np.sum(W * fv * (X - a) / h))
        fq += float(np.sum(W * np.abs(fv) ** q_exponent))
    return F, float(np.sum(F)), fq ** (1.0 / q_exponent)


def assemble_reaction(mesh: Mesh, mu, g: int = 10) -> np.ndarray:
    """Symmetric matrix with entries int mu phi_i phi_j."""
    nodes = mesh.nodes
    nn = len(nodes)
    R = np.zeros((nn, nn))
    for e in range(nn - 1):
        a, b = nodes[e], nodes[e + 1]
        X, W = panels([a, b], g)
        mv = np.asarray(mu(X), dtype=float)
        h = b - a
        p0 = (b - X) / h
        p1 = (X - a) / h
        R[e, e] += float(np.sum(W * mv * p0 * p0))
        R[e + 1, e + 1] += float(np.sum(W * mv * p1 * p1))
        v = float(np.sum(W * mv * p0 * p1))
        R[e, e + 1] += v
        R[e + 1, e] += v
    return R


def assemble_system(mesh: Mesh, domain: DomainSpec, spec: KernelSpec, f,
                    mu=None, q_exponent: float = 2.0,
                    opts: AssemblyOptions = AssemblyOptions(),
                    breakpoints=()) -> StiffnessSystem:
    A = assemble_stiffness(mesh, domain, spec, opts)
    M = assemble_mass(mesh)
    F, resid, fq = assemble_load(mesh, f, q_exponent=q_exponent, breakpoints=breakpoints)
    mu_term = assemble_reaction(mesh, mu) if mu is not None else None
    return StiffnessSystem(A=A, M=M, F=F, compat_residual=resid, mesh=mesh,
                           domain=domain, spec=spec, mu_term=mu_term,
                           f_norm_q=fq, q_exponent=q_exponent)


def export_matrix_market(path, A: np.ndarray, comment: str = "") -> None:
    """Plain-text coordinate dump in MatrixMarket style, for debugging."""
    A = np.asarray(A)
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            fh.write(f"% {comment}\n")
        nz = np.argwhere(A != 0.0)
        fh.write(f"{A.shape[0]} {A.shape[1]} {len(nz)}\n")
        for i, j in nz:
            fh.write(f"{i + 1} {j + 1} {A[i, j]:.17g}\n")
