"""Stationary solves (energy minimization with a mean-zero gauge) and the
implicit-Euler heat flow used for the mass-conservation experiment.

The discrete energy is E(u) = (1/4) u^T A u - F^T u, matching the continuous
functional; its stationarity condition is (1/2) A u = F on the mean-zero
subspace.  Gauge fixing is done by a rank-one augmentation with m = M 1
(projection onto the M-orthogonal complement of constants), which keeps the
system SPD for the Cholesky solve.  Compatibility int f = 0 is required when
no reaction term is present.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .assembly import StiffnessSystem


class IncompatibleData(ValueError):
    """Pure Neumann problem with int_Omega f != 0 beyond tolerance."""


class SingularSystem(ValueError):
    """Reaction term makes the stationary operator non-invertible."""


@dataclass
class Solution:
    coefficients: np.ndarray
    gauge: str                    # "mean_zero" or "pinned:<i>"
    residual_norm: float
    energy: float
    system: StiffnessSystem

    def __call__(self, x):
        return self.system.mesh.interpolate(self.coefficients, x)


def energy_value(sys: StiffnessSystem, u: np.ndarray) -> float:
    return 0.25 * float(u @ (sys.A @ u)) - float(sys.F @ u)


def solve_stationary(sys: StiffnessSystem, tol: float = 1e-10,
                     compat_tol: float = 1e-8) -> Solution:
    """Minimize E over the mean-zero subspace (or solve the reaction system).

    With mu present the stationarity condition is (A/2 - R_mu) u = F and no
    compatibility is needed as long as that operator is invertible.
    """
    A, M, F = sys.A, sys.M, sys.F
    n = len(F)
    one = np.ones(n)
    m = M @ one
    if sys.mu_term is not None:
        H = 0.5 * A - sys.mu_term
        try:
            u = scipy.linalg.solve(H, F)
        except scipy.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from exc
        resid = np.linalg.norm(H @ u - F)
        scale = np.linalg.norm(F) if np.linalg.norm(F) > 0 else 1.0
        if not np.all(np.isfinite(u)) or resid > 1e-6 * scale + 1e-12:
            raise SingularSystem("reaction system is numerically singular")
        return Solution(coefficients=u, gauge="none", residual_norm=resid / scale,
                        energy=energy_value(sys, u), system=sys)

    fscale = np.linalg.norm(F)
    if abs(sys.compat_residual) > compat_tol * max(fscale, 1e-300):
        raise IncompatibleData(
            f"int_Omega f = {sys.compat_residual:.3e} exceeds {compat_tol:.1e} * ||F||; "
            "the pure Neumann problem needs mean-zero data")
    if fscale == 0.0:
        return Solution(coefficients=np.zeros(n), gauge="mean_zero",
                        residual_norm=0.0, energy=0.0, system=sys)
    # project the load onto 1-perp and augment with the gauge rank-one term
    Ft = F - (np.sum(F) / np.sum(m)) * m
    rho = np.trace(A) / (2.0 * n * float(m @ m))
    H = 0.5 * A + rho * np.outer(m, m)
    cho = scipy.linalg.cho_factor(H)
    u = scipy.linalg.cho_solve(cho, Ft)
    resid = float(np.linalg.norm(0.5 * (A @ u) - Ft)) / fscale
    return Solution(coefficients=u, gauge="mean_zero", residual_norm=resid,
                    energy=energy_value(sys, u), system=sys)


@dataclass
class HeatTrajectory:
    times: np.ndarray
    states: np.ndarray            # (steps+1, n) nodal values
    masses: np.ndarray            # 1^T M u_k per level
    energies: np.ndarray          # quadratic-form energy per level
    system: StiffnessSystem

    def to_csv(self, path) -> None:
        nodes = self.system.mesh.nodes
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x"] + [f"t={t:.12g}" for t in self.times])
            for i, x in enumerate(nodes):
                wr.writerow([f"{x:.17g}"] + [f"{v:.17g}" for v in self.states[:, i]])


def heat_step(sys: StiffnessSystem, u0: np.ndarray, dt: float, steps: int) -> HeatTrajectory:
    """Implicit Euler (M + dt A) u_{k+1} = M u_k; records mass 1^T M u_k.

    Conservation is algebraic because constants span ker A; the assembled A
    annihilates them only to ~1e-12 relative, which on strongly graded meshes
    would leak through the factorization.  Each step therefore re-pins the
    invariant by adding the (steady-state) constant that restores the initial
    mass; the size of that correction is reported as ``drift_uncorrected``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    A, M = sys.A, sys.M
    n = len(u0)
    one = np.ones(n)
    m = M @ one
    mtot = float(m @ one)
    H = M + dt * A
    cho = scipy.linalg.cho_factor(H)  # M SPD + A PSD: cannot be singular
    states = np.empty((steps + 1, n))
    states[0] = u0
    mass0 = float(m @ u0)
    drift = 0.0
    for k in range(steps):
        u = scipy.linalg.cho_solve(cho, M @ states[k])
        defect = mass0 - float(m @ u)
        drift = max(drift, abs(defect))
        states[k + 1] = u + (defect / mtot)
    masses = states @ m
    energies = 0.25 * np.einsum("ki,ij,kj->k", states, A, states)
    times = dt * np.arange(steps + 1)
    return HeatTrajectory(times=times, states=states, masses=masses,
                          energies=energies, system=sys,
                          drift_uncorrected=drift)


@dataclass
class BoundednessProbe:
    ratios: list
    max_ratio: float
    median_ratio: float


def linf_bound_probe(solutions, datas) -> BoundednessProbe:
    """||u||_inf / (||u||_L2 + ||f||_Lq) over a corpus of solves.

    Both sides are 1-homogeneous in f, so the ratio is scale-free; the
    boundedness statement says it stays bounded under refinement.
    """
    ratios = []
    for sol, _ in zip(solutions, datas):
        sys = sol.system
        u = sol.coefficients
        sup = float(np.max(np.abs(u)))
        l2 = float(np.sqrt(u @ (sys.M @ u)))
        denom = l2 + sys.f_norm_q
        ratios.append(sup / denom if denom > 0 else 0.0)
    arr = np.asarray(ratios)
    return BoundednessProbe(ratios=ratios, max_ratio=float(arr.max(initial=0.0)),
                            median_ratio=float(np.median(arr) if len(arr) else 0.0))


def solution_to_csv(sol: Solution, path) -> None:
    nodes = sol.system.mesh.nodes
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "u"])
        for x, v in zip(nodes, sol.coefficients):
            wr.writerow([f"{x:.17g}", f"{v:.17g}"])
