"""Numerical verification of the solver's structural claims.

Ground-truth oracles (dense joint QP, grid search, vertex enumeration),
Lipschitz bounds for the dual gradient, finite-difference gradient checks,
and duality gaps.  Oracles are independent of the iterative solve paths
they certify.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import dual_value_and_subgradient, make_pool
from .errors import CapacityError, DomainError
from .model import STRICTLY_CONVEX
from .subsolvers import minimize_box_qp

_GRID_POINT_CAP = 30_000_000


@dataclass(frozen=True)
class OracleResult:
    """Independent primal ground truth for a consensus problem."""

    z_star: np.ndarray
    f_star: float
    method: str
    error_bound: float
    m: int

    @property
    def y_star(self):
        return np.tile(self.z_star, self.m)


def _consensus_values(problem, Z):
    """f0 at a (B, n) batch of consensus points."""
    vals = np.zeros(Z.shape[0])
    for a in problem.agents:
        if a.kind == "quadratic":
            vals += a.scale * (np.einsum("bi,ij,bj->b", Z, a.P, Z) + Z @ a.q)
            vals += a.offset
        else:
            R = Z @ a.X.T - a.t
            vals += a.scale * np.mean(R * R, axis=1)
    return vals


def _consensus_grad_norms(problem, Z):
    G = np.zeros_like(Z)
    for a in problem.agents:
        for b in range(Z.shape[0]):
            G[b] += a.gradient(Z[b])
    return np.linalg.norm(G, axis=1)


def brute_force_primal(problem, resolution=None, method="auto"):
    """Consensus-space primal oracle.

    ``dense-qp`` solves the joint box QP exactly (all agents strictly
    convex quadratics); ``grid`` scans z in [-a, a]^n at the given
    resolution for n <= 3 and reports the best grid point together with an
    error bound L_f * resolution * sqrt(n), with L_f estimated from sampled
    gradient norms times a 1.5 safety factor.
    """
    box = problem.box
    n = box.dim
    convex = all(a.tag == STRICTLY_CONVEX for a in problem.agents)
    if method == "auto":
        method = "dense-qp" if convex else "grid"
    if method == "dense-qp":
        if not convex:
            raise DomainError("dense-qp oracle needs convex agents")
        P = np.zeros((n, n))
        q = np.zeros(n)
        for a in problem.agents:
            if a.kind == "quadratic":
                P += a.scale * a.P
                q += a.scale * a.q
            else:
                P += (a.scale / a.n_samples) * (a.X.T @ a.X)
                q += -(2.0 * a.scale / a.n_samples) * (a.X.T @ a.t)
        z = minimize_box_qp(P, q, box, tol=1e-12)
        return OracleResult(z_star=z, f_star=problem.objective_consensus(z),
                            method="dense-qp", error_bound=1e-10, m=problem.m)
    if method == "grid":
        if n > 3:
            raise CapacityError(f"grid oracle limited to n <= 3, got n={n}")
        if resolution is None:
            resolution = 1e-3 * box.radius
        pts = int(round(2.0 * box.radius / resolution)) + 1
        if pts ** n > _GRID_POINT_CAP:
            raise CapacityError(
                f"grid of {pts}^{n} points exceeds the {_GRID_POINT_CAP} cap")
        axis = np.linspace(-box.radius, box.radius, pts)
        step = axis[1] - axis[0]
        best_val = np.inf
        best_z = None
        grad_peak = 0.0
        if n == 1:
            chunks = [axis.reshape(-1, 1)]
        else:
            grids = np.meshgrid(*([axis] * n), indexing="ij")
            Z_all = np.stack([g.ravel() for g in grids], axis=1)
            chunks = np.array_split(Z_all, max(1, Z_all.shape[0] // 262144))
        for Z in chunks:
            vals = _consensus_values(problem, Z)
            k = int(np.argmin(vals))
            if vals[k] < best_val:
                best_val = float(vals[k])
                best_z = Z[k]
            sample = Z[:: max(1, Z.shape[0] // 64)]
            grad_peak = max(grad_peak,
                            float(np.max(_consensus_grad_norms(problem, sample))))
        bound = 1.5 * grad_peak * step * np.sqrt(n)
        return OracleResult(z_star=best_z, f_star=best_val, method="grid",
                            error_bound=float(bound), m=problem.m)
    raise DomainError(f"unknown oracle method {method!r}")


def lipschitz_conjugate_bound(box, ambient_dim):
    """Gradient Lipschitz constant of the conjugate over the product box:
    sqrt(dim) times the largest feasible 2-norm sqrt(dim)*a, evaluated in
    the exact simplified form a * dim."""
    if ambient_dim < 1:
        raise DomainError(f"ambient dimension must be >= 1, got {ambient_dim}")
    return float(box.radius * ambient_dim)


def lipschitz_dual_bound(coupling, L):
    """Dual gradient Lipschitz constant ||A||_2^2 * L."""
    return coupling.spectral_norm_sq() * L


def dual_lipschitz_for(problem):
    """Closed-form dual Lipschitz bound for a consensus problem."""
    L = lipschitz_conjugate_bound(problem.box, problem.m * problem.n)
    return lipschitz_dual_bound(problem.coupling, L)


def empirical_lipschitz_ratios(problem, n_pairs, seed, radius=None, tol=1e-10):
    """Max ratio ||grad g(x) - grad g(y)|| / ||x - y|| over random pairs."""
    dim = (problem.m - 1) * problem.n
    rng = np.random.default_rng(seed)
    if radius is None:
        radius = 10.0 * problem.box.radius
    pool = make_pool(problem.agents, problem.box, tol)
    worst = 0.0
    for _ in range(n_pairs):
        x = radius * rng.standard_normal(dim)
        y = radius * rng.standard_normal(dim)
        d = float(np.linalg.norm(x - y))
        if d == 0.0:
            continue
        _, sx, _ = dual_value_and_subgradient(problem, x, tol=tol, pool=pool)
        _, sy, _ = dual_value_and_subgradient(problem, y, tol=tol, pool=pool)
        worst = max(worst, float(np.linalg.norm(sx - sy)) / d)
    return worst


def finite_diff_check(problem, lam, h, tol=1e-12):
    """Max coordinate error between the central difference of g and the
    reported gradient -s at lambda."""
    lam = np.asarray(lam, dtype=float)
    pool = make_pool(problem.agents, problem.box, tol)
    _, s, _ = dual_value_and_subgradient(problem, lam, tol=tol, pool=pool)
    grad = -s
    worst = 0.0
    for i in range(lam.shape[0]):
        e = np.zeros_like(lam)
        e[i] = h
        gp, _, _ = dual_value_and_subgradient(problem, lam + e, tol=tol, pool=pool)
        gm, _, _ = dual_value_and_subgradient(problem, lam - e, tol=tol, pool=pool)
        worst = max(worst, abs((gp - gm) / (2.0 * h) - grad[i]))
    return float(worst)


def duality_gap(problem, trace, oracle, tol=1e-10):
    """p_star - g(lambda_final); near zero under strong duality, reported
    as-is otherwise."""
    g_final, _, _ = dual_value_and_subgradient(problem, trace.lambda_final,
                                               tol=tol)
    return float(oracle.f_star - g_final)


def interior_dual_optimum(problem):
    """Closed-form dual optimum for strictly convex quadratic instances
    whose joint optimum is strictly inside the box.

    At the optimum every agent minimizer equals the joint optimum z*, which
    pins the tilts to -scale_i (q_i + 2 P_i z*); the multiplier follows by
    projecting the tilt stack through the coupling Gram solve.
    """
    if not (problem.all_quadratic() and problem.all_strictly_convex()):
        raise DomainError("closed-form dual optimum needs strictly convex "
                          "quadratics")
    P = sum(a.scale * a.P for a in problem.agents)
    q = sum(a.scale * a.q for a in problem.agents)
    z = -0.5 * np.linalg.solve(P, q)
    if np.max(np.abs(z)) >= problem.box.radius:
        raise DomainError("joint optimum is not strictly interior")
    tilts = np.stack([-a.scale * (a.q + 2.0 * a.P @ z) for a in problem.agents])
    coupling = problem.coupling
    return coupling.gram_solve(coupling.apply(tilts.ravel()))
