"""Built-in property suite behind ``dualray check``.

Each check returns a named pass/fail with a numeric margin (headroom to the
tolerance).  The ``fault`` hook exists so a deliberately broken operator can
be shown to trip the right property; it is test plumbing, not a user
feature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diagnostics as diag
from .data import synth_quadratic
from .engine import dual_value_and_subgradient, make_pool
from .model import ChainCoupling, dense_coupling_matrix
from .rays import build_consensus_ray

FAULTS = ("adjoint-sign",)


@dataclass
class CheckResult:
    name: str
    passed: bool
    margin: float
    detail: str


def check_adjoint_identity(fault=None):
    rng = np.random.default_rng(7)
    worst = 0.0
    for m, n in [(2, 1), (3, 2), (5, 3), (6, 4)]:
        coupling = ChainCoupling(m, n)
        for _ in range(20):
            y = rng.standard_normal(m * n)
            lam = rng.standard_normal((m - 1) * n)
            ay = coupling.apply(y)
            aty = coupling.adjoint(lam)
            if fault == "adjoint-sign":
                aty = -aty
            worst = max(worst, abs(float(ay @ lam) - float(y @ aty)))
    tol = 1e-12
    return CheckResult("adjoint-identity", worst <= tol, tol - worst,
                       f"max |<Ay,l> - <y,A'l>| = {worst:.3e}")


def check_consensus_kernel():
    rng = np.random.default_rng(8)
    ok = True
    for m, n in [(2, 3), (4, 2), (6, 1)]:
        coupling = ChainCoupling(m, n)
        z = rng.standard_normal(n)
        if np.any(coupling.apply(np.tile(z, m)) != 0.0):
            ok = False
        y = rng.standard_normal(m * n)
        if np.all(coupling.apply(y) == 0.0) and not np.allclose(
                y.reshape(m, n), y[:n]):
            ok = False
    return CheckResult("consensus-kernel", ok, 0.0,
                       "A y = 0 exactly on consensus stacks")


def check_gram_solve():
    rng = np.random.default_rng(9)
    worst = 0.0
    for m, n in [(2, 1), (3, 2), (6, 2)]:
        coupling = ChainCoupling(m, n)
        A = dense_coupling_matrix(m, n)
        G = A @ A.T
        for _ in range(5):
            v = rng.standard_normal((m - 1) * n)
            w = coupling.gram_solve(v)
            worst = max(worst, float(np.max(np.abs(G @ w - v))))
    tol = 1e-10
    return CheckResult("gram-solve-residual", worst <= tol, tol - worst,
                       f"max ||AA'w - v||_inf = {worst:.3e}")


def check_spectral_norm():
    worst = 0.0
    for m in (2, 3, 5, 10):
        got = ChainCoupling(m, 3).spectral_norm_sq()
        exact = 2.0 + 2.0 * np.cos(np.pi / m)
        worst = max(worst, abs(got - exact))
    tol = 1e-6
    return CheckResult("spectral-norm-closed-form", worst <= tol, tol - worst,
                       f"max |power-iter - closed-form| = {worst:.3e}")


def check_boundary_ray_sweep():
    """Alternating-vertex feasibility over the full desk-scale sweep."""
    from .model import BoxSet as _Box
    from .rays import consensus_boundary_point, solve_relaxed_feasibility

    failures = 0
    total = 0
    for m in range(2, 11):
        for n in range(1, 9):
            for a in (0.5, 1.0, 3.0):
                for beta in (0.5, 1.0, 2.0):
                    total += 1
                    coupling = ChainCoupling(m, n)
                    y_bar = consensus_boundary_point(m, n, a)
                    pair = solve_relaxed_feasibility(coupling, _Box(a, n),
                                                     y_bar, beta)
                    if pair is None:
                        failures += 1
    return CheckResult("boundary-ray-sweep", failures == 0, float(-failures),
                       f"{total - failures}/{total} alternating vertices accepted")


def check_ray_gradient_constancy():
    worst = 0.0
    for seed in (0, 1, 2):
        problem = synth_quadratic(3, 2, 1.0, seed, optimum="interior")
        ray = build_consensus_ray(problem.m, problem.n, problem.box.radius)
        pool = make_pool(problem.agents, problem.box)
        beta_mu = ray.beta * ray.mu_tilde
        anchor = ray.anchor
        for j in range(5):
            lam = (ray.c * 2.0 ** j) * ray.mu_tilde
            _, s, y = dual_value_and_subgradient(problem, lam, pool=pool)
            if np.max(np.abs(y - anchor)) > 1e-8 * problem.box.radius:
                continue  # outside the flat region, not asserted
            worst = max(worst, float(np.max(np.abs(s - beta_mu))))
    tol = 1e-6
    return CheckResult("ray-gradient-constancy", worst <= tol, tol - worst,
                       f"max ||s - beta*mu||_inf over in-region points = {worst:.3e}")


def check_lipschitz_ratio():
    problem = synth_quadratic(2, 1, 1.0, 3, optimum="interior")
    G = diag.dual_lipschitz_for(problem)
    worst = diag.empirical_lipschitz_ratios(problem, 200, seed=4)
    return CheckResult("lipschitz-ratio-bound", worst <= G, G - worst,
                       f"max empirical ratio {worst:.4f} vs bound {G:.4f}")


def check_oracle_cross():
    problem = synth_quadratic(2, 2, 1.0, 5, optimum="interior")
    dense = diag.brute_force_primal(problem, method="dense-qp")
    grid = diag.brute_force_primal(problem, resolution=2e-3, method="grid")
    gap = abs(dense.f_star - grid.f_star)
    return CheckResult("oracle-cross-check", gap <= grid.error_bound,
                       grid.error_bound - gap,
                       f"|grid - dense| = {gap:.3e} vs bound {grid.error_bound:.3e}")


def check_finite_difference():
    problem = synth_quadratic(3, 2, 1.0, 6, optimum="interior")
    lam_star = diag.interior_dual_optimum(problem)
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(5):
        lam = lam_star + 0.02 * rng.standard_normal(lam_star.shape)
        worst = max(worst, diag.finite_diff_check(problem, lam, h=1e-4))
    tol = 1e-5
    return CheckResult("finite-difference-agreement", worst <= tol, tol - worst,
                       f"max coordinate error {worst:.3e} at h=1e-4")


def run_all(fault=None):
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; expected one of {FAULTS}")
    return [
        check_adjoint_identity(fault=fault),
        check_consensus_kernel(),
        check_gram_solve(),
        check_spectral_norm(),
        check_boundary_ray_sweep(),
        check_ray_gradient_constancy(),
        check_lipschitz_ratio(),
        check_oracle_cross(),
        check_finite_difference(),
    ]
