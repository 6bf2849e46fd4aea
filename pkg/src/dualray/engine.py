"""Dual-decomposition engine.

Simulates the central server and agents in one process: per-epoch agent
subproblem solves, the one-bit flat-region protocol, the dual update, exact
communication-bit accounting, stochastic minibatch mode, and trace
recording.  Message passing is a ledger, not a wire; the claims being
checked are about counts.

Sign conventions (fixed throughout): agent i minimizes
f_i(y_i) + (lambda_i - lambda_{i-1})' y_i with lambda_0 = lambda_m = 0; the
subgradient of -g is s = [(y_2-y_1)' ... (y_m-y_{m-1})']' = -A y, so the
dual gradient is -s, and the update is lambda <- lambda - gamma * s.
While lambda = t * mu_tilde stays on the warm-start ray, every minimizer
sits at the ray's anchor vertex and s equals beta * mu_tilde exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import stepsize as sz
from .errors import DomainError, ShapeError, SolverError
from .rays import default_membership_tol
from .subsolvers import (
    BatchedQuadraticSolver,
    TiltedSubproblem,
    agent_minimize,
    minibatch_view,
)

TRACE_COLUMNS = ("k", "g_val", "primal_val", "subgrad_norm", "gamma",
                 "in_rfgor", "bits_epoch", "bits_cum")


class RunAborted(RuntimeError):
    """A run stopped early; the partial trace rides along."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


# ---------------------------------------------------------------------------
# bit accounting

def bits_standard_epoch(m, n, b):
    """Bits per epoch of the standard exchange: m agents upload n reals,
    the server broadcasts n(m-1) reals; n*b*(2m-1) total."""
    return n * b * (2 * m - 1)


def bits_inregion_epoch(m):
    """Bits per epoch of the one-bit protocol: m uplink bits plus one
    broadcast bit."""
    return m + 1


def bits_formula_standard(m, n, k_star, b):
    return k_star * n * (2 * m - 1) * b


def bits_formula_fgor(m, n, k_star, k0, b):
    return k0 * (m + 1) + n * (k_star - k0) * (2 * m - 1) * b


# ---------------------------------------------------------------------------
# records and traces

@dataclass
class IterationRecord:
    k: int
    g_val: float
    primal_val: float
    subgrad_norm: float
    gamma: float
    in_rfgor: bool
    bits_epoch: int
    bits_cum: int


@dataclass
class RunTrace:
    records: list
    lambda_final: np.ndarray
    y_final: np.ndarray
    config: dict
    warning: str | None = None
    g_best: float = -np.inf
    lambda_best: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def k0(self):
        return sum(1 for r in self.records if r.in_rfgor)

    @property
    def k_total(self):
        return len(self.records)

    @property
    def bits_total(self):
        return self.records[-1].bits_cum if self.records else 0

    def k_star(self, g_star, tol=1e-5):
        """First epoch whose dual value is within tol of the reference."""
        for r in self.records:
            if abs(r.g_val - g_star) <= tol:
                return r.k
        return None

    def bits_at(self, k):
        for r in self.records:
            if r.k == k:
                return r.bits_cum
        raise DomainError(f"no record with k={k}")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in self.records:
                w.writerow([r.k, repr(r.g_val), repr(r.primal_val),
                            repr(r.subgrad_norm), repr(r.gamma),
                            int(r.in_rfgor), r.bits_epoch, r.bits_cum])

    def sidecar_payload(self, g_star=None):
        payload = {
            "config": self.config,
            "k0": self.k0,
            "k_total": self.k_total,
            "bits_total": self.bits_total,
            "g_best": self.g_best,
            "warning": self.warning,
        }
        if g_star is not None:
            payload["g_star"] = g_star
        for key, val in self.extras.items():
            payload.setdefault("extras", {})[key] = val
        return payload

    def write_sidecar(self, path, g_star=None, diagnostics=None):
        payload = self.sidecar_payload(g_star=g_star)
        if diagnostics is not None:
            payload["diagnostics"] = diagnostics
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)


def read_trace_csv(path):
    records = []
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if tuple(rd.fieldnames) != TRACE_COLUMNS:
            raise DomainError(f"unexpected trace columns {rd.fieldnames}")
        for row in rd:
            records.append(IterationRecord(
                k=int(row["k"]), g_val=float(row["g_val"]),
                primal_val=float(row["primal_val"]),
                subgrad_norm=float(row["subgrad_norm"]),
                gamma=float(row["gamma"]),
                in_rfgor=bool(int(row["in_rfgor"])),
                bits_epoch=int(row["bits_epoch"]),
                bits_cum=int(row["bits_cum"]),
            ))
    return records


def read_sidecar(path):
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# agent pools

class _BatchedPool:
    def __init__(self, agents, box, tol):
        self.solver = BatchedQuadraticSolver(agents, box, tol=tol)

    def minimize_all(self, tilts, warm=None):
        Y = self.solver.solve(tilts)
        return Y, self.solver.dual_terms(Y, tilts)


class _PerAgentPool:
    def __init__(self, agents, box, tol):
        self.agents = agents
        self.box = box
        self.tol = tol
        self._warm = [None] * len(agents)

    def minimize_all(self, tilts, warm=None):
        if warm is not None:
            self._warm = [np.asarray(warm[i], dtype=float)
                          for i in range(len(self.agents))]
        m = len(self.agents)
        n = self.box.dim
        Y = np.empty((m, n))
        terms = np.empty(m)
        for i, agent in enumerate(self.agents):
            sub = TiltedSubproblem(agent, tilts[i], self.box)
            y = agent_minimize(sub, tol=self.tol, warm=self._warm[i])
            Y[i] = y
            terms[i] = sub.value(y)
            self._warm[i] = y
        return Y, terms


def make_pool(agents, box, tol=1e-10):
    if all(a.kind == "quadratic" and a.tag == "strictly-convex" for a in agents):
        return _BatchedPool(agents, box, tol)
    return _PerAgentPool(agents, box, tol)


def dual_value_and_subgradient(problem, lam, tol=1e-10, pool=None):
    """Dual value g(lambda), subgradient s of -g, and the minimizer stack.

    g is the sum of the minimized per-agent Lagrangian pieces; the identity
    -s = grad g holds wherever the minimizers are unique, and
    s = -A y for the chain coupling.
    """
    lam = np.asarray(lam, dtype=float)
    coupling = problem.coupling
    if lam.shape != ((problem.m - 1) * problem.n,):
        raise ShapeError(
            f"expected dual vector of length {(problem.m - 1) * problem.n}, "
            f"got {lam.shape}")
    if pool is None:
        pool = make_pool(problem.agents, problem.box, tol)
    tilts = coupling.adjoint(lam).reshape(problem.m, problem.n)
    Y, terms = pool.minimize_all(tilts)
    y = Y.ravel()
    g = float(np.sum(terms))
    s = -coupling.apply(y)
    return g, s, y


def average_primal(y, m, n):
    """Coordinate-wise mean of the m stacked blocks."""
    y = np.asarray(y, dtype=float)
    if y.shape != (m * n,):
        raise ShapeError(f"expected length {m * n}, got {y.shape}")
    return y.reshape(m, n).mean(axis=0)


# ---------------------------------------------------------------------------
# runs

def _finish(records, lam, y, config, warning, g_best, lam_best, extras):
    return RunTrace(records=records, lambda_final=lam, y_final=y,
                    config=config, warning=warning, g_best=g_best,
                    lambda_best=lam_best, extras=extras)


def _iterate(problem, K, eps, b, lam0, *, mode, pool_factory, rule=None,
             ray=None, gamma_const=None, fallback=None, tol=1e-10,
             tol_member=None, check_gradient=True, reference_pool=None,
             keep_lambdas=False, config=None):
    if K < 1:
        raise DomainError(f"K must be >= 1, got {K}")
    coupling = problem.coupling
    m, n = problem.m, problem.n
    lam = np.asarray(lam0, dtype=float).copy()
    if lam.shape != ((m - 1) * n,):
        raise ShapeError(f"lambda0 has shape {lam.shape}")

    records = []
    bits_cum = 0
    std_bits = bits_standard_epoch(m, n, b)
    reg_bits = bits_inregion_epoch(m)
    warning = None
    extras = {}
    g_best = -np.inf
    lam_best = lam.copy()
    err_sq = [] if reference_pool is not None else None
    lambdas = [] if keep_lambdas else None

    in_phase = mode == "fgor"
    if in_phase:
        beta_mu = ray.beta * ray.mu_tilde
        anchor = ray.anchor_blocks()
        if tol_member is None:
            tol_member = default_membership_tol(ray.box)
        active_rule = fallback
    else:
        active_rule = rule
    gamma_in = gamma_const
    halved = False
    fallback_k = 0
    lam_prev = None
    y = np.zeros(m * n)

    def record(g, primal, s2, gamma, in_region, bits):
        nonlocal bits_cum
        bits_cum += bits
        records.append(IterationRecord(
            k=len(records) + 1, g_val=g, primal_val=primal,
            subgrad_norm=s2, gamma=gamma, in_rfgor=in_region,
            bits_epoch=bits, bits_cum=bits_cum))

    pool = pool_factory(0)
    t = 1
    warm = None
    try:
        while t <= K:
            epoch_pool = pool_factory(t)
            if epoch_pool is not None:
                pool = epoch_pool
            tilts = coupling.adjoint(lam).reshape(m, n)
            Y, terms = pool.minimize_all(tilts, warm=warm)
            warm = Y
            y = Y.ravel()
            g = float(np.sum(terms))
            s = -coupling.apply(y)
            s_inf = float(np.max(np.abs(s)))
            s_2 = float(np.linalg.norm(s))
            if err_sq is not None:
                Yref, _ = reference_pool.minimize_all(tilts)
                e = coupling.apply(y - Yref.ravel())
                err_sq.append(float(e @ e))
            if lambdas is not None:
                lambdas.append(lam.copy())
            if g > g_best:
                g_best = g
                lam_best = lam.copy()
            primal = problem.objective_consensus(average_primal(y, m, n))

            if in_phase:
                member = bool(np.max(np.abs(Y - anchor)) <= tol_member)
                if member:
                    if check_gradient and np.max(np.abs(s - beta_mu)) > 1e-6:
                        raise RunAborted(
                            "in-region subgradient deviates from beta*mu_tilde",
                            _finish(records, lam, y, config, warning, g_best,
                                    lam_best, extras))
                    record(g, primal, s_2, gamma_in, True, reg_bits)
                    if s_inf <= eps:
                        break
                    lam_prev = lam.copy()
                    lam = lam - gamma_in * beta_mu
                    t += 1
                    continue
                overshoot = (lam_prev is not None and not halved and
                             np.max(np.abs(Y + anchor)) <= tol_member)
                if overshoot:
                    # single in-region step crossed the whole curved region:
                    # halve the constant step once and retry from the last
                    # in-region point (probe not billed, epoch not recorded)
                    gamma_in *= 0.5
                    halved = True
                    extras["gamma_const_halved"] = gamma_in
                    lam = lam_prev
                    lam_prev = None
                    continue
                if not records:
                    warning = ("warm start already outside the flat region; "
                               "increase c")
                in_phase = False
                fallback_k = 1
                if s_inf <= eps:
                    record(g, primal, s_2, 0.0, False, std_bits)
                    break
                gamma = float(sz.next_step(active_rule, fallback_k, lam, s, g))
                record(g, primal, s_2, gamma, False, std_bits)
                lam_prev = lam.copy()
                lam = lam - gamma * s
                t += 1
                continue

            if s_inf <= eps:
                record(g, primal, s_2, 0.0, False, std_bits)
                break
            fallback_k += 1
            gamma = float(sz.next_step(active_rule, fallback_k, lam, s, g))
            record(g, primal, s_2, gamma, False, std_bits)
            if active_rule.converged:
                break
            lam_prev = lam.copy()
            lam = lam - gamma * s
            t += 1
    except SolverError as exc:
        trace = _finish(records, lam, y, config, warning, g_best, lam_best,
                        extras)
        raise RunAborted(f"subsolver failed: {exc}", trace) from exc

    if err_sq is not None:
        extras["grad_error_sq"] = err_sq
    if lambdas is not None:
        extras["lambdas"] = [v.tolist() for v in lambdas]
    return _finish(records, lam, y, config, warning, g_best, lam_best, extras)


def run_standard(problem, rule, lam0, K, eps, *, b=64, tol=1e-10,
                 keep_lambdas=False, config=None):
    """Plain dual decomposition: full exchange every epoch."""
    pool = make_pool(problem.agents, problem.box, tol)
    cfg = dict(config or {})
    cfg.setdefault("variant", "standard")
    cfg.update(K=K, eps=eps, bits_per_real=b)
    return _iterate(problem, K, eps, b, lam0, mode="standard",
                    pool_factory=lambda t: pool if t == 0 else None,
                    rule=rule, tol=tol, keep_lambdas=keep_lambdas, config=cfg)


def run_fgor(problem, ray, gamma_const, fallback, K, eps, *, tol_member=None,
             b=64, tol=1e-10, check_gradient=True, keep_lambdas=False,
             config=None):
    """Warm-started run: constant steps and one-bit epochs while every
    agent's minimizer sits at the ray anchor, then a one-way switch to the
    fallback rule with full exchanges."""
    if not gamma_const > 0:
        raise DomainError(f"gamma_const must be positive, got {gamma_const}")
    pool = make_pool(problem.agents, problem.box, tol)
    cfg = dict(config or {})
    cfg.setdefault("variant", "fgor")
    cfg.update(K=K, eps=eps, bits_per_real=b, c=ray.c, beta=ray.beta,
               gamma_const=gamma_const)
    return _iterate(problem, K, eps, b, ray.lambda0, mode="fgor",
                    pool_factory=lambda t: pool if t == 0 else None,
                    ray=ray, gamma_const=gamma_const, fallback=fallback,
                    tol=tol, tol_member=tol_member,
                    check_gradient=check_gradient,
                    keep_lambdas=keep_lambdas, config=cfg)


class _MinibatchSampler:
    """Per-epoch minibatch pools over least-squares agents."""

    def __init__(self, problem, n0, seed, tol, replace=False):
        if not all(a.kind == "least_squares" for a in problem.agents):
            raise DomainError("stochastic mode requires least-squares agents")
        for a in problem.agents:
            if not 1 <= n0 <= a.n_samples:
                raise DomainError(
                    f"batch size {n0} out of range for agent with "
                    f"{a.n_samples} samples")
        self.problem = problem
        self.n0 = n0
        self.replace = replace
        self.rng = np.random.default_rng(seed)
        self.tol = tol

    def pool_for_epoch(self, t):
        if t == 0:
            return None
        agents = []
        for a in self.problem.agents:
            idx = np.sort(self.rng.choice(a.n_samples, size=self.n0,
                                          replace=self.replace))
            agents.append(minibatch_view(a, idx))
        return _PerAgentPool(agents, self.problem.box, self.tol)


def run_stochastic(problem, mode, n0, seed, *, rule=None, ray=None,
                   gamma_const=None, fallback=None, lam0=None, K=1000,
                   eps=0.0, b=64, tol=1e-10, tol_member=None,
                   reference=False, replace=False, keep_lambdas=False,
                   config=None):
    """Minibatch run: each epoch every agent minimizes a freshly sampled
    batch objective.  With ``reference=True`` the full-batch minimizer is
    also computed at the same multiplier and the squared gradient error
    ||A(y_batch - y_full)||^2 is stored in the trace extras."""
    sampler = _MinibatchSampler(problem, n0, seed, tol, replace=replace)
    ref_pool = (make_pool(problem.agents, problem.box, tol)
                if reference else None)
    cfg = dict(config or {})
    cfg.update(n0=n0, seed=seed, replace=replace, K=K, eps=eps,
               bits_per_real=b)
    if mode == "standard":
        if rule is None:
            raise DomainError("stochastic standard mode needs a stepsize rule")
        if lam0 is None:
            lam0 = np.zeros((problem.m - 1) * problem.n)
        cfg.setdefault("variant", "stochastic-standard")
        return _iterate(problem, K, eps, b, lam0, mode="standard",
                        pool_factory=sampler.pool_for_epoch, rule=rule,
                        tol=tol, reference_pool=ref_pool,
                        keep_lambdas=keep_lambdas, config=cfg)
    if mode == "fgor":
        if ray is None or fallback is None:
            raise DomainError("stochastic fgor mode needs a ray and a fallback")
        if gamma_const is None:
            gamma_const = fallback.gamma0
        cfg.setdefault("variant", "stochastic-fgor")
        cfg.update(c=ray.c, beta=ray.beta, gamma_const=gamma_const)
        return _iterate(problem, K, eps, b, ray.lambda0, mode="fgor",
                        pool_factory=sampler.pool_for_epoch, ray=ray,
                        gamma_const=gamma_const, fallback=fallback, tol=tol,
                        tol_member=tol_member, check_gradient=False,
                        reference_pool=ref_pool, keep_lambdas=keep_lambdas,
                        config=cfg)
    raise DomainError(f"unknown stochastic mode {mode!r}")


def stochastic_error_profile(problem, lam_points, n0, seed, trials=100,
                             tol=1e-10, replace=False):
    """Monte-Carlo gradient-error study at fixed multipliers.

    For each lambda in ``lam_points`` draws ``trials`` independent
    minibatches per agent and returns the (len(lam_points), trials) matrix
    of squared errors ||A(y_batch - y_full)||_2^2 against the full-batch
    minimizer at the same lambda.
    """
    coupling = problem.coupling
    full_pool = make_pool(problem.agents, problem.box, tol)
    rng = np.random.default_rng(seed)
    out = np.empty((len(lam_points), trials))
    for j, lam in enumerate(lam_points):
        lam = np.asarray(lam, dtype=float)
        tilts = coupling.adjoint(lam).reshape(problem.m, problem.n)
        Yfull, _ = full_pool.minimize_all(tilts)
        yfull = Yfull.ravel()
        for tr in range(trials):
            agents = []
            for a in problem.agents:
                idx = np.sort(rng.choice(a.n_samples, size=n0,
                                         replace=replace))
                agents.append(minibatch_view(a, idx))
            pool = _PerAgentPool(agents, problem.box, tol)
            Yb, _ = pool.minimize_all(tilts)
            e = coupling.apply(Yb.ravel() - yfull)
            out[j, tr] = float(e @ e)
    return out


def write_error_profile_csv(path, err_sq):
    """Wide-format resample matrix: one row per evaluation point, one
    column per trial."""
    err_sq = np.asarray(err_sq, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k"] + [f"err_sq_{i + 1:03d}" for i in
                            range(err_sq.shape[1])])
        for k in range(err_sq.shape[0]):
            w.writerow([k + 1] + [repr(v) for v in err_sq[k]])
