"""Dataset ingestion and synthetic problem generation.

Generators are pure functions of (parameters, seed): same inputs, byte
identical serialized problems.  Synthetic quadratic instances place the
joint consensus optimum inside the box or on its boundary by rescaling the
linear terms, and the placement is verified against the joint box-QP
oracle at generation time.
"""

from __future__ import annotations

import csv as _csv
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, GenerationError, ParseError
from .model import (
    CONCAVE,
    STRICTLY_CONVEX,
    BoxSet,
    ConsensusProblem,
    LeastSquaresObjective,
    QuadraticObjective,
)
from .subsolvers import minimize_box_qp


@dataclass(frozen=True)
class Dataset:
    """Rows of (feature vector, target); the leading feature is the bias 1
    when loaded with ``bias=True``."""

    X: np.ndarray
    t: np.ndarray
    name: str = ""
    bias: bool = True
    standardized: bool = False
    stats: dict | None = None
    path: str | None = None
    target_column: int | None = None
    header: bool = False

    @property
    def n_samples(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]


def load_csv(path, target_column, bias=True, header=False, name=None,
             max_rows=None):
    """Parse a numeric CSV into a Dataset.

    ``target_column`` is the 0-based column holding the target; every other
    column becomes a feature.  A bias 1 is prepended when requested.
    ``max_rows`` keeps only the first rows, for desk-scale subsamples of
    large datasets.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        for i, row in enumerate(reader):
            if header and i == 0:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            rows.append((i, row))
            if max_rows is not None and len(rows) >= max_rows:
                break
    if not rows:
        raise DomainError(f"{path}: no data rows")
    width = len(rows[0][1])
    if not 0 <= target_column < width:
        raise DomainError(
            f"target column {target_column} out of range for width {width}")
    feats = []
    targets = []
    for i, row in rows:
        if len(row) != width:
            raise ParseError(f"{path}: row {i} has {len(row)} cells, expected {width}")
        vals = []
        for j, cell in enumerate(row):
            try:
                vals.append(float(cell))
            except ValueError:
                raise ParseError(
                    f"{path}: non-numeric cell at row {i}, column {j}: {cell!r}"
                ) from None
        targets.append(vals[target_column])
        feats.append([v for j, v in enumerate(vals) if j != target_column])
    X = np.array(feats, dtype=float)
    if X.ndim == 1:
        X = X.reshape(len(feats), -1)
    if bias:
        X = np.hstack([np.ones((X.shape[0], 1)), X])
    return Dataset(X=X, t=np.array(targets, dtype=float),
                   name=name or str(path), bias=bias, path=str(path),
                   target_column=target_column, header=header)


def standardize(d):
    """Z-score every non-bias feature column and the target (sample std,
    denominator N-1).  The fitted statistics ride on the result for reuse
    on a test split."""
    if d.n_samples < 2:
        raise DomainError("standardization needs at least 2 samples")
    start = 1 if d.bias else 0
    X = d.X.copy()
    mu = X[:, start:].mean(axis=0)
    sd = X[:, start:].std(axis=0, ddof=1)
    zero = np.where(sd == 0.0)[0]
    if zero.size:
        raise DomainError(f"feature column {int(zero[0]) + start} has zero variance")
    t_mu = float(d.t.mean())
    t_sd = float(d.t.std(ddof=1))
    if t_sd == 0.0:
        raise DomainError("target column has zero variance")
    X[:, start:] = (X[:, start:] - mu) / sd
    t = (d.t - t_mu) / t_sd
    stats = {"feature_mean": mu.tolist(), "feature_std": sd.tolist(),
             "target_mean": t_mu, "target_std": t_sd, "bias": d.bias}
    return replace(d, X=X, t=t, standardized=True, stats=stats)


def apply_standardization(d, stats):
    """Apply previously fitted statistics (e.g. to a test split)."""
    start = 1 if stats["bias"] else 0
    X = d.X.copy()
    X[:, start:] = (X[:, start:] - np.array(stats["feature_mean"])) / \
        np.array(stats["feature_std"])
    t = (d.t - stats["target_mean"]) / stats["target_std"]
    return replace(d, X=X, t=t, standardized=True, stats=stats)


def partition_agents(d, m):
    """Contiguous equal shards, one least-squares objective per agent.

    Remainder rows are dropped with a warning when N is not divisible by m.
    """
    if m < 1:
        raise DomainError(f"need m >= 1, got {m}")
    if m > d.n_samples:
        raise DomainError(f"cannot split {d.n_samples} rows across {m} agents")
    size = d.n_samples // m
    dropped = d.n_samples - size * m
    if dropped:
        warnings.warn(
            f"dropping {dropped} trailing rows to shard {d.n_samples} rows "
            f"into {m} equal parts of {size}")
    out = []
    for i in range(m):
        lo, hi = i * size, (i + 1) * size
        source = None
        if d.path is not None:
            source = {"csv_path": d.path, "rows": [lo, hi],
                      "target_column": d.target_column, "bias": d.bias,
                      "header": d.header}
        out.append(LeastSquaresObjective(X=d.X[lo:hi], t=d.t[lo:hi],
                                         scale=1.0, source=source))
    return out


def constrain_regularized(objs, d_bar):
    """Box-constrained consensus problem from regularized least squares.

    The squared-infinity-norm penalty level d_bar becomes the box radius
    a = sqrt(d_bar); each local objective picks up the 1/m consensus
    weight here, exactly once.
    """
    if not d_bar > 0:
        raise DomainError(f"d_bar must be positive, got {d_bar}")
    m = len(objs)
    if m < 2:
        raise DomainError(f"need at least 2 agents, got {m}")
    n = objs[0].dim
    agents = tuple(replace(o, scale=o.scale / m) for o in objs)
    return ConsensusProblem(agents=agents, box=BoxSet(float(np.sqrt(d_bar)), n))


def _random_spd(rng, n, cond_max=100.0):
    # O(1) spectra, spread capped at one decade so duals stay solvable by
    # every stepsize rule; always within the cond_max contract
    half = 0.5 * np.log10(min(cond_max, 10.0))
    eigs = 10.0 ** rng.uniform(-half, half, size=n)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    P = (Q * eigs) @ Q.T
    return 0.5 * (P + P.T)


def _joint_optimum(agents, box):
    """Exact consensus optimum of sum_i f_i(z) over the box (all strictly
    convex quadratics)."""
    P = sum(a.scale * a.P for a in agents)
    q = sum(a.scale * a.q for a in agents)
    return minimize_box_qp(P, q, box, tol=1e-12)


def synth_quadratic(m, n, a, seed, optimum="interior"):
    """Seeded strictly convex quadratic consensus instance.

    Hessians are random orthogonal conjugations of positive diagonals with
    condition number <= 100; the linear terms are rescaled so the joint
    optimum lands strictly inside the box (``interior``) or on its boundary
    (``boundary``), and the placement is oracle-checked.
    """
    if optimum not in ("interior", "boundary"):
        raise DomainError(f"unknown optimum mode {optimum!r}")
    if m < 2:
        raise DomainError(f"need m >= 2, got {m}")
    rng = np.random.default_rng(seed)
    box = BoxSet(float(a), n)
    Ps = [_random_spd(rng, n) for _ in range(m)]
    qs = [rng.standard_normal(n) for _ in range(m)]

    Pbar = sum(Ps) / m
    qbar = sum(qs) / m
    z_u = -0.5 * np.linalg.solve(Pbar, qbar)
    norm = float(np.max(np.abs(z_u)))
    if norm < 1e-12:
        raise GenerationError("degenerate draw: unconstrained optimum at origin")
    rho = (0.8 * a / norm) if optimum == "interior" else (1.5 * a / norm)
    agents = tuple(
        QuadraticObjective(P=Ps[i], q=rho * qs[i], scale=1.0 / m,
                           tag=STRICTLY_CONVEX)
        for i in range(m)
    )
    problem = ConsensusProblem(agents=agents, box=box)

    z_star = _joint_optimum(agents, box)
    peak = float(np.max(np.abs(z_star)))
    if optimum == "interior" and peak > 0.8 * a + 1e-9:
        raise GenerationError(f"interior check failed: |z*|_inf = {peak}")
    if optimum == "boundary" and abs(peak - a) > 1e-8:
        raise GenerationError(f"boundary check failed: |z*|_inf = {peak}")
    return problem


def synth_mixed_nonconvex(m, m_convex, n, a, seed):
    """First ``m_convex`` agents strictly convex, the rest concave
    (negated random SPD Hessians); the global objective is nonconvex
    whenever m_convex < m."""
    if not 1 <= m_convex <= m:
        raise DomainError(f"need 1 <= m_convex <= m, got {m_convex} of {m}")
    if m < 2:
        raise DomainError(f"need m >= 2, got {m}")
    rng = np.random.default_rng(seed)
    agents = []
    for i in range(m):
        P = _random_spd(rng, n)
        q = rng.standard_normal(n)
        if i < m_convex:
            agents.append(QuadraticObjective(P=P, q=q, scale=1.0 / m,
                                             tag=STRICTLY_CONVEX))
        else:
            agents.append(QuadraticObjective(P=-P, q=q, scale=1.0 / m,
                                             tag=CONCAVE))
    return ConsensusProblem(agents=tuple(agents), box=BoxSet(float(a), n))


def strong_duality_pair(n, a=1.0):
    """Two-agent convex/concave pair with a zero duality gap.

    f_1(y) = (1/16) y'y + 1'y + 5 (strictly convex),
    f_2(y) = -y'y + 2 * 1'y + 2 (concave), shared box of radius a, each
    weighted by 1/2 in the global objective.
    """
    one = np.ones(n)
    a1 = QuadraticObjective(P=np.eye(n) / 16.0, q=one, scale=0.5, offset=2.5,
                            tag=STRICTLY_CONVEX)
    a2 = QuadraticObjective(P=-np.eye(n), q=2.0 * one, scale=0.5, offset=1.0,
                            tag=CONCAVE)
    return ConsensusProblem(agents=(a1, a2), box=BoxSet(float(a), n))


PRESETS = {
    "strong-duality-pair": strong_duality_pair,
}


def preset(name, n, a=1.0):
    if name not in PRESETS:
        raise DomainError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return PRESETS[name](n, a=a)
