"""Problem model: objectives, the box feasible set, the consensus problem,
and the implicit chain coupling operator.

The coupling matrix that chains agent blocks together is never materialized;
all algorithms go through :meth:`ChainCoupling.apply` and
:meth:`ChainCoupling.adjoint`.  A dense copy is available solely as a test
oracle for small shapes (see :func:`dense_coupling_matrix`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_banded

from .errors import CapacityError, DomainError, ShapeError

_EIG_TOL = 1e-10

STRICTLY_CONVEX = "strictly-convex"
CONCAVE = "concave"
INDEFINITE = "indefinite"


@dataclass(frozen=True)
class BoxSet:
    """Symmetric box {z : ||z||_inf <= a} in R^n."""

    radius: float
    dim: int

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError(f"box radius must be positive, got {self.radius}")
        if self.dim < 1:
            raise DomainError(f"box dimension must be >= 1, got {self.dim}")

    def contains(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise ShapeError(f"expected vector of length {self.dim}, got {z.shape}")
        # membership is exact, no tolerance
        return bool(np.max(np.abs(z)) <= self.radius)

    def project(self, z):
        z = np.asarray(z, dtype=float)
        return np.clip(z, -self.radius, self.radius)

    def is_vertex(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise ShapeError(f"expected vector of length {self.dim}, got {z.shape}")
        return bool(np.all(np.abs(z) == self.radius))

    def on_boundary(self, z):
        z = np.asarray(z, dtype=float)
        return self.contains(z) and bool(np.max(np.abs(z)) == self.radius)


def _classify(P):
    w = np.linalg.eigvalsh(P)
    if w[0] > _EIG_TOL:
        return STRICTLY_CONVEX
    if w[-1] < _EIG_TOL:
        return CONCAVE
    return INDEFINITE


@dataclass(frozen=True)
class QuadraticObjective:
    """f(y) = scale * (y'Py + q'y) + offset.

    ``scale`` carries the 1/m normalization of the consensus objective so the
    factor is applied exactly once; ``offset`` absorbs any constant term.
    The convexity tag is validated against the eigenvalues of P at
    construction (tolerance 1e-10) so a nonconvex agent is always an explicit
    opt-in.
    """

    P: np.ndarray
    q: np.ndarray
    scale: float = 1.0
    offset: float = 0.0
    tag: str = STRICTLY_CONVEX

    kind = "quadratic"

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        q = np.asarray(self.q, dtype=float).ravel()
        if P.shape[0] != P.shape[1] or P.shape[0] != q.shape[0]:
            raise ShapeError(f"P {P.shape} and q {q.shape} are inconsistent")
        if not np.allclose(P, P.T, atol=1e-10, rtol=0.0):
            raise DomainError("P must be symmetric")
        P = 0.5 * (P + P.T)
        if not self.scale > 0:
            raise DomainError("scale must be positive")
        detected = _classify(P)
        if self.tag != detected:
            raise DomainError(
                f"convexity tag {self.tag!r} inconsistent with eigenvalues ({detected})"
            )
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "q", q)

    @property
    def dim(self):
        return self.q.shape[0]

    def value(self, y):
        y = np.asarray(y, dtype=float)
        return float(self.scale * (y @ self.P @ y + self.q @ y) + self.offset)

    def gradient(self, y):
        y = np.asarray(y, dtype=float)
        return self.scale * (2.0 * self.P @ y + self.q)


@dataclass(frozen=True)
class LeastSquaresObjective:
    """f(y) = scale * (1/N) * sum_j (y'x_j - t_j)^2.

    The first feature column is the all-ones bias column when the dataset was
    loaded with a bias term.
    """

    X: np.ndarray
    t: np.ndarray
    scale: float = 1.0
    source: dict | None = None  # provenance for serialization, optional

    kind = "least_squares"
    tag = STRICTLY_CONVEX  # convex; strictly so iff X has full column rank

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        t = np.asarray(self.t, dtype=float).ravel()
        if X.shape[0] != t.shape[0]:
            raise ShapeError(f"X has {X.shape[0]} rows but t has {t.shape[0]}")
        if X.shape[0] < 1:
            raise DomainError("least-squares objective needs at least one sample")
        if not self.scale > 0:
            raise DomainError("scale must be positive")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "t", t)

    @property
    def n_samples(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]

    def value(self, y):
        r = self.X @ np.asarray(y, dtype=float) - self.t
        return float(self.scale * np.mean(r * r))

    def gradient(self, y):
        r = self.X @ np.asarray(y, dtype=float) - self.t
        return self.scale * (2.0 / self.n_samples) * (self.X.T @ r)


@dataclass(frozen=True)
class ConsensusProblem:
    """m agents with local objectives over a shared box.

    The global objective is f0(y) = sum_i f_i(y_i) where each stored agent
    already carries its 1/m share in ``scale``; problem builders in
    :mod:`dualray.data` enforce this so the factor is never duplicated.
    """

    agents: tuple
    box: BoxSet

    def __post_init__(self):
        agents = tuple(self.agents)
        if len(agents) < 2:
            raise DomainError(f"need at least 2 agents, got {len(agents)}")
        dims = {a.dim for a in agents}
        if dims != {self.box.dim}:
            raise DomainError(
                f"all agents must share the box dimension {self.box.dim}, got {dims}"
            )
        object.__setattr__(self, "agents", agents)

    @property
    def m(self):
        return len(self.agents)

    @property
    def n(self):
        return self.box.dim

    @property
    def coupling(self):
        return ChainCoupling(self.m, self.n)

    def split(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.m * self.n,):
            raise ShapeError(f"expected length {self.m * self.n}, got {y.shape}")
        return y.reshape(self.m, self.n)

    def objective(self, y):
        """f0 at a stacked point y = [y_1' ... y_m']'."""
        blocks = self.split(y)
        return float(sum(a.value(blocks[i]) for i, a in enumerate(self.agents)))

    def objective_consensus(self, z):
        """f0 at the consensus point y_1 = ... = y_m = z."""
        z = np.asarray(z, dtype=float)
        return float(sum(a.value(z) for a in self.agents))

    def all_strictly_convex(self):
        return all(a.tag == STRICTLY_CONVEX for a in self.agents)

    def all_quadratic(self):
        return all(a.kind == "quadratic" for a in self.agents)

    def to_json(self):
        return json.dumps(problem_to_dict(self), sort_keys=True)


@dataclass(frozen=True)
class ChainCoupling:
    """Implicit block-difference operator enforcing y_i = y_{i+1}.

    Maps R^{nm} -> R^{n(m-1)}; block i of the image is y_i - y_{i+1}.  The
    right-hand side is fixed to zero for consensus but carried explicitly so
    the generic equality-constrained form stays expressible.
    """

    m: int
    n: int

    def __post_init__(self):
        if self.m < 2:
            raise DomainError(f"chain coupling needs m >= 2, got {self.m}")
        if self.n < 1:
            raise DomainError(f"chain coupling needs n >= 1, got {self.n}")

    @property
    def rhs(self):
        return np.zeros((self.m - 1) * self.n)

    @property
    def shape(self):
        return ((self.m - 1) * self.n, self.m * self.n)

    def apply(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.m * self.n,):
            raise ShapeError(f"expected length {self.m * self.n}, got {y.shape}")
        blocks = y.reshape(self.m, self.n)
        return (blocks[:-1] - blocks[1:]).ravel()

    def adjoint(self, lam):
        lam = np.asarray(lam, dtype=float)
        if lam.shape != ((self.m - 1) * self.n,):
            raise ShapeError(
                f"expected length {(self.m - 1) * self.n}, got {lam.shape}"
            )
        L = lam.reshape(self.m - 1, self.n)
        out = np.zeros((self.m, self.n))
        out[:-1] += L
        out[1:] -= L
        return out.ravel()

    def gram_solve(self, v):
        """Solve (A A') w = v directly.

        A A' is the (m-1)-block tridiagonal matrix with 2I on the diagonal
        and -I off it, i.e. T (x) I_n with T = tridiag(-1, 2, -1); each of
        the n coordinate slices is an independent tridiagonal solve.
        """
        v = np.asarray(v, dtype=float)
        if v.shape != ((self.m - 1) * self.n,):
            raise ShapeError(
                f"expected length {(self.m - 1) * self.n}, got {v.shape}"
            )
        k = self.m - 1
        V = v.reshape(k, self.n)
        ab = np.zeros((3, k))
        ab[0, 1:] = -1.0
        ab[1, :] = 2.0
        ab[2, :-1] = -1.0
        W = solve_banded((1, 1), ab, V)
        return W.ravel()

    def spectral_norm_sq(self, tol=1e-8, max_iter=10_000):
        """||A||_2^2 by power iteration on A A'.

        For the chain coupling the exact value is 2 + 2 cos(pi/m).
        """
        rng = np.random.default_rng(0)
        v = rng.standard_normal((self.m - 1) * self.n)
        v /= np.linalg.norm(v)
        theta = 0.0
        for _ in range(max_iter):
            w = self.apply(self.adjoint(v))
            theta_new = float(v @ w)
            nw = np.linalg.norm(w)
            if nw == 0.0:
                return 0.0
            v = w / nw
            if abs(theta_new - theta) <= tol * abs(theta_new):
                return theta_new
            theta = theta_new
        return theta


def dense_coupling_matrix(m, n):
    """Materialized coupling matrix; test oracle only, capped at m*n <= 64."""
    if m * n > 64:
        raise CapacityError(f"dense coupling oracle capped at m*n <= 64, got {m * n}")
    A = np.zeros(((m - 1) * n, m * n))
    for i in range(m - 1):
        A[i * n:(i + 1) * n, i * n:(i + 1) * n] = np.eye(n)
        A[i * n:(i + 1) * n, (i + 1) * n:(i + 2) * n] = -np.eye(n)
    return A


def _agent_to_dict(agent):
    if agent.kind == "quadratic":
        return {
            "kind": "quadratic",
            "P": agent.P.tolist(),
            "q": agent.q.tolist(),
            "scale": agent.scale,
            "offset": agent.offset,
            "tag": agent.tag,
        }
    d = {
        "kind": "least_squares",
        "scale": agent.scale,
    }
    if agent.source is not None and "csv_path" in agent.source:
        d.update(agent.source)
    else:
        d["X"] = agent.X.tolist()
        d["t"] = agent.t.tolist()
    return d


def problem_to_dict(problem):
    return {
        "m": problem.m,
        "n": problem.n,
        "box_radius": problem.box.radius,
        "agents": [_agent_to_dict(a) for a in problem.agents],
    }


def _agent_from_dict(d, n):
    kind = d["kind"]
    if kind == "quadratic":
        return QuadraticObjective(
            P=np.array(d["P"], dtype=float),
            q=np.array(d["q"], dtype=float),
            scale=float(d.get("scale", 1.0)),
            offset=float(d.get("offset", 0.0)),
            tag=d.get("tag", STRICTLY_CONVEX),
        )
    if kind == "least_squares":
        if "X" in d:
            return LeastSquaresObjective(
                X=np.array(d["X"], dtype=float),
                t=np.array(d["t"], dtype=float),
                scale=float(d.get("scale", 1.0)),
            )
        # stored by reference: reload the shard from its CSV
        from .data import load_csv

        ds = load_csv(d["csv_path"], d["target_column"], bias=d.get("bias", True),
                      header=d.get("header", False))
        lo, hi = d["rows"]
        return LeastSquaresObjective(
            X=ds.X[lo:hi], t=ds.t[lo:hi], scale=float(d.get("scale", 1.0)),
            source=dict(d),
        )
    raise DomainError(f"unknown agent kind {kind!r}")


def problem_from_dict(d):
    n = int(d["n"])
    box = BoxSet(float(d["box_radius"]), n)
    agents = [_agent_from_dict(a, n) for a in d["agents"]]
    if len(agents) != int(d["m"]):
        raise DomainError(f"agent count {len(agents)} does not match m={d['m']}")
    return ConsensusProblem(agents=tuple(agents), box=box)


def problem_from_json(text):
    return problem_from_dict(json.loads(text))


def rescale_agent(agent, scale):
    """Return a copy of the agent with ``scale`` replaced."""
    return replace(agent, scale=scale)
