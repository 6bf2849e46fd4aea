"""Per-agent Lagrangian minimizers.

Three exact solve strategies for the box-constrained quadratic subproblem
h(y) = y'Py + c'y, ||y||_inf <= a:

* diagonal P: coordinate-wise closed-form clip;
* small n (<= 3), strictly convex: enumeration of active-set patterns with
  precomputable affine candidate maps, so repeated solves against changing
  tilts are a handful of batched matmuls;
* general: accelerated projected gradient with fixed step 1/L and adaptive
  restart, run to a projected-gradient residual tolerance.

Concave quadratics are minimized exactly at a box vertex (coordinate-wise
for diagonal P, full enumeration otherwise).  Determinism everywhere: ties
break toward the lexicographically smallest vertex, and iterative solves
follow a fixed rule so replays are identical.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DomainError, SolverError
from .model import (
    CONCAVE,
    STRICTLY_CONVEX,
    BoxSet,
    LeastSquaresObjective,
)

_ENUM_MAX_DIM = 3
_PSD_TOL = 1e-10


def _as_spd_inputs(P, c):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    c = np.asarray(c, dtype=float).ravel()
    if P.shape[0] != P.shape[1] or P.shape[0] != c.shape[0]:
        raise DomainError(f"P {P.shape} and c {c.shape} are inconsistent")
    if not np.allclose(P, P.T, atol=1e-9, rtol=0.0):
        raise DomainError("P must be symmetric")
    return 0.5 * (P + P.T), c


def _is_diagonal(P):
    return bool(np.all(P == np.diag(np.diagonal(P))))


def _residual_inf(P, c, a, y):
    g = 2.0 * P @ y + c
    return float(np.max(np.abs(y - np.clip(y - g, -a, a))))


def _diag_box_qp(p, c, a):
    y = np.empty_like(c)
    pos = p > 0
    y[pos] = np.clip(-c[pos] / (2.0 * p[pos]), -a, a)
    flat = ~pos
    y[flat] = np.where(c[flat] > 0, -a, np.where(c[flat] < 0, a, 0.0))
    return y


def _enum_pattern_maps(P, a):
    """Affine maps y(c) = W c + u, one per active-set pattern.

    Pattern entries: 0 free, -1 at -a, +1 at +a.  Requires P strictly
    positive definite so every principal submatrix is invertible.
    """
    n = P.shape[0]
    patterns = list(itertools.product((0, -1, 1), repeat=n))
    W = np.zeros((len(patterns), n, n))
    U = np.zeros((len(patterns), n))
    for k, pat in enumerate(patterns):
        pat = np.array(pat)
        free = np.where(pat == 0)[0]
        bound = np.where(pat != 0)[0]
        vb = pat[bound] * a
        U[k, bound] = vb
        if free.size:
            Pff_inv = np.linalg.inv(P[np.ix_(free, free)])
            W[k][np.ix_(free, free)] = -0.5 * Pff_inv
            if bound.size:
                U[k, free] = -Pff_inv @ P[np.ix_(free, bound)] @ vb
    return W, U


def _enum_box_qp(W, U, P, c, a):
    """Pick the best clipped pattern candidate; exact for strictly convex P."""
    cand = np.clip(W @ c + U, -a, a)          # (patterns, n)
    vals = np.einsum("pi,ij,pj->p", cand, P, cand) + cand @ c
    return cand[int(np.argmin(vals))]


def _fista_box(Ps, cs, a, L, x0, tol, max_iter):
    """Batched accelerated projected gradient on stacked problems.

    Ps (B,n,n), cs (B,n), L (B,) the per-problem gradient Lipschitz
    constants 2*lambda_max(P).  Returns the stacked minimizers; raises
    SolverError with the worst residual on budget exhaustion.
    """
    inv_l = (1.0 / L)[:, None]
    x = np.clip(x0, -a, a)
    y = x.copy()
    t = 1.0
    check_every = 4
    for it in range(1, max_iter + 1):
        g = 2.0 * np.einsum("bij,bj->bi", Ps, y) + cs
        x_new = np.clip(y - inv_l * g, -a, a)
        # adaptive restart on the gradient-mapping criterion
        if np.sum((y - x_new) * (x_new - x)) > 0.0:
            t = 1.0
            y = x_new.copy()
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        x = x_new
        if it % check_every == 0 or it == max_iter:
            gx = 2.0 * np.einsum("bij,bj->bi", Ps, x) + cs
            res = np.max(np.abs(x - np.clip(x - gx, -a, a)), axis=1)
            if np.all(res <= tol):
                return x
    raise SolverError(
        f"box QP did not reach tol={tol} in {max_iter} iterations",
        residual=float(np.max(res)),
    )


def _default_max_iter(P, n):
    w = np.linalg.eigvalsh(P)
    top = max(w[-1], 0.0)
    bottom = max(w[0], top * 1e-12, 1e-300)
    kappa = top / bottom if top > 0 else 1.0
    return int(min(max(100 * n * kappa, 10_000), 5_000_000))


def minimize_box_qp(P, c, box, tol=1e-10, max_iter=None, warm=None):
    """Minimize y'Py + c'y over the box, to projected-gradient residual tol.

    P must be symmetric positive semidefinite with at least one positive
    eigenvalue, or c nonzero (otherwise every feasible point is optimal and
    the request is rejected).
    """
    P, c = _as_spd_inputs(P, c)
    if not tol > 0:
        raise DomainError("tol must be positive")
    a = box.radius
    n = c.shape[0]
    if box.dim != n:
        raise DomainError(f"box dimension {box.dim} does not match n={n}")
    w = np.linalg.eigvalsh(P)
    if w[0] < -_PSD_TOL * max(1.0, abs(w[-1])):
        raise DomainError("P must be positive semidefinite")
    if w[-1] <= _PSD_TOL and not np.any(c):
        raise DomainError("degenerate problem: P ~ 0 and c = 0")

    if _is_diagonal(P):
        return _diag_box_qp(np.diagonal(P).copy(), c, a)
    if n <= _ENUM_MAX_DIM and w[0] > 1e-12 * max(1.0, w[-1]):
        Wp, Up = _enum_pattern_maps(P, a)
        return _enum_box_qp(Wp, Up, P, c, a)

    if max_iter is None:
        max_iter = _default_max_iter(P, n)
    x0 = np.zeros(n) if warm is None else np.asarray(warm, dtype=float)
    L = max(2.0 * w[-1], 1e-30)
    return _fista_box(P[None], c[None], a, np.array([L]), x0[None],
                      tol, max_iter)[0]


def minimize_concave_box(P, c, box):
    """Minimize y'Py + c'y over the box for negative semidefinite P.

    The minimum is attained at a vertex; ties break to the
    lexicographically smallest vertex (-a sorts before +a).
    """
    P, c = _as_spd_inputs(P, c)
    a = box.radius
    n = c.shape[0]
    w = np.linalg.eigvalsh(P)
    if w[-1] > _PSD_TOL * max(1.0, abs(w[0])):
        raise DomainError("P must be negative semidefinite")

    if _is_diagonal(P):
        # separable: per coordinate the quadratic term is equal at +-a
        return np.where(c >= 0, -a, a).astype(float)

    if n > 20:
        raise CapacityError(f"vertex enumeration capped at n <= 20, got n={n}")
    best_val = np.inf
    best_v = None
    chunk = 1 << 14
    total = 1 << n
    # vertex index bits enumerate lexicographically with -a first
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        bits = (idx[:, None] >> np.arange(n - 1, -1, -1)) & 1
        V = a * (2.0 * bits - 1.0)
        vals = np.einsum("vi,ij,vj->v", V, P, V) + V @ c
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val = float(vals[k])
            best_v = V[k]
    return best_v


@dataclass(frozen=True)
class TiltedSubproblem:
    """One agent's Lagrangian piece: f(y) + tilt'y over the box."""

    objective: object
    tilt: np.ndarray
    box: BoxSet

    def value(self, y):
        return self.objective.value(y) + float(np.asarray(self.tilt) @ y)


def agent_minimize(sub, tol=1e-10, warm=None):
    """Exact (to tol) minimizer of f(y) + tilt'y over the box.

    Dispatches on the objective kind: strictly convex quadratics and least
    squares go through the box QP; concave quadratics through vertex
    minimization.  Indefinite quadratics are rejected.
    """
    obj = sub.objective
    tilt = np.asarray(sub.tilt, dtype=float)
    if obj.kind == "quadratic":
        P = obj.scale * obj.P
        c = obj.scale * obj.q + tilt
        if obj.tag == STRICTLY_CONVEX:
            return minimize_box_qp(P, c, sub.box, tol=tol, warm=warm)
        if obj.tag == CONCAVE:
            return minimize_concave_box(P, c, sub.box)
        raise DomainError(f"unsupported quadratic tag {obj.tag!r}")
    if obj.kind == "least_squares":
        N = obj.n_samples
        P = (obj.scale / N) * (obj.X.T @ obj.X)
        c = -(2.0 * obj.scale / N) * (obj.X.T @ obj.t) + tilt
        return minimize_box_qp(P, c, sub.box, tol=tol, warm=warm)
    raise DomainError(f"unsupported objective kind {obj.kind!r}")


def minibatch_view(obj, indices):
    """Objective restricted to the sampled rows, averaged over the batch.

    ``indices`` are 0-based row positions; sampling (with or without
    replacement) is the caller's business via an explicit random source.
    """
    if obj.kind != "least_squares":
        raise DomainError("minibatch views exist only for least-squares objectives")
    idx = np.asarray(indices, dtype=int).ravel()
    if idx.size < 1:
        raise DomainError("minibatch needs at least one index")
    if np.any(idx < 0) or np.any(idx >= obj.n_samples):
        raise DomainError(
            f"indices must lie in [0, {obj.n_samples}), got range "
            f"[{idx.min()}, {idx.max()}]"
        )
    return LeastSquaresObjective(X=obj.X[idx], t=obj.t[idx], scale=obj.scale)


class BatchedQuadraticSolver:
    """Repeated tilted solves for a fixed family of strictly convex quadratics.

    Precomputes whatever the strategy allows (pattern maps for n <= 3,
    Lipschitz constants otherwise) so that each call against a new stack of
    tilts costs a few vectorized operations.  Used by the engine's hot loop.
    """

    def __init__(self, agents, box, tol=1e-10):
        if not all(a.kind == "quadratic" and a.tag == STRICTLY_CONVEX
                   for a in agents):
            raise DomainError("batched solver requires strictly convex quadratics")
        self.box = box
        self.tol = tol
        self.m = len(agents)
        self.n = box.dim
        self.Ps = np.stack([a.scale * a.P for a in agents])
        self.base_c = np.stack([a.scale * a.q for a in agents])
        self.offsets = np.array([a.offset for a in agents])
        self._diag = all(_is_diagonal(P) for P in self.Ps)
        self._enum = (not self._diag) and self.n <= _ENUM_MAX_DIM
        if self._diag:
            self._pdiag = np.stack([np.diagonal(P) for P in self.Ps])
        elif self._enum:
            maps = [_enum_pattern_maps(P, box.radius) for P in self.Ps]
            self.W = np.stack([w for w, _ in maps])   # (m, patterns, n, n)
            self.U = np.stack([u for _, u in maps])   # (m, patterns, n)
        else:
            eig = [np.linalg.eigvalsh(P) for P in self.Ps]
            self.L = np.array([max(2.0 * w[-1], 1e-30) for w in eig])
            kappa = max((w[-1] / max(w[0], 1e-300)) for w in eig)
            self.max_iter = int(min(max(100 * self.n * kappa, 10_000), 5_000_000))
        self._warm = np.zeros((self.m, self.n))

    def solve(self, tilts):
        """Minimizers for every agent against the given (m, n) tilt stack."""
        C = self.base_c + tilts
        a = self.box.radius
        if self._diag:
            pos = self._pdiag > 0
            Y = np.where(
                pos,
                np.clip(-C / np.where(pos, 2.0 * self._pdiag, 1.0), -a, a),
                np.where(C > 0, -a, np.where(C < 0, a, 0.0)),
            )
        elif self._enum:
            cand = np.clip(np.einsum("mpij,mj->mpi", self.W, C) + self.U, -a, a)
            vals = (np.einsum("mpi,mij,mpj->mp", cand, self.Ps, cand)
                    + np.einsum("mpi,mi->mp", cand, C))
            sel = np.argmin(vals, axis=1)
            Y = cand[np.arange(self.m), sel]
        else:
            Y = _fista_box(self.Ps, C, a, self.L, self._warm, self.tol,
                           self.max_iter)
            self._warm = Y
        return Y

    def dual_terms(self, Y, tilts):
        """Per-agent minimized Lagrangian values f_i(y_i) + tilt_i'y_i."""
        quad = np.einsum("mi,mij,mj->m", Y, self.Ps, Y)
        return quad + np.sum((self.base_c + tilts) * Y, axis=1) + self.offsets
