"""Flat-gradient rays of the dual function.

For the chain-coupled consensus problem with a symmetric box constraint the
dual function has rays along which its gradient is a fixed multiple of the
ray direction.  This module builds those rays: the alternating-vertex
boundary point, the relaxed feasibility solve that yields the direction pair
(mu_tilde, eta_tilde), the normal-cone sign tests, and the warm-start point
lambda0 = c * mu_tilde.

Sign convention: agents minimize f_i(y_i) + (lambda_i - lambda_{i-1})' y_i,
so while lambda stays on the ray {t * mu_tilde, t large} every minimizer sits
at the vertex antipodal to the boundary point the ray was built from.  That
vertex is exposed as :attr:`FgorRay.anchor` and is what the engine's one-bit
membership test compares against; the observable contracts (subgradient
beta*mu_tilde in-region, constant dual increments) are unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .model import BoxSet, ChainCoupling


def consensus_boundary_point(m, n, a):
    """Alternating vertex of the m-fold box: +a*1 on odd blocks, -a*1 on even.

    Blocks are numbered from 1, so block 1 is +a.
    """
    if m < 2:
        raise DomainError(f"need m >= 2 agents, got {m}")
    if n < 1:
        raise DomainError(f"need n >= 1, got {n}")
    if not a > 0:
        raise DomainError(f"need a > 0, got {a}")
    signs = np.where(np.arange(m) % 2 == 0, 1.0, -1.0)
    return np.repeat(signs * a, n)


def normal_cone_contains(box, y_bar_vertex, p):
    """Sign test for membership of p in the box normal cone at a vertex.

    True iff p_i * sign(y_i) >= 0 for every coordinate; comparisons are
    exact and zeros are allowed.  Non-vertex points are rejected.
    """
    y = np.asarray(y_bar_vertex, dtype=float)
    p = np.asarray(p, dtype=float)
    if y.shape != p.shape:
        raise ShapeError(f"shape mismatch {y.shape} vs {p.shape}")
    if not box.is_vertex(y):
        raise DomainError("normal-cone sign test is defined only at box vertices")
    return bool(np.all(p * np.sign(y) >= 0.0))


def _box_normal_contains_general(box, y, p):
    """Normal-cone test at an arbitrary boundary point of the box.

    Coordinates strictly inside require p_i = 0 exactly; coordinates at a
    face follow the sign rule.
    """
    a = box.radius
    at_hi = y == a
    at_lo = y == -a
    interior = ~(at_hi | at_lo)
    if np.any(p[interior] != 0.0):
        return False
    if np.any(p[at_hi] < 0.0) or np.any(p[at_lo] > 0.0):
        return False
    return True


def solve_relaxed_feasibility(coupling, box, y_bar, beta):
    """Two-step solve of the relaxed ray-feasibility problem.

    Step 1 forces mu_tilde = (1/beta) (A y_bar - b) and
    eta_tilde = A' mu_tilde; step 2 keeps the pair only when eta_tilde lies
    in the normal cone of the product box at y_bar.  Returns the pair, or
    None when the sign check rejects this boundary point (the caller may try
    another one).
    """
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta}")
    y_bar = np.asarray(y_bar, dtype=float)
    m, n = coupling.m, coupling.n
    if y_bar.shape != (m * n,):
        raise ShapeError(f"expected length {m * n}, got {y_bar.shape}")
    blocks = y_bar.reshape(m, n)
    in_box = all(box.contains(blk) for blk in blocks)
    on_bnd = any(np.max(np.abs(blk)) == box.radius for blk in blocks)
    if not (in_box and on_bnd):
        raise DomainError("y_bar must lie on the boundary of the product box")

    mu_tilde = (coupling.apply(y_bar) - coupling.rhs) / beta
    eta_tilde = coupling.adjoint(mu_tilde)
    eta_blocks = eta_tilde.reshape(m, n)
    for i in range(m):
        if not _box_normal_contains_general(box, blocks[i], eta_blocks[i]):
            return None
    return mu_tilde, eta_tilde


def rfgor_member(y_current, y_bar, tol):
    """Primal membership test: the current minimizer equals the reference
    point up to ``tol`` in the infinity norm."""
    y_current = np.asarray(y_current, dtype=float)
    y_bar = np.asarray(y_bar, dtype=float)
    if y_current.shape != y_bar.shape:
        raise ShapeError(f"shape mismatch {y_current.shape} vs {y_bar.shape}")
    if tol < 0:
        raise DomainError("tolerance must be nonnegative")
    return bool(np.max(np.abs(y_current - y_bar)) <= tol)


def default_membership_tol(box):
    return 1e-8 * box.radius


@dataclass
class FgorRay:
    """A dual ray with constant gradient, plus its warm-start scaling.

    Fields mirror the relaxed feasibility solution: ``y_bar`` is the
    boundary point, ``mu_tilde`` the dual ray direction, ``eta_tilde`` the
    primal-space direction, ``beta`` the gain, and ``c`` the warm-start
    scale giving lambda0 = c * mu_tilde.
    """

    y_bar: np.ndarray
    mu_tilde: np.ndarray
    eta_tilde: np.ndarray
    beta: float
    c: float
    box: BoxSet
    m: int
    warnings: list = field(default_factory=list)

    @property
    def n(self):
        return self.box.dim

    @property
    def lambda0(self):
        return self.c * self.mu_tilde

    @property
    def anchor(self):
        """Vertex occupied by every in-region Lagrangian minimizer.

        Defined coordinate-wise as -a*sign(eta_tilde); requires eta_tilde to
        have no zero coordinate, which holds for the alternating-vertex
        construction.
        """
        if np.any(self.eta_tilde == 0.0):
            raise DomainError(
                "ray direction has zero coordinates; no unique minimizer anchor"
            )
        return -self.box.radius * np.sign(self.eta_tilde)

    def anchor_blocks(self):
        return self.anchor.reshape(self.m, self.n)

    def to_json(self):
        return json.dumps(
            {
                "y_bar": self.y_bar.tolist(),
                "mu_tilde": self.mu_tilde.tolist(),
                "eta_tilde": self.eta_tilde.tolist(),
                "beta": self.beta,
                "c": self.c,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text, box, m):
        d = json.loads(text)
        return cls(
            y_bar=np.array(d["y_bar"], dtype=float),
            mu_tilde=np.array(d["mu_tilde"], dtype=float),
            eta_tilde=np.array(d["eta_tilde"], dtype=float),
            beta=float(d["beta"]),
            c=float(d["c"]),
            box=box,
            m=m,
        )


def default_scale(mu_tilde):
    """Default warm-start scale: 500 * max(1, 1/||mu_tilde||_inf).

    Large enough in practice; the engine detects and reports a warm start
    that already lies outside the flat region rather than degrading
    silently.
    """
    norm = float(np.max(np.abs(mu_tilde)))
    if norm == 0.0:
        raise DomainError("mu_tilde is zero; no ray direction")
    return 500.0 * max(1.0, 1.0 / norm)


def build_consensus_ray(m, n, a, beta=1.0, c=None):
    """Ray for the chain-coupled consensus problem on the symmetric box.

    Uses the alternating vertex, which always passes the sign check
    (verified here rather than assumed).
    """
    box = BoxSet(a, n)
    coupling = ChainCoupling(m, n)
    y_bar = consensus_boundary_point(m, n, a)
    pair = solve_relaxed_feasibility(coupling, box, y_bar, beta)
    if pair is None:  # cannot happen for the alternating vertex
        raise DomainError("alternating vertex rejected by the sign check")
    mu_tilde, eta_tilde = pair
    if c is None:
        c = default_scale(mu_tilde)
    return FgorRay(
        y_bar=y_bar, mu_tilde=mu_tilde, eta_tilde=eta_tilde,
        beta=float(beta), c=float(c), box=box, m=m,
    )


def warm_start(ray, c):
    """lambda0 = c * mu_tilde; records c into the ray."""
    if not c > 0:
        raise DomainError(f"warm-start scale must be positive, got {c}")
    ray.c = float(c)
    return ray.lambda0
