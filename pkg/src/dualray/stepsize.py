"""Switching stepsize rules for the dual update.

One stateful contract for every rule used after the flat-ray phase is
exited, plus the constant in-region rule.  ``k`` counts iterations since
the rule was activated, not the global epoch, so decay schedules restart
when the engine switches over.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

KINDS = (
    "constant",
    "poly_k",
    "poly_sqrt_k",
    "geometric",
    "step_decay",
    "polyak",
    "adaptive_local",
)

_POLYAK_FLOOR = 1e-12


@dataclass
class StepsizeState:
    kind: str
    gamma0: float
    q: float = 0.5
    stage_length: int = 50
    g_star: float | None = None
    theta: float = 0.0
    converged: bool = False
    _prev_lambda: np.ndarray | None = field(default=None, repr=False)
    _prev_s: np.ndarray | None = field(default=None, repr=False)
    _prev_gamma: float | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown stepsize kind {self.kind!r}")
        if not self.gamma0 > 0:
            raise ConfigError(f"gamma0 must be positive, got {self.gamma0}")
        if self.kind in ("geometric", "step_decay") and not (0.0 < self.q < 1.0):
            raise ConfigError(f"decay factor q must be in (0,1), got {self.q}")
        if self.kind == "step_decay" and self.stage_length < 1:
            raise ConfigError("stage_length must be a positive integer")
        if self.kind == "polyak" and self.g_star is None:
            raise ConfigError("polyak rule requires g_star")

    def reset(self):
        self.theta = 0.0
        self.converged = False
        self._prev_lambda = None
        self._prev_s = None
        self._prev_gamma = None


def next_step(state, k, lam, s, g_val):
    """Stepsize for local iteration k >= 1 given the runtime attributes."""
    if k < 1:
        raise ConfigError(f"k counts from 1, got {k}")
    kind = state.kind
    if kind == "constant":
        return state.gamma0
    if kind == "poly_k":
        return state.gamma0 / k
    if kind == "poly_sqrt_k":
        return state.gamma0 / np.sqrt(k)
    if kind == "geometric":
        return state.gamma0 * state.q ** k
    if kind == "step_decay":
        return state.gamma0 * state.q ** (k // state.stage_length)
    if kind == "polyak":
        s_sq = float(np.asarray(s) @ np.asarray(s))
        if s_sq == 0.0:
            state.converged = True
            return 0.0
        return max((state.g_star - g_val) / s_sq, _POLYAK_FLOOR)
    if kind == "adaptive_local":
        lam = np.asarray(lam, dtype=float)
        s = np.asarray(s, dtype=float)
        if state._prev_gamma is None:
            gamma = state.gamma0
        else:
            cap = np.sqrt(1.0 + state.theta) * state._prev_gamma
            ds = float(np.linalg.norm(s - state._prev_s))
            if ds == 0.0:
                gamma = cap
            else:
                dl = float(np.linalg.norm(lam - state._prev_lambda))
                gamma = min(cap, dl / (2.0 * ds))
            gamma = max(gamma, _POLYAK_FLOOR)
            state.theta = gamma / state._prev_gamma
        state._prev_lambda = lam.copy()
        state._prev_s = s.copy()
        state._prev_gamma = gamma
        return gamma
    raise ConfigError(f"unknown stepsize kind {kind!r}")


def from_config(cfg):
    """Build a rule from a configuration mapping {kind, gamma0, ...}."""
    if "kind" not in cfg:
        raise ConfigError("stepsize config needs a 'kind'")
    allowed = {"kind", "gamma0", "q", "stage_length", "g_star"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown stepsize config keys {sorted(unknown)}")
    kwargs = {k: cfg[k] for k in allowed & set(cfg)}
    kwargs.setdefault("gamma0", 1.0)
    return StepsizeState(**kwargs)


def constant_from_dual_lipschitz(G):
    """Baseline constant rule gamma = 1/L_g for a known dual Lipschitz bound."""
    if not G > 0:
        raise ConfigError(f"Lipschitz constant must be positive, got {G}")
    return StepsizeState(kind="constant", gamma0=1.0 / G)
