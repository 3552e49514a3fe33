"""Confidence schedule and GP-UCB evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .gp import ActionSpace, GPPosterior, joint_grid


@dataclass(frozen=True)
class BetaSchedule:
    """``beta_t = 2 log(|X| t^2 pi^2 / (c delta))`` with c = 3 (default) or 6."""

    domain_size: int
    delta: float = 0.1
    tight: bool = False

    def __post_init__(self):
        if self.domain_size < 1:
            raise InputError("domain_size must be positive")
        if not 0.0 < self.delta < 1.0:
            raise InputError("delta must lie in (0, 1)")

    def __call__(self, t: int) -> float:
        return beta(self, t)


def beta(schedule: BetaSchedule, t: int) -> float:
    if t < 1:
        raise InputError(f"iteration index must be >= 1, got {t}")
    c = 6.0 if schedule.tight else 3.0
    return 2.0 * math.log(schedule.domain_size * t * t * math.pi**2 / (c * schedule.delta))


def c1_constant(noise_variance: float) -> float:
    """Regret-bound constant ``8 / log(1 + 1/noise_variance)``."""
    if noise_variance <= 0:
        return 0.0
    return 8.0 / math.log1p(1.0 / noise_variance)


def ucb(gp: GPPosterior, z, beta_t: float) -> float:
    mean, var = gp.predict(np.asarray(z, dtype=float).reshape(1, -1))
    return float(mean[0] + math.sqrt(beta_t) * math.sqrt(var[0]))


def ucb_points(gp: GPPosterior, Z, beta_t: float) -> np.ndarray:
    """Vectorized UCB at the rows of ``Z`` through one shared solve."""
    mean, var = gp.predict(Z)
    return mean + np.sqrt(beta_t) * np.sqrt(var)


def _slice_inputs(own_space: ActionSpace, others_actions, own_index: int) -> np.ndarray:
    others = [np.asarray(a, dtype=float).ravel() for a in others_actions]
    if len(others) == 0:
        return own_space.points
    n = own_space.size
    blocks = [np.broadcast_to(a, (n, a.size)) for a in others]
    blocks.insert(own_index, own_space.points)
    return np.concatenate(blocks, axis=1)


def ucb_slice(
    gp: GPPosterior,
    own_space: ActionSpace,
    others_actions,
    beta_t: float,
    own_index: int = 0,
) -> np.ndarray:
    """UCB over every own action with the other agents' actions held fixed.

    ``others_actions`` lists the coordinate vectors of the other agents in
    agent order; ``own_index`` is this agent's position in the joint action.
    A single flat vector is accepted when there is only one other agent.
    """
    others = list(others_actions)
    if others and np.ndim(others[0]) == 0:
        others = [np.asarray(others_actions, dtype=float)]
    if not 0 <= own_index <= len(others):
        raise InputError("own_index out of range")
    Z = _slice_inputs(own_space, others, own_index)
    if Z.shape[1] != gp.dim:
        raise InputError(f"joint dimension {Z.shape[1]} does not match GP dimension {gp.dim}")
    return ucb_points(gp, Z, beta_t)


def ucb_table(gp: GPPosterior, spaces, beta_t: float) -> np.ndarray:
    """UCB over the full joint grid, shaped ``(|X_1|, ..., |X_M|)``."""
    spaces = list(spaces)
    Z = joint_grid(spaces)
    if Z.shape[1] != gp.dim:
        raise InputError(f"joint dimension {Z.shape[1]} does not match GP dimension {gp.dim}")
    return ucb_points(gp, Z, beta_t).reshape(tuple(s.size for s in spaces))
