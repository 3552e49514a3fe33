"""Level-1, level-k and sampled (lite) best responses on GP-UCB surfaces.

Every selection returns the lowest index among maximizers (``np.argmax``).
Joint actions are laid out in agent order; ``own_index`` is the selecting
agent's position in that order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acquisition import ucb_points, ucb_slice
from .errors import BudgetError, ConfigurationError, InputError
from .gp import ActionSpace, GPPosterior, KernelSpec, joint_points
from .level0 import Level0Config, MixedStrategy, sample_action, sample_actions

MAX_EXACT_EVALUATIONS = 2_000_000


def default_mc_samples(opponent_dim: int) -> int:
    return 500 if opponent_dim <= 2 else 1000


@dataclass(frozen=True)
class AgentSpec:
    """One agent's configuration.

    ``believed_opponent_level0`` maps opponent ids to the level-0 strategy
    this agent attributes to them; missing entries mean the opponent's
    declared strategy is assumed known. ``selection`` is ``"r2b2"`` or
    ``"lite"``; ``mode`` is ``"exact"`` or ``"monte_carlo"``.
    """

    id: int
    space: ActionSpace
    level: int = 0
    level0: Level0Config = field(default_factory=Level0Config)
    noise_variance: float = 0.01
    believed_opponent_level0: dict | None = None
    mc_samples: int | None = None
    selection: str = "r2b2"
    mode: str = "exact"
    kernel: KernelSpec | None = None

    def __post_init__(self):
        if self.level < 0:
            raise ConfigurationError(f"agent {self.id}: level must be >= 0")
        if self.selection not in ("r2b2", "lite"):
            raise ConfigurationError(f"agent {self.id}: unknown selection {self.selection!r}")
        if self.mode not in ("exact", "monte_carlo"):
            raise ConfigurationError(f"agent {self.id}: unknown mode {self.mode!r}")
        if self.selection == "lite" and self.level != 1:
            raise ConfigurationError(f"agent {self.id}: lite selection is a level-1 strategy")
        if self.noise_variance < 0:
            raise ConfigurationError(f"agent {self.id}: noise_variance must be >= 0")

    def believed_level0(self, opponent: "AgentSpec") -> Level0Config:
        if self.believed_opponent_level0 and opponent.id in self.believed_opponent_level0:
            return self.believed_opponent_level0[opponent.id]
        return opponent.level0


@dataclass
class ReasoningTrace:
    """Simulated actions of one selection as ``(level, agent, action)`` rows."""

    entries: list = field(default_factory=list)

    def add(self, level: int, agent: int, action: int):
        self.entries.append((int(level), int(agent), int(action)))

    def __len__(self):
        return len(self.entries)

    def to_list(self):
        return [list(e) for e in self.entries]


def _expected_ucb(gp, own_space, own_index, opponents, beta_t, mode, n_samples, rng, max_evals):
    """Expected UCB of every own action under independent opponent strategies."""
    opponents = list(opponents)
    spaces = [s.space for s in opponents]
    spaces.insert(own_index, own_space)
    if sum(s.dim for s in spaces) != gp.dim:
        raise InputError("joint dimension of the spaces does not match the GP")
    n_own = own_space.size
    if mode == "exact":
        supports = [s.support for s in opponents]
        if any(len(sup) == 0 for sup in supports):
            raise InputError("opponent strategy has empty support")
        count = n_own * int(np.prod([len(sup) for sup in supports], dtype=float))
        if count > max_evals:
            raise BudgetError(
                f"exact expectation needs {count} evaluations (> {max_evals}); use monte_carlo"
            )
        grids = np.meshgrid(np.arange(n_own), *supports, indexing="ij")
        idx = [g.ravel() for g in grids]
        own_idx, opp_idx = idx[0], idx[1:]
        opp_idx.insert(own_index, own_idx)
        values = ucb_points(gp, joint_points(spaces, opp_idx), beta_t)
        values = values.reshape((n_own,) + tuple(len(sup) for sup in supports))
        for s, sup in zip(opponents, supports):
            # contract the first remaining opponent axis each time
            values = np.tensordot(values, s.probs[sup], axes=([1], [0]))
        return values
    if mode == "monte_carlo":
        if rng is None or n_samples is None or n_samples < 1:
            raise InputError("monte_carlo mode needs n_samples >= 1 and an rng")
        draws = np.stack([sample_actions(s, rng, n_samples) for s in opponents], axis=1)
        combos, counts = np.unique(draws, axis=0, return_counts=True)
        own_idx = np.repeat(np.arange(n_own), len(combos))
        idx = [np.tile(combos[:, j], n_own) for j in range(len(opponents))]
        idx.insert(own_index, own_idx)
        values = ucb_points(gp, joint_points(spaces, idx), beta_t).reshape(n_own, len(combos))
        return values @ counts / n_samples
    raise InputError(f"unknown mode {mode!r}")


def expected_ucb(gp, own_space, opponent_strategy, beta_t, mode="exact", *, n_samples=None,
                 rng=None, own_index=0, max_evaluations=MAX_EXACT_EVALUATIONS) -> np.ndarray:
    opponents = _as_list(opponent_strategy)
    return _expected_ucb(gp, own_space, own_index, opponents, beta_t, mode, n_samples, rng,
                         max_evaluations)


def _as_list(strategies):
    if isinstance(strategies, MixedStrategy):
        return [strategies]
    return list(strategies)


def level1_select(
    gp: GPPosterior,
    own_space: ActionSpace,
    opponent_strategy: MixedStrategy,
    beta_t: float,
    mode: str = "exact",
    *,
    n_samples: int | None = None,
    rng=None,
    own_index: int = 0,
    agent_id: int | None = None,
):
    """Best response to the expected UCB under the opponent's level-0 strategy."""
    if opponent_strategy is None:
        raise ConfigurationError("level-1 selection needs the opponent's level-0 strategy")
    if mode == "monte_carlo" and n_samples is None:
        n_samples = default_mc_samples(opponent_strategy.space.dim)
    values = expected_ucb(gp, own_space, opponent_strategy, beta_t, mode,
                          n_samples=n_samples, rng=rng, own_index=own_index)
    choice = int(np.argmax(values))
    trace = ReasoningTrace()
    trace.add(1, own_index if agent_id is None else agent_id, choice)
    return choice, trace


def best_response(gp, own_space, others_actions, beta_t, own_index=0) -> int:
    return int(np.argmax(ucb_slice(gp, own_space, others_actions, beta_t, own_index)))


def levelk_select(
    gps,
    spaces,
    level0_strategies,
    k: int,
    betas,
    agent: int = 0,
    mode: str = "exact",
    *,
    n_samples: int | None = None,
    rng=None,
):
    """Level-k action of ``agent`` in a two-agent game, k >= 2.

    ``gps``, ``spaces`` and ``betas`` are indexed by agent (0 or 1);
    ``level0_strategies[j]`` is the level-0 strategy attributed to agent j.
    The level-1 base case is computed for whichever agent the parity of
    ``k`` selects, then best responses alternate up to level k.
    """
    if k < 2:
        raise InputError(f"levelk_select needs k >= 2, got {k}")
    if len(spaces) != 2:
        raise InputError("levelk_select is defined for two agents")
    other = 1 - agent
    base = agent if k % 2 == 1 else other
    base_opp = 1 - base
    if level0_strategies[base_opp] is None:
        raise ConfigurationError(f"no level-0 model for agent {base_opp}")
    if gps[base] is None:
        raise ConfigurationError(f"no GP model for agent {base}")
    current, trace = level1_select(
        gps[base], spaces[base], level0_strategies[base_opp], betas[base], mode,
        n_samples=n_samples, rng=rng, own_index=base,
    )
    who = base
    for level in range(2, k + 1):
        responder = 1 - who
        if gps[responder] is None:
            raise ConfigurationError(f"no GP model for agent {responder}")
        current = best_response(
            gps[responder], spaces[responder], spaces[who].points[current],
            betas[responder], responder,
        )
        trace.add(level, responder, current)
        who = responder
    return current, trace


def r2b2_lite_select(gp, own_space, opponent_strategy, beta_t, rng, own_index: int = 0):
    """Best response to one draw from the opponent strategy (or one draw per opponent)."""
    opponents = _as_list(opponent_strategy)
    sampled = [sample_action(s, rng) for s in opponents]
    others = [s.space.points[i] for s, i in zip(opponents, sampled)]
    choice = best_response(gp, own_space, others, beta_t, own_index)
    if isinstance(opponent_strategy, MixedStrategy):
        return choice, sampled[0]
    return choice, tuple(sampled)


def multiagent_level1_select(
    gp: GPPosterior,
    own_space: ActionSpace,
    opponent_strategies,
    beta_t: float,
    mode: str = "exact",
    *,
    own_index: int = 0,
    n_samples: int | None = None,
    rng=None,
    max_evaluations: int = MAX_EXACT_EVALUATIONS,
) -> int:
    """Best response to the expected UCB over the product of all opponents' strategies.

    ``opponent_strategies`` lists the other agents in agent order.
    """
    opponents = _as_list(opponent_strategies)
    if mode == "monte_carlo" and n_samples is None:
        n_samples = default_mc_samples(sum(s.space.dim for s in opponents))
    values = _expected_ucb(gp, own_space, own_index, opponents, beta_t, mode, n_samples, rng,
                           max_evaluations)
    return int(np.argmax(values))


def multiagent_level2_select(
    gps,
    spaces,
    levels,
    level0_strategies,
    betas,
    own_index: int = 0,
    mode: str = "exact",
    *,
    n_samples: int | None = None,
    rng=None,
    max_evaluations: int = MAX_EXACT_EVALUATIONS,
) -> int:
    """Level-2 action when every other agent reasons at level 0 or 1.

    Level-1 opponents' actions are simulated from their own GPs against
    everyone else's level-0 strategy; the expectation then runs over the
    level-0 opponents only.
    """
    M = len(spaces)
    strategies = list(level0_strategies)
    fixed = {}
    for j in range(M):
        if j == own_index:
            continue
        if levels[j] >= 2:
            raise ConfigurationError(
                f"agent {j} declared level {levels[j]}; multi-agent reasoning supports levels 0 and 1"
            )
        if levels[j] == 1:
            others = [strategies[i] for i in range(M) if i != j]
            if any(s is None for s in others):
                raise ConfigurationError(f"missing level-0 model needed to simulate agent {j}")
            fixed[j] = multiagent_level1_select(
                gps[j], spaces[j], others, betas[j], mode, own_index=j,
                n_samples=n_samples, rng=rng, max_evaluations=max_evaluations,
            )
    opponents = []
    for j in range(M):
        if j == own_index:
            continue
        if j in fixed:
            opponents.append(MixedStrategy.point_mass(spaces[j], fixed[j]))
        elif strategies[j] is None:
            raise ConfigurationError(f"missing level-0 model for agent {j}")
        else:
            opponents.append(strategies[j])
    return multiagent_level1_select(
        gps[own_index], spaces[own_index], opponents, betas[own_index], mode,
        own_index=own_index, n_samples=n_samples, rng=rng, max_evaluations=max_evaluations,
    )
