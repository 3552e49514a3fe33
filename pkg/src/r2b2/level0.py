"""Level-0 mixed strategies: random search, EXP3 on random features, GP-MW.

Each strategy exposes the current :class:`MixedStrategy` and is advanced with
what was observed in the last round. Any object with a ``strategy``
attribute and an ``observe`` method can stand in as a level-0 learner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .acquisition import ucb_slice
from .errors import InputError
from .gp import ActionSpace, GPPosterior, KernelSpec


@dataclass(frozen=True, eq=False)
class MixedStrategy:
    space: ActionSpace
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (self.space.size,):
            raise InputError(f"expected {self.space.size} probabilities, got shape {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise InputError("probabilities must be finite and nonnegative")
        total = p.sum()
        if total <= 0:
            raise InputError("probabilities are all zero")
        if abs(total - 1.0) > 1e-12:
            p = p / total
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_log_weights(cls, space, log_weights) -> "MixedStrategy":
        lw = np.asarray(log_weights, dtype=float)
        return cls(space, np.exp(lw - logsumexp(lw)))

    @classmethod
    def point_mass(cls, space, index: int) -> "MixedStrategy":
        p = np.zeros(space.size)
        p[index] = 1.0
        return cls(space, p)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)


def uniform_strategy(space: ActionSpace) -> MixedStrategy:
    if space is None or space.size == 0:
        raise InputError("empty action space")
    return MixedStrategy(space, np.full(space.size, 1.0 / space.size))


def sample_action(strategy: MixedStrategy, rng: np.random.Generator) -> int:
    p = strategy.probs
    if p.sum() <= 0:
        raise InputError("cannot sample from an all-zero distribution")
    # inverse-CDF draw keeps one uniform per call, so streams stay aligned
    u = rng.random()
    cdf = np.cumsum(p)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    idx = min(idx, p.size - 1)
    while p[idx] == 0:  # guard against landing on a zero-width cell at the top
        idx -= 1
    return idx


def sample_actions(strategy: MixedStrategy, rng: np.random.Generator, n: int) -> np.ndarray:
    cdf = np.cumsum(strategy.probs)
    idx = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    return np.minimum(idx, strategy.space.size - 1)


def covariance_trace(strategy: MixedStrategy) -> float:
    """Sum over coordinates of the variance of an action drawn from ``strategy``."""
    X = strategy.space.points
    p = strategy.probs
    mean = p @ X
    return float(max(p @ np.sum((X - mean) ** 2, axis=1), 0.0))


# ---------------------------------------------------------------------------
# random features
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RandomFeatureMap:
    """``phi_i(x) = sqrt(2/d') cos(<w_i, x> + b_i)`` for SE spectral draws ``w_i``."""

    frequencies: np.ndarray
    phases: np.ndarray

    @property
    def num_features(self) -> int:
        return self.phases.size

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        scale = math.sqrt(2.0 / self.num_features)
        return scale * np.cos(X @ self.frequencies.T + self.phases)


def build_feature_map(spec: KernelSpec, dim: int, num_features: int = 5, seed=None) -> RandomFeatureMap:
    if spec.family != "se":
        raise InputError("spectral sampling is implemented for the SE kernel only")
    if num_features < 1:
        raise InputError("num_features must be >= 1")
    rng = np.random.default_rng(seed)
    # features approximate k / signal_variance; the bandit only needs the shape
    W = rng.normal(0.0, 1.0 / spec.length_scale, size=(num_features, dim))
    b = rng.uniform(0.0, 2.0 * np.pi, size=num_features)
    return RandomFeatureMap(W, b)


# ---------------------------------------------------------------------------
# EXP3 for adversarial linear bandits
# ---------------------------------------------------------------------------


def default_exploration(num_actions: int, t: int) -> float:
    if num_actions < 2:
        return 1.0
    return min(1.0, math.sqrt(num_actions * math.log(num_actions) / t))


@dataclass(frozen=True, eq=False)
class Exp3State:
    """Exponential weights over actions with linear loss estimates.

    ``t`` is the index of the round the current distribution is for.
    """

    space: ActionSpace
    features: RandomFeatureMap
    log_weights: np.ndarray
    learning_rate: float
    t: int = 1
    explore: bool = True
    phi: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.phi is None:
            object.__setattr__(self, "phi", self.features(self.space.points))

    @classmethod
    def create(cls, space, features, horizon: int, learning_rate: float | None = None, explore=True):
        if learning_rate is None:
            n = space.size
            learning_rate = math.sqrt(math.log(max(n, 2)) / (features.num_features * horizon))
        return cls(space, features, np.zeros(space.size), float(learning_rate), 1, explore)

    def strategy(self) -> MixedStrategy:
        q = MixedStrategy.from_log_weights(self.space, self.log_weights).probs
        if self.explore:
            gamma = default_exploration(self.space.size, self.t)
            q = (1.0 - gamma) * q + gamma / self.space.size
        return MixedStrategy(self.space, q)


def exp3_step(state: Exp3State, observed_payoff: float, played_index: int, clamp: bool = False):
    """One EXP3 round; payoffs live in [0, 1] and are converted to losses."""
    if not 0.0 <= observed_payoff <= 1.0:
        if not clamp:
            raise InputError(f"payoff {observed_payoff} outside [0, 1]")
        observed_payoff = min(max(observed_payoff, 0.0), 1.0)
    loss = 1.0 - observed_payoff
    p = state.strategy().probs
    phi = state.phi
    Q = phi.T @ (p[:, None] * phi)
    theta = np.linalg.pinv(Q, hermitian=True) @ phi[played_index] * loss
    est = phi @ theta
    lw = state.log_weights - state.learning_rate * est
    lw = lw - lw.max()
    nxt = replace(state, log_weights=lw, t=state.t + 1, phi=phi)
    return nxt, nxt.strategy()


# ---------------------------------------------------------------------------
# GP-MW
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GpMwState:
    """Multiplicative weights fed with clipped GP-UCB losses.

    With ``horizon`` set the learning rate is ``sqrt(8 ln|X| / horizon)``;
    without it the anytime rate ``sqrt(8 ln|X| / t)`` is used.
    An explicit ``learning_rate`` overrides both.
    """

    space: ActionSpace
    log_weights: np.ndarray
    learning_rate: float | None = None
    horizon: int | None = None
    t: int = 1

    @classmethod
    def create(cls, space, horizon=None, learning_rate=None):
        return cls(space, np.zeros(space.size), learning_rate, horizon, 1)

    @property
    def eta(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        log_n = math.log(max(self.space.size, 2))
        return math.sqrt(8.0 * log_n / (self.horizon if self.horizon else self.t))

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def strategy(self) -> MixedStrategy:
        return MixedStrategy.from_log_weights(self.space, self.log_weights)


def gpmw_losses(gp, space, opponents_action, beta_t, own_index=0) -> np.ndarray:
    values = ucb_slice(gp, space, opponents_action, beta_t, own_index)
    return 1.0 - np.clip(values, 0.0, 1.0)


def gpmw_update(
    state: GpMwState,
    gp: GPPosterior,
    opponents_action,
    beta_t: float,
    own_index: int = 0,
):
    """Multiplicative update with losses ``1 - clip(UCB, 0, 1)`` over the own domain."""
    return gpmw_apply_losses(state, gpmw_losses(gp, state.space, opponents_action, beta_t, own_index))


def gpmw_apply_losses(state: GpMwState, losses):
    lw = state.log_weights - state.eta * np.asarray(losses, dtype=float)
    lw = lw - lw.max()
    nxt = replace(state, log_weights=lw, t=state.t + 1)
    return nxt, nxt.strategy()


# ---------------------------------------------------------------------------
# learner objects used by the game loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Level0Config:
    """Declared level-0 strategy: ``kind`` in {"random", "exp3", "gpmw"}.

    ``learning_rate`` of None selects the horizon-tuned default;
    ``anytime`` switches GP-MW to the anytime rate.
    """

    kind: str = "gpmw"
    learning_rate: float | None = None
    anytime: bool = False
    num_features: int = 5
    exploration: bool = True

    def __post_init__(self):
        if self.kind not in ("random", "exp3", "gpmw"):
            raise InputError(f"unknown level-0 strategy {self.kind!r}")


class RandomSearch:
    def __init__(self, space):
        self.strategy = uniform_strategy(space)

    def observe(self, **_):
        pass


class Exp3Learner:
    def __init__(self, space, kernel, horizon, config: Level0Config, seed):
        fmap = build_feature_map(kernel, space.dim, config.num_features, seed)
        self.state = Exp3State.create(space, fmap, horizon, config.learning_rate, config.exploration)
        self.strategy = self.state.strategy()

    def observe(self, *, own_action, payoff, **_):
        self.state, self.strategy = exp3_step(self.state, payoff, own_action, clamp=True)


class GpMwLearner:
    def __init__(self, space, horizon, config: Level0Config, own_index):
        self.own_index = own_index
        self.state = GpMwState.create(space, None if config.anytime else horizon, config.learning_rate)
        self.strategy = self.state.strategy()

    def observe(self, *, gp, others_actions, beta_next, **_):
        self.state, self.strategy = gpmw_update(
            self.state, gp, others_actions, beta_next, self.own_index
        )


def make_learner(config: Level0Config, space, *, kernel, horizon, own_index, seed):
    if config.kind == "random":
        return RandomSearch(space)
    if config.kind == "exp3":
        return Exp3Learner(space, kernel, horizon, config, seed)
    return GpMwLearner(space, horizon, config, own_index)
