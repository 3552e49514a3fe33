"""Synthetic repeated games, the simultaneous-move game loop, and regret metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .acquisition import BetaSchedule, c1_constant
from .errors import ConfigurationError, InputError
from .gp import GPPosterior, KernelSpec, joint_points, sample_prior
from .level0 import covariance_trace, make_learner, sample_action
from .reasoning import (
    ReasoningTrace,
    default_mc_samples,
    level1_select,
    levelk_select,
    multiagent_level1_select,
    multiagent_level2_select,
    r2b2_lite_select,
)

GAME_TYPES = {
    "common": "common",
    "common-payoff": "common",
    "commonpayoff": "common",
    "general": "general",
    "general-sum": "general",
    "generalsum": "general",
    "constant": "constant",
    "constant-sum": "constant",
    "constantsum": "constant",
}

TRACE_FORMAT = "r2b2-trace"
TRACE_VERSION = 1
TRACE_FIELDS = ("t", "actions", "noisy_payoffs", "true_payoffs", "regrets", "reasoning",
                "level0_cov_trace")

# stream tags for SeedSequence([master_seed, tag, agent])
_SELECT, _NOISE, _FEATURES, _REASON, _INIT = range(5)


def normalize_game_type(game_type: str) -> str:
    key = str(game_type).lower().replace("_", "-")
    if key not in GAME_TYPES:
        raise InputError(f"unknown game type {game_type!r}")
    return GAME_TYPES[key]


@dataclass(frozen=True, eq=False)
class PayoffTable:
    """Payoffs of every agent over the joint grid; ``values[i]`` is f_i.

    ``prior_means[i]`` and ``prior_scales[i]`` describe the affine map from
    the raw GP draw to f_i: f_i is distributed as a GP with that constant
    mean and kernel variance multiplied by the scale.
    """

    spaces: tuple
    values: np.ndarray
    game_type: str = "general"
    prior_means: tuple | None = None
    prior_scales: tuple | None = None

    @property
    def num_agents(self) -> int:
        return len(self.spaces)

    @property
    def shape(self):
        return tuple(s.size for s in self.spaces)

    def payoff(self, agent: int, joint_index) -> float:
        return float(self.values[agent][tuple(joint_index)])

    def save(self, path):
        extra = {}
        if self.prior_means is not None:
            extra = {"prior_means": np.array(self.prior_means),
                     "prior_scales": np.array(self.prior_scales)}
        np.savez(path, values=self.values, game_type=self.game_type, **extra,
                 **{f"space_{i}": s.points for i, s in enumerate(self.spaces)})

    @classmethod
    def load(cls, path):
        from .gp import ActionSpace

        data = np.load(path)
        n = data["values"].shape[0]
        spaces = tuple(ActionSpace(data[f"space_{i}"]) for i in range(n))
        means = tuple(data["prior_means"]) if "prior_means" in data else None
        scales = tuple(data["prior_scales"]) if "prior_scales" in data else None
        return cls(spaces, data["values"], str(data["game_type"]), means, scales)


def child_seeds(seed, n: int):
    """``n`` child sequences of ``seed`` without advancing any spawn counter."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (k,)) for k in range(n)]


def minmax_scale(f: np.ndarray):
    """Scale into [0, 1]; also returns ``(a, b)`` with scaled = a * f + b."""
    lo, hi = f.min(), f.max()
    if hi - lo <= 0:
        return np.zeros_like(f), (1.0, -float(lo))
    a = 1.0 / (hi - lo)
    return (f - lo) * a, (float(a), -float(lo) * a)


def build_game(game_type, kernel: KernelSpec, spaces, seed) -> PayoffTable:
    """Sample payoff functions from the GP prior and scale them into [0, 1].

    common: f_i = f_1 for all agents; general: independent draws per agent;
    constant (two agents): f_2 = 1 - f_1, taken after scaling f_1.
    """
    kind = normalize_game_type(game_type)
    spaces = tuple(spaces)
    M = len(spaces)
    if M < 2:
        raise InputError("a game needs at least two agents")
    seeds = child_seeds(seed, M)
    if kind == "general":
        scaled = [minmax_scale(sample_prior(kernel, spaces, s)) for s in seeds]
        values = np.stack([f for f, _ in scaled])
        maps = [ab for _, ab in scaled]
    else:
        f1, (a, b) = minmax_scale(sample_prior(kernel, spaces, seeds[0]))
        if kind == "common":
            values = np.stack([f1] * M)
            maps = [(a, b)] * M
        else:
            if M != 2:
                raise InputError("constant-sum games are defined for two agents")
            values = np.stack([f1, 1.0 - f1])
            maps = [(a, b), (-a, 1.0 - b)]
    return PayoffTable(spaces, values, kind,
                       prior_means=tuple(b for _, b in maps),
                       prior_scales=tuple(a * a for a, _ in maps))


@dataclass
class GameTrace:
    """Per-iteration log of a repeated game under perfect monitoring.

    ``regrets`` holds each agent's gap to the global maximum of its own
    payoff table at every iteration.
    """

    actions: np.ndarray
    noisy_payoffs: np.ndarray
    true_payoffs: np.ndarray
    regrets: np.ndarray
    reasoning: list = field(default_factory=list)
    level0_cov_trace: np.ndarray | None = None
    header: dict = field(default_factory=dict)

    def __len__(self):
        return self.actions.shape[0]

    @property
    def num_agents(self) -> int:
        return self.actions.shape[1]

    def to_jsonl(self) -> str:
        head = {"format": TRACE_FORMAT, "version": TRACE_VERSION, "fields": list(TRACE_FIELDS)}
        head.update(self.header)
        lines = [json.dumps(head, sort_keys=False)]
        for t in range(len(self)):
            row = {
                "t": t + 1,
                "actions": [int(a) for a in self.actions[t]],
                "noisy_payoffs": [float(v) for v in self.noisy_payoffs[t]],
                "true_payoffs": [float(v) for v in self.true_payoffs[t]],
                "regrets": [float(v) for v in self.regrets[t]],
                "reasoning": self.reasoning[t] if self.reasoning else [],
                "level0_cov_trace": (
                    [float(v) for v in self.level0_cov_trace[t]]
                    if self.level0_cov_trace is not None else []
                ),
            }
            lines.append(json.dumps(row))
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "GameTrace":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = json.loads(lines[0])
        if head.get("format") != TRACE_FORMAT:
            raise InputError("not a game trace")
        rows = [json.loads(ln) for ln in lines[1:]]
        header = {k: v for k, v in head.items() if k not in ("format", "version", "fields")}
        cov = [r["level0_cov_trace"] for r in rows]
        return cls(
            actions=np.array([r["actions"] for r in rows], dtype=int).reshape(len(rows), -1),
            noisy_payoffs=np.array([r["noisy_payoffs"] for r in rows], dtype=float),
            true_payoffs=np.array([r["true_payoffs"] for r in rows], dtype=float),
            regrets=np.array([r["regrets"] for r in rows], dtype=float),
            reasoning=[r["reasoning"] for r in rows],
            level0_cov_trace=np.array(cov, dtype=float) if cov and cov[0] else None,
            header=header,
        )

    @classmethod
    def load(cls, path) -> "GameTrace":
        with open(path) as fh:
            return cls.from_jsonl(fh.read())


class Arena:
    """State of one repeated game: posteriors, level-0 learners and RNG streams.

    All agents share the full history. Each agent's GP models its own
    payoff; opponents' GPs are reconstructed from the same history, and
    level-0 learners are kept for every strategy any agent declares or
    attributes to another, so each selection depends only on the past and
    the selecting agent's own streams.
    """

    def __init__(self, game: PayoffTable, agents, horizon: int, master_seed: int,
                 delta: float = 0.1, tight_beta: bool = False, default_kernel=None,
                 gp_prior: str = "generating"):
        agents = list(agents)
        self.game = game
        self.agents = agents
        self.horizon = int(horizon)
        self.master_seed = int(master_seed)
        self._validate()
        M = len(agents)
        self.spaces = [a.space for a in agents]
        kernel = default_kernel or KernelSpec()
        self.kernels = [a.kernel or kernel for a in agents]
        means = [0.0] * M
        if gp_prior == "generating" and game.prior_means is not None:
            # the scaled table is an affine image of a draw from the generating GP
            means = list(game.prior_means)
            self.kernels = [
                replace(k, signal_variance=k.signal_variance * game.prior_scales[i])
                for i, k in enumerate(self.kernels)
            ]
        elif gp_prior not in ("generating", "unit"):
            raise ConfigurationError(f"unknown gp_prior {gp_prior!r}")
        dim = sum(s.dim for s in self.spaces)
        self.gps = [GPPosterior.prior(self.kernels[i], dim, a.noise_variance, means[i])
                    for i, a in enumerate(agents)]
        self.schedules = [BetaSchedule(s.size, delta, tight_beta) for s in self.spaces]
        self.select_rng = [self._rng(_SELECT, i) for i in range(M)]
        self.reason_rng = [self._rng(_REASON, i) for i in range(M)]
        self.noise_rng = [self._rng(_NOISE, i) for i in range(M)]
        self.learners = {}
        for j, a in enumerate(agents):
            self._learner(j, a.level0)
        for a in agents:
            if a.level >= 1:
                for j, b in enumerate(agents):
                    if j != a.id:
                        self._learner(j, a.believed_level0(b))
        self.t = 1

    def _rng(self, tag, agent):
        return np.random.default_rng(np.random.SeedSequence([self.master_seed, tag, agent]))

    def _validate(self):
        M = len(self.agents)
        if M != self.game.num_agents:
            raise ConfigurationError(f"game has {self.game.num_agents} agents, roster has {M}")
        for i, a in enumerate(self.agents):
            if a.id != i:
                raise ConfigurationError(f"agent ids must be 0..{M - 1} in order")
            if a.space.size != self.game.spaces[i].size or not np.array_equal(
                a.space.points, self.game.spaces[i].points
            ):
                raise ConfigurationError(f"agent {i}: action space does not match the game")
            if M > 2 and a.level >= 3:
                raise ConfigurationError(
                    f"agent {i}: levels above 2 are unsupported with more than two agents"
                )
            if M > 2 and a.level == 2:
                for j, b in enumerate(self.agents):
                    if j != i and b.level >= 2:
                        raise ConfigurationError(
                            f"agent {i}: level-2 reasoning assumes opponents at levels 0 or 1"
                        )
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")

    def _learner(self, j, config):
        key = (j, config)
        if key not in self.learners:
            self.learners[key] = make_learner(
                config, self.spaces[j], kernel=self.kernels[j], horizon=self.horizon,
                own_index=j,
                seed=np.random.SeedSequence([self.master_seed, _FEATURES, j]),
            )
        return self.learners[key]

    def level0_strategy(self, j, config=None):
        return self._learner(j, config or self.agents[j].level0).strategy

    def believed_strategies(self, i):
        """Level-0 strategies agent ``i`` attributes to every agent (itself included)."""
        a = self.agents[i]
        return [
            self.level0_strategy(j, a.level0 if j == i else a.believed_level0(b))
            for j, b in enumerate(self.agents)
        ]

    def betas(self, t):
        return [s(t) for s in self.schedules]

    def seed_history(self, joint_indices, payoffs):
        """Condition every agent's GP on a pre-game observation."""
        z = joint_points(self.spaces, [np.asarray(k) for k in joint_indices])
        for i in range(len(self.agents)):
            self.gps[i] = self.gps[i].condition(z, payoffs[i])

    def _select_one(self, i, t, betas):
        a = self.agents[i]
        M = len(self.agents)
        trace = ReasoningTrace()
        if a.level == 0:
            return sample_action(self.level0_strategy(i), self.select_rng[i]), trace
        beliefs = self.believed_strategies(i)
        opponents = [beliefs[j] for j in range(M) if j != i]
        n_mc = a.mc_samples or default_mc_samples(sum(s.space.dim for s in opponents))
        rng = self.select_rng[i]
        if a.level == 1 and a.selection == "lite":
            target = opponents[0] if M == 2 else opponents
            choice, sampled = r2b2_lite_select(self.gps[i], a.space, target, betas[i], rng, i)
            sampled = [sampled] if M == 2 else list(sampled)
            others = [j for j in range(M) if j != i]
            for j, s in zip(others, sampled):
                trace.add(0, j, s)
            trace.add(1, i, choice)
            return choice, trace
        if a.level == 1:
            if M == 2:
                return level1_select(self.gps[i], a.space, opponents[0], betas[i], a.mode,
                                     n_samples=n_mc, rng=rng, own_index=i)
            choice = multiagent_level1_select(self.gps[i], a.space, opponents, betas[i], a.mode,
                                              own_index=i, n_samples=n_mc, rng=rng)
            trace.add(1, i, choice)
            return choice, trace
        if M == 2:
            return levelk_select(self.gps, self.spaces, beliefs, a.level, betas, agent=i,
                                 mode=a.mode, n_samples=n_mc, rng=self.reason_rng[i])
        levels = [b.level for b in self.agents]
        choice = multiagent_level2_select(self.gps, self.spaces, levels, beliefs, betas,
                                          own_index=i, mode=a.mode, n_samples=n_mc,
                                          rng=self.reason_rng[i])
        trace.add(2, i, choice)
        return choice, trace

    def select(self):
        """Simultaneous choices for the current round, from history up to t-1."""
        betas = self.betas(self.t)
        picks = [self._select_one(i, self.t, betas) for i in range(len(self.agents))]
        return [p[0] for p in picks], [p[1] for p in picks]

    def draw_noise(self):
        return [
            float(self.noise_rng[i].standard_normal() * np.sqrt(a.noise_variance))
            for i, a in enumerate(self.agents)
        ]

    def observe(self, actions, noisy):
        """Apply the round's joint action and observed payoffs, then advance t."""
        actions = [int(a) for a in actions]
        z = joint_points(self.spaces, actions)
        for i in range(len(self.agents)):
            self.gps[i] = self.gps[i].condition(z, noisy[i])
        betas_next = self.betas(self.t + 1)
        for (j, _), learner in self.learners.items():
            others = [self.spaces[m].points[actions[m]] for m in range(len(actions)) if m != j]
            learner.observe(gp=self.gps[j], others_actions=others, beta_next=betas_next[j],
                            own_action=actions[j], payoff=noisy[j])
        self.t += 1


def run_repeated_game(game: PayoffTable, agents, T: int, master_seed: int, *, delta: float = 0.1,
                      tight_beta: bool = False, init_actions=None, kernel=None,
                      gp_prior: str = "generating", config_digest: str = "") -> GameTrace:
    """Play ``T`` simultaneous rounds and log everything.

    ``gp_prior="generating"`` gives every agent the GP the table was drawn
    from (mean and variance carried through the [0, 1] scaling);
    ``"unit"`` uses ``kernel`` with zero mean as is.
    """
    arena = Arena(game, agents, T, master_seed, delta, tight_beta, kernel, gp_prior)
    M = game.num_agents
    init_actions = [tuple(int(i) for i in a) for a in (init_actions or [])]
    init_rng = [arena._rng(_INIT, i) for i in range(M)]
    for joint in init_actions:
        obs = [
            game.payoff(i, joint) + float(init_rng[i].standard_normal() * np.sqrt(a.noise_variance))
            for i, a in enumerate(agents)
        ]
        arena.seed_history(joint, obs)
    maxima = [float(game.values[i].max()) for i in range(M)]
    actions = np.zeros((T, M), dtype=int)
    noisy = np.zeros((T, M))
    true = np.zeros((T, M))
    cov = np.zeros((T, M))
    reasoning = []
    for t in range(T):
        cov[t] = [covariance_trace(arena.level0_strategy(i)) for i in range(M)]
        acts, traces = arena.select()
        eps = arena.draw_noise()
        f = [game.payoff(i, acts) for i in range(M)]
        y = [f[i] + eps[i] for i in range(M)]
        arena.observe(acts, y)
        actions[t], true[t], noisy[t] = acts, f, y
        reasoning.append([tr.to_list() for tr in traces])
    header = {
        "master_seed": int(master_seed),
        "config_digest": config_digest,
        "num_agents": M,
        "horizon": int(T),
        "delta": float(delta),
        "gp_prior": gp_prior,
        "init_actions": [list(a) for a in init_actions],
        "payoff_max": maxima,
        "c1": [c1_constant(a.noise_variance) for a in agents],
    }
    regrets = np.array(maxima)[None, :] - true
    return GameTrace(actions, noisy, true, regrets, reasoning, cov, header)


def replay_audit(trace: GameTrace, game: PayoffTable, agents, *, delta=None, tight_beta=False,
                 kernel=None, gp_prior=None) -> list:
    """Recompute every logged selection from the logged history alone.

    The arena is fed the recorded actions and noisy payoffs instead of its
    own; returns a list of ``(t, agent, logged, recomputed)`` mismatches.
    """
    h = trace.header
    T = len(trace)
    arena = Arena(game, agents, h.get("horizon", T), h["master_seed"],
                  h.get("delta", 0.1) if delta is None else delta, tight_beta, kernel,
                  gp_prior or h.get("gp_prior", "generating"))
    M = game.num_agents
    init_rng = [arena._rng(_INIT, i) for i in range(M)]
    for joint in h.get("init_actions", []):
        obs = [
            game.payoff(i, joint) + float(init_rng[i].standard_normal() * np.sqrt(a.noise_variance))
            for i, a in enumerate(agents)
        ]
        arena.seed_history(tuple(joint), obs)
    mismatches = []
    for t in range(T):
        acts, _ = arena.select()
        for i in range(M):
            if acts[i] != trace.actions[t, i]:
                mismatches.append((t + 1, i, int(trace.actions[t, i]), int(acts[i])))
        arena.observe(trace.actions[t], trace.noisy_payoffs[t])
    return mismatches


# ---------------------------------------------------------------------------
# regret
# ---------------------------------------------------------------------------


def _own_action_payoffs(trace: GameTrace, game: PayoffTable, agent: int, up_to: int):
    """``(T', |X_agent|)`` payoffs of every own action against the realized others."""
    vals = np.moveaxis(game.values[agent], agent, 0)
    others = [trace.actions[:up_to, j] for j in range(game.num_agents) if j != agent]
    return vals[(slice(None),) + tuple(others)].T


def external_regret(trace: GameTrace, game: PayoffTable, agent: int, up_to: int | None = None) -> float:
    """Regret against the best fixed own action in hindsight over the first ``up_to`` rounds."""
    up_to = len(trace) if up_to is None else int(up_to)
    if not 0 <= up_to <= len(trace):
        raise InputError("up_to exceeds the trace length")
    if up_to == 0:
        return 0.0
    table = _own_action_payoffs(trace, game, agent, up_to)
    realized = table[np.arange(up_to), trace.actions[:up_to, agent]]
    return float(table.sum(axis=0).max() - realized.sum())


def external_regret_curve(trace: GameTrace, game: PayoffTable, agent: int) -> np.ndarray:
    """External regret for every prefix, with the hindsight action recomputed per prefix."""
    T = len(trace)
    table = _own_action_payoffs(trace, game, agent, T)
    realized = table[np.arange(T), trace.actions[:, agent]]
    return np.cumsum(table, axis=0).max(axis=1) - np.cumsum(realized)


def mean_regret(trace: GameTrace, game: PayoffTable, agent: int, up_to: int | None = None) -> float:
    up_to = len(trace) if up_to is None else int(up_to)
    if not 1 <= up_to <= len(trace):
        raise InputError("up_to must be within 1..len(trace)")
    fmax = game.values[agent].max()
    idx = tuple(trace.actions[:up_to, j] for j in range(game.num_agents))
    return float(np.mean(fmax - game.values[agent][idx]))


def mean_regret_curve(trace: GameTrace, agent: int) -> np.ndarray:
    gaps = trace.regrets[:, agent]
    return np.cumsum(gaps) / np.arange(1, len(gaps) + 1)
