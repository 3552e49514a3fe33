"""Declarative experiments: config files, seeded replications, aggregation, output.

Seed derivation (all via ``numpy.random.SeedSequence``):

* payoff draw ``g``: ``SeedSequence([master_seed, g])``
* initial joint actions of replication ``(g, i)``: ``SeedSequence([master_seed, g, i, 0])``
* game-loop master seed of replication ``(g, i)``: first uint64 of
  ``SeedSequence([master_seed, g, i, 1]).generate_state(1, uint64)``

so any single replication can be reproduced without running the others.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigurationError, InputError, NumericalError
from .game import (
    GameTrace,
    PayoffTable,
    build_game,
    external_regret_curve,
    mean_regret_curve,
    normalize_game_type,
    run_repeated_game,
)
from .gp import ActionSpace, KernelSpec
from .level0 import Level0Config
from .reasoning import AgentSpec

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
METRICS = ("mean-regret", "external-regret")
FAILURE_THRESHOLD = 0.1


@dataclass
class AgentConfig:
    level: int = 0
    level0: dict = field(default_factory=lambda: {"kind": "gpmw"})
    noise_variance: float = 0.01
    selection: str = "r2b2"
    mode: str = "exact"
    mc_samples: int | None = None
    believed_opponent_level0: dict | None = None


@dataclass
class ExperimentConfig:
    game_type: str = "general-sum"
    points_per_axis: list = field(default_factory=lambda: [20, 20])
    dims: list = field(default_factory=lambda: [1, 1])
    kernel: dict = field(default_factory=lambda: {"family": "se", "length_scale": 0.1,
                                                  "signal_variance": 1.0})
    horizon: int = 150
    num_function_samples: int = 10
    num_inits: int = 5
    init_size: int = 1
    delta: float = 0.1
    tight_beta: bool = False
    gp_prior: str = "generating"
    agents: list = field(default_factory=lambda: [AgentConfig(level=1), AgentConfig(level=0)])
    metric: str = "mean-regret"
    metric_agent: int = 0
    output: dict = field(default_factory=lambda: {"path": "results.csv", "format": "csv",
                                                  "trace_dir": None})
    master_seed: int = 0
    schema_version: int = SCHEMA_VERSION

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        return {"schema_version": d.pop("schema_version"), **d}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("config: expected a mapping at the top level")
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"{sorted(unknown)[0]}: unknown field")
        agents = data.pop("agents", None)
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigurationError(f"config: {exc}") from None
        if agents is not None:
            if not isinstance(agents, list):
                raise ConfigurationError("agents: expected a list")
            parsed = []
            for n, a in enumerate(agents):
                if not isinstance(a, dict):
                    raise ConfigurationError(f"agents[{n}]: expected a mapping")
                bad = set(a) - set(AgentConfig.__dataclass_fields__)
                if bad:
                    raise ConfigurationError(f"agents[{n}].{sorted(bad)[0]}: unknown field")
                try:
                    parsed.append(AgentConfig(**a))
                except TypeError as exc:
                    raise ConfigurationError(f"agents[{n}]: {exc}") from None
            cfg.agents = parsed
        cfg.validate()
        return cfg

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def digest(self) -> str:
        d = self.to_dict()
        try:
            # alias spellings of the game type describe the same run
            d["game_type"] = normalize_game_type(d["game_type"])
        except InputError:
            pass
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # -- validation --------------------------------------------------------

    def validate(self):
        def need(cond, name, msg):
            if not cond:
                raise ConfigurationError(f"{name}: {msg}")

        need(self.schema_version == SCHEMA_VERSION, "schema_version",
             f"unsupported version (expected {SCHEMA_VERSION})")
        try:
            self.game_type = normalize_game_type(self.game_type)
        except InputError:
            raise ConfigurationError(
                "game_type: must be one of common-payoff, general-sum, constant-sum"
            ) from None
        M = len(self.agents)
        need(M >= 2, "agents", "at least two agents required")
        need(len(self.points_per_axis) == M, "points_per_axis", "one entry per agent")
        need(len(self.dims) == M, "dims", "one entry per agent")
        for n, (p, d) in enumerate(zip(self.points_per_axis, self.dims)):
            need(isinstance(p, int) and p >= 1, f"points_per_axis[{n}]", "positive integer")
            need(isinstance(d, int) and d >= 1, f"dims[{n}]", "positive integer")
        need(0.0 < float(self.delta) < 1.0, "delta", "must lie in (0, 1)")
        need(int(self.horizon) >= 1, "horizon", "must be >= 1")
        need(int(self.num_function_samples) >= 1, "num_function_samples", "must be >= 1")
        need(int(self.num_inits) >= 1, "num_inits", "must be >= 1")
        need(int(self.init_size) >= 0, "init_size", "must be >= 0")
        need(self.gp_prior in ("generating", "unit"), "gp_prior", "generating or unit")
        need(self.metric in METRICS, "metric", f"one of {', '.join(METRICS)}")
        need(0 <= self.metric_agent < M, "metric_agent", "must index an agent")
        need(self.output.get("format", "csv") in ("csv", "json"), "output.format", "csv or json")
        need(isinstance(self.master_seed, int) and 0 <= self.master_seed < 2**64,
             "master_seed", "unsigned 64-bit integer")
        try:
            self.kernel_spec()
        except InputError as exc:
            raise ConfigurationError(f"kernel: {exc}") from None
        for n, a in enumerate(self.agents):
            name = f"agents[{n}]"
            need(a.level >= 0, f"{name}.level", "must be >= 0")
            need(a.noise_variance >= 0, f"{name}.noise_variance", "must be >= 0")
            need(a.mc_samples is None or a.mc_samples >= 1, f"{name}.mc_samples", "must be >= 1")
            if M > 2:
                need(a.level <= 2, f"{name}.level", "at most 2 with more than two agents")
            try:
                self._level0(a.level0)
                for k, v in (a.believed_opponent_level0 or {}).items():
                    need(0 <= int(k) < M and int(k) != n,
                         f"{name}.believed_opponent_level0", f"{k} is not an opponent")
                    self._level0(v)
            except (InputError, TypeError) as exc:
                raise ConfigurationError(f"{name}.level0: {exc}") from None
        try:
            self.agent_specs()
        except ConfigurationError as exc:
            raise ConfigurationError(f"agents: {exc}") from None
        if self.game_type == "constant":
            need(M == 2, "game_type", "constant-sum games need exactly two agents")

    # -- builders ----------------------------------------------------------

    @staticmethod
    def _level0(d) -> Level0Config:
        if isinstance(d, str):
            d = {"kind": d}
        return Level0Config(**d)

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(**self.kernel)

    def spaces(self):
        return [ActionSpace.grid(p, d) for p, d in zip(self.points_per_axis, self.dims)]

    def agent_specs(self):
        spaces = self.spaces()
        specs = []
        for n, a in enumerate(self.agents):
            believed = None
            if a.believed_opponent_level0:
                believed = {int(k): self._level0(v) for k, v in a.believed_opponent_level0.items()}
            specs.append(AgentSpec(
                id=n, space=spaces[n], level=a.level, level0=self._level0(a.level0),
                noise_variance=a.noise_variance, believed_opponent_level0=believed,
                mc_samples=a.mc_samples, selection=a.selection, mode=a.mode,
            ))
        return specs


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"config: not valid YAML ({exc})") from None
    return ExperimentConfig.from_dict(data or {})


def save_config(config: ExperimentConfig, path):
    Path(path).write_text(config.to_yaml())


def paper_default_config() -> ExperimentConfig:
    """Full-size synthetic setting: 100 x 100 grid, T = 150, 10 draws x 5 inits."""
    return ExperimentConfig(points_per_axis=[100, 100], horizon=150, num_function_samples=10,
                            num_inits=5)


# ---------------------------------------------------------------------------
# replications
# ---------------------------------------------------------------------------


def replication_seed(master_seed: int, draw: int, init: int) -> int:
    ss = np.random.SeedSequence([master_seed, draw, init, 1])
    return int(ss.generate_state(1, np.uint64)[0])


def init_joint_actions(config: ExperimentConfig, draw: int, init: int):
    rng = np.random.default_rng(np.random.SeedSequence([config.master_seed, draw, init, 0]))
    sizes = [s.size for s in config.spaces()]
    return [tuple(int(rng.integers(n)) for n in sizes) for _ in range(config.init_size)]


def build_draw(config: ExperimentConfig, draw: int) -> PayoffTable:
    seed = np.random.SeedSequence([config.master_seed, draw])
    return build_game(config.game_type, config.kernel_spec(), config.spaces(), seed)


def run_replication(config: ExperimentConfig, draw: int, init: int, game=None) -> GameTrace:
    game = game if game is not None else build_draw(config, draw)
    trace = run_repeated_game(
        game, config.agent_specs(), config.horizon, replication_seed(config.master_seed, draw, init),
        delta=config.delta, tight_beta=config.tight_beta,
        init_actions=init_joint_actions(config, draw, init), kernel=config.kernel_spec(),
        gp_prior=config.gp_prior, config_digest=config.digest(),
    )
    trace.header["draw"] = draw
    trace.header["init"] = init
    return trace


def metric_curve(trace: GameTrace, game: PayoffTable | None, metric: str, agent: int) -> np.ndarray:
    """Per-iteration metric: running mean regret, or external regret divided by T'."""
    if metric == "mean-regret":
        return mean_regret_curve(trace, agent)
    if metric == "external-regret":
        if game is None:
            raise InputError("external regret needs the payoff table")
        return external_regret_curve(trace, game, agent) / np.arange(1, len(trace) + 1)
    raise InputError(f"unknown metric {metric!r}")


def _replication_job(args):
    cfg_dict, draw, init, trace_dir, metric = args
    config = ExperimentConfig.from_dict(cfg_dict)
    try:
        game = build_draw(config, draw)
        trace = run_replication(config, draw, init, game)
    except NumericalError as exc:
        return draw, init, None, str(exc)
    if trace_dir is not None:
        trace.save(Path(trace_dir) / f"draw{draw:03d}_init{init:03d}.jsonl")
        if init == 0:
            game.save(Path(trace_dir) / f"game_draw{draw:03d}.npz")
    return draw, init, metric_curve(trace, game, metric, config.metric_agent), None


@dataclass
class AggregateResult:
    """Per-iteration mean and standard error of a metric across replications."""

    iterations: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray | None
    n_replications: int
    curves: np.ndarray
    metric: str = "mean-regret"
    n_failed: int = 0

    @property
    def failure_fraction(self) -> float:
        total = self.n_replications + self.n_failed
        return self.n_failed / total if total else 0.0


def aggregate_curves(curves, metric="mean-regret", n_failed=0) -> AggregateResult:
    curves = np.asarray(curves, dtype=float)
    if curves.ndim != 2 or curves.shape[0] == 0:
        raise InputError("no successful replications to aggregate")
    n = curves.shape[0]
    mean = curves.mean(axis=0)
    stderr = curves.std(axis=0, ddof=1) / math.sqrt(n) if n >= 2 else None
    iters = np.arange(1, curves.shape[1] + 1)
    return AggregateResult(iters, mean, stderr, n, curves, metric, n_failed)


def run_experiment(config: ExperimentConfig, workers: int = 1, trace_dir=None,
                   metric: str | None = None) -> AggregateResult:
    """Run every (draw, init) replication and aggregate in replication order."""
    metric = metric or config.metric
    if trace_dir is not None:
        os.makedirs(trace_dir, exist_ok=True)
        save_config(config, Path(trace_dir) / "config.yaml")
    jobs = [
        (config.to_dict(), g, i, None if trace_dir is None else str(trace_dir), metric)
        for g in range(config.num_function_samples)
        for i in range(config.num_inits)
    ]
    if workers <= 1:
        results = [_replication_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replication_job, jobs))
    results.sort(key=lambda r: (r[0], r[1]))
    curves, failed = [], 0
    for g, i, curve, err in results:
        if curve is None:
            log.warning("replication draw=%d init=%d failed: %s", g, i, err)
            failed += 1
        else:
            curves.append(curve)
    return aggregate_curves(curves, metric, failed)


def aggregate_trace_dir(trace_dir, metric: str = "mean-regret", agent: int | None = None):
    """Recompute the aggregate from persisted traces (and payoff tables)."""
    trace_dir = Path(trace_dir)
    cfg_path = trace_dir / "config.yaml"
    if agent is None:
        agent = load_config(cfg_path).metric_agent if cfg_path.exists() else 0
    paths = sorted(trace_dir.glob("draw*_init*.jsonl"))
    if not paths:
        raise FileNotFoundError(f"no traces in {trace_dir}")
    games = {}
    curves = []
    for p in paths:
        trace = GameTrace.load(p)
        game = None
        if metric == "external-regret":
            d = trace.header["draw"]
            if d not in games:
                games[d] = PayoffTable.load(trace_dir / f"game_draw{d:03d}.npz")
            game = games[d]
        curves.append(metric_curve(trace, game, metric, agent))
    return aggregate_curves(curves, metric)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return format(float(x), ".17g")


def emit_results(result: AggregateResult, fmt: str, path) -> Path:
    """Write ``iteration, metric_mean, metric_stderr, n_replications`` rows.

    The stderr column is omitted when fewer than two replications exist.
    """
    if len(result.mean) == 0:
        raise InputError("empty result")
    path = Path(path)
    with_se = result.stderr is not None
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            head = ["iteration", "metric_mean"] + (["metric_stderr"] if with_se else [])
            w.writerow(head + ["n_replications"])
            for k, it in enumerate(result.iterations):
                row = [int(it), _fmt(result.mean[k])]
                if with_se:
                    row.append(_fmt(result.stderr[k]))
                w.writerow(row + [result.n_replications])
    elif fmt == "json":
        rows = []
        for k, it in enumerate(result.iterations):
            row = {"iteration": int(it), "metric_mean": _fmt(result.mean[k])}
            if with_se:
                row["metric_stderr"] = _fmt(result.stderr[k])
            row["n_replications"] = result.n_replications
            rows.append(row)
        doc = {"metric": result.metric, "rows": rows}
        # numbers are written as 17-significant-digit literals
        text = json.dumps(doc, indent=1)
        for key in ("metric_mean", "metric_stderr"):
            text = _unquote_numbers(text, key)
        path.write_text(text + "\n")
    else:
        raise InputError(f"unknown format {fmt!r}")
    return path


def _unquote_numbers(text: str, key: str) -> str:
    return re.sub(rf'("{key}": )"([^"]*)"', r"\1\2", text)


def read_results(path) -> dict:
    """Parse a CSV or JSON emission back into column arrays."""
    path = Path(path)
    if path.suffix == ".json":
        rows = json.loads(path.read_text())["rows"]
    else:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    cols = {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}
    return cols
