"""Acceptance suite: one test (or one test per game type) per criterion.

Each test records a PASS/FAIL line that the terminal summary prints at the
end of the run.
"""

import functools
import math
import os

import numpy as np
import pytest

from conftest import brute_level1, dense_posterior, random_posterior, ucb_scalar
from r2b2.experiment import (
    AgentConfig,
    ExperimentConfig,
    build_draw,
    emit_results,
    run_experiment,
    run_replication,
)
from r2b2.game import Arena, external_regret_curve
from r2b2.gp import ActionSpace, GPPosterior, KernelSpec, joint_grid, joint_points
from r2b2.level0 import GpMwState, MixedStrategy, gpmw_apply_losses, gpmw_update
from r2b2.reasoning import (
    level1_select,
    levelk_select,
    multiagent_level1_select,
    multiagent_level2_select,
)

RESULTS = {}
GAME_TYPES = ("common", "general", "constant")
WORKERS = max(1, min(4, os.cpu_count() or 1))


def report(key, ok, detail):
    line = f"criterion {key}: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULTS[key] = line
    print(line)
    assert ok, line


def _random_strategy(rng, space):
    return MixedStrategy(space, rng.random(space.size))


# -- 1 ---------------------------------------------------------------------


def test_criterion_1_posterior_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        dims = rng.integers(1, 3, size=2)
        spaces = [ActionSpace.random(int(rng.integers(3, 15)), int(d), rng) for d in dims]
        kernel = KernelSpec("se", float(rng.uniform(0.05, 0.5)), float(rng.uniform(0.5, 2.0)))
        noise = float(rng.uniform(1e-3, 0.1))
        n = int(rng.integers(1, 51))
        idx = [rng.integers(s.size, size=n) for s in spaces]
        X = joint_points(spaces, idx)
        y = rng.normal(size=n)
        gp = GPPosterior.prior(kernel, X.shape[1], noise)
        for x, v in zip(X, y):
            gp = gp.condition(x, v)
        Z = joint_grid(spaces)
        m, v = gp.predict(Z)
        mo, vo = dense_posterior(kernel, X, y, noise + gp.jitter, Z)
        worst = max(worst, np.abs(m - mo).max(), np.abs(v - vo).max())
    report("1", worst <= 1e-8, f"max abs error {worst:.2e} over 200 histories")


# -- 2 and 3 -----------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def final_regret(game_type, role):
    first = {
        "L0": AgentConfig(level=0),
        "L1": AgentConfig(level=1),
        "lite": AgentConfig(level=1, selection="lite"),
    }[role]
    cfg = ExperimentConfig(game_type=game_type, points_per_axis=[20, 20], horizon=150,
                           num_function_samples=10, num_inits=3, delta=0.1,
                           agents=[first, AgentConfig(level=0)])
    res = run_experiment(cfg, workers=WORKERS)
    return float(res.mean[-1]), float(res.stderr[-1])


@pytest.mark.slow
@pytest.mark.parametrize("game_type", GAME_TYPES)
def test_criterion_2_level1_beats_level0(game_type):
    m0, s0 = final_regret(game_type, "L0")
    m1, s1 = final_regret(game_type, "L1")
    pooled = math.hypot(s0, s1)
    report(f"2[{game_type}]", m0 - m1 > pooled,
           f"L0 {m0:.4f}+-{s0:.4f}, L1 {m1:.4f}+-{s1:.4f}, gap {m0 - m1:.4f} vs pooled SE {pooled:.4f}")


@pytest.mark.slow
@pytest.mark.parametrize("game_type", GAME_TYPES)
def test_criterion_3_lite_sandwich(game_type):
    m0, s0 = final_regret(game_type, "L0")
    m1, s1 = final_regret(game_type, "L1")
    ml, sl = final_regret(game_type, "lite")
    lo, hi = m1 - math.hypot(sl, s1), m0 + math.hypot(sl, s0)
    report(f"3[{game_type}]", lo <= ml <= hi,
           f"lite {ml:.4f}+-{sl:.4f} within [{lo:.4f}, {hi:.4f}] (L1 {m1:.4f}, L0 {m0:.4f})")


# -- 4 -----------------------------------------------------------------------


def test_criterion_4_levelk_oracle():
    rng = np.random.default_rng(4)
    S = ActionSpace.grid(5)
    spaces = [S, S]
    agree = 0
    for _ in range(100):
        gps = [random_posterior(rng, spaces, int(rng.integers(1, 10))) for _ in range(2)]
        strategies = [_random_strategy(rng, S), _random_strategy(rng, S)]
        betas = [float(rng.uniform(0.5, 6)), float(rng.uniform(0.5, 6))]
        got, _ = levelk_select(gps, spaces, strategies, 2, betas, agent=0)
        # stage one: opponent's level-1 action; stage two: best response to it
        x2 = brute_level1(gps[1], spaces, 1, {0: strategies[0].probs}, betas[1])
        vals = [ucb_scalar(gps[0], np.concatenate([S.points[a], S.points[x2]]), betas[0])
                for a in range(5)]
        agree += got == int(np.argmax(vals))
    report("4", agree == 100, f"{agree}/100 exact index matches")


# -- 5 -----------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_5_regret_trend():
    cfg = ExperimentConfig(game_type="general", points_per_axis=[20, 20], horizon=150,
                           num_function_samples=10, num_inits=1,
                           agents=[AgentConfig(level=1), AgentConfig(level=0)])
    T = np.arange(1, 151)
    negative = 0
    for d in range(10):
        trace = run_replication(cfg, d, 0)
        r = external_regret_curve(trace, build_draw(cfg, d), 0) / T
        negative += np.polyfit(T[49:], r[49:], 1)[0] < 0
    report("5", negative >= 8, f"negative slope in {negative}/10 draws")


# -- 6 -----------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_6_confidence_coverage():
    cfg = ExperimentConfig(game_type="general", points_per_axis=[20, 20], delta=0.1,
                           agents=[AgentConfig(level=1), AgentConfig(level=0)])
    violations = total = 0
    for seed in range(20):
        game = build_draw(cfg, seed)
        arena = Arena(game, cfg.agent_specs(), 150, seed, delta=0.1)
        Z = joint_grid(arena.spaces)
        f = game.values[0].ravel()
        for t in range(1, 151):
            beta_t = arena.betas(t)[0]
            mean, var = arena.gps[0].predict(Z)
            violations += int(np.sum(np.abs(f - mean) > np.sqrt(beta_t * var)))
            total += f.size
            acts, _ = arena.select()
            eps = arena.draw_noise()
            arena.observe(acts, [game.payoff(i, acts) + eps[i] for i in range(2)])
    freq = violations / total
    report("6", freq <= 0.1, f"violation frequency {freq:.2e} over {total} (t, z) pairs")


# -- 7 -----------------------------------------------------------------------


def test_criterion_7_multiagent_reductions():
    rng = np.random.default_rng(7)
    S5, S4 = ActionSpace.grid(5), ActionSpace.grid(4)
    two = sum(
        multiagent_level1_select(gp, S5, [opp], 2.0, own_index=own)
        == level1_select(gp, S5, opp, 2.0, own_index=own)[0]
        for gp, opp, own in (
            (random_posterior(rng, [S5, S5], 6), _random_strategy(rng, S5), int(rng.integers(2)))
            for _ in range(50)
        )
    )
    spaces = [S4] * 3
    all_l1 = all_l0 = 0
    for _ in range(50):
        gps = [random_posterior(rng, spaces, 6) for _ in range(3)]
        strategies = [_random_strategy(rng, S4) for _ in range(3)]
        betas = [float(b) for b in rng.uniform(0.5, 4, 3)]
        # every opponent at level 1: plain best response at the simulated joint action
        sim = {j: brute_level1(gps[j], spaces, j,
                               {m: strategies[m].probs for m in range(3) if m != j}, betas[j])
               for j in (1, 2)}
        vals = [ucb_scalar(gps[0], joint_points(spaces, [a, sim[1], sim[2]]).ravel(), betas[0])
                for a in range(4)]
        got = multiagent_level2_select(gps, spaces, [2, 1, 1], strategies, betas, own_index=0)
        all_l1 += got == int(np.argmax(vals))
        # every opponent at level 0: the level-1 expectation over both
        expect = brute_level1(gps[0], spaces, 0, {1: strategies[1].probs, 2: strategies[2].probs},
                              betas[0])
        got = multiagent_level2_select(gps, spaces, [2, 0, 0], strategies, betas, own_index=0)
        all_l0 += got == expect
    ok = two == 50 and all_l1 == 50 and all_l0 == 50
    report("7", ok, f"M=2 reduction {two}/50, all-level-1 {all_l1}/50, all-level-0 {all_l0}/50")


# -- 8 -----------------------------------------------------------------------


def test_criterion_8_worker_determinism(tmp_path):
    cfg = ExperimentConfig(game_type="general", points_per_axis=[10, 10], horizon=30,
                           num_function_samples=3, num_inits=2,
                           agents=[AgentConfig(level=2), AgentConfig(level=1)])
    a = emit_results(run_experiment(cfg, workers=1), "csv", tmp_path / "w1.csv")
    b = emit_results(run_experiment(cfg, workers=3), "csv", tmp_path / "w3.csv")
    same = a.read_bytes() == b.read_bytes()
    report("8", same, "CSV from 1 and 3 workers is byte-identical" if same else "CSV differs")


# -- 9 -----------------------------------------------------------------------


def test_criterion_9_gpmw_normalization():
    rng = np.random.default_rng(9)
    spaces = [ActionSpace.grid(6), ActionSpace.grid(6)]
    gp = random_posterior(rng, spaces, 8)
    state = GpMwState.create(spaces[0], horizon=1000)
    worst = 0.0
    for t in range(1, 1001):
        other = spaces[1].points[rng.integers(6)]
        state, strat = gpmw_update(state, gp, other, float(rng.uniform(0.1, 10)))
        worst = max(worst, abs(strat.probs.sum() - 1.0))
        assert np.all(strat.probs >= 0)
    _, two = gpmw_apply_losses(GpMwState.create(ActionSpace.grid(2), learning_rate=1.0), [0.0, 1.0])
    e = math.exp(-1.0)
    hand = np.array([1 / (1 + e), e / (1 + e)])
    err = np.abs(two.probs - hand).max()
    report("9", worst <= 1e-12 and err <= 1e-12,
           f"max normalization error {worst:.1e}, hand example error {err:.1e}")
