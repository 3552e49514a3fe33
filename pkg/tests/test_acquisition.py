import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_posterior, ucb_scalar
from r2b2.acquisition import BetaSchedule, beta, c1_constant, ucb, ucb_slice, ucb_table
from r2b2.errors import InputError
from r2b2.gp import ActionSpace, GPPosterior, KernelSpec, joint_points


def test_beta_value_by_hand():
    s = BetaSchedule(100, 0.1)
    assert beta(s, 1) == pytest.approx(2 * math.log(100 * math.pi**2 / 0.3), abs=1e-12)
    assert beta(s, 1) == pytest.approx(16.19721, abs=1e-5)


def test_beta_difference_is_log_t_squared():
    s = BetaSchedule(100, 0.1)
    assert beta(s, 10) - beta(s, 1) == pytest.approx(2 * math.log(100), abs=1e-10)


def test_beta_monotone_and_positive():
    s = BetaSchedule(20, 0.1)
    vals = [beta(s, t) for t in range(1, 1002)]
    assert vals[0] > 0
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_tight_beta_is_smaller_by_log4():
    loose, tight = BetaSchedule(20, 0.1), BetaSchedule(20, 0.1, tight=True)
    assert beta(loose, 7) - beta(tight, 7) == pytest.approx(2 * math.log(2), abs=1e-12)


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.1, 1.5])
def test_beta_rejects_bad_delta(delta):
    with pytest.raises(InputError):
        BetaSchedule(10, delta)


def test_beta_rejects_t_zero():
    with pytest.raises(InputError):
        beta(BetaSchedule(10), 0)


def test_c1_closed_form():
    assert c1_constant(0.01) == pytest.approx(8 / math.log(101), rel=1e-14)


def test_ucb_prior_case():
    gp = GPPosterior.prior(KernelSpec(), 2)
    assert ucb(gp, [0.3, 0.3], 4.0) == pytest.approx(2.0, abs=1e-12)


def test_ucb_beta_zero_is_mean(rng):
    gp = random_posterior(rng, [ActionSpace.grid(5), ActionSpace.grid(5)], 6)
    z = [0.25, 0.75]
    assert ucb(gp, z, 0.0) == pytest.approx(float(gp.predict(np.array([z]))[0][0]), abs=1e-15)


@given(st.floats(0.01, 50.0))
def test_ucb_dominates_mean(b):
    r = np.random.default_rng(1)
    gp = random_posterior(r, [ActionSpace.grid(4), ActionSpace.grid(4)], 5)
    Z = r.random((10, 2))
    mean = gp.predict(Z)[0]
    assert np.all(np.array([ucb(gp, z, b) for z in Z]) >= mean)


def test_slice_prior_is_flat():
    gp = GPPosterior.prior(KernelSpec(), 2)
    vals = ucb_slice(gp, ActionSpace.grid(3), [0.5], 9.0)
    np.testing.assert_allclose(vals, 3.0, atol=1e-15)


@pytest.mark.parametrize("own_index", [0, 1])
def test_slice_matches_scalar_loop(rng, own_index):
    spaces = [ActionSpace.grid(7), ActionSpace.grid(7)]
    gp = random_posterior(rng, spaces, 8)
    other = spaces[1 - own_index].points[3]
    vals = ucb_slice(gp, spaces[own_index], other, 5.0, own_index)
    for a in range(7):
        pts = [spaces[own_index].points[a], other]
        z = np.concatenate(pts if own_index == 0 else pts[::-1])
        assert vals[a] == pytest.approx(ucb(gp, z, 5.0), abs=1e-12)
        assert vals[a] == pytest.approx(ucb_scalar(gp, z, 5.0), abs=1e-8)


def test_table_matches_slices(rng):
    spaces = [ActionSpace.grid(4), ActionSpace.grid(5)]
    gp = random_posterior(rng, spaces, 6)
    table = ucb_table(gp, spaces, 3.0)
    assert table.shape == (4, 5)
    for j in range(5):
        np.testing.assert_allclose(table[:, j], ucb_slice(gp, spaces[0], spaces[1].points[j], 3.0),
                                   atol=1e-12)


def test_three_agent_slice(rng):
    spaces = [ActionSpace.grid(3)] * 3
    gp = random_posterior(rng, spaces, 5)
    others = [spaces[0].points[2], spaces[2].points[1]]
    vals = ucb_slice(gp, spaces[1], others, 2.0, own_index=1)
    for a in range(3):
        z = joint_points(spaces, [2, a, 1]).ravel()
        assert vals[a] == pytest.approx(ucb(gp, z, 2.0), abs=1e-12)


def test_slice_dimension_mismatch():
    gp = GPPosterior.prior(KernelSpec(), 3)
    with pytest.raises(InputError):
        ucb_slice(gp, ActionSpace.grid(3), [0.5], 1.0)
