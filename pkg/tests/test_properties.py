"""Randomized properties over generated games, driven by hypothesis."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from zsmg.game_core import Player, StationaryPolicy, best_response, make_absorbing, nash_gap, policy_evaluate
from zsmg.instances import random_game
from zsmg.planner import PlanConfig, shapley_value_iteration

games = st.builds(
    lambda S, A, B, g, seed: random_game(S, A, B, g, None, seed),
    st.integers(1, 4),
    st.integers(1, 3),
    st.integers(1, 3),
    st.sampled_from([0.0, 0.3, 0.7, 0.9]),
    st.integers(0, 2**32 - 1),
)


def policies(game, seed):
    rng = np.random.default_rng(seed)
    S, A, B = game.shape
    return (
        StationaryPolicy(Player.MAX, rng.dirichlet(np.ones(A), size=S)),
        StationaryPolicy(Player.MIN, rng.dirichlet(np.ones(B), size=S)),
    )


@settings(max_examples=60, deadline=None)
@given(games, st.integers(0, 2**32 - 1))
def test_values_within_range(game, seed):
    Q, V = policy_evaluate(game, *policies(game, seed))
    assert Q.min() >= -1e-9 and Q.max() <= game.value_bound() + 1e-9
    assert V.min() >= -1e-9 and V.max() <= game.value_bound() + 1e-9


@settings(max_examples=60, deadline=None)
@given(games, st.integers(0, 2**32 - 1))
def test_best_responses_sandwich_any_pair(game, seed):
    mu, nu = policies(game, seed)
    _, V = policy_evaluate(game, mu, nu)
    _, v_mu, _ = best_response(game, mu)
    _, v_nu, _ = best_response(game, nu)
    assert np.all(v_mu <= V + 1e-8) and np.all(V <= v_nu + 1e-8)
    assert nash_gap(game, mu, nu) >= -1e-9


@settings(max_examples=30, deadline=None)
@given(games, st.integers(0, 2**32 - 1))
def test_planner_certificate_bounds_gap(game, seed):
    res = shapley_value_iteration(game, PlanConfig(eps_opt=1e-6))
    assert res.certified_eps_opt <= 1e-6
    assert nash_gap(game, res.mu_hat, res.nu_hat) <= 2 * res.certified_eps_opt + 1e-12


@settings(max_examples=30, deadline=None)
@given(games, st.floats(-5, 5), st.integers(0, 2**32 - 1))
def test_absorbing_state_value(game, u, seed):
    s = seed % game.shape[0]
    g = make_absorbing(game, s, u)
    _, V = policy_evaluate(g, *policies(g, seed))
    assert abs(V[s] - u) <= 1e-9 * max(1.0, abs(u))
