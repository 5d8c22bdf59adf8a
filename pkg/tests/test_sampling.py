from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zsmg.game_core import GameError, MarkovGame
from zsmg.instances import random_game
from zsmg.planner import PlanConfig, shapley_value_iteration
from zsmg.sampling import (
    EmpiricalModel,
    GenerativeModel,
    RngSpec,
    empirical_game,
    estimate_model,
    generative_draw,
    plan_rewards,
    reward_agnostic_pipeline,
)


def test_rng_spec_range():
    with pytest.raises(ValueError):
        RngSpec(seed=-1)
    with pytest.raises(ValueError):
        RngSpec(stream_id=2**64)
    RngSpec(2**64 - 1, 2**64 - 1)


def test_point_mass_row_always_hits():
    P = np.zeros((3, 1, 1, 3))
    P[:, 0, 0, 2] = 1.0
    sampler = GenerativeModel(MarkovGame(P, np.zeros((3, 1, 1)), 0.5), RngSpec(1))
    assert set(sampler.draw_many(0, 0, 0, 1000).tolist()) == {2}


def test_uniform_row_frequencies():
    P = np.full((4, 1, 1, 4), 0.25)
    sampler = GenerativeModel(MarkovGame(P, np.zeros((4, 1, 1)), 0.5), RngSpec(7))
    n = 100_000
    freq = np.bincount(sampler.draw_many(1, 0, 0, n), minlength=4) / n
    sigma = np.sqrt(0.25 * 0.75 / n)
    assert np.all(np.abs(freq - 0.25) <= 3 * sigma)


def test_zero_probability_successor_never_drawn(rng):
    P = np.zeros((3, 1, 1, 3))
    P[:, 0, 0] = [0.5, 0.5, 0.0]
    sampler = GenerativeModel(MarkovGame(P, np.zeros((3, 1, 1)), 0.5), RngSpec(3))
    assert 2 not in sampler.draw_many(0, 0, 0, 50_000)


def test_fixed_seed_bit_identical(small_game):
    a = GenerativeModel(small_game, RngSpec(42, 9)).draw_many(1, 0, 1, 500)
    b = GenerativeModel(small_game, RngSpec(42, 9)).draw_many(1, 0, 1, 500)
    c = GenerativeModel(small_game, RngSpec(42, 10)).draw_many(1, 0, 1, 500)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_batched_equals_sequential(small_game):
    batched = GenerativeModel(small_game, RngSpec(5)).draw_many(2, 1, 0, 300)
    seq_sampler = GenerativeModel(small_game, RngSpec(5))
    sequential = [generative_draw(seq_sampler, 2, 1, 0) for _ in range(300)]
    assert batched.tolist() == sequential
    assert seq_sampler.calls == 300


def test_query_order_independent(small_game):
    a = GenerativeModel(small_game, RngSpec(5))
    b = GenerativeModel(small_game, RngSpec(5))
    a0, a1 = a.draw_many(0, 0, 0, 50), a.draw_many(2, 1, 1, 50)
    b1, b0 = b.draw_many(2, 1, 1, 50), b.draw_many(0, 0, 0, 50)
    assert np.array_equal(a0, b0) and np.array_equal(a1, b1)


def test_invalid_triple(small_game):
    with pytest.raises(GameError, match="outside"):
        GenerativeModel(small_game, RngSpec()).draw(3, 0, 0)


# -- empirical model ---------------------------------------------------------------


def test_count_ratio_example():
    counts = np.zeros((2, 1, 1, 2), dtype=int)
    counts[0, 0, 0] = [3, 2]
    counts[1, 0, 0] = [0, 5]
    model = EmpiricalModel(counts, 5)
    assert model.p_hat[0, 0, 0].tolist() == [0.6, 0.4]
    assert model.p_hat_exact(0, 0, 0) == [Fraction(3, 5), Fraction(2, 5)]
    assert model.source_dims == (2, 1, 1)


def test_model_validation():
    with pytest.raises(GameError, match=r"counts\[0, 0, 0\] sum to 4"):
        EmpiricalModel(np.array([[[[3, 1]]], [[[2, 3]]]]), 5)
    with pytest.raises(GameError, match="non-negative"):
        EmpiricalModel(np.array([[[[6, -1]]], [[[2, 3]]]]), 5)
    with pytest.raises(GameError, match="integers"):
        EmpiricalModel(np.array([[[[0.5, 0.5]]], [[[0.5, 0.5]]]]), 1)
    with pytest.raises(GameError, match="shape"):
        EmpiricalModel(np.zeros((2, 1, 1, 3), dtype=int), 1)


def test_deterministic_game_recovered_exactly():
    game = random_game(4, 2, 2, 0.7, 1, 3)
    for N in (1, 7, 64):
        model = estimate_model(game, N, RngSpec(N))
        assert np.array_equal(model.p_hat, game.transition)


def test_exact_call_count(small_game):
    sampler = GenerativeModel(small_game, RngSpec(1))
    estimate_model(sampler, 13)
    S, A, B = small_game.shape
    assert sampler.calls == 13 * S * A * B


def test_estimate_model_deterministic(small_game):
    a = estimate_model(small_game, 50, RngSpec(8, 2))
    b = estimate_model(small_game, 50, RngSpec(8, 2))
    assert np.array_equal(a.counts, b.counts)


def test_hoeffding_band():
    game = random_game(3, 2, 2, 0.8, None, 21)
    N = 10_000
    S, A, B = game.shape
    band = 5 * np.sqrt(np.log(6 * S * A * B) / (2 * N))
    for seed in range(20):
        model = estimate_model(game, N, RngSpec(seed))
        assert np.abs(model.p_hat - game.transition).max() <= band


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 200), st.integers(0, 2**32))
def test_rows_are_exact_rationals(N, seed):
    game = random_game(3, 2, 2, 0.5, None, 1)
    model = estimate_model(game, N, RngSpec(seed))
    assert np.all(model.counts.sum(axis=-1) == N)
    for s, a, b in [(0, 0, 0), (2, 1, 1)]:
        exact = model.p_hat_exact(s, a, b)
        assert sum(exact) == 1
        # float conversion loses at most one ulp per entry
        assert all(abs(float(f) - p) <= np.spacing(p) for f, p in zip(exact, model.p_hat[s, a, b]))


def test_model_json_roundtrip(small_game):
    model = estimate_model(small_game, 9, RngSpec(2))
    back = EmpiricalModel.from_json(model.to_json())
    assert np.array_equal(back.counts, model.counts) and back.samples_per_pair == 9
    with pytest.raises(GameError, match="'N'"):
        EmpiricalModel.from_json({"N": "9", "counts": model.counts})


# -- empirical games and reward agnosticism ----------------------------------------------


def test_empirical_game_uses_reward_unchanged(small_game):
    model = estimate_model(small_game, 1, RngSpec(0))
    assert np.all(model.p_hat.max(axis=-1) == 1.0)
    r2 = np.full(small_game.shape, 0.3)
    g1 = empirical_game(model, small_game.reward, 0.8)
    g2 = empirical_game(model, r2, 0.8)
    assert np.array_equal(g1.transition, g2.transition)
    assert np.array_equal(g1.reward, small_game.reward) and np.array_equal(g2.reward, r2)
    with pytest.raises(GameError, match="does not match"):
        empirical_game(model, np.zeros((1, 1, 1)), 0.8)


def test_exact_model_gives_true_game():
    game = random_game(3, 2, 2, 0.7, 1, 0)
    model = estimate_model(game, 4, RngSpec(0))
    emp = empirical_game(model, game.reward, game.discount)
    assert np.array_equal(emp.transition, game.transition)


def test_single_reward_matches_estimate_then_plan(small_game):
    cfg = PlanConfig(eps_opt=1e-8)
    [res] = reward_agnostic_pipeline(small_game, 40, [small_game.reward], cfg, RngSpec(4))
    model = estimate_model(small_game, 40, RngSpec(4))
    ref = shapley_value_iteration(empirical_game(model, small_game.reward, 0.8), cfg)
    assert np.array_equal(res.q_star_hat, ref.q_star_hat)


def test_complementary_rewards():
    """With deterministic, player-symmetric transitions and symmetric rewards,
    complementing the reward swaps the players' roles, so V(1 - r) = 1/(1-gamma) - V(r)."""
    cfg = PlanConfig(eps_opt=1e-9)
    sym = np.zeros((2, 2, 2, 2))
    sym[:, 0, 0] = [1.0, 0.0]
    sym[:, 1, 1] = [1.0, 0.0]
    sym[:, 0, 1] = [0.0, 1.0]
    sym[:, 1, 0] = [0.0, 1.0]
    rew = np.array([[[0.9, 0.2], [0.2, 0.9]], [[0.4, 0.7], [0.7, 0.4]]])
    sgame = MarkovGame(sym, rew, 0.8)
    a, b = reward_agnostic_pipeline(sgame, 20, [rew, 1.0 - rew], cfg, RngSpec(0))
    assert np.abs(a.v_star_hat + b.v_star_hat - 1 / (1 - 0.8)).max() <= 1e-6


def test_reward_list_permutation_bit_identical(small_game, rng):
    rewards = [rng.random(small_game.shape) for _ in range(4)]
    cfg = PlanConfig(eps_opt=1e-7)
    fwd = reward_agnostic_pipeline(small_game, 25, rewards, cfg, RngSpec(3))
    rev = reward_agnostic_pipeline(small_game, 25, rewards[::-1], cfg, RngSpec(3))
    for a, b in zip(fwd, rev[::-1]):
        assert np.array_equal(a.q_star_hat, b.q_star_hat)
        assert np.array_equal(a.mu_hat.dist, b.mu_hat.dist)


def test_reward_agnostic_call_count(small_game, rng):
    sampler = GenerativeModel(small_game, RngSpec(2))
    rewards = [rng.random(small_game.shape) for _ in range(5)]
    reward_agnostic_pipeline(sampler, 16, rewards, PlanConfig(eps_opt=1e-6), gamma=0.8)
    assert sampler.calls == 16 * int(np.prod(small_game.shape))


def test_pipeline_argument_errors(small_game):
    with pytest.raises(ValueError, match="at least one"):
        reward_agnostic_pipeline(small_game, 5, [], PlanConfig())
    with pytest.raises(ValueError, match="gamma is required"):
        reward_agnostic_pipeline(GenerativeModel(small_game, RngSpec()), 5, [small_game.reward], PlanConfig())


def test_plan_rewards_shares_model(small_game):
    model = estimate_model(small_game, 10, RngSpec(0))
    out = plan_rewards(model, [small_game.reward, small_game.reward], 0.8, PlanConfig(eps_opt=1e-6))
    assert np.array_equal(out[0].q_star_hat, out[1].q_star_hat)
