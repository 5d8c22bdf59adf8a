"""Tabular two-player zero-sum discounted Markov games.

Arrays follow a fixed layout: transitions are ``[S, A, B, S]``, rewards and
Q-tables ``[S, A, B]``, value tables ``[S]``. Agent 1 (rows, ``A``) maximizes,
agent 2 (columns, ``B``) minimizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

PROB_TOL = 1e-9
DENSE_SOLVE_LIMIT = 4096
VAR_CLAMP = 1e-12


class GameError(ValueError):
    """Raised when a game, policy or table violates its invariants."""


class Player(str, Enum):
    MAX = "max_player"
    MIN = "min_player"


def _check_simplex_rows(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise GameError(f"{what}{bad.tolist()} is not finite")
    if np.any(arr < -PROB_TOL):
        bad = np.argwhere(arr < -PROB_TOL)[0]
        raise GameError(f"{what}{bad.tolist()} is negative ({arr[tuple(bad)]})")
    sums = arr.sum(axis=-1)
    off = np.abs(sums - 1.0) > PROB_TOL
    if np.any(off):
        bad = np.argwhere(off)[0]
        raise GameError(f"{what}{bad.tolist()} sums to {sums[tuple(bad)]}, not 1")


@dataclass(frozen=True, eq=False)
class MarkovGame:
    """A finite zero-sum Markov game ``(S, A, B, P, r, gamma)``.

    ``strict_reward`` enforces rewards in ``[0, 1]``; the absorbing transform
    relaxes it to finite values.
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    strict_reward: bool = True

    def __post_init__(self) -> None:
        P = np.array(self.transition, dtype=float)
        r = np.array(self.reward, dtype=float)
        if P.ndim != 4 or P.shape[0] != P.shape[3]:
            raise GameError(f"transition must have shape [S, A, B, S], got {P.shape}")
        if r.shape != P.shape[:3]:
            raise GameError(f"reward shape {r.shape} does not match transition {P.shape[:3]}")
        if min(P.shape) < 1:
            raise GameError("game dimensions must be positive")
        gamma = float(self.discount)
        if not 0.0 <= gamma < 1.0:
            raise GameError(f"discount must lie in [0, 1), got {gamma}")
        _check_simplex_rows(P, "transition")
        if not np.all(np.isfinite(r)):
            bad = np.argwhere(~np.isfinite(r))[0]
            raise GameError(f"reward{bad.tolist()} is not finite")
        if self.strict_reward and (np.any(r < 0.0) or np.any(r > 1.0)):
            bad = np.argwhere((r < 0.0) | (r > 1.0))[0]
            raise GameError(f"reward{bad.tolist()} = {r[tuple(bad)]} outside [0, 1]")
        P.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "discount", gamma)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions_max(self) -> int:
        return self.transition.shape[1]

    @property
    def num_actions_min(self) -> int:
        return self.transition.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.transition.shape[:3]

    def with_reward(self, reward: np.ndarray, strict: bool = True) -> "MarkovGame":
        return MarkovGame(self.transition, reward, self.discount, strict_reward=strict)

    def value_bound(self) -> float:
        return 1.0 / (1.0 - self.discount)


@dataclass(frozen=True, eq=False)
class StationaryPolicy:
    owner: Player
    dist: np.ndarray

    def __post_init__(self) -> None:
        d = np.array(self.dist, dtype=float)
        if d.ndim != 2:
            raise GameError(f"policy must have shape [S, actions], got {d.shape}")
        _check_simplex_rows(d, "policy")
        d.setflags(write=False)
        object.__setattr__(self, "owner", Player(self.owner))
        object.__setattr__(self, "dist", d)

    @classmethod
    def uniform(cls, owner: Player, num_states: int, num_actions: int) -> "StationaryPolicy":
        return cls(owner, np.full((num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def deterministic(cls, owner: Player, actions, num_actions: int) -> "StationaryPolicy":
        actions = np.asarray(actions, dtype=int)
        d = np.zeros((actions.size, num_actions))
        d[np.arange(actions.size), actions] = 1.0
        return cls(owner, d)

    def check_for(self, game: MarkovGame) -> None:
        n = game.num_actions_max if self.owner is Player.MAX else game.num_actions_min
        if self.dist.shape != (game.num_states, n):
            raise GameError(
                f"{self.owner.value} policy shape {self.dist.shape} does not fit game "
                f"({game.num_states} states, {n} actions)"
            )


def _check_pair(game: MarkovGame, mu: StationaryPolicy, nu: StationaryPolicy) -> None:
    if mu.owner is not Player.MAX or nu.owner is not Player.MIN:
        raise GameError("expected (max_player, min_player) policy pair")
    mu.check_for(game)
    nu.check_for(game)


def joint_weights(mu: StationaryPolicy, nu: StationaryPolicy) -> np.ndarray:
    """``w[s, a, b] = mu(a|s) nu(b|s)``."""
    return mu.dist[:, :, None] * nu.dist[:, None, :]


def _solve_discounted(M: np.ndarray, c: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(I - c M) x = rhs`` for a row-stochastic ``M`` and ``0 <= c < 1``."""
    n = M.shape[0]
    if n <= DENSE_SOLVE_LIMIT:
        x = np.linalg.solve(np.eye(n) - c * M, rhs)
        if not np.all(np.isfinite(x)):
            raise GameError("singular Bellman system; corrupted input")
        return x
    # Richardson iteration, contraction factor c in max norm
    x = rhs.copy()
    tol = 1e-13 * max(1.0, float(np.abs(rhs).max())) * (1.0 - c)
    for _ in range(1_000_000):
        nxt = rhs + c * (M @ x)
        if np.abs(nxt - x).max() <= tol:
            return nxt
        x = nxt
    raise GameError("Richardson iteration did not converge")


def state_transition(game: MarkovGame, mu: StationaryPolicy, nu: StationaryPolicy):
    """State-level kernel and reward under a policy pair."""
    w = joint_weights(mu, nu)
    P_s = np.einsum("sab,sabt->st", w, game.transition)
    r_s = np.einsum("sab,sab->s", w, game.reward)
    return P_s, r_s


def policy_evaluate(game: MarkovGame, mu: StationaryPolicy, nu: StationaryPolicy):
    """Exact ``(Q, V)`` of a policy pair.

    Solves ``V = r_mu_nu + gamma P_mu_nu V`` over states, then forms
    ``Q = r + gamma P V``.
    """
    _check_pair(game, mu, nu)
    P_s, r_s = state_transition(game, mu, nu)
    V = _solve_discounted(P_s, game.discount, r_s)
    Q = game.reward + game.discount * (game.transition @ V)
    return Q, V


def bellman_policy_operator(game: MarkovGame, mu, nu, Q: np.ndarray) -> np.ndarray:
    """``(T Q)(s,a,b) = r + gamma sum_s' P(s'|s,a,b) E_{mu,nu} Q(s',.,.)``."""
    V = np.einsum("sab,sab->s", joint_weights(mu, nu), Q)
    return game.reward + game.discount * (game.transition @ V)


def _argbest(values: np.ndarray, maximize: bool) -> np.ndarray:
    # lowest index among near-ties
    best = values.max(axis=1, keepdims=True) if maximize else values.min(axis=1, keepdims=True)
    close = np.abs(values - best) <= 1e-12 * np.maximum(1.0, np.abs(best))
    return np.argmax(close, axis=1)


def best_response(game: MarkovGame, policy: StationaryPolicy):
    """Best response to a fixed stationary policy.

    Returns ``(response, V, Q)`` where ``V`` is ``V^{mu,*}`` (minimizer
    responding to ``mu``) or ``V^{*,nu}`` and ``Q`` the Q-table of the pair.
    """
    gamma = game.discount
    P, r = game.transition, game.reward
    if policy.owner is Player.MAX:
        policy.check_for(game)
        # induced MDP for the minimizer over actions b
        P_ind = np.einsum("sa,sabt->sbt", policy.dist, P)
        r_ind = np.einsum("sa,sab->sb", policy.dist, r)
        maximize = False
        responder = Player.MIN
        nb = game.num_actions_min
    else:
        policy.check_for(game)
        P_ind = np.einsum("sb,sabt->sat", policy.dist, P)
        r_ind = np.einsum("sb,sab->sa", policy.dist, r)
        maximize = True
        responder = Player.MAX
        nb = game.num_actions_max

    S = game.num_states
    V = np.zeros(S)
    tol = 1e-10 * (1.0 - gamma) / gamma if gamma > 0 else np.inf
    for _ in range(100_000):
        Qi = r_ind + gamma * (P_ind @ V)
        nxt = Qi.max(axis=1) if maximize else Qi.min(axis=1)
        delta = np.abs(nxt - V).max()
        V = nxt
        if delta <= tol:
            break
    # greedy extraction, then exact evaluation; improve until stable
    idx = np.arange(S)
    actions = _argbest(r_ind + gamma * (P_ind @ V), maximize)
    for _ in range(1000):
        Pa = P_ind[idx, actions]
        ra = r_ind[idx, actions]
        V = _solve_discounted(Pa, gamma, ra)
        Qi = r_ind + gamma * (P_ind @ V)
        cur = Qi[idx, actions]
        best = Qi.max(axis=1) if maximize else Qi.min(axis=1)
        improve = (best - cur) if maximize else (cur - best)
        if np.all(improve <= 1e-12 * max(1.0, float(np.abs(V).max()))):
            break
        actions = np.where(improve > 1e-12, _argbest(Qi, maximize), actions)
    response = StationaryPolicy.deterministic(responder, actions, nb)
    if policy.owner is Player.MAX:
        Q, V_pair = policy_evaluate(game, policy, response)
    else:
        Q, V_pair = policy_evaluate(game, response, policy)
    return response, V_pair, Q


def nash_gap(game: MarkovGame, mu: StationaryPolicy, nu: StationaryPolicy) -> float:
    """Per-state max of both one-sided improvements; 0 exactly at an NE."""
    _check_pair(game, mu, nu)
    _, V_pair = policy_evaluate(game, mu, nu)
    _, V_mu_star, _ = best_response(game, mu)
    _, V_star_nu, _ = best_response(game, nu)
    return float(max((V_star_nu - V_pair).max(), (V_pair - V_mu_star).max()))


def variance_under(P_slice: np.ndarray, V: np.ndarray) -> np.ndarray:
    """``Var_{P(.|s,a,b)}(V)`` for every row of ``P_slice``."""
    P_slice = np.asarray(P_slice, dtype=float)
    V = np.asarray(V, dtype=float)
    if P_slice.shape[-1] != V.shape[0]:
        raise GameError(f"successor dimension {P_slice.shape[-1]} != len(V) {V.shape[0]}")
    mean = P_slice @ V
    var = P_slice @ (V * V) - mean * mean
    if np.any(var < -VAR_CLAMP * max(1.0, float(np.abs(V).max()) ** 2)):
        raise GameError("negative variance beyond numerical noise")
    return np.maximum(var, 0.0)


def return_variance(game: MarkovGame, mu: StationaryPolicy, nu: StationaryPolicy) -> np.ndarray:
    """Solve ``Sigma = gamma^2 Var_P(V) + gamma^2 P^{mu,nu} Sigma``.

    Coincides with the variance of the discounted return when both policies
    are deterministic; with randomized policies it omits the action-sampling
    term and is a lower bound on that variance.
    """
    _check_pair(game, mu, nu)
    g2 = game.discount**2
    _, V = policy_evaluate(game, mu, nu)
    var = variance_under(game.transition, V)
    w = joint_weights(mu, nu)
    P_s, _ = state_transition(game, mu, nu)
    # sigma_V(s) = E_{mu,nu} Sigma(s,.,.) satisfies a state-level equation
    sig_V = _solve_discounted(P_s, g2, g2 * np.einsum("sab,sab->s", w, var))
    return g2 * var + g2 * (game.transition @ sig_V)


def variance_residual(game: MarkovGame, mu, nu, sigma: np.ndarray) -> float:
    _, V = policy_evaluate(game, mu, nu)
    g2 = game.discount**2
    w = joint_weights(mu, nu)
    rhs = g2 * variance_under(game.transition, V) + g2 * (
        game.transition @ np.einsum("sab,sab->s", w, sigma)
    )
    return float(np.abs(sigma - rhs).max())


def make_absorbing(game: MarkovGame, s: int, u: float) -> MarkovGame:
    """The game ``G_{s,u}``: state ``s`` self-loops with reward ``(1-gamma) u``."""
    if not 0 <= s < game.num_states:
        raise GameError(f"state index {s} out of range [0, {game.num_states})")
    P = game.transition.copy()
    r = game.reward.copy()
    P[s] = 0.0
    P[s, :, :, s] = 1.0
    r[s] = (1.0 - game.discount) * float(u)
    return MarkovGame(P, r, game.discount, strict_reward=False)
