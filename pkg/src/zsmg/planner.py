"""Shapley value iteration with certified equilibrium extraction."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .game_core import MarkovGame, Player, StationaryPolicy, best_response
from .matrix_game import RegularizerSpec, solve_exact, solve_regularized

log = logging.getLogger(__name__)


class PlanningError(RuntimeError):
    """Iteration cap hit or certification failed; carries the achieved figures."""

    def __init__(self, message: str, achieved: float):
        super().__init__(message)
        self.achieved = achieved


@dataclass(frozen=True)
class PlanConfig:
    eps_opt: float = 1e-6
    oracle_kind: Literal["exact_lp", "smooth_regularized"] = "exact_lp"
    regularizer: RegularizerSpec | None = None
    max_iters: int = 100_000

    def __post_init__(self):
        if not self.eps_opt > 0:
            raise ValueError("eps_opt must be positive")
        if self.oracle_kind not in ("exact_lp", "smooth_regularized"):
            raise ValueError(f"unknown oracle kind {self.oracle_kind!r}")
        if self.oracle_kind == "smooth_regularized" and self.regularizer is None:
            object.__setattr__(self, "regularizer", RegularizerSpec())
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


@dataclass(frozen=True, eq=False)
class PlanResult:
    q_star_hat: np.ndarray
    v_star_hat: np.ndarray
    mu_hat: StationaryPolicy
    nu_hat: StationaryPolicy
    certified_eps_opt: float
    iterations: int
    q_error_bound: float
    residuals: tuple = field(default=(), repr=False)


def matrix_values(q: np.ndarray) -> np.ndarray:
    """Per-state value of the matrix games ``q[s]``."""
    return np.array([solve_exact(q[s], 1e-9).value for s in range(q.shape[0])])


def one_step_ne_extract(q: np.ndarray):
    """Per-state exact equilibrium strategies of the matrix games ``q[s]``."""
    q = np.asarray(q, dtype=float)
    sols = [solve_exact(q[s], 1e-9) for s in range(q.shape[0])]
    mu = StationaryPolicy(Player.MAX, np.array([s.u for s in sols]))
    nu = StationaryPolicy(Player.MIN, np.array([s.theta for s in sols]))
    return mu, nu


def smooth_extract(q: np.ndarray, reg: RegularizerSpec):
    """Per-state regularized equilibrium strategies; Lipschitz in ``q``."""
    q = np.asarray(q, dtype=float)
    sols = [solve_regularized(q[s], reg) for s in range(q.shape[0])]
    mu = StationaryPolicy(Player.MAX, np.array([s.u for s in sols]))
    nu = StationaryPolicy(Player.MIN, np.array([s.theta for s in sols]))
    return mu, nu


def certify(game: MarkovGame, mu, nu, v_hat: np.ndarray, v_err: float) -> float:
    """Upper bound on ``max(|V^{mu,*} - V*|, |V^{*,nu} - V*|)``.

    Uses ``V^{mu,*} <= V* <= V^{*,nu}`` and ``|v_hat - V*| <= v_err``.
    """
    _, v_mu, _ = best_response(game, mu)
    _, v_nu, _ = best_response(game, nu)
    sandwich = float(np.max(v_nu - v_mu))
    via_estimate = max(float(np.max(v_hat - v_mu)), float(np.max(v_nu - v_hat))) + v_err
    return max(0.0, min(sandwich, via_estimate))


def shapley_value_iteration(game: MarkovGame, config: PlanConfig) -> PlanResult:
    """Plan on ``game`` to a certified ``eps_opt``.

    Iterates ``Q <- r + gamma P val(Q)`` until the contraction bound
    ``gamma |dQ| / (1 - gamma)`` falls below ``eps_opt / 4``, extracts
    per-state strategies with the configured oracle and certifies them with
    exact best responses. If the certificate misses ``eps_opt`` the stopping
    tolerance is tightened and iteration resumes.
    """
    gamma = game.discount
    P, r = game.transition, game.reward
    eps = config.eps_opt
    stop = eps / 4.0
    Q = np.zeros(game.shape)
    residuals = []
    iters = 0
    while True:
        while True:
            if iters >= config.max_iters:
                achieved = gamma * residuals[-1] / (1.0 - gamma) if residuals else np.inf
                raise PlanningError(
                    f"max_iters={config.max_iters} reached with Q-error bound {achieved:.3e}", achieved
                )
            Q_next = r + gamma * (P @ matrix_values(Q))
            diff = float(np.abs(Q_next - Q).max())
            Q = Q_next
            iters += 1
            residuals.append(diff)
            bound = gamma * diff / (1.0 - gamma)
            if bound <= stop:
                break
        if config.oracle_kind == "exact_lp":
            mu, nu = one_step_ne_extract(Q)
        else:
            mu, nu = smooth_extract(Q, config.regularizer)
        V = matrix_values(Q)
        cert = certify(game, mu, nu, V, bound)
        if cert <= eps:
            return PlanResult(Q, V, mu, nu, cert, iters, bound, tuple(residuals))
        if stop < eps * 1e-6 or bound == 0.0:
            raise PlanningError(
                f"certified eps_opt {cert:.3e} exceeds target {eps:.3e}; oracle too coarse", cert
            )
        log.debug("certificate %.3e > %.3e after %d sweeps; tightening", cert, eps, iters)
        stop /= 4.0
