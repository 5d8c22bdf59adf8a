"""Test-game generators: the lower-bound hard family, MDP embeddings, random games.

Hard-family indices are 0-based: action 0 is the distinguished ``a_1`` / ``b_1``.
An alternative hypothesis or reward is the triple ``(k, l1, l2)`` with
``l2 >= 1``; ``None`` stands for the null hypothesis / the all-ones reward.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

import numpy as np

from .game_core import GameError, MarkovGame
from .matrix_game import solve_exact, value_bounds
from .planner import PlanConfig, shapley_value_iteration
from .sampling import RngSpec

log = logging.getLogger(__name__)

Triple = Optional[Tuple[int, int, int]]

GAP_FLOOR = 20.0
GAP_CAP = 48.0
BETA_MAX = 1.0 - 19.0 / 96.0


class InfeasibleSpecError(GameError):
    """No admissible constants, or a spec that breaks a family constraint."""

    def __init__(self, message: str, constraint: str):
        super().__init__(message)
        self.constraint = constraint


def _q(gamma: float, p0: float, x):
    """Closed-form value ``gamma / (1 - gamma (p0 - x))`` of a unit-reward self-loop."""
    return gamma / (1.0 - gamma * (p0 - x))


def constraint_table(gamma, eps, alpha1, alpha2, L2: int = 2, window_cap: float | None = GAP_CAP):
    """Ordered ``(name, holds)`` pairs for every family constraint.

    Works elementwise on arrays of ``alpha1`` / ``alpha2``. The alternative
    window compares the lowered entry against every other entry of the
    ``x_k`` payoff matrix; the ``p0`` columns only exist when ``L2 >= 3``.
    """
    p0 = gamma
    a1 = np.asarray(alpha1, dtype=float)
    a2 = np.asarray(alpha2, dtype=float)
    f = lambda x: _q(gamma, p0, x)  # noqa: E731
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = p0 - 2 * a1 - 2 * a2
        null_gap = np.minimum(f(0.0) - f(a1), f(a1) - f(2 * a1))
        others = [f(a1), f(2 * a1), f(2 * a2)] + ([f(0.0) + 0 * a2] if L2 >= 3 else [])
        dist = np.array([np.abs(f(a2) - e) for e in others])
        beta = (f(a1) - f(2 * a2) + eps) / (f(0.0) - f(2 * a2))
        table = [
            ("alpha1 > 0", a1 > 0),
            ("alpha2 >= 2*alpha1", a2 >= 2 * a1),
            ("p0 > 1/2 + 2*alpha1 + 2*alpha2", p0 > 0.5 + 2 * a1 + 2 * a2),
            ("alpha2/(1-p0) in (0, 1/2)", (a2 > 0) & (a2 / (1 - p0) < 0.5)),
            ("alpha2/(p0-2*alpha1-2*alpha2) in (0, 1/2)", (inner > 0) & (a2 / inner < 0.5) & (a2 > 0)),
            ("null gap >= 20 eps", null_gap >= GAP_FLOOR * eps),
            ("alternative gap >= 20 eps", dist.min(axis=0) >= GAP_FLOOR * eps),
        ]
        if window_cap is not None:
            table.append((f"alternative gap <= {window_cap:g} eps", dist.max(axis=0) <= window_cap * eps))
        table.append(("beta <= 1 - 19/96", beta <= BETA_MAX))
    return table


@dataclass(frozen=True)
class HardInstanceSpec:
    K: int
    L1: int
    L2: int
    gamma: float
    eps: float
    alpha1: float
    alpha2: float
    hypothesis: Triple = None
    reward_id: Triple = None
    c_prime: float | None = None
    c: float | None = None
    # None drops the upper end of the alternative window (see select_constants)
    window_cap: float | None = GAP_CAP

    def __post_init__(self):
        if self.K < 1 or self.L1 < 2 or self.L2 < 2:
            raise GameError(f"need K >= 1 and L1, L2 >= 2, got {(self.K, self.L1, self.L2)}")
        for name in ("hypothesis", "reward_id"):
            t = getattr(self, name)
            if t is None:
                continue
            t = tuple(int(v) for v in t)
            k, l1, l2 = t
            if not (0 <= k < self.K and 0 <= l1 < self.L1 and 1 <= l2 < self.L2):
                raise GameError(f"{name} {t} outside k<{self.K}, l1<{self.L1}, 1<=l2<{self.L2}")
            object.__setattr__(self, name, t)

    @property
    def p0(self) -> float:
        return self.gamma

    @property
    def beta(self) -> float:
        f = lambda x: _q(self.gamma, self.p0, x)  # noqa: E731
        den = f(0.0) - f(2 * self.alpha2)
        if den <= 0:
            return float("inf")  # degenerate alpha2: no usable threshold
        return (f(self.alpha1) - f(2 * self.alpha2) + self.eps) / den

    def violations(self) -> list[str]:
        out = [] if 0.5 < self.gamma < 1.0 else ["gamma in (1/2, 1)"]
        table = constraint_table(self.gamma, self.eps, self.alpha1, self.alpha2, self.L2, self.window_cap)
        return out + [name for name, ok in table if not bool(ok)]

    def to_json(self) -> dict:
        d = asdict(self)
        for name in ("hypothesis", "reward_id"):
            d[name] = None if d[name] is None else list(d[name])
        return d

    @classmethod
    def from_json(cls, doc: dict) -> "HardInstanceSpec":
        try:
            return cls(**doc)
        except TypeError as e:
            raise GameError(f"bad hard-instance spec: {e}") from None


@dataclass(frozen=True)
class ConstantChoice:
    alpha1: float
    alpha2: float
    c_prime: float
    c: float


def select_constants(
    gamma: float,
    eps: float,
    L2: int = 2,
    window_cap: float | None = GAP_CAP,
    step: float = 0.1,
) -> ConstantChoice:
    """Grid-search ``(c', c)`` with ``alpha = c (1 - gamma p0)^2 eps / gamma``.

    Scans ``c' in [1, 200]``, ``c in [2c', 400]`` and returns the feasible pair
    with the smallest ``c`` (then smallest ``c'``). ``window_cap=None`` drops
    the upper end of the alternative window, which the lower ends rule out for
    small ``eps``. Raises InfeasibleSpecError naming the first constraint
    broken by the candidate that satisfied the longest prefix of the table.
    """
    if not 0.5 < gamma < 1.0:
        raise InfeasibleSpecError(f"gamma={gamma} outside (1/2, 1)", "gamma in (1/2, 1)")
    if not eps > 0:
        raise ValueError("eps must be positive")
    unit = (1.0 - gamma * gamma) ** 2 * eps / gamma
    n_c = int(round((400.0 - 2.0) / step)) + 1
    c_grid = 2.0 + step * np.arange(n_c)
    best: tuple[float, float] | None = None
    closest = (-1, "")
    for i in range(int(round((200.0 - 1.0) / step)) + 1):
        cp = 1.0 + step * i
        c = c_grid[c_grid >= 2 * cp - 1e-9]
        table = constraint_table(gamma, eps, cp * unit, c * unit, L2, window_cap)
        ok = np.ones(c.size, dtype=bool)
        for depth, (name, holds) in enumerate(table):
            step_ok = ok & holds
            if not step_ok.any():
                if depth > closest[0]:
                    closest = (depth, name)
                break
            ok = step_ok
        else:
            j = int(np.flatnonzero(ok)[0])
            if best is None or c[j] < best[1] - 1e-12:
                best = (cp, float(c[j]))
    if best is None:
        raise InfeasibleSpecError(
            f"no feasible (c', c) for gamma={gamma}, eps={eps}: '{closest[1]}' fails", closest[1]
        )
    cp, c = best
    return ConstantChoice(cp * unit, c * unit, cp, c)


def hard_spec(
    gamma: float,
    eps: float,
    K: int = 1,
    L1: int = 2,
    L2: int = 2,
    hypothesis: Triple = None,
    reward_id: Triple = None,
    window_cap: float | None = GAP_CAP,
) -> HardInstanceSpec:
    """Spec with constants from :func:`select_constants`."""
    ch = select_constants(gamma, eps, L2, window_cap)
    return HardInstanceSpec(
        K, L1, L2, gamma, eps, ch.alpha1, ch.alpha2, hypothesis, reward_id, ch.c_prime, ch.c, window_cap
    )


@dataclass(frozen=True, eq=False)
class HardInstance:
    spec: HardInstanceSpec
    game: MarkovGame
    self_loop: np.ndarray  # [K, L1, L2]
    iota: np.ndarray  # [K, L1, L2]
    q_closed_form: np.ndarray  # [K, L1, L2]
    claimed_ne: dict = field(default_factory=dict)

    @property
    def reward(self) -> np.ndarray:
        return self.game.reward

    def y1(self, k: int, a: int, b: int) -> int:
        K, L1, L2 = self.spec.K, self.spec.L1, self.spec.L2
        return K + (k * L1 + a) * L2 + b

    def y2(self, k: int, a: int, b: int) -> int:
        return self.y1(k, a, b) + self.spec.K * self.spec.L1 * self.spec.L2

    def sidecar(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "q_closed_form": self.q_closed_form.tolist(),
            "claimed_ne": {str(s): list(ab) for s, ab in self.claimed_ne.items()},
        }


def _null_self_loop(spec: HardInstanceSpec) -> np.ndarray:
    p = np.full((spec.K, spec.L1, spec.L2), spec.p0)
    p[:, 0, 0] = spec.p0 - spec.alpha1
    p[:, 1:, 0] = spec.p0 - 2 * spec.alpha1
    return p


def build_hard_instance(spec: HardInstanceSpec, check: bool = True) -> HardInstance:
    """Assemble the game over ``X``, ``Y1``, ``Y2`` for one hypothesis/reward pair.

    ``x_k`` moves to ``y1(k, a, b)`` surely; ``y1`` self-loops with probability
    ``p`` and otherwise drops into the absorbing zero-reward ``y2``. Only the
    ``y1`` states pay, a constant ``iota`` per step.
    """
    if check:
        bad = spec.violations()
        if bad:
            raise InfeasibleSpecError(f"hard-instance spec violates: {', '.join(bad)}", bad[0])
    K, L1, L2, g = spec.K, spec.L1, spec.L2, spec.gamma
    p_null = _null_self_loop(spec)
    p = p_null.copy()
    if spec.hypothesis is not None:
        k, l1, l2 = spec.hypothesis
        p[k, l1, l2] = spec.p0 - spec.alpha2
    iota = np.ones((K, L1, L2))
    if spec.reward_id is not None:
        k, l1, l2 = spec.reward_id
        rows = np.arange(L1) != l1
        base = p_null[k, rows, l2]
        iota[k, rows, l2] = (1 - g * base) / (1 - g * (base - 2 * spec.alpha2))

    n = K * L1 * L2
    S = K + 2 * n
    P = np.zeros((S, L1, L2, S))
    r = np.zeros((S, L1, L2))
    ks, as_, bs = np.meshgrid(np.arange(K), np.arange(L1), np.arange(L2), indexing="ij")
    y1 = K + ((ks * L1 + as_) * L2 + bs)
    P[ks, as_, bs, y1] = 1.0
    flat_p, flat_i, flat_y1 = p.ravel(), iota.ravel(), y1.ravel()
    P[flat_y1, :, :, flat_y1] = flat_p[:, None, None]
    P[flat_y1, :, :, flat_y1 + n] = (1.0 - flat_p)[:, None, None]
    r[flat_y1] = flat_i[:, None, None]
    y2 = np.arange(K + n, S)
    P[y2, :, :, y2] = 1.0
    game = MarkovGame(P, r, g)

    claimed: dict[int, tuple[int, int]] = {}
    if spec.hypothesis == spec.reward_id:
        claimed = {k: (0, 0) for k in range(K)}
        if spec.hypothesis is not None:
            k, l1, l2 = spec.hypothesis
            claimed[k] = (l1, l2)
    elif spec.hypothesis is None:
        # a mismatched reward only disturbs x_k; the other states keep (a1, b1)
        claimed = {k: (0, 0) for k in range(K) if k != spec.reward_id[0]}
    q = g * iota / (1.0 - g * p)
    return HardInstance(spec, game, p, iota, q, claimed)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class VerifyReport:
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_json(self) -> dict:
        return {"passed": self.passed, "checks": [asdict(c) for c in self.checks]}


def _saddle_margin(M: np.ndarray, a: int, b: int) -> float:
    """How far ``(a, b)`` is from losing strict saddle status (negative if not a saddle)."""
    col = np.delete(M[:, b], a)
    row = np.delete(M[a, :], b)
    return float(min(M[a, b] - col.max(), row.min() - M[a, b]))


def verify_instance(inst: HardInstance, tol: float = 1e-6) -> VerifyReport:
    """Re-derive the structural claims of a hard instance numerically.

    Q-values come from the planner on the built game, never from the closed
    form, so the closed-form comparison is a genuine cross-check.
    """
    spec, game = inst.spec, inst.game
    K, L1, L2, eps = spec.K, spec.L1, spec.L2, spec.eps
    checks: list[Check] = []

    def add(name, ok, detail):
        checks.append(Check(name, bool(ok), detail))

    plan = shapley_value_iteration(game, PlanConfig(eps_opt=min(tol, eps) * 1e-3))
    qx = plan.q_star_hat[:K]
    err = float(np.abs(qx - inst.q_closed_form).max())
    add("closed_form_q", err <= tol, f"max |Q_plan - Q_closed| = {err:.3e}")

    n = K * L1 * L2
    ys = np.arange(K, K + 2 * n)
    invariant = all(
        np.all(game.transition[s] == game.transition[s, 0, 0]) and np.all(game.reward[s] == game.reward[s, 0, 0])
        for s in ys
    )
    pairs = K * L1 * L2 + (len(ys) if invariant else len(ys) * L1 * L2)
    add("census", invariant and pairs == 3 * n, f"{pairs} state-joint-action pairs, expected {3 * n}")

    diff = int(np.count_nonzero(np.abs(inst.self_loop - _null_self_loop(spec)) > 0))
    want = 0 if spec.hypothesis is None else 1
    add("one_entry_from_null", diff == want, f"{diff} transition entries differ from the null model")

    for k in range(K):
        lo, hi = value_bounds(qx[k])
        add(f"x{k}:maximin_vs_minimax", True, f"maximin={lo:.9f}, minimax={hi:.9f}")
        if k in inst.claimed_ne:
            a, b = inst.claimed_ne[k]
            margin = _saddle_margin(qx[k], a, b)
            add(
                f"x{k}:strict_saddle",
                margin >= GAP_FLOOR * eps - tol,
                f"({a}, {b}) margin {margin / eps:.3f} eps, need >= {GAP_FLOOR:g} eps",
            )
            add(f"x{k}:pure_value", abs(hi - lo) <= tol, f"minimax - maximin = {hi - lo:.3e}")
            sol = solve_exact(qx[k])
            pure = sol.u[a] >= 1 - 1e-9 and sol.theta[b] >= 1 - 1e-9
            add(f"x{k}:solver_ne", pure, f"solver puts {sol.u[a]:.6f} on a, {sol.theta[b]:.6f} on b")

    if spec.hypothesis is not None and spec.hypothesis == spec.reward_id:
        k, l1, l2 = spec.hypothesis
        M = qx[k]
        others = np.abs(np.delete(M.ravel(), l1 * L2 + l2) - M[l1, l2]) / eps
        cap = np.inf if spec.window_cap is None else spec.window_cap
        ok = others.min() >= GAP_FLOOR - tol / eps and others.max() <= cap + tol / eps
        add("alternative_window", ok, f"gaps in [{others.min():.3f}, {others.max():.3f}] eps, window [20, {cap:g}]")
    if spec.hypothesis is None and spec.reward_id is None:
        f = lambda x: _q(spec.gamma, spec.p0, x)  # noqa: E731
        gap = min(f(0) - f(spec.alpha1), f(spec.alpha1) - f(2 * spec.alpha1)) / eps
        add("null_gap", gap >= GAP_FLOOR, f"null gap {gap:.3f} eps")
    if spec.hypothesis is None and spec.reward_id is not None:
        k, l1, l2 = spec.reward_id
        f = lambda x: _q(spec.gamma, spec.p0, x)  # noqa: E731
        v = plan.v_star_hat[k]
        lo, hi = f(2 * spec.alpha1), f(spec.alpha1)
        add("mismatch_value_range", lo - tol <= v <= hi + tol, f"V*(x{k}) = {v:.9f} in [{lo:.9f}, {hi:.9f}]")
        sol = solve_exact(qx[k])
        prob = float(sol.u[l1] * sol.theta[l2])
        add("mismatch_joint_prob", prob <= spec.beta, f"NE plays ({l1}, {l2}) w.p. {prob:.6f} <= beta")

    add("beta_bound", spec.beta <= BETA_MAX, f"beta = {spec.beta:.6f}, bound {BETA_MAX:.6f}")
    report = VerifyReport(checks)
    log.debug("verify_instance: %s", report.failed() or "all passed")
    return report


def embed_mdp(transitions, rewards, gamma: float, num_dummy_actions: int = 1) -> MarkovGame:
    """Single-controller game: the min player's actions change nothing."""
    P = np.asarray(transitions, dtype=float)
    r = np.asarray(rewards, dtype=float)
    if P.ndim != 3 or P.shape[0] != P.shape[2]:
        raise GameError(f"MDP transitions must have shape [S, A, S], got {P.shape}")
    if r.shape != P.shape[:2]:
        raise GameError(f"MDP rewards shape {r.shape} does not match transitions {P.shape[:2]}")
    if num_dummy_actions < 1:
        raise GameError("num_dummy_actions must be >= 1")
    B = int(num_dummy_actions)
    Pg = np.repeat(P[:, :, None, :], B, axis=2)
    rg = np.repeat(r[:, :, None], B, axis=2)
    return MarkovGame(Pg, rg, gamma)


def _generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngSpec):
        return np.random.default_rng([rng.seed, rng.stream_id])
    return np.random.default_rng(rng)


def random_game(S: int, A: int, B: int, gamma: float, branching: int | None = None, rng=0) -> MarkovGame:
    """Rewards ``U[0, 1]``; each transition row is a random positive vector on
    ``branching`` successors drawn uniformly without replacement."""
    if min(S, A, B) < 1:
        raise GameError(f"invalid dimensions {(S, A, B)}")
    branching = S if branching is None else int(branching)
    if not 1 <= branching <= S:
        raise GameError(f"branching must lie in [1, {S}], got {branching}")
    gen = _generator(rng)
    rows = S * A * B
    succ = np.argsort(gen.random((rows, S)), axis=1)[:, :branching]
    w = gen.exponential(size=(rows, branching)) + 1e-3
    w /= w.sum(axis=1, keepdims=True)
    P = np.zeros((rows, S))
    np.put_along_axis(P, succ, w, axis=1)
    reward = gen.random((S, A, B))
    return MarkovGame(P.reshape(S, A, B, S), reward, gamma)
