"""Generative-model access and count-based model estimation."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .game_core import GameError, MarkovGame
from .planner import PlanConfig, PlanResult, shapley_value_iteration


@dataclass(frozen=True)
class RngSpec:
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= int(v) < 2**64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v}")


class GenerativeModel:
    """Sampler ``s' ~ P(.|s,a,b)`` over the transitions of a game.

    Holds the transition kernel only; rewards are never visible to sampling.
    Each triple ``(s, a, b)`` owns a counter-based Philox stream keyed by
    ``(seed, stream_id, s, a, b)``, so draws do not depend on query order.
    """

    def __init__(self, game: MarkovGame, rng: RngSpec):
        self._cdf = np.cumsum(game.transition, axis=-1)
        self.shape = game.shape
        self.rng = rng
        self.calls = 0
        self._streams: dict[tuple[int, int, int], np.random.Generator] = {}

    def _stream(self, s: int, a: int, b: int) -> np.random.Generator:
        key = (s, a, b)
        gen = self._streams.get(key)
        if gen is None:
            S, A, B = self.shape
            if not (0 <= s < S and 0 <= a < A and 0 <= b < B):
                raise GameError(f"triple {(s, a, b)} outside game dimensions {self.shape}")
            seq = np.random.SeedSequence([self.rng.seed, self.rng.stream_id, s, a, b])
            gen = np.random.Generator(np.random.Philox(seq))
            self._streams[key] = gen
        return gen

    def draw_many(self, s: int, a: int, b: int, n: int) -> np.ndarray:
        """``n`` successive successor draws for one triple (inverse CDF)."""
        gen = self._stream(s, a, b)
        cdf = self._cdf[s, a, b]
        uni = gen.random(n)
        # first index whose cdf exceeds the uniform always carries positive mass
        idx = np.searchsorted(cdf, uni, side="right")
        over = idx >= cdf.size
        if over.any():
            idx[over] = int(np.flatnonzero(np.diff(cdf, prepend=0.0) > 0)[-1])
        self.calls += n
        return idx

    def draw(self, s: int, a: int, b: int) -> int:
        return int(self.draw_many(s, a, b, 1)[0])


def generative_draw(sampler: GenerativeModel, s: int, a: int, b: int) -> int:
    return sampler.draw(s, a, b)


@dataclass(frozen=True, eq=False)
class EmpiricalModel:
    counts: np.ndarray
    samples_per_pair: int

    def __post_init__(self):
        c = np.array(self.counts)
        if c.ndim != 4 or c.shape[0] != c.shape[3]:
            raise GameError(f"counts must have shape [S, A, B, S], got {c.shape}")
        if not np.issubdtype(c.dtype, np.integer):
            if not np.all(c == np.round(c)):
                raise GameError("counts must be integers")
            c = c.astype(np.int64)
        N = int(self.samples_per_pair)
        if N < 1:
            raise GameError("samples_per_pair must be >= 1")
        if np.any(c < 0):
            raise GameError("counts must be non-negative")
        sums = c.sum(axis=-1)
        if np.any(sums != N):
            bad = np.argwhere(sums != N)[0]
            raise GameError(f"counts{bad.tolist()} sum to {sums[tuple(bad)]}, expected N={N}")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "samples_per_pair", N)

    @property
    def source_dims(self) -> tuple[int, int, int]:
        return self.counts.shape[:3]

    @property
    def p_hat(self) -> np.ndarray:
        return self.counts / self.samples_per_pair

    def p_hat_exact(self, s: int, a: int, b: int) -> list[Fraction]:
        return [Fraction(int(k), self.samples_per_pair) for k in self.counts[s, a, b]]

    def to_json(self) -> dict:
        return {"N": self.samples_per_pair, "counts": self.counts.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "EmpiricalModel":
        if not isinstance(doc.get("N"), int):
            raise GameError("model file: 'N' must be an integer")
        return cls(np.array(doc["counts"], dtype=np.int64), doc["N"])


def estimate_model(source: MarkovGame | GenerativeModel, N: int, rng: RngSpec | None = None) -> EmpiricalModel:
    """Call the sampler ``N`` times at every ``(s, a, b)`` and count successors."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if isinstance(source, MarkovGame):
        sampler = GenerativeModel(source, rng if rng is not None else RngSpec())
    else:
        sampler = source
    S, A, B = sampler.shape
    counts = np.zeros((S, A, B, S), dtype=np.int64)
    for s in range(S):
        for a in range(A):
            for b in range(B):
                counts[s, a, b] = np.bincount(sampler.draw_many(s, a, b, N), minlength=S)
    return EmpiricalModel(counts, N)


def empirical_game(model: EmpiricalModel, reward: np.ndarray, gamma: float) -> MarkovGame:
    """The plug-in game: estimated transitions with the given (never estimated) reward."""
    reward = np.asarray(reward, dtype=float)
    if reward.shape != model.source_dims:
        raise GameError(f"reward shape {reward.shape} does not match model {model.source_dims}")
    return MarkovGame(model.p_hat, reward, gamma)


def plan_rewards(model: EmpiricalModel, rewards, gamma: float, config: PlanConfig) -> list[PlanResult]:
    return [shapley_value_iteration(empirical_game(model, r, gamma), config) for r in rewards]


def reward_agnostic_pipeline(
    source: MarkovGame | GenerativeModel,
    N: int,
    rewards,
    config: PlanConfig,
    rng: RngSpec | None = None,
    gamma: float | None = None,
) -> list[PlanResult]:
    """Sample once without rewards, then plan once per reward on the shared model."""
    rewards = [np.asarray(r, dtype=float) for r in rewards]
    if not rewards:
        raise ValueError("at least one reward is required")
    if gamma is None:
        if not isinstance(source, MarkovGame):
            raise ValueError("gamma is required when sampling from a bare generative model")
        gamma = source.discount
    model = estimate_model(source, N, rng)
    return plan_rewards(model, rewards, gamma, config)
