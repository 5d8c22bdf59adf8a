"""Sample-budget sweeps: estimate, plan, score against the exact solution, fit rates."""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .files import atomic_write_text, load_game, load_mdp, load_reward, write_json
from .game_core import GameError, MarkovGame, nash_gap, policy_evaluate
from .instances import GAP_CAP, build_hard_instance, embed_mdp, hard_spec, random_game
from .matrix_game import RegularizerSpec
from .planner import PlanConfig, one_step_ne_extract, shapley_value_iteration
from .sampling import GenerativeModel, RngSpec, empirical_game, estimate_model

log = logging.getLogger(__name__)

CSV_HEADER = (
    "instance_id",
    "N",
    "seed",
    "q_error_inf",
    "q_true_error_inf",
    "nash_gap_direct",
    "nash_gap_onestep",
    "eps_opt_certified",
    "runtime_ms",
)
METRICS = CSV_HEADER[3:7]
FIT_FLOOR = 1e-12
MAX_DESK_PAIRS = 20_000


class ConfigError(ValueError):
    pass


class DegenerateFitError(ValueError):
    """Medians at or below the numerical floor; the rate is reported, not fitted."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep description. ``instance_source`` is a dict with a ``kind`` key:

    * ``{"kind": "file", "path": ...}``
    * ``{"kind": "hard", "K", "L1", "L2", "gamma", "eps"}`` plus optional
      ``hypothesis``, ``reward_id`` and ``window_cap`` (``null`` relaxes it)
    * ``{"kind": "random", "dims": [S, A, B], "gamma", "seed"}`` plus optional ``branching``
    * ``{"kind": "embed_mdp", "path": ...}`` plus optional ``num_dummy_actions``

    ``protocol`` is ``"reward_aware"`` or ``{"reward_agnostic": [reward files]}``.
    """

    instance_source: dict
    n_grid: tuple
    seeds: tuple
    eps_opt: float = 1e-6
    oracle_kind: str = "exact_lp"
    regularizer: RegularizerSpec | None = None
    protocol: object = "reward_aware"
    output_path: str = "sweep.csv"
    fit_metrics: tuple = METRICS
    workers: int = 1
    record_runtime: bool = False
    base_dir: str = "."

    def __post_init__(self):
        n = tuple(int(x) for x in self.n_grid)
        if not n or any(x < 1 for x in n) or any(b <= a for a, b in zip(n, n[1:])):
            raise ConfigError(f"n_grid must be positive and strictly increasing, got {list(n)}")
        seeds = tuple(s if isinstance(s, RngSpec) else _rng_from_json(s) for s in self.seeds)
        if not seeds or len(set(seeds)) != len(seeds):
            raise ConfigError("seeds must be a non-empty list of distinct entries")
        object.__setattr__(self, "n_grid", n)
        object.__setattr__(self, "seeds", seeds)
        bad = [m for m in self.fit_metrics if m not in METRICS]
        if bad:
            raise ConfigError(f"unknown fit metrics {bad}; choose from {list(METRICS)}")
        object.__setattr__(self, "fit_metrics", tuple(self.fit_metrics))
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.protocol != "reward_aware":
            files = self.protocol.get("reward_agnostic") if isinstance(self.protocol, dict) else None
            if not isinstance(files, list) or not files:
                raise ConfigError("protocol must be 'reward_aware' or {'reward_agnostic': [reward files]}")
        if not isinstance(self.instance_source, dict) or self.instance_source.get("kind") not in (
            "file",
            "hard",
            "random",
            "embed_mdp",
        ):
            raise ConfigError("instance_source.kind must be one of file, hard, random, embed_mdp")
        self.plan_config()

    def plan_config(self, eps_opt: float | None = None) -> PlanConfig:
        try:
            return PlanConfig(
                eps_opt=self.eps_opt if eps_opt is None else eps_opt,
                oracle_kind=self.oracle_kind,
                regularizer=self.regularizer,
            )
        except ValueError as e:
            raise ConfigError(str(e)) from None

    @property
    def fittable(self) -> bool:
        return len(self.n_grid) >= 3 and len(self.seeds) >= 5

    @classmethod
    def from_json(cls, doc: dict, base_dir: str = ".") -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        for key in ("instance_source", "n_grid", "seeds"):
            if key not in doc:
                raise ConfigError(f"config is missing '{key}'")
        doc = dict(doc)
        if doc.get("regularizer") is not None:
            try:
                doc["regularizer"] = RegularizerSpec(**doc["regularizer"])
            except (TypeError, ValueError) as e:
                raise ConfigError(f"regularizer: {e}") from None
        try:
            return cls(**doc, base_dir=base_dir)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None


def _rng_from_json(s) -> RngSpec:
    try:
        if isinstance(s, int) and not isinstance(s, bool):
            return RngSpec(s)
        if isinstance(s, dict):
            return RngSpec(int(s["seed"]), int(s.get("stream_id", 0)))
    except (KeyError, ValueError) as e:
        raise ConfigError(f"bad seed entry {s!r}: {e}") from None
    raise ConfigError(f"seed entries must be integers or {{seed, stream_id}} objects, got {s!r}")


def _seed_label(rng: RngSpec) -> str:
    return str(rng.seed) if rng.stream_id == 0 else f"{rng.seed}:{rng.stream_id}"


@dataclass(frozen=True)
class ExperimentRecord:
    instance_id: str
    N: int
    seed: str
    q_error_inf: float
    q_true_error_inf: float
    nash_gap_direct: float
    nash_gap_onestep: float
    eps_opt_certified: float
    runtime_ms: float | None = None

    def row(self) -> list[str]:
        vals = [getattr(self, k) for k in CSV_HEADER]
        return ["" if v is None else repr(float(v)) if isinstance(v, float) else str(v) for v in vals]


@dataclass
class SweepInstance:
    instance_id: str
    game: MarkovGame
    rewards: list = field(default_factory=list)  # (label, reward array)


def _resolve(base_dir: str, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else Path(base_dir) / p


def load_instance(config: ExperimentConfig) -> SweepInstance:
    src = config.instance_source
    kind = src["kind"]
    try:
        if kind == "file":
            path = _resolve(config.base_dir, src["path"])
            game, iid = load_game(path), path.stem
        elif kind == "hard":
            spec = hard_spec(
                float(src["gamma"]),
                float(src["eps"]),
                int(src.get("K", 1)),
                int(src.get("L1", 2)),
                int(src.get("L2", 2)),
                src.get("hypothesis"),
                src.get("reward_id"),
                src.get("window_cap", GAP_CAP),
            )
            game = build_hard_instance(spec).game
            iid = f"hard_K{spec.K}_L{spec.L1}x{spec.L2}_g{spec.gamma:g}_e{spec.eps:g}"
        elif kind == "random":
            S, A, B = (int(x) for x in src["dims"])
            seed = int(src.get("seed", 0))
            game = random_game(S, A, B, float(src["gamma"]), src.get("branching"), seed)
            iid = f"random_{S}x{A}x{B}_g{float(src['gamma']):g}_s{seed}"
        else:
            path = _resolve(config.base_dir, src["path"])
            P, r, gamma = load_mdp(path)
            game = embed_mdp(P, r, gamma, int(src.get("num_dummy_actions", 1)))
            iid = path.stem
    except KeyError as e:
        raise ConfigError(f"instance_source ({kind}) is missing {e}") from None
    S, A, B = game.shape
    if S * A * B > MAX_DESK_PAIRS:
        raise ConfigError(f"instance has {S * A * B} state-joint-action pairs; exact reference limited to {MAX_DESK_PAIRS}")
    inst = SweepInstance(iid, game)
    if config.protocol == "reward_aware":
        inst.rewards = [(iid, np.array(game.reward))]
    else:
        for i, f in enumerate(config.protocol["reward_agnostic"]):
            r = load_reward(_resolve(config.base_dir, f), game.shape)
            inst.rewards.append((f"{iid}/r{i}", r))
    return inst


def _score(true_game: MarkovGame, emp: MarkovGame, q_ref: np.ndarray, plan) -> tuple:
    """The four error metrics of one planned empirical game."""
    q_emp, _ = policy_evaluate(emp, plan.mu_hat, plan.nu_hat)
    q_true, _ = policy_evaluate(true_game, plan.mu_hat, plan.nu_hat)
    # one-step pair of the evaluated empirical Q, not of the planner's Q-hat*
    mu1, nu1 = one_step_ne_extract(q_emp)
    return (
        float(np.abs(q_emp - q_ref).max()),
        float(np.abs(q_true - q_ref).max()),
        nash_gap(true_game, plan.mu_hat, plan.nu_hat),
        nash_gap(true_game, mu1, nu1),
    )


def _run_cell(args) -> list[ExperimentRecord]:
    config, inst, refs, N, rng = args
    t0 = time.perf_counter()
    sampler = GenerativeModel(inst.game, rng)
    model = estimate_model(sampler, N)
    sampling_ms = (time.perf_counter() - t0) * 1e3
    out = []
    bound = 1.0 / np.sqrt(1.0 - inst.game.discount)
    for (label, r), q_ref in zip(inst.rewards, refs):
        t1 = time.perf_counter()
        true_game = inst.game.with_reward(r)
        emp = empirical_game(model, r, inst.game.discount)
        plan = shapley_value_iteration(emp, config.plan_config())
        errs = _score(true_game, emp, q_ref, plan)
        ms = sampling_ms + (time.perf_counter() - t1) * 1e3
        if errs[0] > bound:
            log.info("%s N=%d seed=%s: error %.3g outside the rate's range (0, %.3g]", label, N, _seed_label(rng), errs[0], bound)
        out.append(
            ExperimentRecord(
                label, N, _seed_label(rng), *errs, plan.certified_eps_opt, ms if config.record_runtime else None
            )
        )
    return out


def run_sweep(config: ExperimentConfig, write: bool = True) -> list[ExperimentRecord]:
    """Every ``(N, seed)`` cell, with the exact reference solved once per reward.

    Rewards never reach the sampler; under the reward-agnostic protocol one
    empirical model per cell serves every reward.
    """
    inst = load_instance(config)
    # the reference always uses the exact oracle, whatever the sweep plans with
    ref_cfg = PlanConfig(eps_opt=config.eps_opt / 100.0)
    refs = [shapley_value_iteration(inst.game.with_reward(r), ref_cfg).q_star_hat for _, r in inst.rewards]
    jobs = [(config, inst, refs, N, rng) for N in config.n_grid for rng in config.seeds]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_run_cell, jobs))
    else:
        chunks = [_run_cell(j) for j in jobs]
    seed_order = {_seed_label(s): i for i, s in enumerate(sorted(config.seeds, key=lambda s: (s.seed, s.stream_id)))}
    records = sorted(
        (rec for chunk in chunks for rec in chunk), key=lambda r: (r.N, seed_order[r.seed], r.instance_id)
    )
    if write:
        write_csv(_resolve(config.base_dir, config.output_path), records)
    return records


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rec in records:
        w.writerow(rec.row())
    return buf.getvalue()


def write_csv(path, records) -> None:
    atomic_write_text(path, records_to_csv(records))


def read_csv(path) -> list[ExperimentRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        vals = {k: float(row[k]) for k in METRICS + ("eps_opt_certified",)}
        rt = float(row["runtime_ms"]) if row["runtime_ms"] else None
        out.append(ExperimentRecord(row["instance_id"], int(row["N"]), row["seed"], **vals, runtime_ms=rt))
    return out


@dataclass(frozen=True)
class RateFit:
    metric: str
    slope: float
    intercept: float
    r_squared: float
    n_grid: tuple
    medians: tuple

    def to_json(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "n_grid": list(self.n_grid),
            "metric": self.metric,
        }


def fit_rate(records, metric_field: str, min_seeds: int = 5, floor: float = FIT_FLOOR) -> RateFit:
    """OLS of log(median over seeds) on log N.

    Every median must exceed ``floor``: a log-log fit through exact zeros is
    meaningless, so such grids raise DegenerateFitError listing the offending N.
    """
    if metric_field not in METRICS:
        raise ValueError(f"unknown metric {metric_field!r}")
    by_n: dict[int, list[float]] = {}
    for rec in records:
        by_n.setdefault(int(rec.N), []).append(float(getattr(rec, metric_field)))
    ns = sorted(by_n)
    if len(ns) < 3:
        raise ValueError(f"need at least 3 distinct N, got {len(ns)}")
    short = [n for n in ns if len(by_n[n]) < min_seeds]
    if short:
        raise ValueError(f"need at least {min_seeds} records per N; short at N={short}")
    med = np.array([np.median(by_n[n]) for n in ns])
    low = [n for n, m in zip(ns, med) if not m > floor]
    if low:
        raise DegenerateFitError(f"{metric_field}: median at or below {floor:g} for N={low}; medians {med.tolist()}")
    res = stats.linregress(np.log(ns), np.log(med))
    return RateFit(metric_field, float(res.slope), float(res.intercept), float(res.rvalue**2), tuple(ns), tuple(med.tolist()))


def summarize(records, metrics, n_grid) -> list[dict]:
    """Summary entries, one per metric; unfittable ones carry a ``reason`` and null fit fields."""
    out = []
    for m in metrics:
        try:
            out.append(fit_rate(records, m).to_json())
        except ValueError as e:
            out.append({"slope": None, "intercept": None, "r_squared": None, "n_grid": list(n_grid), "metric": m, "reason": str(e)})
    return out


def summary_path(output_path) -> Path:
    p = Path(output_path)
    return p.with_name(p.stem + ".summary.json")


def run_and_summarize(config: ExperimentConfig):
    records = run_sweep(config)
    summary = summarize(records, config.fit_metrics, config.n_grid)
    write_json(summary_path(_resolve(config.base_dir, config.output_path)), summary)
    return records, summary


def check_metric_ordering(records, gamma: float, slack: float = 1e-6) -> list[ExperimentRecord]:
    """Records breaking ``nash_gap_onestep <= 4/(1-gamma) * q_error_inf + slack``."""
    return [r for r in records if r.nash_gap_onestep > 4.0 / (1.0 - gamma) * r.q_error_inf + slack]

