"""Command-line entry point: ``zsmg solve|estimate|instance|sweep|verify``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .experiment import ConfigError, ExperimentConfig, run_and_summarize
from .files import load_game, load_mdp, read_json, save_game, save_model, write_json
from .game_core import GameError
from .instances import (
    GAP_CAP,
    Check,
    HardInstanceSpec,
    build_hard_instance,
    embed_mdp,
    hard_spec,
    random_game,
    verify_instance,
)
from .matrix_game import MatrixGameError, RegularizerSpec
from .planner import PlanConfig, PlanningError, shapley_value_iteration
from .sampling import RngSpec, estimate_model

DOMAIN_ERRORS = (GameError, ConfigError, PlanningError, MatrixGameError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _triple(text: str):
    try:
        k, l1, l2 = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected k,l1,l2 (0-based), got {text!r}") from None
    return (k, l1, l2)


def _emit(doc) -> None:
    print(json.dumps(doc, indent=1))


def cmd_solve(args) -> int:
    game = load_game(args.game, strict_reward=not args.signed_rewards)
    reg = RegularizerSpec(args.regularizer, args.tau, args.tau) if args.oracle == "smooth_regularized" else None
    res = shapley_value_iteration(game, PlanConfig(args.eps_opt, args.oracle, reg, args.max_iters))
    _emit(
        {
            "value": res.v_star_hat.tolist(),
            "mu": res.mu_hat.dist.tolist(),
            "nu": res.nu_hat.dist.tolist(),
            "certified_eps_opt": res.certified_eps_opt,
            "iterations": res.iterations,
        }
    )
    return 0


def cmd_estimate(args) -> int:
    game = load_game(args.game)
    model = estimate_model(game, args.n, RngSpec(args.seed, args.stream_id))
    save_model(args.out, model)
    _emit({"model": str(args.out), "N": model.samples_per_pair, "generative_calls": int(model.counts.sum())})
    return 0


def _sidecar_path(out: Path) -> Path:
    return out.with_name(out.stem + ".instance.json")


def cmd_instance(args) -> int:
    out = Path(args.out)
    if args.kind == "hard":
        cap = None if args.relax_window else GAP_CAP
        spec = hard_spec(args.gamma, args.eps, args.K, args.L1, args.L2, args.hypothesis, args.reward_id, cap)
        inst = build_hard_instance(spec)
        save_game(out, inst.game)
        side = Path(args.sidecar) if args.sidecar else _sidecar_path(out)
        write_json(side, inst.sidecar())
        _emit({"game": str(out), "sidecar": str(side), "c_prime": spec.c_prime, "c": spec.c,
               "alpha1": spec.alpha1, "alpha2": spec.alpha2, "beta": spec.beta})
    elif args.kind == "random":
        S, A, B = args.dims
        save_game(out, random_game(S, A, B, args.gamma, args.branching, RngSpec(args.seed)))
        _emit({"game": str(out)})
    else:
        P, r, gamma = load_mdp(args.mdp)
        save_game(out, embed_mdp(P, r, gamma, args.dummy_actions))
        _emit({"game": str(out)})
    return 0


def cmd_sweep(args) -> int:
    path = Path(args.config)
    doc = read_json(path)
    if args.workers is not None and isinstance(doc, dict):
        doc["workers"] = args.workers
    config = ExperimentConfig.from_json(doc, base_dir=str(path.parent))
    records, summary = run_and_summarize(config)
    _emit({"records": len(records), "summary": summary})
    return 0


def cmd_verify(args) -> int:
    doc = read_json(args.instance)
    if not isinstance(doc, dict) or "spec" not in doc:
        raise GameError("instance file: expected a sidecar object with a 'spec' entry")
    spec = HardInstanceSpec.from_json(doc["spec"])
    inst = build_hard_instance(spec, check=False)
    report = verify_instance(inst)
    bad = spec.violations()
    report.checks.insert(0, Check("spec_invariants", not bad, "; ".join(bad) or "all hold"))
    if "q_closed_form" in doc:
        stored = np.asarray(doc["q_closed_form"], dtype=float)
        same = stored.shape == inst.q_closed_form.shape and np.allclose(stored, inst.q_closed_form, rtol=0, atol=1e-12)
        report.checks.append(Check("sidecar_q_closed_form", bool(same), "stored table vs rebuilt"))
    if args.game:
        game = load_game(args.game)
        same = game.shape == inst.game.shape and np.array_equal(game.transition, inst.game.transition) and np.array_equal(
            game.reward, inst.game.reward
        )
        report.checks.append(Check("game_file", bool(same), f"{args.game} vs rebuilt game"))
    _emit(report.to_json())
    if not report.passed:
        print(json.dumps({"error": "VerificationFailed", "message": f"failed checks: {report.failed()}"}), file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="zsmg", description="Zero-sum Markov games: planning, sampling, instances and sweeps.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="plan on a game file and print V*, policies and the certificate")
    s.add_argument("game")
    s.add_argument("--eps-opt", type=float, default=1e-6)
    s.add_argument("--oracle", choices=["exact_lp", "smooth_regularized"], default="exact_lp")
    s.add_argument("--regularizer", choices=["neg_entropy", "tsallis"], default="neg_entropy")
    s.add_argument("--tau", type=float, default=1e-2)
    s.add_argument("--max-iters", type=int, default=100_000)
    s.add_argument("--signed-rewards", action="store_true", help="accept finite rewards outside [0, 1]")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("estimate", help="sample N successors per triple and write the empirical model")
    e.add_argument("game")
    e.add_argument("--n", type=int, required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--stream-id", type=int, default=0)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_estimate)

    i = sub.add_parser("instance", help="write generated game files")
    isub = i.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    h = isub.add_parser("hard", help="lower-bound family member plus sidecar")
    h.add_argument("--gamma", type=float, required=True)
    h.add_argument("--eps", type=float, required=True)
    h.add_argument("--K", type=int, default=1)
    h.add_argument("--L1", type=int, default=2)
    h.add_argument("--L2", type=int, default=2)
    h.add_argument("--hypothesis", type=_triple, default=None, help="k,l1,l2 (0-based); omit for the null model")
    h.add_argument("--reward-id", type=_triple, default=None, help="k,l1,l2 (0-based); omit for the all-ones reward")
    h.add_argument("--relax-window", action="store_true", help="drop the upper end of the alternative gap window")
    h.add_argument("--sidecar", default=None)
    h.add_argument("--out", required=True)
    r = isub.add_parser("random", help="random game")
    r.add_argument("--dims", type=int, nargs=3, metavar=("S", "A", "B"), required=True)
    r.add_argument("--gamma", type=float, required=True)
    r.add_argument("--branching", type=int, default=None)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True)
    m = isub.add_parser("embed", help="single-controller embedding of an MDP file")
    m.add_argument("mdp")
    m.add_argument("--dummy-actions", type=int, default=1)
    m.add_argument("--out", required=True)
    i.set_defaults(func=cmd_instance)

    w = sub.add_parser("sweep", help="run a sweep config; write CSV and summary JSON")
    w.add_argument("config")
    w.add_argument("--workers", type=int, default=None)
    w.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="re-check a hard-instance sidecar")
    v.add_argument("instance")
    v.add_argument("--game", default=None, help="also compare a game file with the rebuilt game")
    v.set_defaults(func=cmd_verify)
    return p


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(json.dumps({"error": "UsageError", "message": str(e)}), file=sys.stderr)
        return 2
    except SystemExit as e:  # --help
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DOMAIN_ERRORS as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
