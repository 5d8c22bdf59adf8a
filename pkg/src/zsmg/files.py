"""JSON file formats: games, empirical models, MDPs, hard-instance sidecars."""

from __future__ import annotations

import json
import os
import tempfile
from numbers import Real
from pathlib import Path

import numpy as np

from .game_core import GameError, MarkovGame
from .sampling import EmpiricalModel

GAME_KEYS = ("gamma", "num_states", "num_actions_max", "num_actions_min", "transition", "reward")


def atomic_write_text(path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=1) + "\n")


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise GameError(f"{path}: invalid JSON ({e})") from None


def _nested_array(value, shape: tuple, where: str, integer: bool = False) -> np.ndarray:
    """Validate a nested list against ``shape`` and report the first bad index path."""

    def walk(v, depth, path):
        if depth == len(shape):
            ok = isinstance(v, int) if integer else isinstance(v, Real)
            if isinstance(v, bool) or not ok:
                kind = "an integer" if integer else "a number"
                raise GameError(f"{where}{path}: expected {kind}, got {v!r}")
            return
        if not isinstance(v, list):
            raise GameError(f"{where}{path}: expected a list of length {shape[depth]}, got {type(v).__name__}")
        if len(v) != shape[depth]:
            raise GameError(f"{where}{path}: expected length {shape[depth]}, got {len(v)}")
        for i, item in enumerate(v):
            walk(item, depth + 1, f"{path}[{i}]")

    walk(value, 0, "")
    return np.array(value, dtype=np.int64 if integer else float)


def _positive_int(doc: dict, key: str) -> int:
    v = doc.get(key)
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise GameError(f"{key}: expected a positive integer, got {v!r}")
    return v


def game_to_json(game: MarkovGame) -> dict:
    S, A, B = game.shape
    return {
        "gamma": game.discount,
        "num_states": S,
        "num_actions_max": A,
        "num_actions_min": B,
        "transition": game.transition.tolist(),
        "reward": game.reward.tolist(),
    }


def game_from_json(doc, strict_reward: bool = True) -> MarkovGame:
    if not isinstance(doc, dict):
        raise GameError("game file: top level must be an object")
    missing = [k for k in GAME_KEYS if k not in doc]
    if missing:
        raise GameError(f"game file: missing keys {missing}")
    gamma = doc["gamma"]
    if isinstance(gamma, bool) or not isinstance(gamma, Real):
        raise GameError(f"gamma: expected a number, got {gamma!r}")
    S, A, B = (_positive_int(doc, k) for k in GAME_KEYS[1:4])
    P = _nested_array(doc["transition"], (S, A, B, S), "transition")
    r = _nested_array(doc["reward"], (S, A, B), "reward")
    return MarkovGame(P, r, float(gamma), strict_reward=strict_reward)


def load_game(path, strict_reward: bool = True) -> MarkovGame:
    return game_from_json(read_json(path), strict_reward)


def save_game(path, game: MarkovGame) -> None:
    write_json(path, game_to_json(game))


def load_model(path) -> EmpiricalModel:
    doc = read_json(path)
    if not isinstance(doc, dict) or "counts" not in doc:
        raise GameError("model file: expected an object with 'N' and 'counts'")
    counts = doc["counts"]
    dims = []
    v = counts
    while isinstance(v, list) and len(dims) < 4:
        dims.append(len(v))
        v = v[0] if v else None
    if len(dims) != 4:
        raise GameError("counts: expected a 4-level nested list [S][A][B][S]")
    arr = _nested_array(counts, tuple(dims), "counts", integer=True)
    return EmpiricalModel.from_json({"N": doc.get("N"), "counts": arr})


def save_model(path, model: EmpiricalModel) -> None:
    write_json(path, model.to_json())


def load_reward(path, shape: tuple) -> np.ndarray:
    """Reward file: ``{"reward": [S][A][B]}`` or a full game file (its reward is used)."""
    doc = read_json(path)
    if not isinstance(doc, dict) or "reward" not in doc:
        raise GameError(f"{path}: expected an object with a 'reward' array")
    return _nested_array(doc["reward"], tuple(shape), "reward")


def load_mdp(path):
    """MDP file: ``{"gamma": float, "transition": [S][A][S], "reward": [S][A]}``."""
    doc = read_json(path)
    if not isinstance(doc, dict) or not {"gamma", "transition", "reward"} <= doc.keys():
        raise GameError("MDP file: expected keys 'gamma', 'transition', 'reward'")
    P = doc["transition"]
    if not (isinstance(P, list) and P and isinstance(P[0], list) and P[0]):
        raise GameError("transition: expected a nested list [S][A][S]")
    S, A = len(P), len(P[0])
    return (
        _nested_array(P, (S, A, S), "transition"),
        _nested_array(doc["reward"], (S, A), "reward"),
        float(doc["gamma"]),
    )
