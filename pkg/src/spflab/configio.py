"""TOML configuration parsing and validation for the command-line tools.

Errors carry the section.key path of the offending field so the CLI can exit
with a pointed diagnostic.  The grammar is documented in the README.
"""

from __future__ import annotations

from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .loop import TrainerConfig
from .mdp import TabularMdp, TabularPolicy


class ConfigError(Exception):
    """Invalid configuration; message includes the field path."""


def load_toml(path: str | Path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: malformed TOML: {exc}") from exc


def _section(cfg: dict, name: str, required: bool = True) -> dict:
    value = cfg.get(name)
    if value is None:
        if required:
            raise ConfigError(f"missing [{name}] section")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    return value


def _get(section: dict, section_name: str, key: str, kind, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"{section_name}.{key}: missing required key")
        return default
    value = section[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{section_name}.{key}: expected {kind.__name__}, got {value!r}")
    return value


def mdp_from_config(cfg: dict) -> TabularMdp:
    sec = _section(cfg, "mdp")
    n_states = _get(sec, "mdp", "n_states", int, required=True)
    n_actions = _get(sec, "mdp", "n_actions", int, required=True)
    gamma = _get(sec, "mdp", "gamma", float, required=True)
    if n_states < 1 or n_actions < 1:
        raise ConfigError("mdp.n_states/mdp.n_actions: must be positive")
    transition = _get(sec, "mdp", "transition", list, required=True)
    if len(transition) != n_states * n_actions * n_states:
        raise ConfigError(
            f"mdp.transition: expected {n_states * n_actions * n_states} entries "
            f"(row-major s, a, s'), got {len(transition)}"
        )
    reward = _get(sec, "mdp", "reward", list, default=[0.0] * n_states)
    if len(reward) != n_states:
        raise ConfigError(f"mdp.reward: expected {n_states} entries, got {len(reward)}")
    initial = _get(sec, "mdp", "initial_dist", list, required=True)
    if len(initial) != n_states:
        raise ConfigError(f"mdp.initial_dist: expected {n_states} entries, got {len(initial)}")
    embedding_cfg = sec.get("embedding", "onehot")
    if embedding_cfg == "onehot":
        embedding = None
    elif isinstance(embedding_cfg, list):
        embedding = np.asarray(embedding_cfg, dtype=np.float64)
        if embedding.ndim != 2 or embedding.shape[0] != n_states:
            raise ConfigError(
                f"mdp.embedding: expected {n_states} rows of equal length"
            )
    else:
        raise ConfigError('mdp.embedding: expected "onehot" or a matrix')
    r_max = _get(sec, "mdp", "r_max", float, default=0.0)
    try:
        return TabularMdp(
            transition=np.asarray(transition, dtype=np.float64).reshape(
                n_states, n_actions, n_states
            ),
            reward=np.asarray(reward, dtype=np.float64),
            initial_dist=np.asarray(initial, dtype=np.float64),
            gamma=gamma,
            embedding=embedding,
            r_max=r_max,
        )
    except ValueError as exc:
        raise ConfigError(f"mdp: {exc}") from exc


def policy_from_config(cfg: dict, mdp: TabularMdp) -> TabularPolicy:
    sec = _section(cfg, "policy", required=False)
    probs = sec.get("probs", "uniform")
    if probs == "uniform":
        return TabularPolicy.uniform(mdp.n_states, mdp.n_actions)
    if isinstance(probs, list):
        if len(probs) != mdp.n_states * mdp.n_actions:
            raise ConfigError(
                f"policy.probs: expected {mdp.n_states * mdp.n_actions} entries, got {len(probs)}"
            )
        try:
            return TabularPolicy(
                np.asarray(probs, dtype=np.float64).reshape(mdp.n_states, mdp.n_actions)
            )
        except ValueError as exc:
            raise ConfigError(f"policy.probs: {exc}") from exc
    raise ConfigError('policy.probs: expected "uniform" or a flattened matrix')


def analysis_from_config(cfg: dict) -> dict:
    sec = _section(cfg, "analysis", required=False)
    return {
        "n_steps": _get(sec, "analysis", "n_steps", int, default=400),
        "period_tol": _get(sec, "analysis", "period_tol", float, default=1e-6),
    }


def dtft_from_config(cfg: dict) -> dict:
    sec = _section(cfg, "dtft", required=False)
    return {
        "n_freq": _get(sec, "dtft", "n_freq", int, default=128),
        "half_spectrum": _get(sec, "dtft", "half_spectrum", bool, default=True),
        "tol": _get(sec, "dtft", "tol", float, default=1e-10),
        "max_iter": _get(sec, "dtft", "max_iter", int, default=100_000),
    }


def bounds_from_config(cfg: dict) -> dict:
    sec = _section(cfg, "bounds", required=False)
    gammas = sec.get("gammas", [0.8, 0.9, 0.95])
    if not isinstance(gammas, list) or not gammas:
        raise ConfigError("bounds.gammas: expected a non-empty list")
    degrees = sec.get("degrees", [1, 2])
    return {
        "n_time_domain": _get(sec, "bounds", "n_time_domain", int, default=100),
        "gammas": [float(g) for g in gammas],
        "horizon": _get(sec, "bounds", "horizon", int, default=8),
        "n_states": _get(sec, "bounds", "n_states", int, default=3),
        "n_actions": _get(sec, "bounds", "n_actions", int, default=2),
        "n_freq_domain": _get(sec, "bounds", "n_freq_domain", int, default=20),
        "degrees": [int(d) for d in degrees],
        "include_uncertified": _get(sec, "bounds", "include_uncertified", bool, default=True),
    }


def trainer_from_config(cfg: dict, profile_override: str | None = None) -> TrainerConfig:
    sec = _section(cfg, "train", required=False)
    known = {f.name: f.type for f in dataclass_fields(TrainerConfig)}
    kwargs = {}
    for key, value in sec.items():
        if key == "env":
            kwargs["env_kind"] = value
            continue
        if key not in known:
            raise ConfigError(f"train.{key}: unknown key")
        kwargs[key] = value
    if profile_override is not None:
        kwargs["profile"] = profile_override
    try:
        return TrainerConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train: {exc}") from exc


def recover_from_config(cfg: dict) -> dict:
    sec = _section(cfg, "recover", required=False)
    return {
        "checkpoint": _get(sec, "recover", "checkpoint", str, default="exact"),
        "k_max": _get(sec, "recover", "k_max", int, default=5),
        "n_freq": _get(sec, "recover", "n_freq", int, default=128),
        "gamma": _get(sec, "recover", "gamma", float, default=0.9),
        "period": _get(sec, "recover", "period", int, default=3),
        "n_goals": _get(sec, "recover", "n_goals", int, default=30),
        "imag_tol": _get(sec, "recover", "imag_tol", float, default=1e-2),
    }


def run_seed(cfg: dict, cli_seed: int | None) -> int:
    if cli_seed is not None:
        return cli_seed
    sec = _section(cfg, "run", required=False)
    return _get(sec, "run", "seed", int, default=0)
