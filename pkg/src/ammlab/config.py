"""Run configuration: JSON schema, validation, hashing, object builders.

One JSON document configures every pipeline stage. Validation happens
before any work and rejects unknown keys, so a typo fails loudly instead
of silently falling back to a default. The sha256 hash of the canonical
(sorted, compact) JSON text is stamped into every output artifact.
"""

from __future__ import annotations

import hashlib
import json

import jsonschema

from .agent import TrainConfig
from .ammcore import PoolConfig
from .envsim import RewardParams
from .synthpath import OuParams, RegimeSchedule, VolumeModel

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_POSINT = {"type": "integer", "exclusiveMinimum": 0}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "trades_csv": {"type": "string"},
                "bars_csv": {"type": "string"},
                "synth": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["initial_price", "segments"],
                    "properties": {
                        "initial_price": _POS,
                        "segments": {
                            "type": "array",
                            "minItems": 1,
                            "items": {
                                "type": "object",
                                "additionalProperties": False,
                                "required": ["duration", "theta", "mu", "sigma"],
                                "properties": {
                                    "duration": _POSINT,
                                    "theta": _NONNEG,
                                    "mu": _POS,
                                    "sigma": _NONNEG,
                                },
                            },
                        },
                        "volume": {
                            "type": "object",
                            "additionalProperties": False,
                            "properties": {
                                "base_notional": _NONNEG,
                                "volatility_coupling": _NUM,
                            },
                        },
                    },
                },
                "splits": {
                    "type": "array",
                    "minItems": 3,
                    "maxItems": 3,
                    "items": _POS,
                },
            },
        },
        "pool": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "fee_tier": _POS,
                "gas_cost": _NONNEG,
                "pool_tvl": _POS,
                "dex_cex_ratio": _POS,
                "width": _POS,
                "capital": _POS,
            },
        },
        "reward": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"scale": _POS, "active_bonus": _NONNEG},
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gamma": _POS,
                "batch_size": _POSINT,
                "target_sync": _POSINT,
                "episodes": _POSINT,
                "episode_length": _POSINT,
                "learning_rate": _POS,
                "buffer_capacity": _POSINT,
                "epsilon_start": _NONNEG,
                "epsilon_end": _NONNEG,
                "epsilon_decay": _POS,
                "epsilon_decay_mode": {"enum": ["step", "episode"]},
            },
        },
        "strategy": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": ["merlin", "bedivere", "lancelot", "galahad", "rammstein"]},
                "params": {"type": "object"},
            },
        },
        "backtest": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"segment": {"enum": ["train", "val", "test", "all"]}},
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "strategies": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["name"],
                        "properties": {"name": {"type": "string"}, "params": {"type": "object"}},
                    },
                },
                "gas_levels": {"type": "array", "minItems": 2, "items": _POS},
            },
        },
        "qvi": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "theta": _POS,
                "mu": _POS,
                "sigma": _POS,
                "rho": _POS,
                "ref_volume": _POS,
                "cost": _NONNEG,
                "n_s": {"type": "integer", "minimum": 3},
                "n_c": {"type": "integer", "minimum": 3},
                "span_sigmas": {"type": "number", "minimum": 5},
                "tol": _POS,
                "max_iters": _POSINT,
            },
        },
        "heatmap": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "theta_min": _NONNEG,
                "theta_max": _NONNEG,
                "theta_points": {"type": "integer", "minimum": 2},
                "d_edge_points": {"type": "integer", "minimum": 2},
            },
        },
        "estimate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"window": {"type": "integer", "minimum": 3}},
        },
    },
}


class ConfigError(ValueError):
    pass


def validate(doc: dict) -> dict:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message} (at {'/'.join(str(p) for p in exc.absolute_path)})")
    splits = doc.get("data", {}).get("splits")
    if splits is not None and abs(sum(splits) - 1.0) > 1e-9:
        raise ConfigError("data.splits must sum to 1")
    return doc


def load(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    return validate(doc)


def config_hash(doc: dict) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def pool_config(doc: dict) -> PoolConfig:
    p = doc.get("pool", {})
    return PoolConfig(
        fee_tier=p.get("fee_tier", 0.0005),
        gas_cost=p.get("gas_cost", 2.0),
        pool_tvl=p.get("pool_tvl", 500_000.0),
        dex_cex_ratio=p.get("dex_cex_ratio", 0.10),
        width=p.get("width", 0.002),
    )


def capital(doc: dict) -> float:
    return doc.get("pool", {}).get("capital", 10_000.0)


def reward_params(doc: dict) -> RewardParams:
    r = doc.get("reward", {})
    return RewardParams(scale=r.get("scale", 100.0), active_bonus=r.get("active_bonus", 1e-4))


def train_config(doc: dict, seed: int) -> TrainConfig:
    t = doc.get("train", {})
    return TrainConfig(
        gamma=t.get("gamma", 0.99),
        batch_size=t.get("batch_size", 128),
        target_sync=t.get("target_sync", 100),
        episodes=t.get("episodes", 300),
        episode_length=t.get("episode_length", 36_000),
        learning_rate=t.get("learning_rate", 1e-4),
        buffer_capacity=t.get("buffer_capacity", 100_000),
        epsilon_start=t.get("epsilon_start", 1.0),
        epsilon_end=t.get("epsilon_end", 0.05),
        epsilon_decay=t.get("epsilon_decay", 0.9998),
        epsilon_decay_mode=t.get("epsilon_decay_mode", "step"),
        seed=seed,
    )


PROFILES = {
    "smoke": {"episodes": 20, "episode_length": 3600},
    "full": {"episodes": 300, "episode_length": 36_000},
}


def apply_profile(doc: dict, profile: str | None) -> dict:
    if profile is None:
        return doc
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    doc = dict(doc)
    doc["train"] = {**doc.get("train", {}), **PROFILES[profile]}
    return doc


def schedule(doc: dict) -> RegimeSchedule:
    sy = doc.get("data", {}).get("synth")
    if sy is None:
        raise ConfigError("config has no data.synth section")
    vm = sy.get("volume", {})
    return RegimeSchedule(
        segments=tuple(
            (int(seg["duration"]), OuParams(seg["theta"], seg["mu"], seg["sigma"]))
            for seg in sy["segments"]
        ),
        initial_price=sy["initial_price"],
        volume_model=VolumeModel(
            base_notional=vm.get("base_notional", 15_000.0),
            volatility_coupling=vm.get("volatility_coupling", 1.0),
        ),
    )
