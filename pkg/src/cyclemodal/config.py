"""Run configuration: defaults, YAML loading and up-front validation."""
from __future__ import annotations

import copy

import numpy as np
import yaml

from .dynamics import build_mdof_chain
from .modalgan import TrainConfig
from .selection import SearchConfig

DEFAULTS = {
    "seed": 0,
    "output_dir": "run",
    # simulated chain; ignored when `dataset` is given
    "system": {
        "n_dof": 2,
        "m": 1.0,
        "c": 0.1,
        "k": 10.0,
        "cubic_terms": [[0, 1500.0]],
        "forced_dof": 0,
    },
    "simulation": {
        "n_train": 100000,
        "n_test": 100000,
        "fs": 100.0,
        "dt_sub": 1e-3,
        "warmup": 1000,
        "std": 5.0,
        "band": [0.0, 50.0],
        "train_seed": None,
        "test_seed": None,
    },
    # external records; each entry of train/test is one CSV file (one record)
    "dataset": None,
    "train": {
        "lambda_cycle": 10.0,
        "ortho_weight": 1.0,
        "ortho_eps": 0.05,
        "batch_size": 128,
        "epochs": 2000,
        "checkpoint_every": 100,
        "lr": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "adam_eps": 1e-8,
    },
    "search": {
        "hidden_sizes": list(range(50, 201, 10)),
        "inits_per_size": 20,
        "n_jobs": 1,
    },
    "welch": {"segment_len": 1024, "overlap_fraction": 0.5, "window": "hann"},
    "metrics": {"dcor_subsample": 2000, "svg": False},
}

DATASET_DEFAULTS = {"train": None, "test": None, "fs": None, "channels": None,
                    "role": "displacement"}


class ConfigError(ValueError):
    pass


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and value is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        elif key == "dataset" and value is not None:
            if not isinstance(value, dict):
                raise ConfigError("'dataset' must be a mapping")
            out[key] = _merge(DATASET_DEFAULTS, value, "dataset.")
        else:
            out[key] = value
    return out


def derived_seed(master, tag) -> int:
    return int(np.random.SeedSequence([int(master), int(tag)]).generate_state(1)[0])


def resolve(raw: dict | None) -> dict:
    """Merge ``raw`` over the defaults, fill derived seeds and validate."""
    cfg = _merge(DEFAULTS, raw or {})
    sim = cfg["simulation"]
    if sim["train_seed"] is None:
        sim["train_seed"] = derived_seed(cfg["seed"], 1)
    if sim["test_seed"] is None:
        sim["test_seed"] = derived_seed(cfg["seed"], 2)
    validate(cfg)
    return cfg


def load_config(path) -> dict:
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return resolve(raw)


def system_spec(cfg):
    s = cfg["system"]
    return build_mdof_chain(s["n_dof"], s["m"], s["c"], s["k"],
                            [tuple(t) for t in s["cubic_terms"]], s["forced_dof"])


def train_kwargs(cfg) -> dict:
    return dict(cfg["train"], segment_len=cfg["welch"]["segment_len"],
                overlap_fraction=cfg["welch"]["overlap_fraction"])


def search_config(cfg) -> SearchConfig:
    s = cfg["search"]
    return SearchConfig(s["hidden_sizes"], s["inits_per_size"], train_kwargs(cfg),
                        seed=cfg["seed"], n_jobs=s["n_jobs"])


def validate(cfg):
    """Check every module precondition before any work starts."""
    try:
        if cfg["dataset"] is None:
            system_spec(cfg)
            sim = cfg["simulation"]
            fs = float(sim["fs"])
            if fs <= 0:
                raise ValueError("simulation.fs must be positive")
            lo, hi = sim["band"]
            if not 0 <= lo < hi <= fs / 2:
                raise ValueError(f"simulation.band {sim['band']} must lie within [0, fs/2]")
            ratio = 1.0 / (sim["dt_sub"] * fs)
            if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
                raise ValueError("1/simulation.dt_sub must be an integer multiple of fs")
            for key in ("n_train", "n_test"):
                if int(sim[key]) < 2:
                    raise ValueError(f"simulation.{key} must be >= 2")
            if sim["warmup"] < 0 or sim["std"] < 0:
                raise ValueError("simulation.warmup and simulation.std must be non-negative")
            n_min = min(sim["n_train"], sim["n_test"])
        else:
            ds = cfg["dataset"]
            if not ds["train"]:
                raise ValueError("dataset.train must list at least one CSV file")
            if ds["fs"] is None or ds["fs"] <= 0:
                raise ValueError("dataset.fs must be positive")
            n_min = None
        TrainConfig(**cfg["train"])
        search_config(cfg)
        w = cfg["welch"]
        seg = int(w["segment_len"])
        if seg < 2 or seg & (seg - 1):
            raise ValueError("welch.segment_len must be a power of two")
        if n_min is not None and seg > n_min:
            raise ValueError(f"welch.segment_len {seg} exceeds the record length {n_min}")
        if not 0 <= w["overlap_fraction"] < 1:
            raise ValueError("welch.overlap_fraction must lie in [0, 1)")
        if int(cfg["metrics"]["dcor_subsample"]) < 2:
            raise ValueError("metrics.dcor_subsample must be >= 2")
    except (TypeError, KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
