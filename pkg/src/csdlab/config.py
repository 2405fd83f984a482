"""Experiment config files (format ``csdlab-cfg-1``).

One JSON document per experiment; unknown fields are rejected so typos fail
loudly. The generator seed and the per-run training seeds are derived from
the top-level ``seed``, so config files carry a single seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datagen import GeneratorConfig
from .errors import ConfigError
from .model import CsdConfig, TrainConfig

CONFIG_FORMAT = "csdlab-cfg-1"

_GENERATOR_KEYS = {
    "m", "k_true", "d_train", "d_val", "d_test", "n_per_domain",
    "beta_low", "beta_high", "beta_test_low", "beta_test_high",
    "sigma_low", "sigma_high", "e_c", "e_s",
}
_TRAIN_REQUIRED = {"epochs", "batch_size", "learning_rate"}
_TRAIN_OPTIONAL = {"optimizer", "momentum", "init_scale", "hidden_width"}
_CSD_REQUIRED = {"k", "lambda", "kappa"}
_CSD_OPTIONAL = {"c", "gamma_activation"}
_SWEEP_KEYS = {"k", "lambda", "kappa", "ablation"}
_TOP_REQUIRED = {"format", "generator", "train", "csd", "repeats", "seed"}
_TOP_OPTIONAL = {"sweep", "output_dir"}


@dataclass(frozen=True)
class SweepAxes:
    k: tuple[int, ...] = ()
    lam: tuple[float, ...] = ()
    kappa: tuple[float, ...] = ()
    ablation: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    generator: GeneratorConfig  # seed field is a placeholder; runs derive their own
    train: TrainConfig
    csd: CsdConfig
    repeats: int
    seed: int
    sweep: SweepAxes
    output_dir: str | None


def _check_keys(obj: dict, required: set, optional: set, where: str):
    if not isinstance(obj, dict):
        raise ConfigError("must be a JSON object", field=where)
    for key in obj:
        if key not in required and key not in optional:
            raise ConfigError("unknown field", field=f"{where}.{key}" if where else key)
    for key in required:
        if key not in obj:
            raise ConfigError("missing required field",
                              field=f"{where}.{key}" if where else key)


def _number(obj: dict, key: str, where: str, kind=float, minimum=None):
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("must be a number", field=f"{where}.{key}")
    value = kind(value)
    if kind is int and value != obj[key]:
        raise ConfigError("must be an integer", field=f"{where}.{key}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum}", field=f"{where}.{key}")
    return value


def parse_experiment_config(obj: dict, path: str | None = None) -> ExperimentConfig:
    _check_keys(obj, _TOP_REQUIRED, _TOP_OPTIONAL, "")
    if obj["format"] != CONFIG_FORMAT:
        raise ConfigError(f"expected {CONFIG_FORMAT!r}, got {obj['format']!r}",
                          field="format")

    gen_obj = obj["generator"]
    _check_keys(gen_obj, _GENERATOR_KEYS, set(), "generator")
    try:
        e_c = np.asarray(gen_obj["e_c"], dtype=np.float64)
        e_s = np.asarray(gen_obj["e_s"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad array: {exc}", field="generator.e_c/e_s") from exc
    try:
        generator = GeneratorConfig(
            m=_number(gen_obj, "m", "generator", int, 1),
            k_true=_number(gen_obj, "k_true", "generator", int, 1),
            d_train=_number(gen_obj, "d_train", "generator", int, 1),
            d_val=_number(gen_obj, "d_val", "generator", int, 1),
            d_test=_number(gen_obj, "d_test", "generator", int, 1),
            n_per_domain=_number(gen_obj, "n_per_domain", "generator", int, 1),
            beta_low=_number(gen_obj, "beta_low", "generator"),
            beta_high=_number(gen_obj, "beta_high", "generator"),
            beta_test_low=_number(gen_obj, "beta_test_low", "generator"),
            beta_test_high=_number(gen_obj, "beta_test_high", "generator"),
            sigma_low=_number(gen_obj, "sigma_low", "generator"),
            sigma_high=_number(gen_obj, "sigma_high", "generator"),
            e_c=e_c,
            e_s=e_s,
            seed=0,
        )
    except ValueError as exc:
        raise ConfigError(str(exc), field="generator") from exc

    train_obj = obj["train"]
    _check_keys(train_obj, _TRAIN_REQUIRED, _TRAIN_OPTIONAL, "train")
    try:
        train = TrainConfig(
            epochs=_number(train_obj, "epochs", "train", int, 1),
            batch_size=_number(train_obj, "batch_size", "train", int, 1),
            learning_rate=_number(train_obj, "learning_rate", "train"),
            optimizer=train_obj.get("optimizer", "sgd"),
            momentum=float(train_obj.get("momentum", 0.9)),
            init_scale=(None if "init_scale" not in train_obj
                        else _number(train_obj, "init_scale", "train")),
            hidden_width=(0 if "hidden_width" not in train_obj
                          else _number(train_obj, "hidden_width", "train", int, 0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), field="train") from exc

    csd_obj = obj["csd"]
    _check_keys(csd_obj, _CSD_REQUIRED, _CSD_OPTIONAL, "csd")
    try:
        csd = CsdConfig(
            k=_number(csd_obj, "k", "csd", int, 0),
            lam=_number(csd_obj, "lambda", "csd", float, 0.0),
            kappa=_number(csd_obj, "kappa", "csd", float, 0.0),
            c=(2 if "c" not in csd_obj else _number(csd_obj, "c", "csd", int, 2)),
            gamma_activation=str(csd_obj.get("gamma_activation", "sigmoid")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), field="csd") from exc

    sweep = SweepAxes()
    if "sweep" in obj:
        sweep_obj = obj["sweep"]
        _check_keys(sweep_obj, set(), _SWEEP_KEYS, "sweep")
        k_axis = tuple(int(v) for v in sweep_obj.get("k", []))
        if any(v < 0 for v in k_axis):
            raise ConfigError("rank values must be non-negative", field="sweep.k")
        lam_axis = tuple(float(v) for v in sweep_obj.get("lambda", []))
        kappa_axis = tuple(float(v) for v in sweep_obj.get("kappa", []))
        ablation = sweep_obj.get("ablation", False)
        if not isinstance(ablation, bool):
            raise ConfigError("must be a boolean", field="sweep.ablation")
        sweep = SweepAxes(k=k_axis, lam=lam_axis, kappa=kappa_axis,
                          ablation=ablation)

    repeats = _number(obj, "repeats", "", int, 1)
    seed = _number(obj, "seed", "", int, 0)
    output_dir = obj.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        raise ConfigError("must be a string", field="output_dir")

    return ExperimentConfig(generator=generator, train=train, csd=csd,
                            repeats=repeats, seed=seed, sweep=sweep,
                            output_dir=output_dir)


def load_experiment_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return parse_experiment_config(obj, path=str(p))


def config_echo(exp: ExperimentConfig) -> dict:
    """JSON-ready echo of the parsed config (for report metadata)."""
    return {
        "format": CONFIG_FORMAT,
        "generator": {
            "m": exp.generator.m,
            "k_true": exp.generator.k_true,
            "d_train": exp.generator.d_train,
            "d_val": exp.generator.d_val,
            "d_test": exp.generator.d_test,
            "n_per_domain": exp.generator.n_per_domain,
            "beta_low": exp.generator.beta_low,
            "beta_high": exp.generator.beta_high,
            "beta_test_low": exp.generator.beta_test_low,
            "beta_test_high": exp.generator.beta_test_high,
            "sigma_low": exp.generator.sigma_low,
            "sigma_high": exp.generator.sigma_high,
            "e_c": exp.generator.e_c.tolist(),
            "e_s": exp.generator.e_s.tolist(),
        },
        "train": {
            "epochs": exp.train.epochs,
            "batch_size": exp.train.batch_size,
            "learning_rate": exp.train.learning_rate,
            "optimizer": exp.train.optimizer,
            "momentum": exp.train.momentum,
            "init_scale": exp.train.init_scale,
            "hidden_width": exp.train.hidden_width,
        },
        "csd": {"k": exp.csd.k, "lambda": exp.csd.lam, "kappa": exp.csd.kappa,
                "c": exp.csd.c, "gamma_activation": exp.csd.gamma_activation},
        "repeats": exp.repeats,
        "seed": exp.seed,
        "sweep": {"k": list(exp.sweep.k), "lambda": list(exp.sweep.lam),
                  "kappa": list(exp.sweep.kappa), "ablation": exp.sweep.ablation},
    }
