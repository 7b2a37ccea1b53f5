"""YAML experiment configs with a fixed, diff-friendly schema.

A run config is a flat mapping mirroring ExperimentSpec, with the training
recipe nested under ``train:``; a grid config holds lists to cross. Unknown
keys are rejected by name so typos fail loudly instead of silently falling
back to defaults.

Run config keys:
    dataset, model, k, target_pcc, gamma, skip, seed,
    context_length, horizon, segment_length, hidden, layers,
    train: {learning_rate, epochs, batch_size, batches_per_epoch,
            weight_decay, dropout, patience},
    data_dir

Grid config keys:
    datasets, models, k, pcc, univariate_seeds, covariate_seeds,
    context_length, horizon, segment_length, hidden, layers, train,
    extra (list of run-config mappings), data_dir
"""

from __future__ import annotations

import yaml

from .errors import ConfigurationError
from .experiment import ExperimentSpec, GridSpec
from .train import TrainConfig

TRAIN_KEYS = {"learning_rate", "epochs", "batch_size", "batches_per_epoch",
              "weight_decay", "dropout", "patience"}

RUN_KEYS = {"dataset", "model", "k", "target_pcc", "gamma", "skip", "seed",
            "context_length", "horizon", "segment_length", "hidden",
            "layers", "train", "data_dir"}

GRID_KEYS = {"datasets", "models", "k", "pcc", "univariate_seeds",
             "covariate_seeds", "context_length", "horizon",
             "segment_length", "hidden", "layers", "train", "extra",
             "data_dir"}


def _load_mapping(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path} must hold a key-value mapping")
    return doc


def _check_keys(doc: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigurationError(f"unknown {where} keys: {unknown}")


def train_config_from_mapping(doc: dict | None) -> TrainConfig:
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigurationError("'train' must be a mapping of recipe fields")
    _check_keys(doc, TRAIN_KEYS, "train")
    try:
        return TrainConfig(**doc)
    except TypeError as exc:
        raise ConfigurationError(f"bad train section: {exc}") from None


def spec_from_mapping(doc: dict, default_train: TrainConfig | None = None) -> ExperimentSpec:
    _check_keys(doc, RUN_KEYS, "run config")
    fields = dict(doc)
    fields.pop("data_dir", None)
    if "train" in fields:
        train = train_config_from_mapping(fields.pop("train"))
    else:
        train = default_train or TrainConfig()
    skip = fields.pop("skip", None) or ()
    if not isinstance(skip, (list, tuple)):
        raise ConfigurationError("'skip' must be a list of leads")
    try:
        return ExperimentSpec(train=train, skip_set=frozenset(skip), **fields)
    except TypeError as exc:
        raise ConfigurationError(f"bad run config: {exc}") from None


def grid_from_mapping(doc: dict) -> GridSpec:
    _check_keys(doc, GRID_KEYS, "grid config")
    fields = dict(doc)
    fields.pop("data_dir", None)
    train = train_config_from_mapping(fields.pop("train", None))
    extra_docs = fields.pop("extra", None) or []
    if not isinstance(extra_docs, list):
        raise ConfigurationError("'extra' must be a list of run configs")
    extra = []
    for i, entry in enumerate(extra_docs):
        if not isinstance(entry, dict):
            raise ConfigurationError(f"extra[{i}] must be a mapping")
        if "data_dir" in entry:
            raise ConfigurationError("data_dir belongs at the top level")
        extra.append(spec_from_mapping(entry, default_train=train))
    rename = {"k": "ks", "pcc": "pccs"}
    fields = {rename.get(key, key): value for key, value in fields.items()}
    try:
        return GridSpec(train=train, extra=tuple(extra), **fields)
    except TypeError as exc:
        raise ConfigurationError(f"bad grid config: {exc}") from None


def load_experiment_config(path):
    """Parse a run config; returns (ExperimentSpec, data_dir or None)."""
    doc = _load_mapping(path)
    return spec_from_mapping(doc), doc.get("data_dir")


def load_grid_config(path):
    """Parse a grid config; returns (GridSpec, data_dir or None)."""
    doc = _load_mapping(path)
    return grid_from_mapping(doc), doc.get("data_dir")
