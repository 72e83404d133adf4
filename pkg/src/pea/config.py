"""Experiment configuration: JSON document -> validated dataclasses.

The document has three sections (model, data, train).  Validation is
strict: unknown keys are rejected and every error names the offending
field path, so a malformed config fails before any compute starts.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from . import activations as act
from .errors import ConfigError
from .models import ActivationSlot, ModelSpec
from .schedule import PER_EPOCH, PhaseSchedule
from .training import AugmentConfig, LRSchedule, TrainConfig


@dataclass(frozen=True)
class DataConfig:
    source: str  # synthetic | idx
    # synthetic
    n: int = 10000
    num_classes: int = 4
    noise: float = 0.5
    seed: int = 1234
    image_size: int = 16
    val_fraction: float = 0.2
    # idx
    train_images: str = ""
    train_labels: str = ""
    val_images: str = ""
    val_labels: str = ""

    def describe(self) -> dict:
        if self.source == "synthetic":
            return {
                "source": "synthetic", "n": self.n, "num_classes": self.num_classes,
                "noise": self.noise, "seed": self.seed, "image_size": self.image_size,
                "val_fraction": self.val_fraction,
            }
        return {
            "source": "idx", "train_images": self.train_images,
            "train_labels": self.train_labels, "val_images": self.val_images,
            "val_labels": self.val_labels,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    data: DataConfig
    train: TrainConfig

    def describe(self) -> dict:
        return {
            "model": self.model.describe(),
            "data": self.data.describe(),
            "train": describe_train_config(self.train),
        }


def config_digest(doc: dict) -> str:
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def describe_train_config(cfg: TrainConfig) -> dict:
    d = {
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "base_lr": cfg.base_lr,
        "lr_schedule": cfg.lr_schedule.describe(),
        "warmup_epochs": cfg.warmup_epochs,
        "momentum": cfg.momentum,
        "weight_decay": cfg.weight_decay,
        "weight_decay_exclusions": list(cfg.weight_decay_exclusions),
        "label_smoothing": cfg.label_smoothing,
        "seed": cfg.seed,
        "pea": None,
        "augment": None,
    }
    if cfg.pea is not None:
        d["pea"] = {
            "init_end": cfg.pea.t_init_end,
            "trans_end": cfg.pea.t_trans_end,
            "granularity": cfg.pea.granularity,
        }
    if cfg.augment is not None:
        d["augment"] = cfg.augment.describe()
    return d


# ---------------------------------------------------------------------------
# strict parsing


def _check_keys(d: dict, allowed, path: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object, got {type(d).__name__}")
    for key in d:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key")


def _require(d: dict, key: str, path: str):
    if key not in d:
        raise ConfigError(f"{path}.{key}: missing required key")
    return d[key]


def _num(d, key, path, default=None, kind=float):
    if key not in d:
        if default is None:
            raise ConfigError(f"{path}.{key}: missing required key")
        return default
    v = d[key]
    if kind is int and not isinstance(v, int):
        raise ConfigError(f"{path}.{key}: expected an integer, got {v!r}")
    if kind is float and not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {v!r}")
    return kind(v)


def _parse_activation(d: dict, path: str) -> ActivationSlot:
    _check_keys(d, {"slot", "kind", "mode", "sota", "granularity", "beta", "a"}, path)
    slot = _require(d, "slot", path)
    try:
        if slot == "plain":
            kind = act.ActivationKind(
                _require(d, "kind", path), beta=d.get("beta", 1.0), a=d.get("a", 1.0)
            )
            return ActivationSlot("plain", kind=kind)
        if slot == "ensemble":
            sota = act.ActivationKind(
                _require(d, "sota", path), beta=d.get("beta", 1.0), a=d.get("a", 1.0)
            )
            return ActivationSlot(
                "ensemble",
                mode=d.get("mode", "weighted"),
                sota=sota,
                granularity=d.get("granularity", "per_element"),
            )
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from None
    raise ConfigError(f"{path}.slot: expected plain|ensemble, got {slot!r}")


def _parse_model(d: dict, path: str) -> ModelSpec:
    _check_keys(
        d,
        {"architecture", "num_classes", "in_channels", "image_size", "hidden",
         "channels", "dropout_rate", "activation"},
        path,
    )
    try:
        return ModelSpec(
            architecture=_require(d, "architecture", path),
            num_classes=_num(d, "num_classes", path, kind=int),
            in_channels=_num(d, "in_channels", path, default=1, kind=int),
            image_size=_num(d, "image_size", path, default=16, kind=int),
            hidden=tuple(d.get("hidden", (128,))),
            channels=tuple(d.get("channels", ())),
            dropout_rate=_num(d, "dropout_rate", path, default=0.0),
            activation=_parse_activation(_require(d, "activation", path), f"{path}.activation"),
        )
    except ConfigError as e:
        msg = str(e)
        raise ConfigError(msg if msg.startswith(path) else f"{path}: {msg}") from None


def _parse_data(d: dict, path: str) -> DataConfig:
    source = _require(d, "source", path)
    if source == "synthetic":
        _check_keys(d, {"source", "n", "num_classes", "noise", "seed", "image_size",
                        "val_fraction"}, path)
        return DataConfig(
            source="synthetic",
            n=_num(d, "n", path, default=10000, kind=int),
            num_classes=_num(d, "num_classes", path, default=4, kind=int),
            noise=_num(d, "noise", path, default=0.5),
            seed=_num(d, "seed", path, default=1234, kind=int),
            image_size=_num(d, "image_size", path, default=16, kind=int),
            val_fraction=_num(d, "val_fraction", path, default=0.2),
        )
    if source == "idx":
        _check_keys(d, {"source", "train_images", "train_labels", "val_images",
                        "val_labels"}, path)
        return DataConfig(
            source="idx",
            train_images=str(_require(d, "train_images", path)),
            train_labels=str(_require(d, "train_labels", path)),
            val_images=str(_require(d, "val_images", path)),
            val_labels=str(_require(d, "val_labels", path)),
        )
    raise ConfigError(f"{path}.source: expected synthetic|idx, got {source!r}")


def _parse_lr_schedule(d: dict, path: str) -> LRSchedule:
    _check_keys(d, {"kind", "boundaries", "factor"}, path)
    try:
        return LRSchedule(
            kind=d.get("kind", "constant"),
            boundaries=tuple(int(b) for b in d.get("boundaries", ())),
            factor=_num(d, "factor", path, default=0.1),
        )
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from None


def _parse_train(d: dict, path: str, epochs_hint: int | None = None) -> TrainConfig:
    _check_keys(
        d,
        {"epochs", "batch_size", "base_lr", "lr_schedule", "warmup_epochs", "momentum",
         "weight_decay", "weight_decay_exclusions", "label_smoothing", "seed", "pea",
         "augment"},
        path,
    )
    epochs = _num(d, "epochs", path, kind=int)
    pea = None
    if d.get("pea") is not None:
        p = d["pea"]
        _check_keys(p, {"init_end", "trans_end", "granularity"}, f"{path}.pea")
        try:
            pea = PhaseSchedule(
                t_init_end=_num(p, "init_end", f"{path}.pea"),
                t_trans_end=_num(p, "trans_end", f"{path}.pea"),
                total_epochs=epochs,
                granularity=p.get("granularity", PER_EPOCH),
            )
        except ConfigError as e:
            raise ConfigError(f"{path}.pea: {e}") from None
    aug = None
    if d.get("augment") is not None:
        a = d["augment"]
        _check_keys(a, {"crop_padding", "flip_prob"}, f"{path}.augment")
        aug = AugmentConfig(
            crop_padding=_num(a, "crop_padding", f"{path}.augment", default=4, kind=int),
            flip_prob=_num(a, "flip_prob", f"{path}.augment", default=0.5),
        )
    try:
        return TrainConfig(
            epochs=epochs,
            batch_size=_num(d, "batch_size", path, default=64, kind=int),
            base_lr=_num(d, "base_lr", path, default=0.05),
            lr_schedule=_parse_lr_schedule(d.get("lr_schedule", {}), f"{path}.lr_schedule"),
            warmup_epochs=_num(d, "warmup_epochs", path, default=0, kind=int),
            momentum=_num(d, "momentum", path, default=0.9),
            weight_decay=_num(d, "weight_decay", path, default=0.0),
            weight_decay_exclusions=tuple(d.get("weight_decay_exclusions", ())),
            label_smoothing=_num(d, "label_smoothing", path, default=0.1),
            seed=_num(d, "seed", path, default=0, kind=int),
            pea=pea,
            augment=aug,
        )
    except ConfigError as e:
        msg = str(e)
        raise ConfigError(msg if msg.startswith(path) else f"{path}: {msg}") from None


def parse_config(doc: dict, path: str = "config") -> ExperimentConfig:
    _check_keys(doc, {"model", "data", "train"}, path)
    model = _parse_model(_require(doc, "model", path), f"{path}.model")
    dc = _parse_data(_require(doc, "data", path), f"{path}.data")
    tc = _parse_train(_require(doc, "train", path), f"{path}.train")
    if dc.source == "synthetic" and dc.num_classes != model.num_classes:
        raise ConfigError(
            f"{path}: data.num_classes={dc.num_classes} but model.num_classes="
            f"{model.num_classes}"
        )
    return ExperimentConfig(model=model, data=dc, train=tc)


def load_config_file(file_path) -> tuple[ExperimentConfig, dict]:
    try:
        with open(file_path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {file_path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    return parse_config(doc), doc
