"""Training loop: SGD with momentum, warm-up + LR schedules, label
smoothing, coupled weight decay with name-pattern exclusions, and the
phase-schedule hook that drives ensemble coefficients.

Update rule (per parameter): v <- momentum*v - lr*(g + wd*w);
w <- w + v.  Excluded parameter groups (fnmatch patterns over names,
e.g. ``*.dw.w`` for depthwise kernels) get wd = 0.

Learning rate at 1-indexed epoch e:
  e <= warmup_epochs      base_lr * e / warmup_epochs
  piecewise(boundaries,f) base_lr * f^(number of boundaries <= e)
  cosine                  0.5 * base_lr * (1 + cos(pi*(e-wu)/(E-wu)))
  constant                base_lr

Everything random is drawn from named substreams of one seed, so a
fixed seed reproduces the full parameter trajectory bit for bit; a
save/restore cycle mid-run continues identically to an uninterrupted
run.
"""

from __future__ import annotations

import fnmatch
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from . import ops, schedule
from .errors import ConfigError, NumericError, StateError
from .models import Model
from .rng import RngHub
from .tensor import Tensor


@dataclass(frozen=True)
class LRSchedule:
    kind: str = "constant"  # constant | piecewise | cosine
    boundaries: tuple[int, ...] = ()
    factor: float = 0.1

    def __post_init__(self):
        if self.kind not in ("constant", "piecewise", "cosine"):
            raise ConfigError(f"lr schedule must be constant|piecewise|cosine, got {self.kind!r}")
        if self.kind == "piecewise":
            if not self.boundaries:
                raise ConfigError("piecewise lr schedule needs boundaries")
            if list(self.boundaries) != sorted(set(int(b) for b in self.boundaries)):
                raise ConfigError(f"boundaries must be strictly increasing, got {self.boundaries}")

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "piecewise":
            d["boundaries"] = list(self.boundaries)
            d["factor"] = self.factor
        return d

    @staticmethod
    def from_dict(d: dict) -> "LRSchedule":
        return LRSchedule(
            kind=d.get("kind", "constant"),
            boundaries=tuple(d.get("boundaries", ())),
            factor=d.get("factor", 0.1),
        )


@dataclass(frozen=True)
class AugmentConfig:
    crop_padding: int = 4
    flip_prob: float = 0.5

    def describe(self) -> dict:
        return {"crop_padding": self.crop_padding, "flip_prob": self.flip_prob}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 64
    base_lr: float = 0.05
    lr_schedule: LRSchedule = field(default_factory=LRSchedule)
    warmup_epochs: int = 0
    momentum: float = 0.9
    weight_decay: float = 0.0
    weight_decay_exclusions: tuple[str, ...] = ()
    label_smoothing: float = 0.1
    seed: int = 0
    pea: schedule.PhaseSchedule | None = None
    augment: AugmentConfig | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0.0 <= self.label_smoothing < 1.0):
            raise ConfigError(f"label_smoothing must lie in [0,1), got {self.label_smoothing}")
        if self.warmup_epochs < 0:
            raise ConfigError("warmup_epochs must be >= 0")
        if self.pea is not None and self.pea.total_epochs != self.epochs:
            raise ConfigError(
                f"phase schedule spans {self.pea.total_epochs} epochs but training "
                f"runs {self.epochs}"
            )


@dataclass
class MetricsRecord:
    run_id: str
    epoch: int
    alpha: float
    lr: float
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    wall_time_s: float

    CSV_COLUMNS = ("run_id", "epoch", "alpha", "lr", "train_loss", "train_acc",
                   "val_loss", "val_acc", "wall_time_s")

    def csv_row(self) -> str:
        return ",".join(str(getattr(self, c)) for c in self.CSV_COLUMNS)


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    """Learning rate in effect during 1-indexed epoch."""
    if not (1 <= epoch <= cfg.epochs):
        raise ConfigError(f"epoch {epoch} outside 1..{cfg.epochs}")
    if cfg.warmup_epochs and epoch <= cfg.warmup_epochs:
        return cfg.base_lr * epoch / cfg.warmup_epochs
    s = cfg.lr_schedule
    if s.kind == "constant":
        return cfg.base_lr
    if s.kind == "piecewise":
        drops = sum(1 for b in s.boundaries if b <= epoch)
        return cfg.base_lr * (s.factor ** drops)
    # cosine over the post-warmup span
    wu = cfg.warmup_epochs
    span = max(cfg.epochs - wu, 1)
    return 0.5 * cfg.base_lr * (1.0 + math.cos(math.pi * (epoch - wu) / span))


class SGD:
    """Momentum SGD with coupled weight decay and name-based exclusions."""

    def __init__(self, params, momentum: float, weight_decay: float,
                 exclusions: tuple[str, ...] = ()):
        self.params = list(params)
        self.momentum = momentum
        self.velocity = {name: np.zeros_like(p.data) for name, p in self.params}
        self.wd = {
            name: 0.0 if any(fnmatch.fnmatchcase(name, pat) for pat in exclusions)
            else weight_decay
            for name, _ in self.params
        }

    def step(self, lr: float, grads: dict[str, np.ndarray] | None = None):
        for name, p in self.params:
            g = grads[name] if grads is not None else p.grad
            if g is None:
                raise StateError(f"no gradient for parameter {name!r}; run backward() first")
            dt = p.data.dtype.type
            g_eff = g + dt(self.wd[name]) * p.data
            v = self.velocity[name]
            v *= dt(self.momentum)
            v -= dt(lr) * g_eff
            p.data += v

    def state_dict(self) -> dict[str, np.ndarray]:
        return dict(self.velocity)

    def load_state_dict(self, state: dict[str, np.ndarray]):
        for name in self.velocity:
            self.velocity[name] = np.array(state[name], dtype=self.velocity[name].dtype)


def evaluate(model: Model, ds: data_mod.Dataset, batch_size: int = 256,
             label_smoothing: float = 0.0) -> dict[str, float]:
    """Eval-mode loss and top-1 accuracy over a dataset."""
    if len(ds) == 0:
        raise ConfigError("cannot evaluate on an empty dataset")
    total_loss = 0.0
    correct = 0
    for i in range(0, len(ds), batch_size):
        xb = ds.images[i : i + batch_size]
        yb = ds.labels[i : i + batch_size]
        logits = model.forward(xb, training=False)
        loss = ops.label_smoothed_cross_entropy(logits, yb, label_smoothing)
        total_loss += float(loss.data) * len(yb)
        correct += int((np.argmax(logits.data, axis=1) == yb).sum())
    return {"loss": total_loss / len(ds), "acc": correct / len(ds)}


def mean_iou(pred: np.ndarray, target: np.ndarray, num_classes: int) -> float:
    """Mean over classes of TP/(TP+FP+FN) for dense integer label maps.

    Classes absent from both prediction and target are left out of the
    mean (their IOU is undefined).
    """
    pred = np.asarray(pred).ravel()
    target = np.asarray(target).ravel()
    ious = []
    for c in range(num_classes):
        p = pred == c
        t = target == c
        denom = int((p | t).sum())
        if denom == 0:
            continue
        ious.append(int((p & t).sum()) / denom)
    if not ious:
        raise ConfigError("no class present in prediction or target")
    return float(np.mean(ious))


class TrainerState:
    """Mutable cross-epoch state captured by checkpoints."""

    def __init__(self, optimizer: SGD, epoch: int = 0):
        self.optimizer = optimizer
        self.epoch = epoch  # epochs completed


def train(
    model: Model,
    train_ds: data_mod.Dataset,
    val_ds: data_mod.Dataset,
    cfg: TrainConfig,
    run_id: str = "0",
    state: TrainerState | None = None,
    epoch_hook=None,
) -> tuple[Model, list[MetricsRecord], TrainerState]:
    """Run (or resume, via ``state``) the configured number of epochs.

    ``epoch_hook(epoch, record, model, state)`` fires after each epoch;
    checkpointing/selection hangs off it.
    """
    if train_ds.num_classes != model.spec.num_classes:
        raise ConfigError(
            f"dataset has {train_ds.num_classes} classes, model expects "
            f"{model.spec.num_classes}"
        )
    hub = model.hub
    if state is None:
        state = TrainerState(
            SGD(model.parameters(), cfg.momentum, cfg.weight_decay,
                cfg.weight_decay_exclusions)
        )
    opt = state.optimizer
    shuffle_rng = hub.stream("shuffle")
    aug_rng = hub.stream("augment") if cfg.augment else None
    n = len(train_ds)
    steps_per_epoch = (n + cfg.batch_size - 1) // cfg.batch_size
    records: list[MetricsRecord] = []

    for epoch in range(state.epoch + 1, cfg.epochs + 1):
        t0 = time.perf_counter()
        lr = lr_at(cfg, epoch)
        alpha = _epoch_alpha(cfg, model, epoch)
        if cfg.pea is not None and cfg.pea.granularity == schedule.PER_EPOCH:
            schedule.apply(cfg.pea, model, epoch)

        perm = shuffle_rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for step in range(steps_per_epoch):
            if cfg.pea is not None and cfg.pea.granularity == schedule.PER_STEP:
                t = epoch if step == steps_per_epoch - 1 else (
                    (epoch - 1) + (step + 1) / steps_per_epoch
                )
                schedule.apply(cfg.pea, model, t)
            idx = perm[step * cfg.batch_size : (step + 1) * cfg.batch_size]
            xb = train_ds.images[idx]
            yb = train_ds.labels[idx]
            if cfg.augment is not None:
                xb = data_mod.augment(
                    xb, cfg.augment.crop_padding, cfg.augment.flip_prob, aug_rng
                )
            model.zero_grad()
            logits = model.forward(Tensor(xb.astype(model.dtype, copy=False)), training=True)
            loss = ops.label_smoothed_cross_entropy(logits, yb, cfg.label_smoothing)
            lv = float(loss.data)
            if not math.isfinite(lv):
                raise NumericError(
                    f"non-finite loss {lv} at epoch {epoch}, step {step} (run {run_id})"
                )
            loss.backward()
            opt.step(lr)
            loss_sum += lv * len(yb)
            correct += int((np.argmax(logits.data, axis=1) == yb).sum())

        val = evaluate(model, val_ds, label_smoothing=cfg.label_smoothing)
        state.epoch = epoch
        rec = MetricsRecord(
            run_id=run_id,
            epoch=epoch,
            alpha=alpha,
            lr=lr,
            train_loss=loss_sum / n,
            train_acc=correct / n,
            val_loss=val["loss"],
            val_acc=val["acc"],
            wall_time_s=time.perf_counter() - t0,
        )
        records.append(rec)
        if epoch_hook is not None:
            epoch_hook(epoch, rec, model, state)

    return model, records, state


def _epoch_alpha(cfg: TrainConfig, model, epoch: int) -> float:
    """Alpha reported for an epoch's metrics row.

    With a phase schedule this is alpha_at(epoch).  Without one the
    row reports the boundary value the network is equivalent to:
    1.0 for a pure-ReLU network, 0.0 otherwise.
    """
    if cfg.pea is not None:
        return schedule.alpha_at(cfg.pea, epoch)
    slot = model.spec.activation
    if slot.slot == "plain" and slot.kind.name == "relu":
        return 1.0
    return 0.0
