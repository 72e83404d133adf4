"""The three-phase coefficient schedule driving ensemble layers.

Progress is measured on a continuous epoch axis t in [0, total_epochs]:
alpha is 0 up to the end of the initial phase, rises linearly across
the transition phase, and stays pinned at exactly 1 afterwards.  The
endpoints are clamped, never approximated, so alpha_at(t_init_end) == 0.0
and alpha_at(t_trans_end) == 1.0 hold as float equalities.

Per-epoch granularity (the default) floors fractional progress, so
alpha is constant within an epoch; per-step granularity interpolates
inside epochs.  The two agree exactly at integer epochs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, ContractError

PER_EPOCH = "per_epoch"
PER_STEP = "per_step"


@dataclass(frozen=True)
class PhaseSchedule:
    t_init_end: float
    t_trans_end: float
    total_epochs: int
    granularity: str = PER_EPOCH
    shape: str = "linear"  # extension point; only linear ships

    def __post_init__(self):
        if self.shape != "linear":
            raise ConfigError(f"unsupported schedule shape {self.shape!r}")
        if self.granularity not in (PER_EPOCH, PER_STEP):
            raise ConfigError(
                f"granularity must be per_epoch|per_step, got {self.granularity!r}"
            )
        if not (0 <= self.t_init_end < self.t_trans_end <= self.total_epochs):
            raise ConfigError(
                "schedule boundaries must satisfy 0 <= init_end < trans_end <= total_epochs, "
                f"got init_end={self.t_init_end}, trans_end={self.t_trans_end}, "
                f"total={self.total_epochs}"
            )

    def describe(self) -> dict:
        return {
            "t_init_end": self.t_init_end,
            "t_trans_end": self.t_trans_end,
            "total_epochs": self.total_epochs,
            "granularity": self.granularity,
            "shape": self.shape,
        }

    @staticmethod
    def from_dict(d: dict) -> "PhaseSchedule":
        return PhaseSchedule(
            t_init_end=d["t_init_end"],
            t_trans_end=d["t_trans_end"],
            total_epochs=d["total_epochs"],
            granularity=d.get("granularity", PER_EPOCH),
            shape=d.get("shape", "linear"),
        )


def alpha_at(s: PhaseSchedule, t: float) -> float:
    """Coefficient at progress point t (epochs elapsed)."""
    if not (0 <= t <= s.total_epochs):
        raise ContractError(
            f"progress {t} outside [0, {s.total_epochs}]"
        )
    if s.granularity == PER_EPOCH:
        t = math.floor(t)
    if t <= s.t_init_end:
        return 0.0
    if t >= s.t_trans_end:
        return 1.0
    return (t - s.t_init_end) / (s.t_trans_end - s.t_init_end)


def apply(s: PhaseSchedule, model, t: float) -> float:
    """Push alpha_at(s, t) into every ensemble layer of the model."""
    a = alpha_at(s, t)
    for layer in model.ensemble_layers():
        layer.alpha = a
    return a


def trace(s: PhaseSchedule) -> list[tuple[int, float]]:
    """(epoch, alpha) rows for epochs 1..total_epochs."""
    return [(e, alpha_at(s, e)) for e in range(1, s.total_epochs + 1)]


def write_schedule_csv(s: PhaseSchedule, fh) -> None:
    fh.write("epoch,alpha\n")
    for e, a in trace(s):
        fh.write(f"{e},{a!r}\n")
