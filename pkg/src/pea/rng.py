"""Seeded random-stream management.

A single experiment seed fans out into independent named substreams
(weight init, batch shuffling, per-layer dropout masks, per-layer
stochastic-ensemble draws, augmentation).  Streams are addressed by
name, never by creation order, so enabling or disabling one consumer
cannot shift the randomness seen by another.

Philox is used as the bit generator because its counter-based state
serializes cleanly into checkpoints and restores exactly.
"""

from __future__ import annotations

import zlib

import numpy as np


def _name_key(name: str) -> tuple[int, int]:
    # crc32 + length keeps distinct names on distinct spawn keys
    data = name.encode("utf-8")
    return (zlib.crc32(data), len(data))


class RngHub:
    """Registry of named, independently seeded random generators."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, *parts: str) -> np.random.Generator:
        """Return the generator for a name, creating it on first use."""
        name = "/".join(str(p) for p in parts)
        gen = self._streams.get(name)
        if gen is None:
            seq = np.random.SeedSequence(entropy=self.seed, spawn_key=_name_key(name))
            gen = np.random.Generator(np.random.Philox(seq))
            self._streams[name] = gen
        return gen

    def state_dict(self) -> dict:
        """Serializable snapshot of every stream created so far."""
        return {name: _state_to_jsonable(g.bit_generator.state)
                for name, g in self._streams.items()}

    def load_state_dict(self, states: dict) -> None:
        """Restore stream positions saved by :meth:`state_dict`.

        Streams are recreated on demand, so restoring a name that has
        not been touched yet instantiates it first.
        """
        for name, state in states.items():
            gen = self.stream(name)
            gen.bit_generator.state = _state_from_jsonable(state)

    def snapshot(self) -> dict:
        """In-memory snapshot (used to replay stochastic forwards)."""
        return self.state_dict()

    def restore(self, snap: dict) -> None:
        self.load_state_dict(snap)


def _state_to_jsonable(state):
    if isinstance(state, dict):
        return {k: _state_to_jsonable(v) for k, v in state.items()}
    if isinstance(state, np.ndarray):
        return {"__ndarray__": state.tolist(), "dtype": str(state.dtype)}
    if isinstance(state, (np.integer,)):
        return int(state)
    return state


def _state_from_jsonable(state):
    if isinstance(state, dict):
        if "__ndarray__" in state:
            return np.array(state["__ndarray__"], dtype=state["dtype"])
        return {k: _state_from_jsonable(v) for k, v in state.items()}
    return state
