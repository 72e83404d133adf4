"""Checkpoints, collapsed-model export, and metrics output.

Both file kinds share one container layout (all integers little-endian):

    bytes 0..7    magic (8 bytes): b"PEACKPT\\0" or b"PEAMODL\\0"
    bytes 8..11   format version, u32
    bytes 12..19  header length L, u64
    bytes 20..    header: UTF-8 JSON of L bytes
    then          payload: blobs back to back

The header carries a free-form ``meta`` object and a ``blobs`` table of
contents: name, dtype (NumPy little-endian typestring), shape, offset
into the payload, byte length, and CRC32.  That is sufficient to
reimplement a reader from this docstring alone.

Checkpoints store everything needed to continue training bit-exactly:
parameters, batch-norm running statistics (unfolded), optimizer
momentum buffers, live ensemble coefficients, every RNG stream position
and the completed-epoch counter.  Exports store the collapsed
inference graph: batch-norm statistics folded to per-channel
scale/shift, dropout dropped, and no activation other than ReLU.
"""

from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass

import numpy as np

from . import activations as act
from . import ensemble as ensemble_mod
from . import models as models_mod
from . import ops
from .errors import (
    CheckpointChecksumError,
    CheckpointFormatError,
    CheckpointShapeError,
    CheckpointVersionError,
    ConfigError,
)
from .rng import RngHub
from .tensor import Tensor
from .training import SGD, MetricsRecord, TrainConfig, TrainerState

FORMAT_VERSION = 1
CHECKPOINT_MAGIC = b"PEACKPT\x00"
MODEL_MAGIC = b"PEAMODL\x00"

_FORBIDDEN_EXPORT_KINDS = frozenset({"gelu", "swish", "silu", "mish", "elu", "ensemble"})


# ---------------------------------------------------------------------------
# container


def _write_container(path, magic: bytes, meta: dict, blobs: dict[str, np.ndarray]) -> None:
    toc = []
    chunks = []
    offset = 0
    for name, arr in blobs.items():
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = le.tobytes()
        toc.append({
            "name": name,
            "dtype": le.dtype.str,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
            "crc32": zlib.crc32(raw),
        })
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta, "blobs": toc}).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(magic)
        fh.write(FORMAT_VERSION.to_bytes(4, "little"))
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for raw in chunks:
            fh.write(raw)
    os.replace(tmp, path)


def _read_container(path, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 20 or buf[:8] != magic:
        raise CheckpointFormatError(f"{path}: bad magic, expected {magic!r}")
    version = int.from_bytes(buf[8:12], "little")
    if version > FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version} is newer than supported {FORMAT_VERSION}"
        )
    hlen = int.from_bytes(buf[12:20], "little")
    if 20 + hlen > len(buf):
        raise CheckpointFormatError(f"{path}: truncated header")
    try:
        header = json.loads(buf[20 : 20 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"{path}: undecodable header ({e})") from None
    payload = buf[20 + hlen :]
    blobs = {}
    for ent in header["blobs"]:
        raw = payload[ent["offset"] : ent["offset"] + ent["nbytes"]]
        if len(raw) != ent["nbytes"]:
            raise CheckpointFormatError(f"{path}: truncated blob {ent['name']!r}")
        if zlib.crc32(raw) != ent["crc32"]:
            raise CheckpointChecksumError(f"{path}: checksum mismatch on blob {ent['name']!r}")
        arr = np.frombuffer(raw, dtype=np.dtype(ent["dtype"])).reshape(ent["shape"])
        blobs[ent["name"]] = arr.astype(arr.dtype.newbyteorder("="), copy=False)
    return header["meta"], blobs


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, model: models_mod.Model, state: TrainerState,
                    train_config: dict | None = None) -> None:
    """Persist model + trainer state so training can resume bit-exactly."""
    meta = {
        "kind": "checkpoint",
        "model": model.spec.describe(),
        "dtype": str(np.dtype(model.dtype)),
        "epoch": state.epoch,
        "seed": model.hub.seed,
        "train_config": train_config,
        "ensemble_alphas": {e.name: e.alpha for e in model.ensemble_layers()},
        "rng": model.hub.state_dict(),
    }
    blobs: dict[str, np.ndarray] = {}
    for name, p in model.parameters():
        blobs[f"param/{name}"] = p.data
    for name, b in model.buffers():
        blobs[f"buffer/{name}"] = b
    for name, v in state.optimizer.state_dict().items():
        blobs[f"momentum/{name}"] = v
    _write_container(path, CHECKPOINT_MAGIC, meta, blobs)


@dataclass
class LoadedCheckpoint:
    meta: dict
    blobs: dict

    @property
    def epoch(self) -> int:
        return self.meta["epoch"]


def load_checkpoint(path) -> LoadedCheckpoint:
    meta, blobs = _read_container(path, CHECKPOINT_MAGIC)
    if meta.get("kind") != "checkpoint":
        raise CheckpointFormatError(f"{path}: container is not a checkpoint")
    return LoadedCheckpoint(meta, blobs)


def restore_model(ckpt: LoadedCheckpoint) -> models_mod.Model:
    """Rebuild the model a checkpoint describes, including RNG positions."""
    spec = models_mod.ModelSpec.from_dict(ckpt.meta["model"])
    hub = RngHub(ckpt.meta["seed"])
    model = models_mod.build(spec, hub=hub, dtype=np.dtype(ckpt.meta["dtype"]))
    for name, p in model.parameters():
        _fill(p.data, ckpt.blobs, f"param/{name}")
    for name, b in model.buffers():
        _fill(b, ckpt.blobs, f"buffer/{name}")
    for layer in model.ensemble_layers():
        if layer.name in ckpt.meta["ensemble_alphas"]:
            layer.alpha = ckpt.meta["ensemble_alphas"][layer.name]
    hub.load_state_dict(ckpt.meta["rng"])
    return model


def resume(path, cfg: TrainConfig, expected_config: dict | None = None
           ) -> tuple[models_mod.Model, TrainerState]:
    """Load a checkpoint and rebuild the optimizer for continued training."""
    ckpt = load_checkpoint(path)
    if expected_config is not None and ckpt.meta.get("train_config") not in (None, expected_config):
        raise ConfigError(
            "checkpoint was written under a different training configuration"
        )
    model = restore_model(ckpt)
    opt = SGD(model.parameters(), cfg.momentum, cfg.weight_decay,
              cfg.weight_decay_exclusions)
    opt.load_state_dict({
        name[len("momentum/"):]: arr
        for name, arr in ckpt.blobs.items() if name.startswith("momentum/")
    })
    return model, TrainerState(opt, epoch=ckpt.epoch)


def _fill(dst: np.ndarray, blobs: dict, key: str) -> None:
    if key not in blobs:
        raise CheckpointShapeError(f"missing blob {key!r}")
    src = blobs[key]
    if tuple(src.shape) != tuple(dst.shape):
        raise CheckpointShapeError(
            f"blob {key!r} has shape {tuple(src.shape)}, expected {tuple(dst.shape)}"
        )
    dst[...] = src.astype(dst.dtype, copy=False)


# ---------------------------------------------------------------------------
# collapsed export


class _ExportDense:
    """Dense node of an exported graph; flattens >2-D inputs itself."""

    def __init__(self, name, w: Tensor, b: Tensor):
        self.name, self.w, self.b = name, w, b

    def forward(self, x, training):
        if x.data.ndim > 2:
            x = ops.flatten(x)
        return ops.dense(x, self.w, self.b)

    def params(self):
        return iter(())


def _layer_to_node(layer, blobs: dict) -> dict | None:
    if isinstance(layer, models_mod.Conv):
        blobs[f"param/{layer.name}.w"] = layer.w.data
        return {"kind": "conv", "name": layer.name, "stride": layer.stride,
                "padding": layer.padding, "w": f"param/{layer.name}.w"}
    if isinstance(layer, models_mod.DepthwiseConv):
        blobs[f"param/{layer.name}.w"] = layer.w.data
        return {"kind": "conv", "depthwise": True, "name": layer.name,
                "stride": layer.stride, "padding": layer.padding,
                "w": f"param/{layer.name}.w"}
    if isinstance(layer, models_mod.Dense):
        blobs[f"param/{layer.name}.w"] = layer.w.data
        blobs[f"param/{layer.name}.b"] = layer.b.data
        return {"kind": "dense", "name": layer.name,
                "w": f"param/{layer.name}.w", "b": f"param/{layer.name}.b"}
    if isinstance(layer, models_mod.BatchNorm):
        s, b = layer.folded_scale_shift()
        blobs[f"bn/{layer.name}.scale"] = s
        blobs[f"bn/{layer.name}.shift"] = b
        return {"kind": "bn", "folded": True, "name": layer.name,
                "scale": f"bn/{layer.name}.scale", "shift": f"bn/{layer.name}.shift"}
    if isinstance(layer, models_mod.MaxPool2x2):
        return {"kind": "pool", "op": "max2x2"}
    if isinstance(layer, models_mod.GlobalAvgPool):
        return {"kind": "pool", "op": "gap"}
    if isinstance(layer, (models_mod.Flatten, models_mod.Dropout)):
        return None  # flatten folds into dense; dropout is identity at inference
    if isinstance(layer, models_mod.Activation):
        return {"kind": layer.kind.name}
    if isinstance(layer, models_mod.Residual):
        return {
            "kind": "residual",
            "name": layer.name,
            "main": _layers_to_nodes(layer.main, blobs),
            "shortcut": _layers_to_nodes(layer.shortcut, blobs),
            "post": _layers_to_nodes([layer.post], blobs),
        }
    raise ConfigError(f"layer {layer!r} cannot be exported")


def _layers_to_nodes(layers, blobs: dict) -> list:
    nodes = []
    for layer in layers:
        node = _layer_to_node(layer, blobs)
        if node is not None:
            nodes.append(node)
    return nodes


def node_kinds(nodes) -> set[str]:
    kinds = set()
    for node in nodes:
        kinds.add(node["kind"])
        if node["kind"] == "residual":
            kinds |= node_kinds(node["main"])
            kinds |= node_kinds(node["shortcut"])
            kinds |= node_kinds(node["post"])
    return kinds


def export_collapsed(model: models_mod.Model, path) -> None:
    """Collapse ensembles to ReLU, fold BN stats, and write the graph.

    Refuses while any ensemble coefficient is below 1.  The file's
    forward pass is bit-identical to the in-memory model's eval-mode
    forward.
    """
    collapsed = ensemble_mod.collapse_to_relu(model)
    blobs: dict[str, np.ndarray] = {}
    nodes = _layers_to_nodes(collapsed.layers, blobs)
    bad = node_kinds(nodes) & _FORBIDDEN_EXPORT_KINDS
    if bad:
        raise ConfigError(f"export would leak non-ReLU activations: {sorted(bad)}")
    meta = {
        "kind": "exported_model",
        "dtype": str(np.dtype(model.dtype)),
        "num_classes": model.spec.num_classes,
        "in_channels": model.spec.in_channels,
        "image_size": model.spec.image_size,
        "nodes": nodes,
    }
    _write_container(path, MODEL_MAGIC, meta, blobs)


class ExportedModel:
    """Inference-only model rebuilt from an exported file."""

    def __init__(self, meta: dict, layers: list):
        self.meta = meta
        self.layers = layers
        self.dtype = np.dtype(meta["dtype"])

    def forward(self, x, training: bool = False) -> Tensor:
        # training flag accepted for interface parity; always runs eval
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        for layer in self.layers:
            x = layer.forward(x, False)
        return x

    def node_kinds(self) -> set[str]:
        return node_kinds(self.meta["nodes"])


def _nodes_to_layers(nodes, blobs) -> list:
    layers = []
    for node in nodes:
        kind = node["kind"]
        if kind == "conv" and node.get("depthwise"):
            layers.append(models_mod.DepthwiseConv(
                node["name"], Tensor(blobs[node["w"]]), node["stride"], node["padding"]))
        elif kind == "conv":
            layers.append(models_mod.Conv(
                node["name"], Tensor(blobs[node["w"]]), node["stride"], node["padding"]))
        elif kind == "dense":
            layers.append(_ExportDense(
                node["name"], Tensor(blobs[node["w"]]), Tensor(blobs[node["b"]])))
        elif kind == "bn":
            layers.append(models_mod.BNInference(
                node["name"], blobs[node["scale"]], blobs[node["shift"]]))
        elif kind == "pool":
            layers.append(models_mod.MaxPool2x2("pool") if node["op"] == "max2x2"
                          else models_mod.GlobalAvgPool("gap"))
        elif kind == "relu":
            layers.append(models_mod.Activation("relu", act.RELU))
        elif kind == "residual":
            layers.append(models_mod.Residual(
                node["name"],
                _nodes_to_layers(node["main"], blobs),
                _nodes_to_layers(node["shortcut"], blobs),
                _nodes_to_layers(node["post"], blobs)[0],
            ))
        else:
            raise CheckpointFormatError(f"unknown exported node kind {kind!r}")
    return layers


def load_exported(path) -> ExportedModel:
    meta, blobs = _read_container(path, MODEL_MAGIC)
    if meta.get("kind") != "exported_model":
        raise CheckpointFormatError(f"{path}: container is not an exported model")
    return ExportedModel(meta, _nodes_to_layers(meta["nodes"], blobs))


# ---------------------------------------------------------------------------
# metrics


def write_metrics_csv(path, records: list[MetricsRecord], append: bool = False) -> None:
    mode = "a" if append and os.path.exists(path) else "w"
    with open(path, mode) as fh:
        if mode == "w":
            fh.write(",".join(MetricsRecord.CSV_COLUMNS) + "\n")
        for rec in records:
            fh.write(rec.csv_row() + "\n")
