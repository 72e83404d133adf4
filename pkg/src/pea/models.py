"""Desk-scale network zoo with a pluggable activation slot.

Four architectures are provided (MLP, SmallCNN, TinyResNet,
TinyDepthwiseNet), all assembled from the fixed op vocabulary.  Every
nonlinearity in a network is instantiated from the same activation
slot template: a plain activation, or an ensemble layer whose alpha
the phase schedule drives.

Parameters live in a name-keyed store, so rebuilding the layer
structure with a different slot (swap_activation, collapse) reuses the
same weight tensors; only the activation sites change.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import activations as act
from . import ops
from .ensemble import PER_ELEMENT, STOCHASTIC, WEIGHTED, EnsembleActivation
from .errors import ConfigError, ShapeError
from .rng import RngHub
from .tensor import Tensor

ARCHITECTURES = ("mlp", "small_cnn", "tiny_resnet", "tiny_depthwise")


@dataclass(frozen=True)
class ActivationSlot:
    """Template every activation site of a model instantiates from."""

    slot: str  # "plain" | "ensemble"
    kind: act.ActivationKind = act.RELU  # plain activation
    mode: str = WEIGHTED  # ensemble only
    sota: act.ActivationKind = act.GELU  # ensemble only
    granularity: str = PER_ELEMENT

    def __post_init__(self):
        if self.slot not in ("plain", "ensemble"):
            raise ConfigError(f"activation slot must be plain|ensemble, got {self.slot!r}")

    def make_layer(self, name: str, hub: RngHub):
        if self.slot == "plain":
            return Activation(name, self.kind)
        rng = hub.stream("ensemble", name) if self.mode == STOCHASTIC else None
        return EnsembleLayer(
            name,
            EnsembleActivation(
                self.mode, self.sota, alpha=0.0, granularity=self.granularity,
                rng=rng, name=name,
            ),
        )

    def describe(self) -> dict:
        if self.slot == "plain":
            return {"slot": "plain", "kind": self.kind.describe()}
        return {
            "slot": "ensemble",
            "mode": self.mode,
            "sota": self.sota.describe(),
            "granularity": self.granularity,
        }

    @staticmethod
    def from_dict(d: dict) -> "ActivationSlot":
        if d["slot"] == "plain":
            return ActivationSlot("plain", kind=act.ActivationKind.from_dict(d["kind"]))
        return ActivationSlot(
            "ensemble",
            mode=d.get("mode", WEIGHTED),
            sota=act.ActivationKind.from_dict(d["sota"]),
            granularity=d.get("granularity", PER_ELEMENT),
        )


PLAIN_RELU = ActivationSlot("plain", kind=act.RELU)


@dataclass(frozen=True)
class ModelSpec:
    architecture: str
    num_classes: int
    in_channels: int = 1
    image_size: int = 16
    hidden: tuple[int, ...] = (128,)  # mlp widths
    channels: tuple[int, ...] = ()  # conv nets; () = architecture default
    dropout_rate: float = 0.0
    activation: ActivationSlot = field(default_factory=lambda: PLAIN_RELU)

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ConfigError(f"dropout_rate must lie in [0,1), got {self.dropout_rate}")
        if any(int(h) <= 0 for h in self.hidden):
            raise ConfigError(f"hidden widths must be positive, got {self.hidden}")
        if any(int(c) <= 0 for c in self.channels):
            raise ConfigError(f"channel counts must be positive, got {self.channels}")

    def describe(self) -> dict:
        return {
            "architecture": self.architecture,
            "num_classes": self.num_classes,
            "in_channels": self.in_channels,
            "image_size": self.image_size,
            "hidden": list(self.hidden),
            "channels": list(self.channels),
            "dropout_rate": self.dropout_rate,
            "activation": self.activation.describe(),
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelSpec":
        return ModelSpec(
            architecture=d["architecture"],
            num_classes=d["num_classes"],
            in_channels=d.get("in_channels", 1),
            image_size=d.get("image_size", 16),
            hidden=tuple(d.get("hidden", (128,))),
            channels=tuple(d.get("channels", ())),
            dropout_rate=d.get("dropout_rate", 0.0),
            activation=ActivationSlot.from_dict(d["activation"]),
        )


# ---------------------------------------------------------------------------
# layers


class Conv:
    def __init__(self, name, w: Tensor, stride=1, padding=0):
        self.name, self.w, self.stride, self.padding = name, w, stride, padding

    def forward(self, x, training):
        return ops.conv2d(x, self.w, self.stride, self.padding)

    def params(self):
        yield f"{self.name}.w", self.w


class DepthwiseConv:
    def __init__(self, name, w: Tensor, stride=1, padding=0):
        self.name, self.w, self.stride, self.padding = name, w, stride, padding

    def forward(self, x, training):
        return ops.depthwise_conv2d(x, self.w, self.stride, self.padding)

    def params(self):
        yield f"{self.name}.w", self.w


class Dense:
    def __init__(self, name, w: Tensor, b: Tensor):
        self.name, self.w, self.b = name, w, b

    def forward(self, x, training):
        return ops.dense(x, self.w, self.b)

    def params(self):
        yield f"{self.name}.w", self.w
        yield f"{self.name}.b", self.b


class BatchNorm:
    def __init__(self, name, gamma: Tensor, beta: Tensor, running_mean, running_var,
                 momentum=0.9, eps=1e-5):
        self.name = name
        self.gamma, self.beta = gamma, beta
        self.running_mean, self.running_var = running_mean, running_var
        self.momentum, self.eps = momentum, eps

    def forward(self, x, training):
        return ops.batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            training, self.momentum, self.eps,
        )

    def params(self):
        yield f"{self.name}.gamma", self.gamma
        yield f"{self.name}.beta", self.beta

    def buffers(self):
        yield f"{self.name}.running_mean", self.running_mean
        yield f"{self.name}.running_var", self.running_var

    def folded_scale_shift(self):
        """The (scale, shift) pair eval mode applies: y = x*s + b."""
        return ops.fold_bn_stats(
            self.gamma.data, self.beta.data, self.running_mean, self.running_var, self.eps
        )


class BNInference:
    """Frozen per-channel affine: a batch norm with folded statistics."""

    def __init__(self, name, scale: np.ndarray, shift: np.ndarray):
        self.name, self.scale, self.shift = name, scale, shift

    def forward(self, x, training):
        shape = (1, -1) if x.data.ndim == 2 else (1, -1, 1, 1)
        out = x.data * self.scale.reshape(shape) + self.shift.reshape(shape)
        return Tensor(out)

    def params(self):
        return iter(())


class MaxPool2x2:
    def __init__(self, name):
        self.name = name

    def forward(self, x, training):
        return ops.maxpool2x2(x)

    def params(self):
        return iter(())


class GlobalAvgPool:
    def __init__(self, name):
        self.name = name

    def forward(self, x, training):
        return ops.global_avg_pool(x)

    def params(self):
        return iter(())


class Flatten:
    def __init__(self, name):
        self.name = name

    def forward(self, x, training):
        return ops.flatten(x)

    def params(self):
        return iter(())


class Dropout:
    def __init__(self, name, rate: float, rng: np.random.Generator):
        self.name, self.rate, self.rng = name, rate, rng

    def forward(self, x, training):
        return ops.dropout(x, self.rate, self.rng, training)

    def params(self):
        return iter(())


class Activation:
    def __init__(self, name, kind: act.ActivationKind):
        self.name, self.kind = name, kind

    def forward(self, x, training):
        return ops.activate(self.kind, x)

    def params(self):
        return iter(())


class EnsembleLayer:
    def __init__(self, name, ensemble: EnsembleActivation):
        self.name, self.ensemble = name, ensemble

    def forward(self, x, training):
        return self.ensemble.forward(x, training)

    def params(self):
        return iter(())


class Residual:
    """main(x) + shortcut(x), then the post activation slot."""

    def __init__(self, name, main: list, shortcut: list, post):
        self.name, self.main, self.shortcut, self.post = name, main, shortcut, post

    def forward(self, x, training):
        y = x
        for layer in self.main:
            y = layer.forward(y, training)
        s = x
        for layer in self.shortcut:
            s = layer.forward(s, training)
        return self.post.forward(ops.add(y, s), training)

    def params(self):
        for layer in (*self.main, *self.shortcut, self.post):
            yield from layer.params()

    def sublayers(self):
        return (*self.main, *self.shortcut, self.post)


# ---------------------------------------------------------------------------
# model


def _walk(layers):
    for layer in layers:
        if isinstance(layer, Residual):
            yield layer
            yield from _walk(layer.sublayers())
        else:
            yield layer


class Model:
    def __init__(self, spec: ModelSpec, layers: list, store: "ParamStore", hub: RngHub):
        self.spec = spec
        self.layers = layers
        self.store = store
        self.hub = hub

    def forward(self, x, training: bool = False) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    @property
    def dtype(self):
        return self.store.dtype

    def parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for layer in _walk(self.layers):
            if isinstance(layer, BatchNorm):
                out.extend(layer.buffers())
        return out

    def num_parameters(self) -> int:
        return sum(int(p.size) for _, p in self.parameters())

    def zero_grad(self):
        for _, p in self.parameters():
            p.grad = None

    def gradients(self) -> dict[str, np.ndarray]:
        from .tensor import gradients

        return gradients(self.parameters())

    def ensemble_layers(self):
        return [l.ensemble for l in _walk(self.layers) if isinstance(l, EnsembleLayer)]

    def activation_sites(self):
        return [l for l in _walk(self.layers) if isinstance(l, (Activation, EnsembleLayer))]

    def swap_activation(self, slot: ActivationSlot) -> "Model":
        """Rebuild with a new activation slot; weights are shared."""
        new_spec = replace(self.spec, activation=slot)
        layers = _build_layers(new_spec, self.store, self.hub)
        return Model(new_spec, layers, self.store, self.hub)

    def replace_ensembles_with_relu(self) -> "Model":
        return self.swap_activation(PLAIN_RELU)


class ParamStore:
    """Name-keyed parameter/buffer store shared across model rebuilds."""

    def __init__(self, hub: RngHub, dtype=np.float32):
        self.hub = hub
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self.bufs: dict[str, np.ndarray] = {}

    def weight(self, name: str, shape: tuple[int, ...], fan_in: int) -> Tensor:
        t = self.params.get(name)
        if t is None:
            rng = self.hub.stream("init", name)
            data = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
            t = Tensor(data.astype(self.dtype), requires_grad=True)
            self.params[name] = t
        return t

    def const(self, name: str, shape: tuple[int, ...], value: float) -> Tensor:
        t = self.params.get(name)
        if t is None:
            t = Tensor(np.full(shape, value, dtype=self.dtype), requires_grad=True)
            self.params[name] = t
        return t

    def buffer(self, name: str, shape: tuple[int, ...], value: float) -> np.ndarray:
        b = self.bufs.get(name)
        if b is None:
            b = np.full(shape, value, dtype=self.dtype)
            self.bufs[name] = b
        return b


# ---------------------------------------------------------------------------
# architecture assembly


def _conv(store, hub, name, cin, cout, k, stride, padding):
    w = store.weight(f"{name}.w", (cout, cin, k, k), fan_in=cin * k * k)
    return Conv(name, w, stride, padding)


def _dwconv(store, hub, name, c, k, stride, padding):
    w = store.weight(f"{name}.w", (c, 1, k, k), fan_in=k * k)
    return DepthwiseConv(name, w, stride, padding)


def _dense(store, hub, name, cin, cout):
    w = store.weight(f"{name}.w", (cin, cout), fan_in=cin)
    b = store.const(f"{name}.b", (cout,), 0.0)
    return Dense(name, w, b)


def _bn(store, hub, name, c):
    return BatchNorm(
        name,
        store.const(f"{name}.gamma", (c,), 1.0),
        store.const(f"{name}.beta", (c,), 0.0),
        store.buffer(f"{name}.running_mean", (c,), 0.0),
        store.buffer(f"{name}.running_var", (c,), 1.0),
    )


def _dropout(store, hub, name, rate):
    return Dropout(name, rate, hub.stream("dropout", name))


def _build_layers(spec: ModelSpec, store: ParamStore, hub: RngHub) -> list:
    slot = spec.activation
    mkact = lambda name: slot.make_layer(name, hub)  # noqa: E731
    arch = spec.architecture
    layers: list = []

    if arch == "mlp":
        in_features = spec.in_channels * spec.image_size * spec.image_size
        widths = [in_features, *spec.hidden]
        layers.append(Flatten("flatten"))
        for i in range(len(spec.hidden)):
            if spec.dropout_rate > 0:
                layers.append(_dropout(store, hub, f"drop{i}", spec.dropout_rate))
            layers.append(_dense(store, hub, f"fc{i}", widths[i], widths[i + 1]))
            layers.append(mkact(f"act{i}"))
        if spec.dropout_rate > 0:
            layers.append(_dropout(store, hub, "drop_head", spec.dropout_rate))
        layers.append(_dense(store, hub, "head", widths[-1], spec.num_classes))
        return layers

    if arch == "small_cnn":
        chans = spec.channels or (16, 32, 32)
        if len(chans) != 3:
            raise ConfigError(f"small_cnn takes 3 channel counts, got {chans}")
        c0, c1, c2 = chans
        cin = spec.in_channels
        for i, (ci, co, pool) in enumerate([(cin, c0, True), (c0, c1, True), (c1, c2, False)]):
            layers.append(_conv(store, hub, f"conv{i}", ci, co, 3, 1, 1))
            layers.append(_bn(store, hub, f"bn{i}", co))
            layers.append(mkact(f"act{i}"))
            if pool:
                layers.append(MaxPool2x2(f"pool{i}"))
        layers.append(GlobalAvgPool("gap"))
        if spec.dropout_rate > 0:
            layers.append(_dropout(store, hub, "drop_head", spec.dropout_rate))
        layers.append(_dense(store, hub, "head", c2, spec.num_classes))
        return layers

    if arch == "tiny_resnet":
        chans = spec.channels or (16, 32, 32)
        if len(chans) != 3:
            raise ConfigError(f"tiny_resnet takes 3 channel counts, got {chans}")
        layers.append(_conv(store, hub, "stem.conv", spec.in_channels, chans[0], 3, 1, 1))
        layers.append(_bn(store, hub, "stem.bn", chans[0]))
        layers.append(mkact("stem.act"))
        cin = chans[0]
        for i, cout in enumerate(chans):
            stride = 1 if i == 0 else 2
            name = f"stage{i}"
            main = [
                _conv(store, hub, f"{name}.conv1", cin, cout, 3, stride, 1),
                _bn(store, hub, f"{name}.bn1", cout),
                mkact(f"{name}.act1"),
                _conv(store, hub, f"{name}.conv2", cout, cout, 3, 1, 1),
                _bn(store, hub, f"{name}.bn2", cout),
            ]
            if stride != 1 or cin != cout:
                shortcut = [
                    _conv(store, hub, f"{name}.proj", cin, cout, 1, stride, 0),
                    _bn(store, hub, f"{name}.proj_bn", cout),
                ]
            else:
                shortcut = []
            layers.append(Residual(name, main, shortcut, mkact(f"{name}.act2")))
            cin = cout
        layers.append(GlobalAvgPool("gap"))
        if spec.dropout_rate > 0:
            layers.append(_dropout(store, hub, "drop_head", spec.dropout_rate))
        layers.append(_dense(store, hub, "head", cin, spec.num_classes))
        return layers

    if arch == "tiny_depthwise":
        chans = spec.channels or (8, 16, 16, 32, 32)
        if len(chans) != 5:
            raise ConfigError(
                f"tiny_depthwise takes 5 channel counts (stem + 4 blocks), got {chans}"
            )
        layers.append(_conv(store, hub, "stem.conv", spec.in_channels, chans[0], 3, 1, 1))
        layers.append(_bn(store, hub, "stem.bn", chans[0]))
        layers.append(mkact("stem.act"))
        cin = chans[0]
        strides = (2, 1, 2, 1)
        for i, (cout, stride) in enumerate(zip(chans[1:], strides)):
            name = f"block{i}"
            layers.append(_dwconv(store, hub, f"{name}.dw", cin, 3, stride, 1))
            layers.append(_bn(store, hub, f"{name}.dw_bn", cin))
            layers.append(mkact(f"{name}.dw_act"))
            layers.append(_conv(store, hub, f"{name}.pw", cin, cout, 1, 1, 0))
            layers.append(_bn(store, hub, f"{name}.pw_bn", cout))
            layers.append(mkact(f"{name}.pw_act"))
            cin = cout
        layers.append(GlobalAvgPool("gap"))
        if spec.dropout_rate > 0:
            layers.append(_dropout(store, hub, "drop_head", spec.dropout_rate))
        layers.append(_dense(store, hub, "head", cin, spec.num_classes))
        return layers

    raise ConfigError(f"unknown architecture {arch!r}")


def build(spec: ModelSpec, seed: int = 0, dtype=np.float32, hub: RngHub | None = None) -> Model:
    """Materialize a model with deterministic seed-derived initialization."""
    if hub is None:
        hub = RngHub(seed)
    store = ParamStore(hub, dtype=dtype)
    layers = _build_layers(spec, store, hub)
    return Model(spec, layers, store, hub)


def swap_activation(model: Model, slot: ActivationSlot) -> Model:
    """Module-level alias of :meth:`Model.swap_activation`."""
    return model.swap_activation(slot)
