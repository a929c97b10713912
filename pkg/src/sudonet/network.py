"""Fully connected feed-forward networks with explicit backpropagation.

Hidden layers may use any activation from :mod:`sudonet.activations`. In the
forward pass discretized units emit their quantized level; in the backward
pass they contribute the derivative of tanh at the recorded pre-activation.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import activations as act
from .activations import ActivationKind, Kind
from .linalg import Matrix, ShapeError


class Loss(enum.Enum):
    SSE = "sse"
    SOFTMAX_CE = "softmax-ce"


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: ActivationKind

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError(f"layer dims must be >= 1, got {self.input_dim}x{self.output_dim}")


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]
    loss: Loss = Loss.SSE

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.output_dim != b.input_dim:
                raise ValueError(
                    f"layer dims do not chain: {a.input_dim}->{a.output_dim} then "
                    f"{b.input_dim}->{b.output_dim}"
                )
        for layer in self.layers[:-1]:
            if layer.activation.kind is Kind.SOFTMAX:
                raise ValueError("softmax is only allowed on the output layer")
        last = self.layers[-1].activation.kind
        if (last is Kind.SOFTMAX) != (self.loss is Loss.SOFTMAX_CE):
            raise ValueError("softmax output and cross-entropy loss must be used together")

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim

    @property
    def hidden(self) -> tuple[LayerSpec, ...]:
        return self.layers[:-1]


def mlp(
    input_dim: int,
    hidden: Sequence[int],
    activation: ActivationKind | Sequence[ActivationKind],
    output_dim: int,
    output: ActivationKind = act.LINEAR,
) -> NetworkSpec:
    """Build a spec for a plain multilayer perceptron.

    ``activation`` is either one kind for every hidden layer or one per layer.
    A softmax ``output`` selects the cross-entropy loss, anything else SSE.
    """
    if isinstance(activation, ActivationKind):
        acts = [activation] * len(hidden)
    else:
        acts = list(activation)
        if len(acts) != len(hidden):
            raise ValueError("need one activation per hidden layer")
    dims = [input_dim, *hidden, output_dim]
    layers = [LayerSpec(dims[i], dims[i + 1], a) for i, a in enumerate(acts)]
    layers.append(LayerSpec(dims[-2], dims[-1], output))
    loss = Loss.SOFTMAX_CE if output.kind is Kind.SOFTMAX else Loss.SSE
    return NetworkSpec(tuple(layers), loss)


def _views(spec: "NetworkSpec", buf: np.ndarray) -> tuple[list[Matrix], list[Matrix]]:
    weights, biases, pos = [], [], 0
    for layer in spec.layers:
        n = layer.input_dim * layer.output_dim
        weights.append(buf[pos : pos + n].reshape(layer.input_dim, layer.output_dim))
        pos += n
        biases.append(buf[pos : pos + layer.output_dim].reshape(1, layer.output_dim))
        pos += layer.output_dim
    return weights, biases


def n_params(spec: "NetworkSpec") -> int:
    return sum(layer.output_dim * (layer.input_dim + 1) for layer in spec.layers)


@dataclass
class Network:
    """Parameters of a network. ``weights[i]`` is input_dim x output_dim.

    All weights and biases are views into one contiguous vector ``flat`` so
    the optimizer can update them in a single pass.
    """

    spec: NetworkSpec
    weights: list[Matrix]
    biases: list[Matrix]

    def __post_init__(self):
        flat = np.empty(n_params(self.spec))
        w_views, b_views = _views(self.spec, flat)
        for layer, view, w in zip(self.spec.layers, w_views, self.weights):
            if np.shape(w) != view.shape:
                raise ShapeError(f"weight shape {np.shape(w)} does not match layer {view.shape}")
            view[...] = w
        for view, b in zip(b_views, self.biases):
            if np.shape(b) != view.shape:
                raise ShapeError(f"bias shape {np.shape(b)} does not match layer {view.shape}")
            view[...] = b
        self.flat, self.weights, self.biases = flat, w_views, b_views

    def params(self) -> list[Matrix]:
        """The optimizer's view: a single flat parameter vector."""
        return [self.flat]

    def copy(self) -> "Network":
        return Network(self.spec, self.weights, self.biases)

    def predict(self, batch: Matrix, chunk: int = 1024) -> Matrix:
        """Network output for ``batch``, evaluated ``chunk`` rows at a time to stay cache-sized."""
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2 or len(batch) <= chunk:
            return forward(self, batch)[0]
        return np.vstack([forward(self, batch[i : i + chunk])[0] for i in range(0, len(batch), chunk)])


@dataclass
class ForwardTrace:
    inputs: Matrix
    pre: list[Matrix] = field(default_factory=list)
    post: list[Matrix] = field(default_factory=list)
    tanh: list[Matrix | None] = field(default_factory=list)  # saved tanh(pre) for tanh-based layers


@dataclass
class Gradients:
    weights: list[Matrix]
    biases: list[Matrix]
    vector: np.ndarray  # flat storage behind weights and biases, same layout as Network.flat

    def flat(self) -> list[Matrix]:
        return [self.vector]


def init(spec: NetworkSpec, seed: int) -> Network:
    """Glorot-uniform weights, zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for layer in spec.layers:
        limit = np.sqrt(6.0 / (layer.input_dim + layer.output_dim))
        weights.append(rng.uniform(-limit, limit, size=(layer.input_dim, layer.output_dim)))
        biases.append(np.zeros((1, layer.output_dim)))
    return Network(spec, weights, biases)


def forward(net: Network, batch: Matrix) -> tuple[Matrix, ForwardTrace]:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != net.spec.input_dim:
        raise ShapeError(f"batch shape {batch.shape} does not fit input dim {net.spec.input_dim}")
    if not np.isfinite(batch).all():
        raise act.InputError("network input contains non-finite values")
    return _forward(net, batch)


def _forward(net: Network, batch: Matrix) -> tuple[Matrix, ForwardTrace]:
    # caller has validated ``batch``
    trace = ForwardTrace(batch)
    h = batch
    for layer, w, b in zip(net.spec.layers, net.weights, net.biases):
        z = h @ w
        z += b
        # finite inputs and weights keep z finite; divergence shows up in the loss
        h, u = act.forward_traced(layer.activation, z)
        trace.pre.append(z)
        trace.post.append(h)
        trace.tanh.append(u)
    return h, trace


def loss_sse(pred: Matrix, target: Matrix) -> float:
    """Sum of squared errors over every entry, not averaged."""
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError(f"loss shape mismatch: {pred.shape} vs {target.shape}")
    d = pred - target
    return float(np.sum(d * d))


def log_softmax(logits: Matrix) -> Matrix:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss_softmax_ce(logits: Matrix, onehot: Matrix) -> float:
    """Mean over rows of the cross-entropy between softmax(logits) and ``onehot``."""
    logits, onehot = np.asarray(logits), np.asarray(onehot)
    if logits.shape != onehot.shape:
        raise ShapeError(f"loss shape mismatch: {logits.shape} vs {onehot.shape}")
    return float(-np.sum(onehot * log_softmax(logits)) / logits.shape[0])


def loss(net: Network, trace: ForwardTrace, targets: Matrix) -> float:
    if net.spec.loss is Loss.SSE:
        return loss_sse(trace.post[-1], targets)
    return loss_softmax_ce(trace.pre[-1], targets)


def backward(net: Network, trace: ForwardTrace, targets: Matrix) -> Gradients:
    """Gradients of the network loss with respect to every weight and bias."""
    targets = np.asarray(targets, dtype=np.float64)
    out = trace.post[-1]
    if targets.shape != out.shape:
        raise ShapeError(f"target shape {targets.shape} does not match output {out.shape}")
    layers = net.spec.layers
    if net.spec.loss is Loss.SOFTMAX_CE:
        delta = (out - targets) / out.shape[0]
    else:
        d_out = act.backward_traced(layers[-1].activation, trace.pre[-1], trace.tanh[-1])
        delta = out - targets
        delta *= 2.0
        delta *= d_out

    vector = np.empty(n_params(net.spec))
    gw, gb = _views(net.spec, vector)
    for i in range(len(layers) - 1, -1, -1):
        h_in = trace.post[i - 1] if i > 0 else trace.inputs
        np.matmul(h_in.T, delta, out=gw[i])
        np.add.reduce(delta, axis=0, keepdims=True, out=gb[i])
        if i > 0:
            delta = delta @ net.weights[i].T
            delta *= act.backward_traced(layers[i - 1].activation, trace.pre[i - 1], trace.tanh[i - 1])
    return Gradients(gw, gb, vector)


def loss_and_grad(net: Network, batch: Matrix, targets: Matrix, checked: bool = True) -> tuple[float, Gradients]:
    """Loss and gradients for one batch; ``checked=False`` skips input validation."""
    _, trace = forward(net, batch) if checked else _forward(net, batch)
    return loss(net, trace, targets), backward(net, trace, targets)


# Binary model container:
#   b"SUDN", u32 version, u32 layer count, then per layer
#   u32 input_dim, u32 output_dim, u32 activation tag, u32 levels,
#   f64 weights (row-major, input_dim x output_dim), f64 biases.
# All integers and reals little-endian. The loss is implied by the output layer.

MAGIC = b"SUDN"
FORMAT_VERSION = 1
_TAGS = {
    Kind.LINEAR: 0,
    Kind.TANH: 1,
    Kind.RELU: 2,
    Kind.SUDO: 3,
    Kind.RSUDO: 4,
    Kind.SOFTMAX: 5,
}
_KINDS = {v: k for k, v in _TAGS.items()}


class ModelFormatError(ValueError):
    pass


def to_bytes(net: Network) -> bytes:
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(net.spec.layers))]
    for layer, w, b in zip(net.spec.layers, net.weights, net.biases):
        a = layer.activation
        parts.append(struct.pack("<IIII", layer.input_dim, layer.output_dim, _TAGS[a.kind], a.levels))
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def from_bytes(data: bytes) -> Network:
    if data[:4] != MAGIC:
        raise ModelFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    try:
        version, count = struct.unpack_from("<II", data, 4)
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported model format version {version}")
        pos = 12
        layers, weights, biases = [], [], []
        for _ in range(count):
            n_in, n_out, tag, levels = struct.unpack_from("<IIII", data, pos)
            pos += 16
            if tag not in _KINDS:
                raise ModelFormatError(f"unknown activation tag {tag}")
            layers.append(LayerSpec(n_in, n_out, ActivationKind(_KINDS[tag], levels)))
            w = np.frombuffer(data, dtype="<f8", count=n_in * n_out, offset=pos)
            pos += 8 * n_in * n_out
            b = np.frombuffer(data, dtype="<f8", count=n_out, offset=pos)
            pos += 8 * n_out
            weights.append(w.astype(np.float64).reshape(n_in, n_out))
            biases.append(b.astype(np.float64).reshape(1, n_out))
    except (struct.error, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"truncated or corrupt model data: {exc}") from exc
    if pos != len(data):
        raise ModelFormatError(f"{len(data) - pos} trailing bytes after last layer")
    loss_kind = Loss.SOFTMAX_CE if layers[-1].activation.kind is Kind.SOFTMAX else Loss.SSE
    return Network(NetworkSpec(tuple(layers), loss_kind), weights, biases)


def save(net: Network, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(net))


def load(path: str | Path) -> Network:
    return from_bytes(Path(path).read_bytes())
