"""Single-head MLP with manual forward/backward passes and SGD updates.

The classifier keeps one output unit per class over the whole task
sequence; the output dimension is fixed at construction and never grows.
The same class serves as the trainable new model and, via ``snapshot``, as
the frozen old model used for distillation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError
from .linalg import Matrix, Rng, init_uniform_scaled, matmul

_CHECKPOINT_MAGIC = b"PFCLMLP1"


@dataclass
class Layer:
    w: Matrix  # in_dim x out_dim
    b: Matrix  # 1 x out_dim


class MlpModel:
    """Fully connected net: ReLU on hidden layers, identity on the output.

    ``dims`` chains input dim, hidden widths, and the total class count,
    e.g. ``(16, 100, 100, 10)``. Weights start uniform-scaled, biases zero.
    """

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise ShapeError("model needs at least one layer")
        for i in range(len(layers) - 1):
            if layers[i].w.shape[1] != layers[i + 1].w.shape[0]:
                raise ShapeError(
                    f"layer {i} out-dim {layers[i].w.shape[1]} != "
                    f"layer {i + 1} in-dim {layers[i + 1].w.shape[0]}"
                )
        self.layers = layers

    @classmethod
    def init(cls, dims: tuple[int, ...] | list[int], rng: Rng) -> "MlpModel":
        if len(dims) < 2:
            raise ShapeError("dims must chain at least input and output")
        layers = [
            Layer(w=init_uniform_scaled(d_in, d_out, rng),
                  b=np.zeros((1, d_out)))
            for d_in, d_out in zip(dims[:-1], dims[1:])
        ]
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].w.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].w.shape[1]

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.in_dim,) + tuple(l.w.shape[1] for l in self.layers)


@dataclass
class Gradients:
    """Per-layer (dW, db) pairs, shape-congruent with the owning model."""

    dw: list[Matrix]
    db: list[Matrix]


@dataclass
class ForwardCache:
    """Activations recorded by ``forward``, consumed by ``backward``."""

    inputs: list[Matrix]  # input to each layer (inputs[0] is the batch)
    pre: list[Matrix]     # pre-activation of each layer


def forward(model: MlpModel, x: Matrix) -> tuple[Matrix, ForwardCache]:
    """Compute logits for a batch (rows = samples) plus a backward cache."""
    if x.ndim != 2 or x.shape[1] != model.in_dim:
        raise ShapeError(f"input shape {x.shape} incompatible with in-dim {model.in_dim}")
    inputs, pre = [], []
    a = x
    last = len(model.layers) - 1
    for i, layer in enumerate(model.layers):
        inputs.append(a)
        z = matmul(a, layer.w) + layer.b
        pre.append(z)
        a = z if i == last else np.maximum(z, 0.0)
    return a, ForwardCache(inputs=inputs, pre=pre)


def backward(model: MlpModel, cache: ForwardCache, dlogits: Matrix) -> Gradients:
    """Chain-rule gradients of the scalar loss whose logit-gradient is dlogits.

    The cache must come from a ``forward`` call on this model with the same
    batch; anything else fails the shape checks.
    """
    n_layers = len(model.layers)
    if len(cache.inputs) != n_layers or len(cache.pre) != n_layers:
        raise ShapeError("cache does not match model layer count")
    if dlogits.shape != cache.pre[-1].shape:
        raise ShapeError(
            f"dlogits shape {dlogits.shape} != logits shape {cache.pre[-1].shape}"
        )
    dw: list[Matrix] = [None] * n_layers  # type: ignore[list-item]
    db: list[Matrix] = [None] * n_layers  # type: ignore[list-item]
    delta = dlogits
    for i in range(n_layers - 1, -1, -1):
        a_in = cache.inputs[i]
        if a_in.shape[0] != delta.shape[0] or a_in.shape[1] != model.layers[i].w.shape[0]:
            raise ShapeError(f"cache activation shape {a_in.shape} stale at layer {i}")
        dw[i] = matmul(a_in.T, delta)
        db[i] = delta.sum(axis=0, keepdims=True)
        if i > 0:
            delta = matmul(delta, model.layers[i].w.T)
            delta = delta * (cache.pre[i - 1] > 0.0)
    return Gradients(dw=dw, db=db)


def sgd_step(model: MlpModel, grads: Gradients, lr: float) -> None:
    """In-place update p <- p - lr * g for every parameter."""
    if len(grads.dw) != len(model.layers):
        raise ShapeError("gradient layer count does not match model")
    for layer, dw, db in zip(model.layers, grads.dw, grads.db):
        if dw.shape != layer.w.shape or db.shape != layer.b.shape:
            raise ShapeError(
                f"gradient shapes {dw.shape}/{db.shape} do not match "
                f"parameter shapes {layer.w.shape}/{layer.b.shape}"
            )
        layer.w -= lr * dw
        layer.b -= lr * db


def snapshot(model: MlpModel) -> MlpModel:
    """Deep, independent copy; later updates to the original never leak in."""
    return MlpModel([Layer(w=l.w.copy(), b=l.b.copy()) for l in model.layers])


def save_model(model: MlpModel, path) -> None:
    """Write a checkpoint; ``load_model(save_model(m)) == m`` bitwise.

    Layout (little-endian): 8-byte magic, uint32 layer count, then per layer
    uint32 in-dim and out-dim, then per layer the raw float64 weight matrix
    (row-major) followed by the bias row.
    """
    with open(path, "wb") as f:
        f.write(_CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(model.layers)))
        for layer in model.layers:
            f.write(struct.pack("<II", *layer.w.shape))
        for layer in model.layers:
            f.write(np.ascontiguousarray(layer.w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(layer.b, dtype="<f8").tobytes())


def load_model(path) -> MlpModel:
    """Read a checkpoint written by ``save_model``."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != _CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic at byte offset 0 in {path}")
    off = 8
    (n_layers,) = struct.unpack_from("<I", blob, off)
    off += 4
    shapes = []
    for _ in range(n_layers):
        shapes.append(struct.unpack_from("<II", blob, off))
        off += 8
    layers = []
    for d_in, d_out in shapes:
        for name, count in (("w", d_in * d_out), ("b", d_out)):
            nbytes = count * 8
            if off + nbytes > len(blob):
                raise FormatError(f"truncated checkpoint at byte offset {off} in {path}")
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off).astype(np.float64)
            off += nbytes
            if name == "w":
                w = arr.reshape(d_in, d_out)
            else:
                layers.append(Layer(w=w, b=arr.reshape(1, d_out)))
    if off != len(blob):
        raise FormatError(f"trailing bytes at offset {off} in {path}")
    return MlpModel(layers)
