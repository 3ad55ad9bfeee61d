"""Model architectures and network assembly.

Three fixed architectures (conv stack -> optional GRU stack -> dense head):

    baseline: C(5,256) C(5,256)                         D(64) D(4)   ReLU
    crnn1:    C(5,256) C(5,256)             G(64) G(64) D(64) D(4)   ReLU
    crnn2:    C(3,64) C(3,128) C(3,128) C(3,128)
                                            G(32) G(32) D(128) D(64) D(4)  ELU

Every conv block is Conv -> BatchNorm -> activation -> MaxPool -> Dropout.
Pooling is 2x2 where the remaining conv stack still fits afterwards, else 1
along the offending axis. Purely convolutional models end in global average
pooling; recurrent models average over frequency and keep the time axis,
with the last GRU emitting only its final state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from .layers import (
    ELU,
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    FreqMean,
    GRU,
    GlobalAvgPool,
    Layer,
    MaxPool,
    ReLU,
)

N_OUTPUTS = 4  # rt60, c50, c80, drr
DROPOUT_RATE = 0.2


@dataclass(frozen=True)
class ModelSpec:
    name: str
    convs: tuple[tuple[int, int], ...]   # (kernel, filters)
    grus: tuple[int, ...]                # hidden units
    denses: tuple[int, ...]              # unit counts, last must be 4
    activation: str                      # "relu" | "elu"

    def to_dict(self) -> dict:
        return {"name": self.name, "convs": [list(c) for c in self.convs],
                "grus": list(self.grus), "denses": list(self.denses),
                "activation": self.activation}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(d["name"], tuple(tuple(c) for c in d["convs"]),
                   tuple(d["grus"]), tuple(d["denses"]), d["activation"])


ARCHITECTURES = {
    "baseline": ModelSpec("baseline", ((5, 256), (5, 256)), (), (64, 4), "relu"),
    "crnn1": ModelSpec("crnn1", ((5, 256), (5, 256)), (64, 64), (64, 4), "relu"),
    "crnn2": ModelSpec("crnn2", ((3, 64), (3, 128), (3, 128), (3, 128)),
                       (32, 32), (128, 64, 4), "elu"),
}


def model_spec(name: str) -> ModelSpec:
    try:
        return ARCHITECTURES[name]
    except KeyError:
        raise ValueError(f"unknown architecture {name!r}; "
                         f"choose from {sorted(ARCHITECTURES)}") from None


def _fits(size: int, kernels: list[int]) -> bool:
    for k in kernels:
        if size < k:
            return False
        size = size - k + 1
    return size >= 1


def plan_pooling(input_hw: tuple[int, int],
                 kernels: list[int]) -> list[tuple[int, int]]:
    """Per-block pool sizes: halve an axis only if later convs still fit."""
    sizes = list(input_hw)
    pools = []
    for i, k in enumerate(kernels):
        if sizes[0] < k or sizes[1] < k:
            raise ShapeError(
                f"input too small for the conv/pool pyramid: "
                f"{sizes[0]}x{sizes[1]} at conv {i + 1} (kernel {k})")
        sizes = [s - k + 1 for s in sizes]
        rest = kernels[i + 1:]
        block = []
        for a in range(2):
            if sizes[a] // 2 >= 1 and _fits(sizes[a] // 2, rest):
                block.append(2)
                sizes[a] //= 2
            else:
                block.append(1)
        pools.append(tuple(block))
    return pools


class Network:
    """An ordered layer stack with MSE-driven forward/backward passes."""

    def __init__(self, layers: list[Layer], spec: ModelSpec,
                 input_shape: tuple[int, int, int], dtype=np.float32):
        self.layers = layers
        self.spec = spec
        self.input_shape = input_shape
        self.dtype = dtype

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if x.shape[1:] != self.input_shape:
            raise ShapeError(
                f"input shape {x.shape[1:]} != model input {self.input_shape}")
        out = x.astype(self.dtype, copy=False)
        for layer in self.layers:
            out = layer.forward(out, train)
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray,
                       train: bool = True) -> tuple[float, np.ndarray]:
        """Mean-squared-error loss and its parameter gradients in one pass."""
        self.zero_grads()
        pred = self.forward(x, train)
        residual = pred - y.astype(pred.dtype, copy=False)
        loss = float(np.mean(residual.astype(np.float64) ** 2))
        self.backward((2.0 / residual.size) * residual)
        return loss, pred

    def param_items(self):
        for i, layer in enumerate(self.layers):
            for name in layer.params:
                yield f"L{i:02d}.{layer.kind}.{name}", layer, name

    def named_params(self) -> dict[str, np.ndarray]:
        return {key: layer.params[name] for key, layer, name in self.param_items()}

    def named_grads(self) -> dict[str, np.ndarray]:
        return {key: layer.grads[name] for key, layer, name in self.param_items()}

    def named_state(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, value in layer.state.items():
                out[f"L{i:02d}.{layer.kind}.{name}"] = value
        return out

    def parameter_count(self) -> int:
        """Trainable scalars only; batch-norm running stats excluded."""
        return sum(layer.parameter_count() for layer in self.layers)

    def snapshot(self) -> dict[str, np.ndarray]:
        tensors = {k: v.copy() for k, v in self.named_params().items()}
        tensors.update({k: v.copy() for k, v in self.named_state().items()})
        return tensors

    def restore(self, tensors: dict[str, np.ndarray]):
        for key, layer, name in self.param_items():
            layer.params[name] = tensors[key].copy()
        for i, layer in enumerate(self.layers):
            for name in layer.state:
                layer.state[name] = tensors[f"L{i:02d}.{layer.kind}.{name}"].copy()

    def set_dropout_rng(self, rng: np.random.Generator | None):
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.rng = rng


def build_network(spec: ModelSpec, input_shape: tuple[int, int, int], seed: int,
                  dtype=np.float32, dropout_rate: float = DROPOUT_RATE) -> Network:
    """Assemble and deterministically initialize a network for `input_shape`.

    `input_shape` is (frames, n_coeffs, 1). Raises ShapeError when the conv
    pyramid cannot fit the input even without pooling.
    """
    frames, coeffs, channels = input_shape
    rng = np.random.default_rng(seed)
    act = ReLU if spec.activation == "relu" else ELU
    kernels = [k for k, _ in spec.convs]
    pools = plan_pooling((frames, coeffs), kernels)

    layers: list[Layer] = []
    h, w, c = frames, coeffs, channels
    for (kernel, filters), pool in zip(spec.convs, pools):
        layers.append(Conv2D(kernel, c, filters, rng, dtype=dtype))
        layers.append(BatchNorm(filters, dtype=dtype))
        layers.append(act())
        if pool != (1, 1):
            layers.append(MaxPool(pool))
        if dropout_rate > 0:
            layers.append(Dropout(dropout_rate))
        h, w = (h - kernel + 1) // pool[0], (w - kernel + 1) // pool[1]
        c = filters

    if spec.grus:
        layers.append(FreqMean())
        dim = c
        for gi, hidden in enumerate(spec.grus):
            last = gi == len(spec.grus) - 1
            layers.append(GRU(dim, hidden, rng, return_sequences=not last,
                              dtype=dtype))
            dim = hidden
    else:
        layers.append(GlobalAvgPool())
        dim = c

    for di, units in enumerate(spec.denses):
        layers.append(Dense(dim, units, rng, dtype=dtype))
        if di < len(spec.denses) - 1:
            layers.append(act())
        dim = units
    if dim != N_OUTPUTS:
        raise ShapeError(f"final layer width {dim} != {N_OUTPUTS}")
    return Network(layers, spec, input_shape, dtype=dtype)
