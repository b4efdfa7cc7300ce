"""Tiny dense-network substrate with hand-written reverse-mode gradients.

Every network in this package is a fixed feed-forward stack of affine
layers with tanh/relu/identity activations, so a full autodiff graph would
be overkill.  Weights are float64 throughout; forward on a 1-D input is a
plain matrix-vector chain, which keeps inference bit-deterministic.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("tanh", "relu", "identity")

_MAGIC = b"DGNET"
_FORMAT_VERSION = 1


@dataclass
class Layer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class Net:
    layers: list

    @property
    def in_dim(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].W.shape[0]

    def parameters(self):
        """Flat list of parameter arrays, layer order, W before b."""
        out = []
        for layer in self.layers:
            out.append(layer.W)
            out.append(layer.b)
        return out

    def copy(self) -> "Net":
        return Net([Layer(l.W.copy(), l.b.copy(), l.activation) for l in self.layers])


def make_net(sizes, activations, rng: np.random.Generator) -> Net:
    """Glorot-uniform weights, zero biases.  sizes = (in, h1, ..., out)."""
    if len(activations) != len(sizes) - 1:
        raise ValueError("need one activation per layer")
    layers = []
    for i, act in enumerate(activations):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(Layer(W, np.zeros(fan_out), act))
    return Net(layers)


def _apply(act: str, z: np.ndarray) -> np.ndarray:
    if act == "tanh":
        return np.tanh(z)
    if act == "relu":
        return np.maximum(z, 0.0)
    return z


def forward(net: Net, x: np.ndarray):
    """Returns (y, cache).  x may be (in,) or (B, in)."""
    x = np.asarray(x, dtype=float)
    if not np.isfinite(x).all():
        raise ValueError("non-finite network input")
    cache = [x]
    a = x
    for layer in net.layers:
        z = a @ layer.W.T + layer.b
        a = _apply(layer.activation, z)
        cache.append(a)
    return a, cache


def backward(net: Net, cache, dy: np.ndarray):
    """Gradients of a scalar loss given dL/dy.

    Returns (grads, dx) where grads matches net.parameters() layout.  For
    batched caches the parameter gradients are summed over the batch.
    """
    dy = np.asarray(dy, dtype=float)
    grads = []
    da = dy
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        a = cache[i + 1]
        if layer.activation == "tanh":
            dz = da * (1.0 - a * a)
        elif layer.activation == "relu":
            dz = da * (a > 0.0)
        else:
            dz = da
        x = cache[i]
        if x.ndim == 1:
            dW = np.outer(dz, x)
            db = dz.copy()
        else:
            dW = dz.T @ x
            db = dz.sum(axis=0)
        grads.append((dW, db))
        da = dz @ layer.W
    flat = []
    for dW, db in reversed(grads):
        flat.append(dW)
        flat.append(db)
    return flat, da


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state: AdamState):
    """One Adam update with bias correction; mutates params in place."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter/gradient shape mismatch")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# --- serialization -----------------------------------------------------------


def _write_array(f, a: np.ndarray):
    data = np.ascontiguousarray(a, dtype="<f8")
    f.write(struct.pack("<Q", data.size))
    f.write(data.tobytes())


def _read_array(f, shape) -> np.ndarray:
    (count,) = struct.unpack("<Q", f.read(8))
    expected = int(np.prod(shape))
    if count != expected:
        raise ValueError(f"array length {count} does not match shape {shape}")
    data = np.frombuffer(f.read(8 * count), dtype="<f8").astype(float)
    return data.reshape(shape)


def save_net(net: Net, f):
    """Write a net to a binary file object (see module docstring)."""
    f.write(_MAGIC + b" %d\n" % _FORMAT_VERSION)
    f.write(b"layers %d\n" % len(net.layers))
    for layer in net.layers:
        f.write(
            b"layer %d %d %s\n"
            % (layer.W.shape[1], layer.W.shape[0], layer.activation.encode())
        )
    f.write(b"end\n")
    for layer in net.layers:
        _write_array(f, layer.W)
        _write_array(f, layer.b)


def load_net(f) -> Net:
    header = f.readline().split()
    if len(header) != 2 or header[0] != _MAGIC:
        raise ValueError("not a DGNET file")
    if int(header[1]) != _FORMAT_VERSION:
        raise ValueError(f"unsupported format version {header[1]!r}")
    tag, n = f.readline().split()
    if tag != b"layers":
        raise ValueError("malformed header")
    specs = []
    for _ in range(int(n)):
        parts = f.readline().split()
        if parts[0] != b"layer":
            raise ValueError("malformed layer spec")
        specs.append((int(parts[1]), int(parts[2]), parts[3].decode()))
    if f.readline().strip() != b"end":
        raise ValueError("malformed header terminator")
    layers = []
    for in_dim, out_dim, act in specs:
        W = _read_array(f, (out_dim, in_dim))
        b = _read_array(f, (out_dim,))
        layers.append(Layer(W, b, act))
    return Net(layers)
