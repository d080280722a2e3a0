"""A small dense-network engine with explicit reverse-mode gradients.

Arrays are batch-major: inputs are (batch, in_dim), weights are
(out_dim, in_dim). Everything runs in float64.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels

ACTIVATIONS = ("linear", "selu", "tanh")
_ACT_CODE = {"linear": 0, "selu": 1, "tanh": 2}
_NO_BIAS_FLAG = 0x80

CKPT_MAGIC = b"CANETCK1"
CKPT_VERSION = 1


def _activate(name, z):
    if name == "selu":
        return kernels.selu(z)
    if name == "tanh":
        return np.tanh(z)
    return z


def _activate_grad(name, z, a, da):
    if name == "selu":
        return kernels.selu_grad(z, da)
    if name == "tanh":
        return (1.0 - a * a) * da
    return da


@dataclass(eq=False)
class DenseLayer:
    """Fully connected layer ``y = act((W * mask) @ x + b)``.

    Layer identity matters: placing the same object at several positions of a
    graph shares its parameters, and gradients from every position accumulate
    into ``grad_weight``/``grad_bias``.
    """

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "linear"
    mask: np.ndarray | None = None
    use_bias: bool = True
    trainable: bool = True
    name: str = ""
    grad_weight: np.ndarray = field(init=False, repr=False)
    grad_bias: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.weight = np.ascontiguousarray(self.weight, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.bias.shape != (self.out_dim,):
            raise ValueError(f"bias shape {self.bias.shape} does not match out_dim {self.out_dim}")
        if self.mask is None:
            self.mask = np.ones_like(self.weight)
        self.mask = np.ascontiguousarray(self.mask, dtype=np.float64)
        self.zero_grad()

    @classmethod
    def create(cls, in_dim, out_dim, activation="linear", *, use_bias=True, name=""):
        return cls(
            np.zeros((out_dim, in_dim)),
            np.zeros(out_dim),
            activation,
            use_bias=use_bias,
            name=name,
        )

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def effective_weight(self) -> np.ndarray:
        return self.weight * self.mask

    def zero_grad(self):
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)

    def forward(self, x):
        """Return ``(y, cache)``; ``cache`` is what :meth:`backward` needs."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"layer {self.name or '?'} expects input dim {self.in_dim}, got {x.shape[-1]}")
        z = x @ self.effective_weight.T
        if self.use_bias:
            z = z + self.bias
        a = _activate(self.activation, z)
        return a, (x, z, a)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, dy, cache):
        x, z, a = cache
        dz = _activate_grad(self.activation, z, a, dy)
        x2 = x.reshape(-1, self.in_dim)
        dz2 = dz.reshape(-1, self.out_dim)
        # gradient w.r.t. the effective weight; the optimizer applies the mask
        self.grad_weight += dz2.T @ x2
        if self.use_bias:
            self.grad_bias += dz2.sum(axis=0)
        return dz @ self.effective_weight

    def sparsity(self) -> float:
        return 1.0 - self.mask.sum() / self.mask.size


class ModelGraph:
    """A chain of dense layers.

    When ``side_dim`` is non-zero, the graph input is the concatenation of the
    main input with a side tensor of that width, and the first layer's input
    dimension must equal their sum.
    """

    def __init__(self, layers, *, side_dim=0, name=""):
        self.layers = list(layers)
        self.side_dim = side_dim
        self.name = name
        self._tape = None
        if not self.layers:
            raise ValueError("a graph needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}")
        if side_dim and self.layers[0].in_dim <= side_dim:
            raise ValueError("side input is wider than the first layer input")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim - self.side_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def unique_layers(self):
        seen, out = set(), []
        for layer in self.layers:
            if id(layer) not in seen:
                seen.add(id(layer))
                out.append(layer)
        return out

    def occurrences(self):
        return list(self.layers)

    def forward(self, x, side=None, *, record=True):
        if self.side_dim:
            if side is None or side.shape[-1] != self.side_dim:
                raise ValueError(f"graph {self.name} needs a side input of width {self.side_dim}")
            x = np.concatenate([x, side], axis=-1)
        elif side is not None:
            raise ValueError(f"graph {self.name} takes no side input")
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        self._tape = caches if record else None
        return x

    def __call__(self, x, side=None):
        return self.forward(x, side, record=False)

    def backward(self, dy):
        """Accumulate parameter gradients; returns the gradient w.r.t. the main input."""
        if self._tape is None:
            raise RuntimeError(f"backward on graph {self.name!r} without a recorded forward pass")
        for layer, cache in zip(reversed(self.layers), reversed(self._tape)):
            dy = layer.backward(dy, cache)
        self._tape = None
        if self.side_dim:
            dy = dy[..., : -self.side_dim]
        return dy

    def zero_grad(self):
        for layer in self.unique_layers():
            layer.zero_grad()


def _layers_of(obj):
    if isinstance(obj, DenseLayer):
        return [obj]
    if hasattr(obj, "occurrences"):
        return obj.occurrences()
    return list(obj)


def layer_params(layer: DenseLayer) -> int:
    return layer.out_dim * (layer.in_dim + (1 if layer.use_bias else 0))


def layer_flops(layer: DenseLayer) -> int:
    return layer.out_dim * (2 * layer.in_dim - 1)


def param_count(graph) -> int:
    """Weights plus biases, each distinct layer counted once."""
    seen, total = set(), 0
    for layer in _layers_of(graph):
        if id(layer) not in seen:
            seen.add(id(layer))
            total += layer_params(layer)
    return total


def flop_count(graph) -> int:
    """Multiply-add count of every layer execution; activations excluded."""
    return sum(layer_flops(layer) for layer in _layers_of(graph))


def glorot_init(layer: DenseLayer, rng: np.random.Generator):
    bound = np.sqrt(6.0 / (layer.in_dim + layer.out_dim))
    layer.weight[...] = rng.uniform(-bound, bound, size=layer.weight.shape)
    layer.bias[...] = 0.0
    layer.mask[...] = 1.0


def init_graph(graph, rng: np.random.Generator):
    seen = set()
    for layer in _layers_of(graph):
        if id(layer) not in seen:
            seen.add(id(layer))
            glorot_init(layer, rng)


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


class Adam:
    """Adam over a fixed list of layers. Masked weights are never moved."""

    def __init__(self, layers, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-7):
        self.layers = []
        seen = set()
        for layer in layers:
            if id(layer) not in seen and layer.trainable:
                seen.add(id(layer))
                self.layers.append(layer)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for i, layer in enumerate(self.layers):
            self.state.m[i] = (np.zeros_like(layer.weight), np.zeros_like(layer.bias))
            self.state.v[i] = (np.zeros_like(layer.weight), np.zeros_like(layer.bias))

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def step(self):
        s = self.state
        s.t += 1
        for i, layer in enumerate(self.layers):
            mw, mb = s.m[i]
            vw, vb = s.v[i]
            kernels.adam_update(layer.weight, layer.grad_weight, mw, vw, layer.mask, s.lr, s.beta1, s.beta2, s.eps, s.t)
            if layer.use_bias:
                kernels.adam_update(layer.bias, layer.grad_bias, mb, vb, None, s.lr, s.beta1, s.beta2, s.eps, s.t)


def adam_step(state: AdamState, params, grads, masks=None):
    """Functional Adam step over parallel lists of arrays (updated in place)."""
    state.t += 1
    for i, (p, g) in enumerate(zip(params, grads)):
        if i not in state.m:
            state.m[i] = np.zeros_like(p)
            state.v[i] = np.zeros_like(p)
        mask = None if masks is None else masks[i]
        kernels.adam_update(p, np.asarray(g, dtype=np.float64), state.m[i], state.v[i], mask,
                            state.lr, state.beta1, state.beta2, state.eps, state.t)
    return params


# --- checkpoints -------------------------------------------------------------

def write_layers(stream, layers, optimizer: Adam | None = None):
    """Serialize layers (and optionally the Adam moments for them) to ``stream``."""
    layers = list(layers)
    stream.write(CKPT_MAGIC)
    stream.write(struct.pack("<II", CKPT_VERSION, len(layers)))
    for layer in layers:
        code = _ACT_CODE[layer.activation] | (0 if layer.use_bias else _NO_BIAS_FLAG)
        stream.write(struct.pack("<IIB", layer.out_dim, layer.in_dim, code))
        stream.write(layer.weight.astype("<f8").tobytes())
        stream.write(layer.bias.astype("<f8").tobytes())
        stream.write(np.packbits(layer.mask.ravel() != 0).tobytes())
    if optimizer is None:
        stream.write(struct.pack("<B", 0))
        return
    stream.write(struct.pack("<BQ", 1, optimizer.state.t))
    index = {id(layer): i for i, layer in enumerate(optimizer.layers)}
    for layer in layers:
        i = index.get(id(layer))
        if i is None:
            moments = [np.zeros_like(layer.weight), np.zeros_like(layer.bias)] * 2
        else:
            moments = [*optimizer.state.m[i], *optimizer.state.v[i]]
        for arr in moments:
            stream.write(arr.astype("<f8").tobytes())


def _read_exact(stream, n):
    data = stream.read(n)
    if len(data) != n:
        raise ValueError(f"truncated checkpoint: wanted {n} bytes, got {len(data)}")
    return data


def read_layers(stream):
    """Inverse of :func:`write_layers`; returns ``(layers, adam_payload_or_None)``.

    The Adam payload is ``(t, [(m_w, m_b, v_w, v_b), ...])`` in layer order.
    """
    magic = _read_exact(stream, 8)
    if magic != CKPT_MAGIC:
        raise ValueError(f"bad checkpoint magic {magic!r}; expected {CKPT_MAGIC!r}")
    version, n_layers = struct.unpack("<II", _read_exact(stream, 8))
    if version != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    codes = {v: k for k, v in _ACT_CODE.items()}
    layers = []
    for _ in range(n_layers):
        out_dim, in_dim, code = struct.unpack("<IIB", _read_exact(stream, 9))
        act = codes[code & ~_NO_BIAS_FLAG]
        w = np.frombuffer(_read_exact(stream, 8 * out_dim * in_dim), dtype="<f8").reshape(out_dim, in_dim)
        b = np.frombuffer(_read_exact(stream, 8 * out_dim), dtype="<f8")
        n_bytes = (out_dim * in_dim + 7) // 8
        bits = np.unpackbits(np.frombuffer(_read_exact(stream, n_bytes), dtype=np.uint8))
        mask = bits[: out_dim * in_dim].reshape(out_dim, in_dim).astype(np.float64)
        layers.append(DenseLayer(w.copy(), b.copy(), act, mask, use_bias=not code & _NO_BIAS_FLAG))
    (flag,) = struct.unpack("<B", _read_exact(stream, 1))
    if not flag:
        return layers, None
    (t,) = struct.unpack("<Q", _read_exact(stream, 8))
    moments = []
    for layer in layers:
        arrs = []
        for shape in (layer.weight.shape, layer.bias.shape) * 2:
            n = int(np.prod(shape))
            arrs.append(np.frombuffer(_read_exact(stream, 8 * n), dtype="<f8").reshape(shape).copy())
        moments.append(tuple(arrs))
    return layers, (t, moments)


def save_checkpoint(path, layers, optimizer=None):
    with open(path, "wb") as f:
        write_layers(f, layers, optimizer)


def load_checkpoint(path):
    with open(path, "rb") as f:
        return read_layers(f)


def restore_adam(optimizer: Adam, layers, payload):
    """Load moments from a :func:`read_layers` payload; ``layers`` is the saved layer order."""
    t, moments = payload
    optimizer.state.t = t
    position = {id(layer): i for i, layer in enumerate(layers)}
    for i, layer in enumerate(optimizer.layers):
        mw, mb, vw, vb = moments[position[id(layer)]]
        optimizer.state.m[i] = (mw, mb)
        optimizer.state.v[i] = (vw, vb)


def checkpoint_bytes(layers, optimizer=None) -> bytes:
    buf = io.BytesIO()
    write_layers(buf, layers, optimizer)
    return buf.getvalue()
