"""Feedback quantization and gradual magnitude pruning."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .nn import DenseLayer


def quantize(x, bits=4):
    """Mid-rise uniform quantizer on [-1, 1]; returns integer codes."""
    if bits < 1:
        raise ValueError("bits must be >= 1")
    return kernels.quantize(np.asarray(x, dtype=np.float64), bits)


def dequantize(codes, bits=4):
    codes = np.asarray(codes)
    levels = 1 << bits
    if np.any(codes < 0) or np.any(codes >= levels):
        raise ValueError(f"codes must lie in [0, {levels}) for {bits} bits")
    step = 2.0 / levels
    return -1.0 + (codes + 0.5) * step


def straight_through(upstream_grad):
    """Backward rule of the quantizer: the gradient is passed on unchanged."""
    return upstream_grad


@dataclass(frozen=True)
class UniformQuantizer:
    bits: int = 4

    @property
    def levels(self) -> int:
        return 1 << self.bits

    @property
    def step(self) -> float:
        return 2.0 / self.levels

    def __call__(self, x):
        return dequantize(quantize(x, self.bits), self.bits)

    def backward(self, dy):
        return straight_through(dy)

    def encode(self, x) -> bytes:
        return pack_bits(quantize(x, self.bits), self.bits)

    def decode(self, data: bytes, n: int):
        return dequantize(unpack_bits(data, self.bits, n), self.bits)


def pack_bits(codes, bits) -> bytes:
    """Big-endian packing of ``bits`` bits per code, in code order."""
    codes = np.asarray(codes, dtype=np.int64).ravel()
    shifts = np.arange(bits - 1, -1, -1)
    bit_array = ((codes[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bit_array.ravel()).tobytes()


def unpack_bits(data: bytes, bits, n):
    bit_array = np.unpackbits(np.frombuffer(data, dtype=np.uint8))[: n * bits]
    if bit_array.size != n * bits:
        raise ValueError(f"bitstream holds {bit_array.size} bits, need {n * bits}")
    weights = 1 << np.arange(bits - 1, -1, -1)
    return bit_array.reshape(n, bits).astype(np.int64) @ weights


@dataclass(frozen=True)
class PruneSchedule:
    s_i: float = 0.0
    s_f: float = 0.8
    t0: int = 0
    delta_t: int = 1
    n: int = 8

    def __post_init__(self):
        if not 0.0 <= self.s_i < 1.0:
            raise ValueError("s_i must lie in [0, 1)")
        if not self.s_i < self.s_f <= 1.0:
            raise ValueError("s_f must lie in (s_i, 1]")
        if self.delta_t < 1 or self.n < 1:
            raise ValueError("delta_t and n must be >= 1")

    @property
    def end(self) -> int:
        return self.t0 + self.n * self.delta_t

    def steps(self):
        return [self.t0 + k * self.delta_t for k in range(self.n + 1)]

    def levels(self):
        return [sparsity_at(t, self) for t in self.steps()]


def sparsity_at(t, sched: PruneSchedule) -> float:
    """Cubic sparsity ramp from ``s_i`` at ``t0`` to ``s_f`` after ``n`` pruning steps."""
    offset = t - sched.t0
    if offset < 0 or offset > sched.n * sched.delta_t or offset % sched.delta_t:
        raise ValueError(f"step {t} is not on the pruning grid {sched.t0} + k*{sched.delta_t}, k=0..{sched.n}")
    k = offset // sched.delta_t
    if k == 0:
        return sched.s_i
    if k == sched.n:
        return sched.s_f
    frac = 1.0 - k / sched.n
    return sched.s_f + (sched.s_i - sched.s_f) * frac**3


def prune_layer(layer: DenseLayer, target: float):
    """Mask the smallest-magnitude weights of one layer up to ``target`` sparsity."""
    if not 0.0 <= target <= 1.0:
        raise ValueError("target sparsity must lie in [0, 1]")
    size = layer.mask.size
    n_zero = int(math.floor(target * size))
    current = int(size - np.count_nonzero(layer.mask))
    if n_zero < current:
        raise ValueError(f"target sparsity {target} is below the current sparsity {current / size:.4f}")
    flat_mask = layer.mask.ravel()
    # masked entries first, then by magnitude, ties broken by row-major index
    order = np.lexsort((np.arange(size), np.abs(layer.weight.ravel()), flat_mask != 0))
    flat_mask[order[:n_zero]] = 0.0
    layer.mask = flat_mask.reshape(layer.weight.shape)
    layer.weight *= layer.mask


def apply_prune(graph, target_sparsity: float):
    """Prune every distinct layer of ``graph`` to ``target_sparsity``; biases are untouched."""
    seen = set()
    layers = graph.occurrences() if hasattr(graph, "occurrences") else list(graph)
    for layer in layers:
        if id(layer) in seen:
            continue
        seen.add(id(layer))
        prune_layer(layer, target_sparsity)


def graph_sparsity(graph) -> float:
    layers = graph.occurrences() if hasattr(graph, "occurrences") else list(graph)
    uniq = {id(layer): layer for layer in layers}.values()
    total = sum(layer.mask.size for layer in uniq)
    zeros = sum(layer.mask.size - np.count_nonzero(layer.mask) for layer in uniq)
    return zeros / total
