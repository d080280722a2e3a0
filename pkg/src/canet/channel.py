"""Bidirectional narrowband channel synthesis for a ULA base station.

Uplink and downlink share the angles of departure of every subpath; the
complex path gains are drawn independently per link. Channels are stored in
the angular domain (unitary DFT of the spatial channel).
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels

MAGIC = b"CANETDS1"
VERSION = 1
SPLIT_FRACTIONS = (0.8, 0.1, 0.1)

# samples drawn per independent seed stream during dataset generation
CHUNK = 1000

_HEADER = struct.Struct("<8sIIIIIdQIIdd")


class DatasetFormatError(ValueError):
    """Raised when a dataset file is malformed."""


@dataclass(frozen=True)
class ScmConfig:
    n_ant: int = 32
    n_clusters: int = 3
    n_subpaths: int = 20
    f_ul_hz: float = 5.1e9
    f_dl_hz: float = 5.3e9
    cluster_angle_range: float = math.pi / 2
    subpath_spread_rad: float = math.radians(2.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_ant < 1 or self.n_clusters < 1 or self.n_subpaths < 1:
            raise ValueError("n_ant, n_clusters and n_subpaths must be >= 1")
        if self.f_ul_hz <= 0 or self.f_dl_hz <= 0:
            raise ValueError("carrier frequencies must be positive")
        if self.f_ul_hz == self.f_dl_hz:
            raise ValueError("uplink and downlink carriers must differ (FDD)")
        if self.cluster_angle_range < 0 or self.subpath_spread_rad < 0:
            raise ValueError("angle ranges must be non-negative")

    @property
    def n_paths(self) -> int:
        return self.n_clusters * self.n_subpaths

    def d_over_lambda(self, link: str) -> float:
        """Antenna spacing in wavelengths; the array is half-wavelength at the downlink carrier."""
        if link == "downlink":
            return 0.5
        if link == "uplink":
            return self.f_ul_hz / (2.0 * self.f_dl_hz)
        raise ValueError(f"unknown link {link!r}; expected 'uplink' or 'downlink'")


@dataclass
class PathSet:
    aods: np.ndarray
    gains_ul: np.ndarray
    gains_dl: np.ndarray

    def __post_init__(self):
        if not (len(self.aods) == len(self.gains_ul) == len(self.gains_dl)):
            raise ValueError("aods, gains_ul and gains_dl must have equal length")


@dataclass
class ChannelPair:
    h_a_ul: np.ndarray
    h_a_dl: np.ndarray

    @property
    def h_s_ul(self) -> np.ndarray:
        return to_spatial(self.h_a_ul)

    @property
    def h_s_dl(self) -> np.ndarray:
        return to_spatial(self.h_a_dl)


@dataclass
class Split:
    """A block of channel pairs stored as (n, n_ant) complex arrays."""

    h_a_ul: np.ndarray
    h_a_dl: np.ndarray

    def __len__(self) -> int:
        return self.h_a_ul.shape[0]

    def __getitem__(self, i) -> ChannelPair:
        return ChannelPair(self.h_a_ul[i], self.h_a_dl[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def h_s_ul(self) -> np.ndarray:
        return to_spatial(self.h_a_ul)

    @property
    def h_s_dl(self) -> np.ndarray:
        return to_spatial(self.h_a_dl)

    def subset(self, n: int) -> "Split":
        return Split(self.h_a_ul[:n], self.h_a_dl[:n])


@dataclass
class Dataset:
    train: Split
    val: Split
    test: Split
    norm_scale: float
    config: ScmConfig
    split_fractions: tuple = field(default=SPLIT_FRACTIONS)

    @property
    def n_ant(self) -> int:
        return self.config.n_ant

    def equals(self, other: "Dataset") -> bool:
        if self.config != other.config or self.norm_scale != other.norm_scale:
            return False
        return all(
            np.array_equal(getattr(a, f), getattr(b, f))
            for a, b in ((self.train, other.train), (self.val, other.val), (self.test, other.test))
            for f in ("h_a_ul", "h_a_dl")
        )


def steering_vector(theta: float, n_ant: int, d_over_lambda: float) -> np.ndarray:
    if n_ant < 1:
        raise ValueError("n_ant must be >= 1")
    if d_over_lambda <= 0:
        raise ValueError("d_over_lambda must be positive")
    k = np.arange(n_ant)
    return np.exp(-2j * np.pi * k * d_over_lambda * np.sin(theta))


def _fold_angles(theta):
    # sin(pi - x) == sin(x): reflecting keeps the array response unchanged
    theta = np.where(theta > np.pi / 2, np.pi - theta, theta)
    return np.where(theta < -np.pi / 2, -np.pi - theta, theta)


def draw_path_sets(config: ScmConfig, rng: np.random.Generator, n: int):
    """Draw ``n`` independent path sets; returns (aods, gains_ul, gains_dl), each (n, P)."""
    nc, ns = config.n_clusters, config.n_subpaths
    centers = rng.uniform(-config.cluster_angle_range, config.cluster_angle_range, size=(n, nc, 1))
    offsets = rng.uniform(-config.subpath_spread_rad, config.subpath_spread_rad, size=(n, nc, ns))
    aods = _fold_angles((centers + offsets).reshape(n, nc * ns))
    std = math.sqrt(0.5 / (nc * ns))
    g = rng.standard_normal((4, n, nc * ns)) * std
    return aods, g[0] + 1j * g[1], g[2] + 1j * g[3]


def draw_path_set(config: ScmConfig, rng: np.random.Generator) -> PathSet:
    aods, g_ul, g_dl = draw_path_sets(config, rng, 1)
    return PathSet(aods[0], g_ul[0], g_dl[0])


def synthesize_channel(paths: PathSet, link: str, config: ScmConfig) -> np.ndarray:
    gains = {"uplink": paths.gains_ul, "downlink": paths.gains_dl}.get(link)
    if gains is None:
        raise ValueError(f"unknown link {link!r}; expected 'uplink' or 'downlink'")
    h = kernels.synthesize(
        np.asarray(paths.aods, dtype=np.float64)[None, :],
        np.asarray(gains, dtype=np.complex128)[None, :],
        config.n_ant,
        config.d_over_lambda(link),
    )
    return h[0]


def to_angular(h_s: np.ndarray) -> np.ndarray:
    """Unitary DFT along the antenna axis."""
    return np.fft.fft(h_s, axis=-1, norm="ortho")


def to_spatial(h_a: np.ndarray) -> np.ndarray:
    return np.fft.ifft(h_a, axis=-1, norm="ortho")


def split_sizes(n_total: int) -> tuple[int, int, int]:
    n_val = int(math.floor(SPLIT_FRACTIONS[1] * n_total))
    n_test = int(math.floor(SPLIT_FRACTIONS[2] * n_total))
    return n_total - n_val - n_test, n_val, n_test


def _generate_chunk(config: ScmConfig, seed_seq: np.random.SeedSequence, n: int):
    rng = np.random.default_rng(seed_seq)
    aods, g_ul, g_dl = draw_path_sets(config, rng, n)
    h_ul = kernels.synthesize(aods, g_ul, config.n_ant, config.d_over_lambda("uplink"))
    h_dl = kernels.synthesize(aods, g_dl, config.n_ant, config.d_over_lambda("downlink"))
    return to_angular(h_ul), to_angular(h_dl)


def generate_dataset(config: ScmConfig, n_total: int) -> Dataset:
    """Generate, split and normalize ``n_total`` channel pairs.

    Samples are produced in fixed-size chunks, each from its own child of the
    config seed, so the result does not depend on how chunks are scheduled.
    """
    if n_total < 10:
        raise ValueError(f"n_total must be >= 10 so that every split is non-empty, got {n_total}")
    n_chunks = -(-n_total // CHUNK)
    children = np.random.SeedSequence(config.seed).spawn(n_chunks)
    ul, dl = [], []
    for i, child in enumerate(children):
        n = min(CHUNK, n_total - i * CHUNK)
        a, b = _generate_chunk(config, child, n)
        ul.append(a)
        dl.append(b)
    h_ul = np.concatenate(ul)
    h_dl = np.concatenate(dl)

    n_train, n_val, n_test = split_sizes(n_total)
    train_ul, train_dl = h_ul[:n_train], h_dl[:n_train]
    norm_scale = float(
        max(
            np.abs(train_ul.real).max(),
            np.abs(train_ul.imag).max(),
            np.abs(train_dl.real).max(),
            np.abs(train_dl.imag).max(),
        )
    )
    h_ul = h_ul / norm_scale
    h_dl = h_dl / norm_scale
    a, b = n_train, n_train + n_val
    return Dataset(
        train=Split(h_ul[:a], h_dl[:a]),
        val=Split(h_ul[a:b], h_dl[a:b]),
        test=Split(h_ul[b:], h_dl[b:]),
        norm_scale=norm_scale,
        config=config,
    )


def _interleave(h: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(h, dtype=np.complex128).view(np.float64)


def dataset_bytes(ds: Dataset) -> bytes:
    cfg = ds.config
    buf = io.BytesIO()
    buf.write(
        _HEADER.pack(
            MAGIC,
            VERSION,
            cfg.n_ant,
            len(ds.train),
            len(ds.val),
            len(ds.test),
            ds.norm_scale,
            cfg.seed,
            cfg.n_clusters,
            cfg.n_subpaths,
            cfg.f_ul_hz,
            cfg.f_dl_hz,
        )
    )
    for split in (ds.train, ds.val, ds.test):
        # per sample: uplink then downlink, each interleaved (re, im)
        block = np.concatenate([_interleave(split.h_a_ul), _interleave(split.h_a_dl)], axis=1)
        buf.write(block.astype("<f8").tobytes())
    return buf.getvalue()


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_bytes(dataset_bytes(ds))


def load_dataset(path) -> Dataset:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DatasetFormatError(
            f"dimension mismatch: file has {len(data)} bytes, header alone needs {_HEADER.size}"
        )
    (magic, version, n_ant, n_train, n_val, n_test, norm_scale, seed, n_c, n_s, f_ul, f_dl) = (
        _HEADER.unpack_from(data)
    )
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}; expected {MAGIC!r}")
    if version != VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version}")
    n_total = n_train + n_val + n_test
    per_sample = 4 * n_ant
    expected = _HEADER.size + 8 * per_sample * n_total
    if len(data) != expected:
        raise DatasetFormatError(
            f"dimension mismatch: header declares {n_total} samples of n_ant={n_ant} "
            f"({expected} bytes) but file has {len(data)} bytes"
        )
    payload = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(n_total, per_sample)
    payload = payload.astype(np.float64)
    h_ul = payload[:, : 2 * n_ant].copy().view(np.complex128)
    h_dl = payload[:, 2 * n_ant :].copy().view(np.complex128)
    config = replace(ScmConfig(), n_ant=n_ant, n_clusters=n_c, n_subpaths=n_s, f_ul_hz=f_ul, f_dl_hz=f_dl, seed=seed)
    a, b = n_train, n_train + n_val
    return Dataset(
        train=Split(h_ul[:a], h_dl[:a]),
        val=Split(h_ul[a:b], h_dl[a:b]),
        test=Split(h_ul[b:], h_dl[b:]),
        norm_scale=norm_scale,
        config=config,
    )


def magnitude_correlation(h_a_ul: np.ndarray, h_a_dl: np.ndarray) -> np.ndarray:
    """Per-sample Pearson correlation between angular-domain magnitudes."""
    a = np.abs(np.atleast_2d(h_a_ul))
    b = np.abs(np.atleast_2d(h_a_dl))
    a = a - a.mean(axis=1, keepdims=True)
    b = b - b.mean(axis=1, keepdims=True)
    return (a * b).sum(axis=1) / np.sqrt((a * a).sum(axis=1) * (b * b).sum(axis=1))
