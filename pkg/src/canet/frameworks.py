"""Pilot design, estimation and feedback pipelines, and their training loops.

Channels enter the networks as real vectors ``[Re(h), Im(h)]`` of length
``2 * n_t``. The uplink side information is ``|h_a_ul|`` of length ``n_t``.
"""

from __future__ import annotations

import enum
import io
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .metrics import nmse_db
from .nn import Adam, DenseLayer, ModelGraph, flop_count, init_graph, param_count, read_layers, write_layers
from .quant import UniformQuantizer

log = logging.getLogger(__name__)

FW_MAGIC = b"CANETFW1"
QUANT_BITS = 4


class Kind(str, enum.Enum):
    PENET = "PEnet"
    UPAID_PENET = "UpAidPEnet"
    FC_BASELINE = "FCBaseline"
    UPAID_FBNET = "UpAidFBnet"
    CANET_S = "CAnetS"
    CANET_J = "CAnetJ"
    ACQNET_J = "AcqNetJ"
    GAUSSIAN = "GaussianBaseline"

    @property
    def code(self) -> int:
        return list(Kind).index(self)

    @classmethod
    def from_code(cls, code: int) -> "Kind":
        return list(Kind)[code]

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    Kind.PENET: "PEnet",
    Kind.UPAID_PENET: "UpAid-PEnet",
    Kind.FC_BASELINE: "FC",
    Kind.UPAID_FBNET: "UpAid-FBnet",
    Kind.CANET_S: "CAnet-S",
    Kind.CANET_J: "CAnet-J",
    Kind.ACQNET_J: "AcqNet-J",
    Kind.GAUSSIAN: "Gaussian",
}

_ALIASES = {
    "fc": Kind.FC_BASELINE,
    "gaussian": Kind.GAUSSIAN,
    "comacqnetj": Kind.ACQNET_J,
}


def parse_kind(name) -> Kind:
    if isinstance(name, Kind):
        return name
    key = str(name).lower().replace("-", "").replace("_", "")
    for kind in Kind:
        if key in (kind.value.lower(), kind.label.lower().replace("-", "")):
            return kind
    if key in _ALIASES:
        return _ALIASES[key]
    raise ValueError(f"unknown framework kind {name!r}; choose from {[k.value for k in Kind]}")


FEEDBACK_KINDS = {Kind.FC_BASELINE, Kind.UPAID_FBNET, Kind.CANET_S, Kind.CANET_J, Kind.ACQNET_J}
PILOT_KINDS = {Kind.PENET, Kind.UPAID_PENET, Kind.GAUSSIAN, Kind.CANET_S, Kind.CANET_J, Kind.ACQNET_J}


def to_real(h):
    h = np.asarray(h)
    return np.concatenate([h.real, h.imag], axis=-1)


def to_complex(x):
    x = np.asarray(x)
    n = x.shape[-1] // 2
    return x[..., :n] + 1j * x[..., n:]


def transmit(h_a_dl, pilot_real, pilot_imag, sigma, rng=None):
    """Received pilot observations ``[Re(y), Im(y)]`` for ``y = X^T h + n``.

    ``pilot_real``/``pilot_imag`` are the (M, n_t) real and imaginary parts of
    ``X^T``; the complex noise has per-component variance ``sigma**2 / 2``.
    """
    h = np.asarray(h_a_dl, dtype=np.complex128)
    pr = np.asarray(pilot_real, dtype=np.float64)
    pi = np.asarray(pilot_imag, dtype=np.float64)
    if pr.shape != pi.shape or pr.shape[-1] != h.shape[-1]:
        raise ValueError(f"pilot shape {pr.shape}/{pi.shape} does not match channel length {h.shape[-1]}")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    y_re = h.real @ pr.T - h.imag @ pi.T
    y_im = h.real @ pi.T + h.imag @ pr.T
    if sigma > 0:
        if rng is None:
            raise ValueError("rng is required when sigma > 0")
        noise = rng.standard_normal((2,) + y_re.shape) * (sigma / np.sqrt(2.0))
        y_re = y_re + noise[0]
        y_im = y_im + noise[1]
    return np.concatenate([y_re, y_im], axis=-1)


def snr_sigma(y_re, y_im, snr_db):
    """Noise std giving ``snr_db`` relative to the mean received power of this batch."""
    power = float(np.mean(y_re * y_re + y_im * y_im))
    return np.sqrt(power / 10.0 ** (snr_db / 10.0))


@dataclass(eq=False)
class PilotAssembly:
    """Downlink pilot ``X^T`` as real and imaginary (M, n_t) parts.

    ``learned_from_uplink`` designs one pilot per sample from ``|h_a_ul|``;
    the fixed modes hold two linear layers whose weights are the pilot parts,
    each executed on both ``Re(h)`` and ``Im(h)``.
    """

    mode: str
    n_t: int
    m: int
    designer: ModelGraph | None = None
    real: DenseLayer | None = None
    imag: DenseLayer | None = None
    _tape: object = field(default=None, repr=False)

    def unique_layers(self):
        if self.designer is not None:
            return self.designer.unique_layers()
        return [self.real, self.imag]

    def occurrences(self):
        if self.designer is not None:
            return self.designer.occurrences()
        return [self.real, self.imag, self.real, self.imag]

    def matrices(self, mag_ul=None):
        """Pilot parts: (B, M, n_t) each when designed per sample, else (M, n_t)."""
        if self.designer is not None:
            out = self.designer(mag_ul)
            nm = self.n_t * self.m
            return out[:, :nm].reshape(-1, self.m, self.n_t), out[:, nm:].reshape(-1, self.m, self.n_t)
        return self.real.effective_weight.copy(), self.imag.effective_weight.copy()

    def observe(self, h_re, h_im, mag_ul, record=True):
        """Noise-free observation ``X^T h`` split into real and imaginary parts."""
        if self.designer is not None:
            out = self.designer.forward(mag_ul, record=record)
            nm = self.n_t * self.m
            p_re = out[:, :nm].reshape(-1, self.m, self.n_t)
            p_im = out[:, nm:].reshape(-1, self.m, self.n_t)
            y_re, y_im = kernels.pilot_apply(p_re, p_im, h_re, h_im)
            self._tape = (h_re, h_im) if record else None
            return y_re, y_im
        a, c1 = self.real.forward(h_re)
        b, c2 = self.imag.forward(h_im)
        c, c3 = self.imag.forward(h_re)
        d, c4 = self.real.forward(h_im)
        self._tape = (c1, c2, c3, c4) if record else None
        return a - b, c + d

    def backward(self, dy_re, dy_im):
        if self._tape is None:
            raise RuntimeError("pilot backward without a recorded forward pass")
        tape, self._tape = self._tape, None
        if self.designer is not None:
            h_re, h_im = tape
            dp_re, dp_im = kernels.pilot_grad(dy_re, dy_im, h_re, h_im)
            d_out = np.concatenate([dp_re.reshape(len(dp_re), -1), dp_im.reshape(len(dp_im), -1)], axis=1)
            self.designer.backward(d_out)
            return
        c1, c2, c3, c4 = tape
        self.real.backward(dy_re, c1)
        self.imag.backward(-dy_re, c2)
        self.imag.backward(dy_im, c3)
        self.real.backward(dy_im, c4)


@dataclass(eq=False)
class FeedbackAssembly:
    encoder: ModelGraph
    decoder: ModelGraph
    quantizer: UniformQuantizer
    uses_uplink_side_info: bool
    n_bits: int

    def unique_layers(self):
        return self.encoder.unique_layers() + self.decoder.unique_layers()

    def occurrences(self):
        return self.encoder.occurrences() + self.decoder.occurrences()

    @property
    def codeword_dim(self) -> int:
        return self.encoder.out_dim

    def forward(self, x, mag_ul, *, quantize=True, record=True):
        s = self.encoder.forward(x, record=record)
        q = self.quantizer(s) if quantize else s
        side = mag_ul if self.uses_uplink_side_info else None
        return self.decoder.forward(q, side, record=record)

    def backward(self, dy):
        dq = self.decoder.backward(dy)
        return self.encoder.backward(self.quantizer.backward(dq))

    def bitstream(self, x) -> bytes:
        """Feedback payload for one encoder input vector."""
        return self.quantizer.encode(self.encoder(np.atleast_2d(x))[0])


@dataclass(eq=False)
class FrameworkAssembly:
    kind: Kind
    n_t: int
    m: int
    n_bits: int
    pilot: PilotAssembly | None = None
    estimator: ModelGraph | None = None
    feedback: FeedbackAssembly | None = None
    initialized: bool = False
    last_sigma: float = 0.0
    _tape: object = field(default=None, repr=False)

    def parts(self):
        return [p for p in (self.pilot, self.estimator, self.feedback) if p is not None]

    def unique_layers(self):
        out = []
        for part in self.parts():
            out.extend(part.unique_layers())
        return out

    def occurrences(self):
        out = []
        for part in self.parts():
            out.extend(part.occurrences())
        return out

    def trainable_layers(self, stage="full"):
        if stage == "estimate":
            layers = self.pilot.unique_layers() + self.estimator.unique_layers()
        elif stage == "feedback":
            layers = self.feedback.unique_layers()
        else:
            layers = self.unique_layers()
        return [layer for layer in layers if layer.trainable]

    def param_count(self) -> int:
        return param_count(self)

    def flop_count(self) -> int:
        return flop_count(self)

    def zero_grad(self):
        for layer in self.unique_layers():
            layer.zero_grad()

    def observe(self, h_dl, mag_ul, *, sigma=None, snr_db=None, noise=None, rng=None, record=True):
        """Pilot transmission: returns the noisy ``[Re(y), Im(y)]`` (B, 2M)."""
        n = self.n_t
        y_re, y_im = self.pilot.observe(h_dl[:, :n], h_dl[:, n:], mag_ul, record=record)
        if sigma is None:
            sigma = snr_sigma(y_re, y_im, snr_db) if snr_db is not None else 0.0
        self.last_sigma = float(sigma)
        if sigma > 0:
            if noise is None:
                if rng is None:
                    raise ValueError("an rng or a noise draw is required when sigma > 0")
                noise = rng.standard_normal((len(h_dl), 2 * self.m))
            y = np.concatenate([y_re, y_im], axis=1) + noise * (sigma / np.sqrt(2.0))
        else:
            y = np.concatenate([y_re, y_im], axis=1)
        return y

    def forward(self, h_dl, mag_ul, *, sigma=None, snr_db=None, noise=None, rng=None,
                quantize=True, stage="full", record=True):
        """Run the acquisition dataflow on a batch.

        ``stage="estimate"`` stops after the UE-side channel estimator (used by
        the first training phase of the separate framework).
        """
        if not self.initialized:
            raise RuntimeError("framework parameters are not initialized; call init_framework first")
        h_dl = np.atleast_2d(np.asarray(h_dl, dtype=np.float64))
        mag_ul = np.atleast_2d(np.asarray(mag_ul, dtype=np.float64))
        if self.pilot is None:
            x = h_dl
        else:
            x = self.observe(h_dl, mag_ul, sigma=sigma, snr_db=snr_db, noise=noise, rng=rng, record=record)
            if self.estimator is not None:
                x = self.estimator.forward(x, record=record)
                if stage == "estimate" or self.feedback is None:
                    self._tape = "estimate" if record else None
                    return x
        self._tape = "full" if record else None
        return self.feedback.forward(x, mag_ul, quantize=quantize, record=record)

    def __call__(self, h_dl, mag_ul, **kw):
        return self.forward(h_dl, mag_ul, record=False, **kw)

    def backward(self, dy):
        if self._tape is None:
            raise RuntimeError("backward without a recorded forward pass")
        stage, self._tape = self._tape, None
        if stage == "full":
            dy = self.feedback.backward(dy)
            if self.pilot is None:
                return
        if self.estimator is not None:
            dy = self.estimator.backward(dy)
        self.pilot.backward(dy[:, : self.m], dy[:, self.m :])

    def feedback_bits(self) -> int:
        if self.feedback is None:
            return 0
        return self.feedback.codeword_dim * self.feedback.quantizer.bits

    def get_params(self):
        return [(lay.weight.copy(), lay.bias.copy(), lay.mask.copy()) for lay in self.unique_layers()]

    def set_params(self, params):
        for layer, (w, b, mk) in zip(self.unique_layers(), params):
            layer.weight[...] = w
            layer.bias[...] = b
            layer.mask = mk.copy()


def _dense(in_dim, out_dim, act, name, **kw):
    return DenseLayer.create(in_dim, out_dim, act, name=name, **kw)


def _designer(n_t, m):
    return ModelGraph(
        [
            _dense(n_t, 2 * n_t, "selu", "pd_fc1"),
            _dense(2 * n_t, 2 * n_t, "selu", "pd_fc2"),
            _dense(2 * n_t, 2 * n_t, "selu", "pd_fc3"),
            _dense(2 * n_t, 2 * n_t * m, "tanh", "pd_fc4"),
        ],
        name="pilot_designer",
    )


def _estimator(n_t, m):
    return ModelGraph(
        [
            _dense(2 * m, 2 * n_t, "selu", "ce_fc5"),
            _dense(2 * n_t, 2 * n_t, "selu", "ce_fc6"),
            _dense(2 * n_t, 2 * n_t, "selu", "ce_fc7"),
            _dense(2 * n_t, 2 * n_t, "tanh", "ce_fc8"),
        ],
        name="estimator",
    )


def _decoder(n_t, code_dim, side):
    side_dim = n_t if side else 0
    return ModelGraph(
        [
            _dense(code_dim + side_dim, 2 * n_t, "selu", "de_fc3"),
            _dense(2 * n_t, 2 * n_t, "selu", "de_fc4"),
            _dense(2 * n_t, 2 * n_t, "selu", "de_fc5"),
            _dense(2 * n_t, 2 * n_t, "tanh", "de_fc6"),
        ],
        side_dim=side_dim,
        name="decoder",
    )


def _fixed_pilot(n_t, m, mode):
    trainable = mode == "learned_fixed"
    real = _dense(n_t, m, "linear", "pilot_re", use_bias=False)
    imag = _dense(n_t, m, "linear", "pilot_im", use_bias=False)
    real.trainable = imag.trainable = trainable
    return PilotAssembly(mode, n_t, m, real=real, imag=imag)


def build_framework(kind, n_t, m=1, n_bits=32, *, seed=None) -> FrameworkAssembly:
    """Assemble the layer stack of ``kind``; parameters are initialized when ``seed`` is given."""
    kind = parse_kind(kind)
    if n_t < 1:
        raise ValueError("n_t must be >= 1")
    if kind in PILOT_KINDS and m < 1:
        raise ValueError("pilot length m must be >= 1")
    if kind in FEEDBACK_KINDS and (n_bits < QUANT_BITS or n_bits % QUANT_BITS):
        raise ValueError(f"n_bits must be a positive multiple of {QUANT_BITS}, got {n_bits}")
    code = n_bits // QUANT_BITS

    pilot = estimator = feedback = None
    if kind in (Kind.UPAID_PENET, Kind.CANET_S, Kind.CANET_J):
        pilot = PilotAssembly("learned_from_uplink", n_t, m, designer=_designer(n_t, m))
    elif kind in (Kind.PENET, Kind.ACQNET_J):
        pilot = _fixed_pilot(n_t, m, "learned_fixed")
    elif kind is Kind.GAUSSIAN:
        pilot = _fixed_pilot(n_t, m, "gaussian_fixed")

    if kind in (Kind.PENET, Kind.UPAID_PENET, Kind.GAUSSIAN, Kind.CANET_S):
        estimator = _estimator(n_t, m)

    if kind in (Kind.UPAID_FBNET, Kind.FC_BASELINE, Kind.CANET_S):
        encoder = ModelGraph(
            [_dense(2 * n_t, n_t, "selu", "en_fc1"), _dense(n_t, code, "tanh", "en_fc2")], name="encoder"
        )
    elif kind in (Kind.CANET_J, Kind.ACQNET_J):
        encoder = ModelGraph([_dense(2 * m, code, "tanh", "en_fc5")], name="encoder")
    if kind in FEEDBACK_KINDS:
        side = kind is not Kind.FC_BASELINE
        feedback = FeedbackAssembly(encoder, _decoder(n_t, code, side), UniformQuantizer(QUANT_BITS), side, n_bits)

    fw = FrameworkAssembly(kind, n_t, m if kind in PILOT_KINDS else 0, n_bits if feedback else 0,
                           pilot, estimator, feedback)
    if seed is not None:
        init_framework(fw, np.random.default_rng(seed))
    return fw


def init_framework(fw: FrameworkAssembly, rng: np.random.Generator):
    init_graph(fw.unique_layers(), rng)
    if fw.pilot is not None and fw.pilot.mode == "gaussian_fixed":
        # complex Gaussian pilot with unit-variance entries
        fw.pilot.real.weight[...] = rng.standard_normal(fw.pilot.real.weight.shape) / np.sqrt(2.0)
        fw.pilot.imag.weight[...] = rng.standard_normal(fw.pilot.imag.weight.shape) / np.sqrt(2.0)
    fw.initialized = True
    return fw


def acquire(fw: FrameworkAssembly, pair, sigma, rng=None):
    """Reconstructed downlink channel ``[Re, Im]`` for one :class:`ChannelPair`."""
    if not isinstance(fw, FrameworkAssembly) or not fw.initialized:
        raise RuntimeError("acquire needs a built and initialized framework")
    h = to_real(pair.h_a_dl)[None, :]
    mag = np.abs(pair.h_a_ul)[None, :]
    return fw.forward(h, mag, sigma=sigma, rng=rng, record=False)[0]


def pilot_similarity_db(fw: FrameworkAssembly, mag_ul, rng=None, n_pairs=200):
    """Mean NMSE (dB) between pilot sets designed for random pairs of uplink inputs."""
    p_re, p_im = fw.pilot.matrices(mag_ul)
    if p_re.ndim == 2:
        return -np.inf
    rng = rng or np.random.default_rng(0)
    i = rng.integers(0, len(p_re), n_pairs)
    j = rng.integers(0, len(p_re), n_pairs)
    keep = i != j
    a = np.concatenate([p_re[i[keep]].reshape(keep.sum(), -1), p_im[i[keep]].reshape(keep.sum(), -1)], 1)
    b = np.concatenate([p_re[j[keep]].reshape(keep.sum(), -1), p_im[j[keep]].reshape(keep.sum(), -1)], 1)
    return nmse_db(a, b)


# --- checkpoints -------------------------------------------------------------

def _blocks(fw: FrameworkAssembly):
    blocks = []
    if fw.pilot is not None:
        blocks.append(fw.pilot.unique_layers())
    for graph in (fw.estimator, fw.feedback and fw.feedback.encoder, fw.feedback and fw.feedback.decoder):
        if graph:
            blocks.append(graph.unique_layers())
    return blocks


def framework_bytes(fw: FrameworkAssembly) -> bytes:
    buf = io.BytesIO()
    buf.write(FW_MAGIC)
    buf.write(struct.pack("<BIII", fw.kind.code, fw.n_t, fw.m, fw.n_bits))
    for block in _blocks(fw):
        write_layers(buf, block)
    return buf.getvalue()


def save_framework(fw: FrameworkAssembly, path):
    with open(path, "wb") as f:
        f.write(framework_bytes(fw))


def load_framework(path) -> FrameworkAssembly:
    with open(path, "rb") as f:
        return framework_from_stream(f)


def framework_from_stream(stream) -> FrameworkAssembly:
    magic = stream.read(8)
    if magic != FW_MAGIC:
        raise ValueError(f"bad framework checkpoint magic {magic!r}; expected {FW_MAGIC!r}")
    code, n_t, m, n_bits = struct.unpack("<BIII", stream.read(13))
    kind = Kind.from_code(code)
    fw = build_framework(kind, n_t, max(m, 1), n_bits if n_bits else QUANT_BITS)
    for block in _blocks(fw):
        layers, _ = read_layers(stream)
        if len(layers) != len(block):
            raise ValueError("checkpoint layer count does not match the framework layout")
        for dst, src in zip(block, layers):
            if dst.weight.shape != src.weight.shape or dst.activation != src.activation:
                raise ValueError(f"checkpoint layer {src.weight.shape} does not fit {dst.name} {dst.weight.shape}")
            dst.weight[...] = src.weight
            dst.bias[...] = src.bias
            dst.mask = src.mask
    fw.initialized = True
    return fw


# --- training ----------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 512
    lr: float = 0.001
    snr_db: float = 10.0
    seed: int = 0
    patience: int | None = None
    keep_best: bool = True


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_nmse_db: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_nmse_db: float = float("inf")


def split_arrays(split):
    """``(h_dl_real, mag_ul)`` network inputs for a dataset split."""
    return to_real(split.h_a_dl), np.abs(split.h_a_ul)


def _estimated_channel(fw, h, mag, snr_db, rng):
    """Encoder input for the feedback stage of the separate framework."""
    return fw.forward(h, mag, snr_db=snr_db, rng=rng, stage="estimate", record=False)


def predict(fw, h, mag, *, snr_db=None, sigma=None, seed=0, batch_size=512, stage="full"):
    """Batched inference with noise drawn from ``seed``; returns outputs for every row."""
    rng = np.random.default_rng(seed)
    out = []
    for lo in range(0, len(h), batch_size):
        hb, mb = h[lo : lo + batch_size], mag[lo : lo + batch_size]
        out.append(fw.forward(hb, mb, snr_db=snr_db, sigma=sigma, rng=rng, stage=stage, record=False))
    return np.concatenate(out)


def evaluate(fw, split, snr_db, *, seed=0, batch_size=512, stage="full"):
    """Dataset-level NMSE (dB) of ``fw`` on ``split`` at ``snr_db``."""
    h, mag = split_arrays(split) if not isinstance(split, tuple) else split
    return nmse_db(h, predict(fw, h, mag, snr_db=snr_db, seed=seed, batch_size=batch_size, stage=stage))


def _loss_and_grad(out, target):
    diff = out - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def train_step(fw, opt, h, mag, cfg, rng, stage="full"):
    """One minibatch update; returns the MSE loss."""
    opt.zero_grad()
    if stage == "feedback":
        x = _estimated_channel(fw, h, mag, cfg.snr_db, rng)
        out = fw.feedback.forward(x, mag)
        loss, grad = _loss_and_grad(out, h)
        fw.feedback.backward(grad)
    else:
        out = fw.forward(h, mag, snr_db=cfg.snr_db, rng=rng, stage=stage)
        loss, grad = _loss_and_grad(out, h)
        fw.backward(grad)
    opt.step()
    return loss


def fit(fw, ds, cfg: TrainConfig, *, stage="full", step_hook=None, val_seed=None) -> TrainHistory:
    """Minibatch Adam on the MSE, noise redrawn every batch.

    With ``cfg.keep_best`` the parameters of the best validation epoch are
    restored at the end. ``step_hook(step)`` runs before every update.
    """
    h_tr, mag_tr = split_arrays(ds.train)
    val = split_arrays(ds.val)
    if len(h_tr) == 0:
        raise ValueError("training split is empty")
    opt = Adam(fw.trainable_layers(stage), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    val_seed = cfg.seed + 7919 if val_seed is None else val_seed
    eval_stage = "estimate" if stage == "estimate" else "full"
    hist = TrainHistory()
    best = None
    since_best = 0
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(h_tr))
        losses = []
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            if step_hook is not None:
                step_hook(step)
            losses.append(train_step(fw, opt, h_tr[idx], mag_tr[idx], cfg, rng, stage))
            step += 1
        hist.train_loss.append(float(np.mean(losses)))
        v = evaluate(fw, val, cfg.snr_db, seed=val_seed, batch_size=cfg.batch_size, stage=eval_stage)
        hist.val_nmse_db.append(v)
        log.debug("%s epoch %d loss %.3e val %.2f dB", fw.kind.label, epoch, hist.train_loss[-1], v)
        if v < hist.best_val_nmse_db:
            hist.best_val_nmse_db, hist.best_epoch = v, epoch
            since_best = 0
            if cfg.keep_best:
                best = fw.get_params()
        else:
            since_best += 1
            if cfg.patience is not None and since_best > cfg.patience:
                break
    if cfg.keep_best and best is not None:
        fw.set_params(best)
    return hist


def train_end_to_end(fw: FrameworkAssembly, ds, cfg: TrainConfig) -> TrainHistory:
    """Single-objective training of every non-frozen parameter."""
    if fw.kind is Kind.CANET_S:
        raise ValueError("CAnet-S is trained in two phases; use train_two_phase")
    return fit(fw, ds, cfg)


def train_two_phase(fw: FrameworkAssembly, ds, cfg: TrainConfig, cfg_feedback: TrainConfig | None = None):
    """Phase 1 fits pilot design + estimation; phase 2 fits the feedback on frozen estimates."""
    if fw.kind is not Kind.CANET_S:
        raise ValueError("two-phase training applies to CAnet-S only")
    h1 = fit(fw, ds, cfg, stage="estimate")
    h2 = fit(fw, ds, cfg_feedback or cfg, stage="feedback")
    return h1, h2


def complexity_table(fw: FrameworkAssembly):
    """Rows of (layer name, output dim, activation, params, flops) per distinct layer."""
    from .nn import layer_flops, layer_params

    counts = {}
    for layer in fw.occurrences():
        counts[id(layer)] = counts.get(id(layer), 0) + 1
    return [
        (lay.name, lay.out_dim, lay.activation, layer_params(lay), layer_flops(lay) * counts[id(lay)])
        for lay in fw.unique_layers()
    ]


__all__ = [
    "FEEDBACK_KINDS",
    "PILOT_KINDS",
    "FeedbackAssembly",
    "FrameworkAssembly",
    "Kind",
    "PilotAssembly",
    "TrainConfig",
    "TrainHistory",
    "acquire",
    "build_framework",
    "complexity_table",
    "evaluate",
    "fit",
    "framework_bytes",
    "framework_from_stream",
    "init_framework",
    "load_framework",
    "parse_kind",
    "pilot_similarity_db",
    "predict",
    "save_framework",
    "snr_sigma",
    "split_arrays",
    "to_complex",
    "to_real",
    "train_end_to_end",
    "train_step",
    "train_two_phase",
    "transmit",
]
