"""Experiment driver: configs, training runs, sweeps, pruning and CSV reports."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import Dataset, dataset_bytes, load_dataset
from .frameworks import (
    FrameworkAssembly,
    Kind,
    TrainConfig,
    build_framework,
    evaluate,
    fit,
    parse_kind,
    save_framework,
    split_arrays,
    train_step,
)
from .metrics import clamp_db
from .nn import Adam
from .quant import PruneSchedule, apply_prune, graph_sparsity, sparsity_at

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass
class ExperimentConfig:
    dataset: str = ""
    kind: str = "CAnetJ"
    n_t: int = 32
    m: int = 8
    n_bits: int = 32
    train_snr_db: float = 10.0
    test_snr_db: tuple = (10.0,)
    epochs: int = 200
    batch_size: int = 512
    lr: float = 0.001
    prune: PruneSchedule | None = None
    seed: int = 0
    output_dir: str = "runs"

    def __post_init__(self):
        self.kind = parse_kind(self.kind).value
        self.test_snr_db = tuple(float(s) for s in self.test_snr_db)
        if not self.test_snr_db:
            raise ValueError("test_snr_db needs at least one value")

    @property
    def run_name(self) -> str:
        return f"{self.kind}_m{self.m}_b{self.n_bits}_snr{self.train_snr_db:g}_s{self.seed}"

    def train_config(self, **overrides) -> TrainConfig:
        kw = dict(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                  snr_db=self.train_snr_db, seed=self.seed)
        kw.update(overrides)
        return TrainConfig(**kw)

    def to_text(self) -> str:
        """Flat ``key = value`` lines; the inverse of :meth:`from_text`."""
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "test_snr_db":
                value = ",".join(f"{v:g}" for v in value)
            elif f.name == "prune":
                value = "" if value is None else ",".join(
                    str(getattr(value, k)) for k in ("s_i", "s_f", "t0", "delta_t", "n"))
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        kw = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            kw[key] = _parse_field(key, value)
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())


def _parse_field(key, value):
    if key in ("n_t", "m", "n_bits", "epochs", "batch_size", "seed"):
        return int(value)
    if key in ("train_snr_db", "lr"):
        return float(value)
    if key == "test_snr_db":
        return tuple(float(v) for v in value.split(",") if v.strip())
    if key == "prune":
        if not value:
            return None
        s_i, s_f, t0, delta_t, n = value.split(",")
        return PruneSchedule(float(s_i), float(s_f), int(t0), int(delta_t), int(n))
    return value


@dataclass(frozen=True, order=True)
class NmseRow:
    framework: str
    m: int
    n_bits: int
    train_snr_db: float
    test_snr_db: float
    sparsity: float
    nmse_db: float
    n_test_samples: int


ROW_FIELDS = [f.name for f in dataclasses.fields(NmseRow)]
CSV_FIELDS = ["v"] + ROW_FIELDS + ["seed", "dataset_hash", "timestamp"]


@dataclass
class NmseReport:
    rows: list = field(default_factory=list)
    seed: int = 0
    dataset_hash: str = ""
    timestamp: str = ""

    def add(self, **kw):
        kw["nmse_db"] = clamp_db(kw["nmse_db"])
        self.rows.append(NmseRow(**kw))

    def sorted_rows(self):
        return sorted(self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for row in self.sorted_rows():
            values = [repr(v) if isinstance(v, float) else v for v in dataclasses.astuple(row)]
            w.writerow([SCHEMA_VERSION, *values, self.seed, self.dataset_hash, self.timestamp])
        return buf.getvalue()

    def write_csv(self, path):
        Path(path).write_text(self.to_csv(), newline="")

    @classmethod
    def from_csv(cls, text: str) -> "NmseReport":
        reader = csv.DictReader(io.StringIO(text))
        missing = set(CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"not a report CSV; missing columns {sorted(missing)}")
        report = cls()
        for rec in reader:
            if int(rec["v"]) != SCHEMA_VERSION:
                raise ValueError(f"unsupported report schema v={rec['v']}")
            report.rows.append(NmseRow(
                rec["framework"], int(rec["m"]), int(rec["n_bits"]), float(rec["train_snr_db"]),
                float(rec["test_snr_db"]), float(rec["sparsity"]), float(rec["nmse_db"]),
                int(rec["n_test_samples"])))
            report.seed = int(rec["seed"])
            report.dataset_hash = rec["dataset_hash"]
            report.timestamp = rec["timestamp"]
        return report

    @classmethod
    def read_csv(cls, path) -> "NmseReport":
        return cls.from_csv(Path(path).read_text())

    def merge(self, other: "NmseReport") -> "NmseReport":
        if self.dataset_hash and other.dataset_hash and self.dataset_hash != other.dataset_hash:
            raise ValueError("cannot merge reports computed on different datasets")
        return NmseReport(self.rows + other.rows, min(self.seed, other.seed),
                          self.dataset_hash or other.dataset_hash, max(self.timestamp, other.timestamp))

    def lookup(self, framework, **match):
        """NMSE of the single row of ``framework`` whose fields equal ``match``."""
        label = parse_kind(framework).value
        hits = [r for r in self.rows if r.framework == label
                and all(getattr(r, k) == v for k, v in match.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {label} {match}")
        return hits[0].nmse_db


def dataset_hash(ds: Dataset) -> str:
    return hashlib.sha256(dataset_bytes(ds)).hexdigest()[:16]


def timestamp_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())


def eval_seed(seed: int, index: int) -> int:
    """Noise seed for the ``index``-th test SNR; disjoint from training streams."""
    return int(np.random.SeedSequence([seed, 0x7E57, index]).generate_state(1)[0])


def _resolve_dataset(cfg: ExperimentConfig, dataset):
    if dataset is not None:
        return dataset
    if not cfg.dataset:
        raise FileNotFoundError("no dataset given")
    path = Path(cfg.dataset)
    if not path.exists():
        raise FileNotFoundError(f"dataset {path} does not exist")
    return load_dataset(path)


def build_for(cfg: ExperimentConfig, ds: Dataset) -> FrameworkAssembly:
    if ds.n_ant != cfg.n_t:
        raise ValueError(f"config n_t={cfg.n_t} does not match the dataset's {ds.n_ant} antennas")
    return build_framework(cfg.kind, cfg.n_t, cfg.m, cfg.n_bits, seed=cfg.seed)


def train(fw: FrameworkAssembly, ds: Dataset, cfg: ExperimentConfig, *, phase1=None):
    """Train ``fw`` per its kind. For CAnet-S, ``phase1`` may supply a trained
    UpAid-PEnet whose pilot designer and estimator are copied in place of phase 1."""
    tc = cfg.train_config()
    if fw.kind is not Kind.CANET_S:
        return fit(fw, ds, tc)
    if phase1 is None:
        fit(fw, ds, tc, stage="estimate")
    else:
        adopt_phase1(fw, phase1)
    return fit(fw, ds, tc, stage="feedback")


def adopt_phase1(fw: FrameworkAssembly, upaid: FrameworkAssembly):
    """Copy a trained UpAid-PEnet into the pilot and estimator of a CAnet-S."""
    if upaid.kind is not Kind.UPAID_PENET or (upaid.n_t, upaid.m) != (fw.n_t, fw.m):
        raise ValueError("phase-1 source must be an UpAid-PEnet with matching n_t and m")
    src = upaid.pilot.unique_layers() + upaid.estimator.unique_layers()
    dst = fw.pilot.unique_layers() + fw.estimator.unique_layers()
    for d, s in zip(dst, src):
        d.weight[...] = s.weight
        d.bias[...] = s.bias
        d.mask = s.mask.copy()


def nmse_rows(fw: FrameworkAssembly, ds: Dataset, cfg: ExperimentConfig, report: NmseReport, *,
              snrs=None, sparsity=None, stage="full"):
    snrs = cfg.test_snr_db if snrs is None else snrs
    sparsity = graph_sparsity(fw) if sparsity is None else sparsity
    for i, snr in enumerate(snrs):
        value = evaluate(fw, ds.test, snr, seed=eval_seed(cfg.seed, i), batch_size=cfg.batch_size, stage=stage)
        report.add(framework=fw.kind.value, m=fw.m, n_bits=fw.n_bits, train_snr_db=cfg.train_snr_db,
                   test_snr_db=float(snr), sparsity=round(float(sparsity), 6), nmse_db=value,
                   n_test_samples=len(ds.test))
    return report


def run_experiment(cfg: ExperimentConfig, *, dataset: Dataset | None = None, write=True):
    """Build, train and evaluate one configuration; returns ``(report, framework)``.

    With ``write`` the CSV, the resolved config and the checkpoint land in
    ``output_dir/run_name``.
    """
    ds = _resolve_dataset(cfg, dataset)
    fw = build_for(cfg, ds)
    train(fw, ds, cfg)
    report = NmseReport(seed=cfg.seed, dataset_hash=dataset_hash(ds), timestamp=timestamp_now())
    nmse_rows(fw, ds, cfg, report)
    if cfg.prune is not None:
        report = report.merge(prune_experiment(fw, cfg.prune, ds, cfg))
    if write:
        out = Path(cfg.output_dir) / cfg.run_name
        out.mkdir(parents=True, exist_ok=True)
        report.write_csv(out / "report.csv")
        (out / "config.txt").write_text(cfg.to_text())
        save_framework(fw, out / "model.bin")
    return report, fw


def train_steps(fw, opt, ds, cfg: TrainConfig, n_steps, rng, stage="full"):
    """Run exactly ``n_steps`` minibatch updates, reshuffling after every pass."""
    h, mag = split_arrays(ds.train)
    done = 0
    while done < n_steps:
        order = rng.permutation(len(h))
        for lo in range(0, len(order), cfg.batch_size):
            if done == n_steps:
                break
            idx = order[lo : lo + cfg.batch_size]
            train_step(fw, opt, h[idx], mag[idx], cfg, rng, stage)
            done += 1


def prune_experiment(fw: FrameworkAssembly, sched: PruneSchedule, ds: Dataset, cfg: ExperimentConfig, *,
                     finetune_steps=None, budget_steps=None) -> NmseReport:
    """Gradual magnitude pruning of a pretrained framework with fine-tuning.

    Steps are optimizer updates counted from the start of pruning. The
    baseline row is evaluated first; then at every grid step the masks are
    raised to the scheduled sparsity, the network is fine-tuned until the next
    grid step (``finetune_steps`` after the last one, default ``delta_t``) and
    NMSE is recorded at the first test SNR.
    """
    if fw.kind is Kind.CANET_S:
        raise ValueError("pruning is defined for end-to-end trained frameworks")
    finetune_steps = sched.delta_t if finetune_steps is None else finetune_steps
    steps_per_epoch = -(-len(ds.train) // cfg.batch_size)
    budget = cfg.epochs * steps_per_epoch if budget_steps is None else budget_steps
    needed = sched.end + finetune_steps
    if needed > budget:
        raise ValueError(f"schedule needs {needed} steps but the training budget is {budget}")

    report = NmseReport(seed=cfg.seed, dataset_hash=dataset_hash(ds), timestamp=timestamp_now())
    snr = cfg.test_snr_db[:1]
    nmse_rows(fw, ds, cfg, report, snrs=snr)
    tc = cfg.train_config()
    opt = Adam(fw.trainable_layers(), lr=tc.lr)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x9A0E]))
    for k, t in enumerate(sched.steps()):
        level = sparsity_at(t, sched)
        if k == 0 and level == 0.0:
            continue
        apply_prune(fw, level)
        gap = sched.delta_t if k < sched.n else finetune_steps
        train_steps(fw, opt, ds, tc, gap, rng)
        nmse_rows(fw, ds, cfg, report, snrs=snr, sparsity=level)
    return report


def sparsity_sweep(fw: FrameworkAssembly, targets, ds: Dataset, cfg: ExperimentConfig, *, finetune_steps):
    """Raise the sparsity through increasing ``targets``, fine-tuning and evaluating at each."""
    targets = list(targets)
    if targets != sorted(targets):
        raise ValueError("sparsity targets must be non-decreasing")
    report = NmseReport(seed=cfg.seed, dataset_hash=dataset_hash(ds), timestamp=timestamp_now())
    tc = cfg.train_config()
    opt = Adam(fw.trainable_layers(), lr=tc.lr)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5EEB]))
    for s in targets:
        if s > 0:
            apply_prune(fw, s)
            train_steps(fw, opt, ds, tc, finetune_steps, rng)
        nmse_rows(fw, ds, cfg, report, snrs=cfg.test_snr_db[:1], sparsity=s)
    return report


# --- sweeps ------------------------------------------------------------------

def max_workers() -> int:
    cap = os.environ.get("CANET_THREADS")
    n = os.cpu_count() or 1
    return max(1, min(n, int(cap))) if cap else n


def _run_one(cfg):
    report, _ = run_experiment(cfg)
    return report


def sweep(cfgs, out_dir=None, *, workers=None) -> NmseReport:
    """Run every config, merge the reports and (optionally) write per-figure CSVs."""
    cfgs = list(cfgs)
    if not cfgs:
        raise ValueError("empty sweep")
    paths = {str(Path(c.dataset).resolve()) for c in cfgs}
    hashes = {dataset_hash(load_dataset(p)) for p in paths}
    if len(hashes) != 1:
        raise ValueError(f"sweep configs reference {len(hashes)} different datasets")
    workers = min(workers or max_workers(), len(cfgs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_one, cfgs))
    else:
        reports = [_run_one(c) for c in cfgs]
    merged = reports[0]
    for r in reports[1:]:
        merged = merged.merge(r)
    if out_dir is not None:
        write_figures(merged, out_dir)
    return merged


# Per-figure projections of a merged report: (file stem, kinds, columns).
FIGURES = [
    ("fig8", {Kind.PENET, Kind.UPAID_PENET, Kind.GAUSSIAN}, ["framework", "m", "test_snr_db", "nmse_db"]),
    ("fig9", {Kind.UPAID_FBNET, Kind.FC_BASELINE}, ["framework", "n_bits", "test_snr_db", "nmse_db"]),
    ("fig10", {Kind.CANET_J, Kind.CANET_S, Kind.UPAID_PENET},
     ["framework", "m", "n_bits", "train_snr_db", "test_snr_db", "nmse_db"]),
    ("fig11", {Kind.CANET_J, Kind.ACQNET_J}, ["framework", "m", "n_bits", "sparsity", "nmse_db"]),
    ("table4", {Kind.CANET_S, Kind.CANET_J, Kind.ACQNET_J}, ["framework", "m", "n_bits", "test_snr_db", "nmse_db"]),
]


def figure_rows(report: NmseReport, name):
    """Columns and rows of one figure; only the sparsity figure keeps pruned rows."""
    _, kinds, cols = next(f for f in FIGURES if f[0] == name)
    labels = {k.value for k in kinds}
    rows = [r for r in report.sorted_rows() if r.framework in labels]
    if name != "fig11":
        rows = [r for r in rows if r.sparsity == 0.0]
    return cols, rows


def write_figures(report: NmseReport, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "merged.csv")
    written = []
    for stem, _, _ in FIGURES:
        cols, rows = figure_rows(report, stem)
        if not rows:
            continue
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["v"] + cols)
        for r in rows:
            w.writerow([SCHEMA_VERSION] + [_fmt(getattr(r, c)) for c in cols])
        (out / f"{stem}.csv").write_text(buf.getvalue(), newline="")
        written.append(stem)
    return written


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def format_table(report: NmseReport, columns=None) -> str:
    """Aligned plain-text table of a report, rows in sorted order."""
    columns = columns or ROW_FIELDS
    body = []
    for r in report.sorted_rows():
        cells = []
        for c in columns:
            v = getattr(r, c)
            cells.append(f"{v:.2f}" if c == "nmse_db" else (f"{v:g}" if isinstance(v, float) else str(v)))
        body.append(cells)
    widths = [max(len(c), *(len(row[i]) for row in body)) if body else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in body)
    return "\n".join(lines) + "\n"

