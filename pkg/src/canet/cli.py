"""Command-line entry point: ``canet <command> ...``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .channel import ScmConfig, generate_dataset, load_dataset, save_dataset
from .frameworks import Kind, load_framework, save_framework
from .harness import (
    FIGURES,
    ExperimentConfig,
    NmseReport,
    timestamp_now,
    dataset_hash,
    figure_rows,
    format_table,
    nmse_rows,
    prune_experiment,
    run_experiment,
    sweep,
    write_figures,
)
from .quant import PruneSchedule


def _snr_list(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_gen_data(args):
    cfg = ScmConfig(
        n_ant=args.n_ant,
        n_clusters=args.clusters,
        n_subpaths=args.subpaths,
        f_ul_hz=args.f_ul,
        f_dl_hz=args.f_dl,
        cluster_angle_range=args.angle_range,
        subpath_spread_rad=math.radians(args.spread_deg),
        seed=args.seed,
    )
    ds = generate_dataset(cfg, args.n_samples)
    save_dataset(ds, args.out)
    print(f"wrote {args.out}: {len(ds.train)}/{len(ds.val)}/{len(ds.test)} samples, "
          f"norm_scale {ds.norm_scale:.6g}, hash {dataset_hash(ds)}")


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig()
    overrides = {
        "dataset": args.dataset, "kind": args.kind, "n_t": args.n_t, "m": args.m, "n_bits": args.n_bits,
        "train_snr_db": args.train_snr, "test_snr_db": args.test_snr, "epochs": args.epochs,
        "batch_size": args.batch_size, "lr": args.lr, "seed": args.seed, "output_dir": args.out,
    }
    kw = {k: v for k, v in overrides.items() if v is not None}
    if kw:
        fields = {**vars(cfg), **kw}
        cfg = ExperimentConfig(**fields)
    if cfg.dataset and args.n_t is None and not args.config:
        # default the antenna count to the dataset's
        cfg.n_t = load_dataset(cfg.dataset).n_ant
    return cfg


def cmd_train(args):
    cfg = _config_from_args(args)
    report, _ = run_experiment(cfg)
    print(format_table(report), end="")
    print(f"run directory: {Path(cfg.output_dir) / cfg.run_name}")


def cmd_eval(args):
    fw = load_framework(args.checkpoint)
    ds = load_dataset(args.dataset)
    cfg = ExperimentConfig(kind=fw.kind.value, n_t=fw.n_t, m=fw.m, n_bits=fw.n_bits,
                           train_snr_db=args.train_snr, test_snr_db=args.snr, seed=args.seed)
    report = NmseReport(seed=args.seed, dataset_hash=dataset_hash(ds), timestamp=timestamp_now())
    nmse_rows(fw, ds, cfg, report)
    _emit(report, args.out)


def cmd_sweep(args):
    paths = sorted(Path(args.config_dir).glob("*.cfg"))
    if not paths:
        sys.exit(f"no *.cfg files in {args.config_dir}")
    cfgs = [ExperimentConfig.load(p) for p in paths]
    merged = sweep(cfgs, args.out, workers=args.workers)
    print(format_table(merged), end="")


def cmd_prune(args):
    fw = load_framework(args.checkpoint)
    ds = load_dataset(args.dataset)
    sched = PruneSchedule(args.s_i, args.s_f, args.t0, args.delta_t, args.n)
    cfg = ExperimentConfig(kind=fw.kind.value, n_t=fw.n_t, m=fw.m, n_bits=fw.n_bits, train_snr_db=args.train_snr,
                           test_snr_db=(args.train_snr,), epochs=args.epochs, seed=args.seed)
    report = prune_experiment(fw, sched, ds, cfg, finetune_steps=args.finetune_steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_framework(fw, out / f"pruned_s{args.s_f:g}.bin")
    report.write_csv(out / "prune.csv")
    print(format_table(report), end="")


def cmd_report(args):
    report = NmseReport.read_csv(args.csv)
    print(format_table(report), end="")
    for stem, _, _ in FIGURES:
        cols, rows = figure_rows(report, stem)
        if rows:
            print(f"\n[{stem}]")
            print(format_table(NmseReport(rows=rows), columns=cols), end="")
    if args.plot_dir:
        written = write_figures(report, args.plot_dir)
        print(f"\nplot-ready CSVs in {args.plot_dir}: {', '.join(written) or 'none'}")


def _emit(report, out):
    if out:
        report.write_csv(out)
    print(format_table(report), end="")


def _add_train_flags(p):
    p.add_argument("--config", help="flat key = value experiment file")
    p.add_argument("--dataset")
    p.add_argument("--kind", choices=[k.value for k in Kind])
    p.add_argument("--n-t", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--n-bits", type=int)
    p.add_argument("--train-snr", type=float)
    p.add_argument("--test-snr", type=_snr_list)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="canet", description="Uplink-aided CSI acquisition experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a channel dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-samples", type=int, default=50_000)
    p.add_argument("--n-ant", type=int, default=32)
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--subpaths", type=int, default=20)
    p.add_argument("--f-ul", type=float, default=5.1e9)
    p.add_argument("--f-dl", type=float, default=5.3e9)
    p.add_argument("--angle-range", type=float, default=math.pi / 2, help="cluster centers in +-range (rad)")
    p.add_argument("--spread-deg", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train and evaluate one configuration")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint at several SNRs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--snr", type=_snr_list, default=(4, 6, 8, 10, 12, 14, 16))
    p.add_argument("--train-snr", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run every *.cfg in a directory and write figure CSVs")
    p.add_argument("--config-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, help="parallel runs (default: CANET_THREADS or CPU count)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("prune", help="gradually prune a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--s-i", type=float, default=0.0)
    p.add_argument("--s-f", type=float, default=0.8)
    p.add_argument("--t0", type=int, default=0)
    p.add_argument("--delta-t", type=int, default=100, help="optimizer steps between pruning steps")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--finetune-steps", type=int)
    p.add_argument("--epochs", type=int, default=200, help="training budget the schedule must fit in")
    p.add_argument("--train-snr", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("report", help="print a report CSV as tables")
    p.add_argument("csv")
    p.add_argument("--plot-dir", help="also write per-figure CSVs here")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
