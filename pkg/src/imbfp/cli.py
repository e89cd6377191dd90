"""Command-line entry point: synth, parse, fingerprint, pools, train, analyze, report, pipeline."""

from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import csv
import datetime as dt
import hashlib
import json
import logging
import os
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .etf import build_universe, read_name_list, write_name_list
from .feed import stream_day
from .fingerprint import (
    BinGrid,
    Fingerprint,
    aggregate_buffer,
    build_fingerprint,
    day_totals,
    read_fingerprint,
    summary_rows,
    write_fingerprint,
    write_pgm,
)
from .protocol import TRAIN_LABELS, TEST_LABELS, build_standard_pools, read_manifest, write_manifest

log = logging.getLogger("imbfp")

DEFAULT_DAYS = ("2019-10-07", "2019-10-08", "2020-09-09", "2020-10-04", "2020-10-05")


class StageError(RuntimeError):
    pass


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_run_manifest(out_dir, stage, args, inputs, outputs, seed, started):
    out_dir = Path(out_dir)
    config = {k: v for k, v in vars(args).items() if k != "func" and not callable(v)}
    manifest = {
        "command": stage,
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in config.items()},
        "inputs": {str(p): sha256(p) for p in inputs},
        "outputs": {str(p): sha256(p) for p in outputs},
        "seed": seed,
        "version": __version__,
        "duration_s": round(time.time() - started, 3),
    }
    path = out_dir / f"{stage}.manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return path


# -- stages -----------------------------------------------------------------


def cmd_synth(args):
    from .synth import SynthConfig, generate_day

    started = time.time()
    cfg = SynthConfig(
        seed=args.seed,
        total_messages=args.messages,
        n_symbols=args.symbols,
        etf_message_share=args.etf_share,
        etf_dollar_share=args.etf_dollar_share,
        fault_fraction=args.fault_fraction,
    )
    day = generate_day(cfg, args.day)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    day.write(out)
    truth = Path(args.truth) if args.truth else out.with_suffix(".truth.json")
    day.write_truth(truth)
    names = Path(args.names_out) if args.names_out else out.with_suffix(".names")
    write_name_list(names, day.names)
    write_run_manifest(args.out_dir or out.parent, "synth", args, [], [out, truth, names], args.seed, started)
    log.info("wrote %s (%d lines)", out, len(day.lines))
    return 0


def cmd_parse(args):
    started = time.time()
    with open(args.input, "rb") as fh:
        stream = stream_day(fh)
        for _ in stream:
            pass
    text = stream.stats.to_text()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
        write_run_manifest(args.out_dir or Path(args.out).parent, "parse", args, [args.input], [args.out], None, started)
    else:
        sys.stdout.write(text)
    return 0


def _names_universe(path, delim):
    if path is None:
        return build_universe([])
    return build_universe(read_name_list(path, delim))


def fingerprint_day(feed_path, names_path, day, mode, out_dir, delim="|", time_warp="log"):
    """Build and write both fingerprints of one day; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    universe = _names_universe(names_path, delim)
    data = Path(feed_path).read_bytes()
    market, etf, counts = aggregate_buffer(data, universe, BinGrid(), day_label=day)
    written = []
    for agg in (market, etf):
        fp = build_fingerprint(agg, mode, time_warp=time_warp)
        path = out_dir / f"{day}.{agg.family}.fp"
        write_fingerprint(fp, path)
        write_pgm(fp.cells, out_dir / f"{day}.{agg.family}.pgm")
        written.append(path)
    summary = out_dir / f"{day}.summary.csv"
    rows = summary_rows(market, etf)
    with open(summary, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    totals = out_dir / f"{day}.totals.csv"
    tot = day_totals(market, etf)
    tot.update(lines=counts[0], type105_ok=counts[1], type105_bad=counts[2], discarded=market.discarded)
    with open(totals, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(tot))
        w.writeheader()
        w.writerow(tot)
    return written + [summary, totals]


def cmd_fingerprint(args):
    started = time.time()
    day = args.day or Path(args.input).stem
    outputs = fingerprint_day(args.input, args.names, day, args.mode, args.out_dir, args.names_delim, args.time_warp)
    inputs = [args.input] + ([args.names] if args.names else [])
    write_run_manifest(args.out_dir, "fingerprint", args, inputs, outputs, None, started)
    for p in outputs[:2]:
        print(p)
    return 0


def load_fingerprints(fp_dir):
    fp_dir = Path(fp_dir)
    market, etf, paths = [], [], {}
    for path in sorted(fp_dir.glob("*.fp")):
        fp = read_fingerprint(path)
        if fp.family == "market":
            market.append(fp)
        elif fp.family == "etf":
            etf.append(fp)
        else:
            continue
        paths[(fp.day_label, fp.family)] = str(path)
    return market, etf, paths


def cmd_pools(args):
    started = time.time()
    market, etf, paths = load_fingerprints(args.fp_dir)
    pools = build_standard_pools(market, etf, args.pool_size, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_manifest(out, pools, paths)
    write_run_manifest(args.out_dir or out.parent, "pools", args, sorted(set(paths.values())), [out], args.seed, started)
    print(out)
    return 0


def _pool_members(manifest_rows, base=None):
    images = []
    for row in manifest_rows:
        path = Path(row["fingerprint_path"])
        if not path.is_absolute() and base is not None and not path.exists():
            path = Path(base) / path
        images.append(read_fingerprint(path))
    return images


def train_to_dir(pool_images, cfg, out_dir):
    """Train one run and persist fakes, trace, generator and run manifest."""
    from .gan import collect_fakes, config_dict, save_generator, train

    out_dir = Path(out_dir)
    (out_dir / "fakes").mkdir(parents=True, exist_ok=True)
    run = train(pool_images, cfg)
    fakes = collect_fakes(run, cfg)
    outputs = []
    for i, (img, epoch) in enumerate(zip(fakes.images, fakes.source_epochs)):
        fp = Fingerprint(img, f"epoch{epoch}", "fake", pool_images[0].mode)
        path = out_dir / "fakes" / f"fake_{i:02d}.fp"
        write_fingerprint(fp, path)
        write_pgm(img, out_dir / "fakes" / f"fake_{i:02d}.pgm", vmax=run.generator.scale)
        outputs.append(path)
    trace = out_dir / "trace.csv"
    trace.write_text(run.trace.to_csv())
    gen = out_dir / "generator.pt"
    save_generator(run.generator, gen)
    meta = out_dir / "run.json"
    with open(meta, "w") as fh:
        json.dump({"seed": cfg.seed, "config": config_dict(cfg), "source_epochs": fakes.source_epochs}, fh, indent=1)
    return outputs + [trace, meta]


def _train_config(args, seed):
    from .gan import TrainConfig

    return TrainConfig(
        epochs=args.epochs,
        seed=seed,
        snapshot_window=args.window,
        snapshot_stride=args.stride,
        learning_rate=args.lr,
    )


def cmd_train(args):
    started = time.time()
    pools = read_manifest(args.pool)
    label = args.label or next(iter(pools))
    if label not in pools:
        raise StageError(f"pool {label!r} not in manifest {args.pool}")
    images = _pool_members(pools[label], Path(args.pool).parent)
    cfg = _train_config(args, args.seed)
    out = Path(args.out)
    outputs = train_to_dir(images, cfg, out)
    inputs = [args.pool] + sorted({r["fingerprint_path"] for r in pools[label]})
    write_run_manifest(out, "train", args, [p for p in inputs if Path(p).exists()], outputs, args.seed, started)
    print(out)
    return 0


def run_seed(seed: int, label_index: int, run: int) -> int:
    return int(np.random.SeedSequence([seed, label_index, run]).generate_state(1)[0])


def _analyze_job(job):
    import torch

    torch.set_num_threads(1)
    images, cfg, out_dir = job
    return [str(p) for p in train_to_dir(images, cfg, out_dir)]


def cmd_analyze(args):
    started = time.time()
    pools = read_manifest(args.pools)
    runs_dir = Path(args.out_dir) / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(args.pools, runs_dir / "pools.csv")
    jobs = []
    for li, label in enumerate(TRAIN_LABELS):
        images = _pool_members(pools[label], Path(args.pools).parent)
        for k in range(args.runs):
            cfg = _train_config(args, run_seed(args.seed, li, k))
            jobs.append((images, cfg, runs_dir / label / f"run{k}"))
    outputs = []
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as ex:
            for out in ex.map(_analyze_job, jobs):
                outputs += out
    else:
        for job in jobs:
            outputs += [str(p) for p in train_to_dir(*job)]
    write_run_manifest(args.out_dir, "analyze", args, [args.pools], outputs, args.seed, started)
    print(runs_dir)
    return 0


def load_fakes(run_dir):
    return [read_fingerprint(p).cells for p in sorted(Path(run_dir, "fakes").glob("fake_*.fp"))]


def compute_report(runs_dir, variant="stable", epsilon=1e-12):
    from .metrics import fake_pairs, minfo, summarize

    runs_dir = Path(runs_dir)
    pools = read_manifest(runs_dir / "pools.csv")
    mean = {lab: np.mean([fp.cells for fp in _pool_members(rows, runs_dir.parent)], axis=0) for lab, rows in pools.items()}
    cells = {}
    for tr in TRAIN_LABELS:
        run_dirs = sorted(p for p in (runs_dir / tr).glob("run*") if p.is_dir())
        if not run_dirs:
            raise StageError(f"no training runs for {tr} under {runs_dir}")
        fakes = [load_fakes(d) for d in run_dirs]
        for te in TEST_LABELS:
            pairs = [fake_pairs(mean[tr], mean[te], f, variant) for f in fakes]
            cells[(te, tr)] = minfo(pairs, epsilon)
    return summarize(cells)


def cmd_report(args):
    from .metrics import write_report_csv

    started = time.time()
    report = compute_report(args.runs_dir, args.cosine, args.epsilon)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report_csv(out, report)
    table = Path(args.table) if args.table else out.with_suffix(".txt")
    table.write_text(report.render())
    sys.stdout.write(report.render())
    write_run_manifest(args.out_dir or out.parent, "report", args, [Path(args.runs_dir) / "pools.csv"], [out, table], None, started)
    return 0


PIPELINE_DEFAULTS = {
    "days": ",".join(DEFAULT_DAYS),
    "messages": "100000",
    "symbols": "8000",
    "etf_share": "0.125",
    "etf_dollar_share": "0.60",
    "mode": "time_price",
    "time_warp": "log",
    "pool_size": "5",
    "runs": "2",
    "epochs": "1600",
    "window": "400",
    "stride": "20",
    "lr": "0.0002",
    "cosine": "stable",
    "seed": "0",
    "jobs": "1",
}


def read_config(path) -> dict:
    """Flat ``key = value`` file (``#`` comments) merged over the defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    text = Path(path).read_text() if path else ""
    parser.read_string("[pipeline]\n" + text)
    cfg = dict(PIPELINE_DEFAULTS)
    for key, value in parser["pipeline"].items():
        key = key.replace("-", "_")
        if key not in PIPELINE_DEFAULTS:
            raise StageError(f"unknown config key {key!r} in {path}")
        cfg[key] = value.strip()
    return cfg


def cmd_pipeline(args):
    cfg = read_config(args.config)
    if args.seed is not None:
        cfg["seed"] = str(args.seed)
    if args.jobs is not None:
        cfg["jobs"] = str(args.jobs)
    out = Path(args.out_dir)
    seed = int(cfg["seed"])
    days = [d.strip() for d in cfg["days"].split(",") if d.strip()]
    common = ["--out-dir"]
    stages = []
    for day in days:
        feed = out / "feeds" / f"{day}.taq"
        stages.append(("synth", ["synth", "--seed", str(seed), "--messages", cfg["messages"], "--symbols", cfg["symbols"],
                                 "--etf-share", cfg["etf_share"], "--etf-dollar-share", cfg["etf_dollar_share"],
                                 "--day", day, "--out", str(feed), *common, str(out / "feeds")]))
        stages.append(("fingerprint", ["fingerprint", "--in", str(feed), "--names", str(feed.with_suffix(".names")),
                                       "--day", day, "--mode", cfg["mode"], "--time-warp", cfg["time_warp"],
                                       *common, str(out / "fingerprints")]))
    manifest = out / "pools.csv"
    stages.append(("pools", ["pools", "--fp-dir", str(out / "fingerprints"), "--pool-size", cfg["pool_size"],
                             "--seed", str(seed), "--out", str(manifest), *common, str(out)]))
    train_flags = ["--epochs", cfg["epochs"], "--window", cfg["window"], "--stride", cfg["stride"], "--lr", cfg["lr"]]
    stages.append(("analyze", ["analyze", "--pools", str(manifest), "--runs", cfg["runs"], "--seed", str(seed),
                               "--jobs", cfg["jobs"], *train_flags, *common, str(out)]))
    stages.append(("report", ["report", "--runs-dir", str(out / "runs"), "--out", str(out / "report.csv"),
                              "--cosine", cfg["cosine"], *common, str(out)]))
    started = time.time()
    for name, argv in stages:
        code = run(argv)
        if code != 0:
            print(f"error: pipeline stage {name} failed", file=sys.stderr)
            return code
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "pipeline.manifest.json", "w") as fh:
        json.dump({"command": "pipeline", "config": cfg, "seed": seed, "version": __version__,
                   "duration_s": round(time.time() - started, 3),
                   "outputs": {str(out / "report.csv"): sha256(out / "report.csv")}}, fh, indent=1, sort_keys=True)
    return 0


# -- argument parsing -------------------------------------------------------


def _train_flags(p):
    p.add_argument("--epochs", type=int, default=1600)
    p.add_argument("--window", type=int, default=400, help="snapshot window (epochs)")
    p.add_argument("--stride", type=int, default=20, help="snapshot stride (epochs)")
    p.add_argument("--lr", type=float, default=2e-4)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="imbfp", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic feed day")
    p.add_argument("--messages", type=int, default=100_000)
    p.add_argument("--symbols", type=int, default=8000)
    p.add_argument("--etf-share", type=float, default=0.125)
    p.add_argument("--etf-dollar-share", type=float, default=0.60)
    p.add_argument("--fault-fraction", type=float, default=0.0)
    p.add_argument("--day", default=DEFAULT_DAYS[0])
    p.add_argument("--out", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--names-out", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("parse", parents=[common], help="parse a feed file and report counts")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("fingerprint", parents=[common], help="build market and ETF fingerprints of one day")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--names", default=None)
    p.add_argument("--names-delim", default="|")
    p.add_argument("--day", default=None)
    p.add_argument("--mode", choices=("time_price", "state_hist"), default="time_price")
    p.add_argument("--time-warp", choices=("log", "none"), default="log")
    p.set_defaults(func=cmd_fingerprint)

    p = sub.add_parser("pools", parents=[common], help="compose the ten training/testing pools")
    p.add_argument("--fp-dir", required=True)
    p.add_argument("--pool-size", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pools)

    p = sub.add_parser("train", parents=[common], help="train the GAN on one pool and save its fakes")
    p.add_argument("--pool", required=True)
    p.add_argument("--label", default=None)
    p.add_argument("--out", required=True)
    _train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze", parents=[common], help="train every training pool N times")
    p.add_argument("--pools", required=True)
    p.add_argument("--runs", type=int, default=2)
    _train_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", parents=[common], help="MInfo grid from persisted runs")
    p.add_argument("--runs-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--table", default=None)
    p.add_argument("--cosine", choices=("stable", "exact", "literal"), default="stable")
    p.add_argument("--epsilon", type=float, default=1e-12)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pipeline", help="run every stage from one config file")
    p.add_argument("--config", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_pipeline)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.command == "fingerprint" and args.out_dir is None:
        parser.error("fingerprint requires --out-dir")
    if args.command == "analyze" and args.out_dir is None:
        args.out_dir = "."
    try:
        return args.func(args)
    except Exception as exc:  # stage failure, exit 1
        print(f"error: stage {args.command} failed: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
