"""Command-line entry point.

    oppmodel sealed-bid run     --config C --seed S --out DIR
    oppmodel lob simulate       --config C --seed S --out DIR
    oppmodel dataset generate   --in RECORDS --per-class N --ratios R --seed S --out DIR
    oppmodel classify train     --data DIR --config C --seed S --out DIR
    oppmodel classify eval      --model FILE --data FILE --out DIR
    oppmodel pca project        --model FILE --data FILE --out DIR

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import dataset as ds
from . import market_core, sealed_bid, trading_agents
from .numerics import (
    accuracy,
    confusion_matrix,
    load_params,
    mlp_forward,
    pca_fit,
    pca_project,
    per_class_recall,
    predict,
    save_params,
    train_classifier,
)

log = logging.getLogger("oppmodel")


class UsageError(Exception):
    pass


def input_hash(*, config_text: str, seed, inputs=()) -> str:
    h = hashlib.sha256()
    h.update(config_text.encode())
    h.update(f"\0seed={seed}\0".encode())
    for p in inputs:
        h.update(Path(p).name.encode() + b"\0")
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def write_manifest(out: Path, *, subcommand: str, config_path, seed, content_hash: str,
                   outputs: list[str], started: float, extra: dict | None = None) -> None:
    manifest = {
        "subcommand": subcommand,
        "config": None if config_path is None else str(config_path),
        "seed": seed,
        "input_hash": content_hash,
        "outputs": sorted(outputs),
        "duration_s": round(time.perf_counter() - started, 3),
    }
    if extra:
        manifest.update(extra)
    tmp = out / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, out / "manifest.json")


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad --seed {text!r}")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- sealed-bid

def _run_one_experiment(cfg: sealed_bid.ExperimentConfig) -> sealed_bid.ExperimentResult:
    return sealed_bid.run_experiment(cfg)


def cmd_sealed_bid_run(args) -> None:
    base = cfgmod.load_experiment(args.config)
    if args.print_config:
        sys.stdout.write(cfgmod.dump(base, "sealed_bid"))
        return
    started = time.perf_counter()
    seeds = _seeds(args.seed) if args.seed is not None else [base.seed]
    cfgs = [dataclasses.replace(base, seed=s) for s in seeds]
    if args.jobs > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_run_one_experiment, cfgs))
    else:
        results = [_run_one_experiment(c) for c in cfgs]

    out = _out_dir(args.out)
    pooled = sealed_bid.pool_stats(results)
    kinds = results[0].stats.kinds
    wins = sum(r.stats.wins for r in results)
    stats = sealed_bid.WinStats(kinds, wins, sum(r.stats.rounds for r in results))
    sealed_bid.write_winstats_csv(stats, out / "winstats.csv")
    episodes, curves = [], []
    for s, r in zip(seeds, results):
        episodes += [{"seed": s, **row} for row in r.episode_shares]
        curves += [{"seed": s, **row} for row in r.curves]
    sealed_bid.write_episode_csv(episodes, out / "episode_shares.csv")
    sealed_bid.write_episode_csv(curves, out / "training_curves.csv")
    text = cfgmod.dump(base, "sealed_bid")
    write_manifest(out, subcommand="sealed-bid run", config_path=args.config, seed=seeds,
                   content_hash=input_hash(config_text=text, seed=seeds),
                   outputs=["winstats.csv", "episode_shares.csv", "training_curves.csv"],
                   started=started, extra={"shares": {k: round(v, 6) for k, v in pooled.items()}})
    print(" ".join(f"{k}={v:.3f}" for k, v in pooled.items()))


# ---------------------------------------------------------------- lob

def cmd_lob_simulate(args) -> None:
    cfg = cfgmod.load_sim(args.config)
    if args.seed is not None:
        cfg.seed = int(args.seed)
    if args.print_config:
        sys.stdout.write(cfgmod.dump(cfg, "simulation"))
        return
    started = time.perf_counter()
    day = trading_agents.simulate_day(cfg)
    out = _out_dir(args.out)
    market_core.write_trades_csv(day.fills, out / "trades.csv")
    market_core.write_snapshots_csv(day.snapshots, out / "snapshots.csv")
    ds.write_records_jsonl(day.records, out / "orders.jsonl")
    counts = {a.name: 0 for a in trading_agents.Archetype}
    for r in day.records:
        counts[r.archetype.name] += 1
    write_manifest(out, subcommand="lob simulate", config_path=args.config, seed=cfg.seed,
                   content_hash=input_hash(config_text=cfgmod.dump(cfg, "simulation"), seed=cfg.seed),
                   outputs=["trades.csv", "snapshots.csv", "orders.jsonl"], started=started,
                   extra={"order_counts": counts, "trades": len(day.fills)})
    print(" ".join(f"{k}={v}" for k, v in counts.items()), f"trades={len(day.fills)}")


# ---------------------------------------------------------------- dataset

def cmd_dataset_generate(args) -> None:
    started = time.perf_counter()
    try:
        ratios = [float(r) for r in args.ratios.split(",")]
    except ValueError:
        raise UsageError(f"bad --ratios {args.ratios!r}")
    for p in args.inputs:
        if not Path(p).is_file():
            raise UsageError(f"input not found: {p}")
    records = []
    for p in args.inputs:
        records += ds.read_records_jsonl(p)
    samples, skipped = ds.extract_samples(records)
    rng = np.random.default_rng(int(args.seed))
    counts = ds.class_counts(samples)
    balanced = ds.balance_downsample(samples, args.per_class, rng)
    train, val, test = ds.split(balanced, ratios, rng)
    scaler = ds.scaler_fit(train)
    out = _out_dir(args.out)
    for name, part in (("train", train), ("val", val), ("test", test)):
        ds.write_jsonl(scaler.apply(part), out / f"{name}.jsonl")
    ds.write_scaler_csv(scaler, out / "scaler.csv")
    text = f"per_class={args.per_class}\nratios={ratios}\n"
    write_manifest(out, subcommand="dataset generate", config_path=None, seed=int(args.seed),
                   content_hash=input_hash(config_text=text, seed=args.seed, inputs=args.inputs),
                   outputs=["train.jsonl", "val.jsonl", "test.jsonl", "scaler.csv"], started=started,
                   extra={"inputs": [str(p) for p in args.inputs], "skipped": skipped,
                          "class_counts": dict(zip(ds.LABELS, counts)),
                          "split_sizes": {"train": len(train), "val": len(val), "test": len(test)}})
    print(f"train={len(train)} val={len(val)} test={len(test)} skipped={skipped}")


# ---------------------------------------------------------------- classify / pca

def _data_file(path, default_name: str) -> Path:
    p = Path(path)
    if p.is_dir():
        p = p / default_name
    if not p.is_file():
        raise UsageError(f"data file not found: {p}")
    return p


def cmd_classify_train(args) -> None:
    cfg = cfgmod.load_train(args.config)
    if args.print_config:
        sys.stdout.write(cfgmod.dump(cfg, "classifier"))
        return
    started = time.perf_counter()
    train_path = _data_file(args.data, "train.jsonl")
    val_path = train_path.with_name("val.jsonl")
    x_tr, y_tr = ds.as_matrix(ds.read_jsonl(train_path))
    inputs = [train_path]
    x_va = y_va = None
    if val_path.is_file():
        x_va, y_va = ds.as_matrix(ds.read_jsonl(val_path))
        inputs.append(val_path)
    res = train_classifier(x_tr, y_tr, x_va, y_va, n_classes=len(ds.LABELS), cfg=cfg, seed=int(args.seed))
    out = _out_dir(args.out)
    save_params(res.params, out / "model.csv")
    sealed_bid.write_episode_csv(res.history, out / "loss_curve.csv")
    write_manifest(out, subcommand="classify train", config_path=args.config, seed=int(args.seed),
                   content_hash=input_hash(config_text=cfgmod.dump(cfg, "classifier"),
                                           seed=args.seed, inputs=inputs),
                   outputs=["model.csv", "loss_curve.csv"], started=started,
                   extra={"best_epoch": res.best_epoch})
    print(f"best_epoch={res.best_epoch}")


def cmd_classify_eval(args) -> None:
    started = time.perf_counter()
    model_path = _data_file(args.model, "model.csv")
    data_path = _data_file(args.data, "test.jsonl")
    params = load_params(model_path)
    x, y = ds.as_matrix(ds.read_jsonl(data_path))
    cm = confusion_matrix(predict(params, x.astype(params.W1.dtype)), y, len(ds.LABELS))
    out = _out_dir(args.out)
    with open(out / "confusion_matrix.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + ds.LABELS)
        for name, row in zip(ds.LABELS, cm):
            w.writerow([name] + [int(v) for v in row])
    recall = per_class_recall(cm)
    metrics = {"accuracy": accuracy(cm), "n": int(cm.sum()),
               "recall": {n: (None if np.isnan(r) else float(r)) for n, r in zip(ds.LABELS, recall)}}
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    write_manifest(out, subcommand="classify eval", config_path=None, seed=None,
                   content_hash=input_hash(config_text="", seed=None, inputs=[model_path, data_path]),
                   outputs=["confusion_matrix.csv", "metrics.json"], started=started)
    print(f"accuracy={metrics['accuracy']:.4f}")


def cmd_pca_project(args) -> None:
    started = time.perf_counter()
    model_path = _data_file(args.model, "model.csv")
    data_path = _data_file(args.data, "test.jsonl")
    params = load_params(model_path)
    x, y = ds.as_matrix(ds.read_jsonl(data_path))
    _, _, h2 = mlp_forward(params.astype(np.float64), x)
    model = pca_fit(h2, args.k)
    proj = pca_project(model, h2)
    out = _out_dir(args.out)
    with open(out / "pca_projection.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"pc{i + 1}" for i in range(args.k)] + ["label"])
        for row, label in zip(proj, y):
            w.writerow([f"{v:.8g}" for v in row] + [ds.LABELS[label]])
    write_manifest(out, subcommand="pca project", config_path=None, seed=None,
                   content_hash=input_hash(config_text=f"k={args.k}", seed=None,
                                           inputs=[model_path, data_path]),
                   outputs=["pca_projection.csv"], started=started,
                   extra={"explained_variance": [float(v) for v in model.explained_variance]})
    print("explained_variance=" + ",".join(f"{v:.4g}" for v in model.explained_variance))


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oppmodel", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    top = p.add_subparsers(dest="group", required=True)

    def common(sp, *, config=True, seed=True):
        if config:
            sp.add_argument("--config", help="INI config file (defaults if omitted)")
            sp.add_argument("--print-config", action="store_true",
                            help="print the effective config and exit")
        if seed:
            sp.add_argument("--seed", default=None)
        sp.add_argument("--out", required=True)

    sb = top.add_parser("sealed-bid").add_subparsers(dest="action", required=True)
    run = sb.add_parser("run", help="iterated first-price auction experiment")
    common(run)
    run.add_argument("--jobs", type=int, default=1, help="parallel seeds")
    run.set_defaults(func=cmd_sealed_bid_run)

    lob = top.add_parser("lob").add_subparsers(dest="action", required=True)
    sim = lob.add_parser("simulate", help="simulate one trading day")
    common(sim)
    sim.set_defaults(func=cmd_lob_simulate)

    dg = top.add_parser("dataset").add_subparsers(dest="action", required=True)
    gen = dg.add_parser("generate", help="balanced, split, scaled samples from order records")
    gen.add_argument("--in", dest="inputs", nargs="+", required=True)
    gen.add_argument("--per-class", type=int, default=5000)
    gen.add_argument("--ratios", default="0.536,0.134,0.334")
    gen.add_argument("--seed", default=0, type=int)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_dataset_generate)

    cl = top.add_parser("classify").add_subparsers(dest="action", required=True)
    tr = cl.add_parser("train")
    tr.add_argument("--data", required=True, help="dataset dir or train.jsonl")
    common(tr)
    tr.set_defaults(func=cmd_classify_train, seed=0)
    ev = cl.add_parser("eval")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True, help="dataset dir or a samples file")
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_classify_eval)

    pc = top.add_parser("pca").add_subparsers(dest="action", required=True)
    pj = pc.add_parser("project", help="PCA of penultimate-layer activations")
    pj.add_argument("--model", required=True)
    pj.add_argument("--data", required=True)
    pj.add_argument("--k", type=int, default=3)
    pj.add_argument("--out", required=True)
    pj.set_defaults(func=cmd_pca_project)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (cfgmod.ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
