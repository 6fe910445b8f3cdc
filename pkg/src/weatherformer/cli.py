"""Command-line entry point.

Every subcommand writes ``config.json`` (the fully resolved options) into its
output directory before doing any work; passing that file back through
``--config`` reruns the same job. Exit codes: 0 success, 1 runtime failure,
2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .autodiff import load_checkpoint, save_checkpoint
from .config import ConfigError, coerce, load_config
from .downstream import cropyield, flu
from .downstream.training import FLU_TRAINING, YIELD_TRAINING, TrainConfig
from .model import PRESETS, ModelConfig, WeatherFormer, preset
from .pretrain import TASKS, PretrainConfig, evaluate, init_task, pretrain, write_history
from .svg import columns, write_chart
from .weather import (
    SequenceSet,
    StandardizationStats,
    SyntheticSpec,
    aggregate_tile,
    compute_stats,
    generate_synthetic,
    impute_missing,
    read_store,
    sequences_from_tiles,
    split_dataset,
    write_store,
)
from .weather import power
from .weather.power import with_derived

log = logging.getLogger("weatherformer")


class UsageError(Exception):
    """Bad flags or configuration; exit code 2."""


# --------------------------------------------------------------------------
# argument parsing

def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("common options")
    g.add_argument("--config", help="flat TOML/JSON config file; flags override its values")
    g.add_argument("--seed", type=int, default=0, help="single source of all randomness")
    g.add_argument("--out", help="output directory (default: runs/<command>)")
    g.add_argument("--threads", type=int, default=1, help="BLAS thread cap; 1 is deterministic")
    g.add_argument("--deterministic", action="store_true", help="force single-threaded deterministic mode")
    g.add_argument("--offline", action="store_true", help="never touch the network")
    g.add_argument("-v", "--verbose", action="store_true")


def _train_flags(p: argparse.ArgumentParser, defaults: TrainConfig) -> None:
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--batch-size", type=int, default=defaults.batch_size)
    p.add_argument("--lr", type=float, default=defaults.base_lr)
    p.add_argument("--warmup", type=int, default=defaults.warmup)
    p.add_argument("--decay", type=float, default=defaults.decay)


def _encoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--encoder", help="WeatherFormer checkpoint (default: fresh weights)")
    p.add_argument("--model", default="tiny", choices=sorted(PRESETS), help="preset for a fresh encoder")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weatherformer", description="Weather encoder pretraining and downstream tasks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("fetch", help="download a tile of daily weather into a store")
    p.add_argument("--bounds", type=float, nargs=4, metavar=("LAT0", "LAT1", "LNG0", "LNG1"))
    p.add_argument("--years", type=int, nargs=2, metavar=("FIRST", "LAST"))
    p.add_argument("--endpoint", help="API endpoint (overrides $%s)" % power.ENDPOINT_ENV)
    p.add_argument("--tile-id", type=int, default=0)

    p = sub.add_parser("derive", help="recompute derived columns and impute missing cells")
    p.add_argument("--input", help="tile store (required)")

    p = sub.add_parser("aggregate", help="aggregate daily tiles to weekly or monthly")
    p.add_argument("--input", help="tile store (required)")
    p.add_argument("--granularity", type=int, choices=(7, 30), default=7)

    p = sub.add_parser("synth", help="generate synthetic daily tiles")
    p.add_argument("--tiles", type=int, default=4)
    p.add_argument("--coords", type=int, default=16)
    p.add_argument("--years", type=int, nargs=2, default=[2000, 2001], metavar=("FIRST", "LAST"))
    p.add_argument("--noise", type=float, default=0.1)

    p = sub.add_parser("pretrain", help="pretrain a WeatherFormer")
    p.add_argument("--task", choices=TASKS, default="masked-feature")
    p.add_argument("--model", default="desk", choices=sorted(PRESETS))
    p.add_argument("--data", help="tile store of daily tiles")
    p.add_argument("--synth", action="store_true", help="use a small synthetic corpus")
    p.add_argument("--windows", default="1:56,7:52", help="granularity:length pairs")
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--mlm-rate", type=float, default=0.15)
    _train_flags(p, TrainConfig(75, 64, 5e-4, 10, 0.99))

    p = sub.add_parser("finetune-yield", help="crop-yield protocol (5 state-level folds)")
    p.add_argument("--variant", choices=cropyield.VARIANTS, default="wf-transformer")
    p.add_argument("--data", help="yield CSV")
    p.add_argument("--synth", action="store_true", help="use the synthetic yield benchmark")
    p.add_argument("--history", type=int, help="years of history (variant default when omitted)")
    p.add_argument("--folds", type=int, default=5)
    _encoder_flags(p)
    _train_flags(p, YIELD_TRAINING)

    p = sub.add_parser("finetune-flu", help="influenza forecasting protocol (sequential splits)")
    p.add_argument("--variant", choices=(*flu.VARIANTS, "arima", "linreg"), default="wf")
    p.add_argument("--data", help="ILI CSV")
    p.add_argument("--synth", action="store_true", help="use the synthetic city")
    p.add_argument("--window", type=int, default=flu.WINDOWS[0], choices=flu.WINDOWS)
    p.add_argument("--years", type=int, nargs="+", default=list(flu.VALIDATION_YEARS), help="validation years")
    p.add_argument("--latitude", type=float, default=40.7)
    p.add_argument("--longitude", type=float, default=-74.0)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--layers", type=int, default=3)
    _encoder_flags(p)
    _train_flags(p, FLU_TRAINING)

    p = sub.add_parser("evaluate", help="pretraining losses of a checkpoint on a corpus")
    p.add_argument("--checkpoint", help="pretraining checkpoint (required)")
    p.add_argument("--data", help="tile store")
    p.add_argument("--synth", action="store_true")
    p.add_argument("--windows", default="1:56,7:52")
    p.add_argument("--mlm-rate", type=float, default=0.15)

    p = sub.add_parser("export", help="summarize a run: metrics CSV and loss-curve SVG")
    p.add_argument("--run", help="run directory (required)")

    for action in sub.choices.values():
        _common(action)
    return parser


def _option_types(sub: argparse.ArgumentParser) -> dict:
    out = {}
    for a in sub._actions:
        if a.dest in ("help", "config"):
            continue
        if isinstance(a, argparse._StoreTrueAction):
            out[a.dest] = bool
        else:
            out[a.dest] = a.type or str
    return out


def parse_args(argv) -> argparse.Namespace:
    """Parse flags, layering config-file values below explicit flags."""
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    if args.config:
        try:
            values = load_config(args.config)
        except ConfigError as exc:
            raise UsageError(str(exc)) from None
        values.pop("command", None)
        kinds = _option_types(sub)
        unknown = sorted(set(values) - set(kinds))
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        try:
            sub.set_defaults(**{k: coerce(k, v, kinds[k]) for k, v in values.items()})
        except ConfigError as exc:
            raise UsageError(str(exc)) from None
        args = parser.parse_args(argv)
        args.config = str(Path(args.config))
    if args.deterministic:
        args.threads = 1
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    return args


# --------------------------------------------------------------------------
# helpers

def _out_dir(args) -> Path:
    out = Path(args.out or Path("runs") / args.command)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot(args, out: Path) -> None:
    snap = {k: v for k, v in vars(args).items() if k not in ("config", "out", "verbose")}
    (out / "config.json").write_text(json.dumps(snap, indent=2, sort_keys=True) + "\n")


def _need_file(path, flag: str = "") -> Path:
    if path is None:
        raise UsageError(f"missing required option {flag}")
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"input file not found: {p}")
    return p


def _windows(spec: str) -> list:
    try:
        pairs = [tuple(int(v) for v in item.split(":")) for item in spec.split(",") if item]
    except ValueError:
        raise UsageError(f"bad --windows value {spec!r}; expected e.g. 1:56,7:52") from None
    if not pairs or any(len(p) != 2 or p[0] not in (1, 7, 30) or p[1] < 1 for p in pairs):
        raise UsageError(f"bad --windows value {spec!r}; expected e.g. 1:56,7:52")
    return pairs


def _sequences(tiles, windows, stats) -> SequenceSet:
    sets = [sequences_from_tiles(tiles, g, n, stats, stride=n if g == 1 else max(n // 2, 1)) for g, n in windows]
    return SequenceSet.concat(sets)


def _corpus_tiles(args, seed: int) -> list:
    if args.synth == bool(args.data):
        raise UsageError("give exactly one of --data or --synth")
    if args.synth:
        return generate_synthetic(SyntheticSpec(n_tiles=3, coords_per_tile=4, start_year=2000, end_year=2000,
                                                lat_range=(28.0, 46.0), lng_range=(-106.0, -76.0)), seed)
    tiles = read_store(_need_file(args.data))
    if any(t.granularity_days != 1 for t in tiles):
        raise UsageError("pretraining expects daily tiles (aggregation happens per window)")
    return [impute_missing(t) for t in tiles]


def _write_rows(path: Path, rows: list) -> None:
    if not rows:
        raise ValueError(f"no rows for {path.name}")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in r.items()})


def _train_config(args) -> TrainConfig:
    return TrainConfig(args.epochs, args.batch_size, args.lr, args.warmup, args.decay, args.seed)


def _load_encoder(args, seed: int) -> tuple:
    """(WeatherFormer, StandardizationStats or None)."""
    if not args.encoder:
        return WeatherFormer(preset(args.model), seed=seed), None
    params, config, extra = load_checkpoint(_need_file(args.encoder))
    wf = WeatherFormer(ModelConfig.from_dict(config), seed=seed)
    wf.load_state_dict(params)
    stats = StandardizationStats.from_dict(extra["stats"]) if extra and "stats" in extra else None
    return wf, stats


# --------------------------------------------------------------------------
# subcommands

def cmd_fetch(args, out: Path) -> None:
    if args.offline:  # the bundled sample; no request is made
        tile = power.fetch_tile(None, None, offline=True)
    else:
        if not args.bounds or not args.years:
            raise UsageError("fetch needs --bounds and --years (or --offline for the bundled sample)")
        endpoint = args.endpoint or power.resolve_endpoint()
        tile = power.fetch_tile(args.bounds, tuple(args.years), endpoint, tile_id=args.tile_id)
    write_store([tile], out / "tiles.wfds")
    log.info("wrote %d coordinates x %d days", tile.n_coords, tile.values.shape[1])


def cmd_derive(args, out: Path) -> None:
    tiles = read_store(_need_file(args.input, "--input"))
    done = []
    for t in tiles:
        if t.granularity_days != 1:
            raise UsageError("derive expects daily tiles")
        vals = with_derived(t.values[..., :28].astype(np.float64))
        done.append(impute_missing(dataclasses.replace(t, values=vals.astype(np.float32))))
    write_store(done, out / "tiles.wfds")


def cmd_aggregate(args, out: Path) -> None:
    tiles = [aggregate_tile(impute_missing(t), args.granularity) for t in read_store(_need_file(args.input, "--input"))]
    write_store(tiles, out / "tiles.wfds")


def cmd_synth(args, out: Path) -> None:
    spec = SyntheticSpec(n_tiles=args.tiles, start_year=args.years[0], end_year=args.years[1], noise=args.noise,
                         coords_per_tile=args.coords)
    write_store(generate_synthetic(spec, args.seed), out / "tiles.wfds")


def cmd_pretrain(args, out: Path) -> None:
    windows = _windows(args.windows)
    tiles = _corpus_tiles(args, args.seed)
    if len(tiles) < 2:
        raise UsageError("pretraining needs at least two tiles for a train/validation split")
    train_tiles, val_tiles = split_dataset(tiles, args.val_fraction, args.seed)
    stats = compute_stats(train_tiles)
    train, val = _sequences(train_tiles, windows, stats), _sequences(val_tiles, windows, stats)
    model = WeatherFormer(preset(args.model, max_len=max(n for _, n in windows)), seed=args.seed)
    cfg = PretrainConfig(args.epochs, args.batch_size, args.lr, args.warmup, args.decay, args.seed, args.task,
                         args.mlm_rate)
    res = pretrain(model, train, val, cfg, eval_train=True,
                   log=lambda r: log.info("epoch %d  val %.5f", r["epoch"], r["val_loss"]))
    write_history(out / "losses.csv", res.history)
    save_checkpoint(out / "checkpoint.wfck", res.best_state, model.config.to_dict(),
                    {"best_epoch": res.best_epoch, "best_val": res.best_val, "task": args.task,
                     "stats": stats.to_dict()})
    _write_rows(out / "metrics.csv", [{"task": args.task, "best_epoch": res.best_epoch, "best_val_loss": res.best_val,
                                       "train_sequences": len(train), "val_sequences": len(val)}])


def cmd_finetune_yield(args, out: Path) -> None:
    if args.synth == bool(args.data):
        raise UsageError("give exactly one of --data or --synth")
    data = cropyield.synthetic_yield_data(seed=args.seed) if args.synth else cropyield.read_yield_csv(_need_file(args.data))
    plan = cropyield.SplitPlan.make(data.states(), args.seed, n_folds=args.folds)
    losses = []
    stats_holder = {}

    def make(k):
        wf, stats = _load_encoder(args, args.seed + k) if args.variant.startswith("wf") else (None, None)
        stats_holder["stats"] = stats
        return cropyield.build_model(args.variant, data.n_practices, args.seed + k, args.history, wf)

    results = []
    for k, (tr, va) in enumerate(plan.folds):
        model = make(k)
        score, fr = cropyield.train_fold(model, data, tr, va, _train_config(args), stats_holder["stats"],
                                         log=lambda r, k=k: log.info("fold %d epoch %d  rmse %.3f", k, r["epoch"],
                                                                     r["val_metric"]))
        results.append({"fold": k, "train_states": " ".join(map(str, tr)), "val_states": " ".join(map(str, va)),
                        "rmse": score, "best_epoch": -1 if fr is None else fr.best_epoch})
        if fr is not None:
            losses += [{"fold": k, **r} for r in fr.history]
    results.append({"fold": "mean", "train_states": "", "val_states": "",
                    "rmse": float(np.mean([r["rmse"] for r in results])), "best_epoch": ""})
    _write_rows(out / "metrics.csv", results)
    if losses:
        _write_rows(out / "losses.csv", losses)


def cmd_finetune_flu(args, out: Path) -> None:
    if args.synth == bool(args.data):
        raise UsageError("give exactly one of --data or --synth")
    series = flu.synthetic_ili(args.seed) if args.synth else flu.read_ili_csv(_need_file(args.data), args.latitude,
                                                                             args.longitude)
    splits = flu.sequential_splits(series, tuple(args.years))
    rows, losses, results = [], [], []
    for split in splits:
        if args.variant in ("arima", "linreg"):
            res = flu.run_baseline_split(series, split, args.variant, args.window)
        else:
            wf, stats = _load_encoder(args, args.seed) if args.variant == "wf" else (None, None)
            res = flu.run_transformer_split(
                series, split, args.variant, args.window, args.seed, _train_config(args), wf,
                flu.temperature_scale(stats) if stats is not None else None, d_model=args.d_model,
                n_layers=args.layers,
                log=lambda r, y=split.validation_year: log.info("%d epoch %d  mae %.4f", y, r["epoch"], r["val_metric"]))
            losses += [{"validation_year": split.validation_year, **r} for r in res.fit.history]
        results.append(res)
        rows.append({"validation_year": split.validation_year, **{f"mae_{k}": v for k, v in res.mae.items()}})
    rows.append({"validation_year": "mean", **{f"mae_{k}": v for k, v in flu.average_splits(results).items()}})
    _write_rows(out / "metrics.csv", rows)
    if losses:
        _write_rows(out / "losses.csv", losses)


def cmd_evaluate(args, out: Path) -> None:
    params, config, extra = load_checkpoint(_need_file(args.checkpoint, "--checkpoint"))
    model = WeatherFormer(ModelConfig.from_dict(config))
    model.load_state_dict(params)
    tiles = _corpus_tiles(args, args.seed)
    stats = StandardizationStats.from_dict(extra["stats"]) if extra and "stats" in extra else compute_stats(
        [dataclasses.replace(t, split="train") for t in tiles])
    data = _sequences(tiles, _windows(args.windows), stats)
    rows = []
    for task in TASKS:
        cfg = PretrainConfig(task=task, seed=args.seed, mlm_rate=args.mlm_rate)
        part = init_task([args.seed, 2]) if task == "masked-feature" else None
        rows.append({"task": task, "loss": evaluate(model, data, cfg, part, seed=args.seed + 7),
                     "sequences": len(data)})
    _write_rows(out / "metrics.csv", rows)


def cmd_export(args, out: Path) -> None:
    run = Path(args.run)
    path = _need_file(run / "losses.csv")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    names = [c for c in rows[0] if c.endswith("loss") or c == "val_metric"]
    group = next((g for g in ("fold", "validation_year") if g in rows[0]), None)
    summary = []
    series = {}
    for key in sorted({r[group] for r in rows} if group else {None}, key=str):
        sub = [r for r in rows if group is None or r[group] == key]
        for name, (xs, ys) in columns(sub, "epoch", names).items():
            label = name if group is None else f"{name} ({group} {key})"
            series[label] = (xs, ys)
            best = int(np.argmin(ys))
            summary.append({"series": label, "epochs": len(ys), "first": ys[0], "last": ys[-1],
                            "best": ys[best], "best_epoch": int(xs[best])})
    _write_rows(out / "metrics.csv", summary)
    positive = all(y > 0 for _, ys in series.values() for y in ys)
    write_chart(out / "loss_curve.svg", series, title=run.name, log_y=positive and len(series) <= 8)


COMMANDS = {
    "fetch": cmd_fetch, "derive": cmd_derive, "aggregate": cmd_aggregate, "synth": cmd_synth,
    "pretrain": cmd_pretrain, "finetune-yield": cmd_finetune_yield, "finetune-flu": cmd_finetune_flu,
    "evaluate": cmd_evaluate, "export": cmd_export,
}


def run(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse has printed usage
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"weatherformer: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "export" and not args.run:
        print("weatherformer: error: missing required option --run", file=sys.stderr)
        return 2
    if args.command == "export" and not args.out:
        args.out = str(Path(args.run) / "export")
    try:
        out = _out_dir(args)
        _snapshot(args, out)
        with threadpool_limits(limits=args.threads):
            COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"weatherformer: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any failure becomes a diagnostic and exit 1
        if args.verbose:
            raise
        print(f"weatherformer: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
