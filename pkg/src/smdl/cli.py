"""Command-line surface: selection, training, ablation sweeps, scaling
benchmarks, approximation-guarantee checks, and synthetic data generation.

Every command resolves its configuration from defaults, an optional JSON
config file, and override flags (named exactly after the config keys), then
records the resolved config verbatim in its output headers. All outputs are
plain CSV/JSON for downstream plotting. Exit codes: 0 success, 1 internal
error, 2 config/validation error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, scoring, synth
from .core import (
    ConfigError,
    DataError,
    Dataset,
    ObjectiveWeights,
    Rng,
    SelectionConfig,
    load_dataset,
    sample_size,
    save_dataset,
)
from .maximize import brute_force, get_mini_batch, greedy, run_selection
from .objective import StateFactory
from .trainer import TrainerConfig, train

GREEDY_WORST_CASE = 1.0 - 1.0 / math.e

DEFAULT_CONFIG = {
    "lambda1": 0.2,
    "lambda2": 0.1,
    "lambda3": 0.5,
    "lambda4": 0.2,
    "metric": "euclidean",
    "gaussian_sigma": "median-heuristic",
    "fm_mode": "modular",
    "r_max": 1.0,
    "batch_size": 50,
    "partitions": 10,
    "epsilon": 0.1,
    "refresh_rate": 5,
    "seed": 0,
    "epochs": 20,
    "learning_rate": 0.1,
    "momentum": 0.9,
    "weight_decay": 0.0001,
    "sampler": "smdl",
    "loss_based_exponent": 100.0,
    "hidden_units": 32,
    "epoch_without_replacement": False,
    "threads": 1,
}

SWEEP_KEYS = (
    "lambda1",
    "lambda2",
    "lambda3",
    "lambda4",
    "metric",
    "learning_rate",
    "batch_size",
    "refresh_rate",
    "sampler",
    "single_term",
)


def _parse_sigma(text: str):
    if text == "median-heuristic":
        return text
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"gaussian_sigma must be a number or 'median-heuristic', got {text!r}")


def resolve_config(args) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    path = getattr(args, "config", None)
    if path:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed config JSON {path}: {e}")
        unknown = set(loaded) - set(DEFAULT_CONFIG)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in DEFAULT_CONFIG:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if cfg["threads"] is None or cfg["threads"] == DEFAULT_CONFIG["threads"]:
        env = os.environ.get("SMDL_THREADS")
        if env and getattr(args, "threads", None) is None:
            cfg["threads"] = int(env)
    if isinstance(cfg["gaussian_sigma"], str):
        cfg["gaussian_sigma"] = _parse_sigma(cfg["gaussian_sigma"])
    return cfg


def weights_from(cfg: dict) -> ObjectiveWeights:
    return ObjectiveWeights(
        lambda1=float(cfg["lambda1"]),
        lambda2=float(cfg["lambda2"]),
        lambda3=float(cfg["lambda3"]),
        lambda4=float(cfg["lambda4"]),
        metric=cfg["metric"],
        gaussian_sigma=cfg["gaussian_sigma"],
        fm_mode=cfg["fm_mode"],
        r_max=float(cfg["r_max"]),
    )


def selection_from(cfg: dict) -> SelectionConfig:
    return SelectionConfig(
        batch_size=int(cfg["batch_size"]),
        partitions=int(cfg["partitions"]),
        epsilon=float(cfg["epsilon"]),
        refresh_rate=int(cfg["refresh_rate"]),
        seed=int(cfg["seed"]),
    )


def trainer_from(cfg: dict) -> TrainerConfig:
    return TrainerConfig(
        epochs=int(cfg["epochs"]),
        batch_size=int(cfg["batch_size"]),
        learning_rate=float(cfg["learning_rate"]),
        momentum=float(cfg["momentum"]),
        weight_decay=float(cfg["weight_decay"]),
        sampler=cfg["sampler"],
        refresh_rate=int(cfg["refresh_rate"]),
        seed=int(cfg["seed"]),
        loss_based_exponent=float(cfg["loss_based_exponent"]),
        hidden_units=int(cfg["hidden_units"]),
        epoch_without_replacement=bool(cfg["epoch_without_replacement"]),
        threads=int(cfg["threads"]),
    )


def config_header(cfg: dict) -> str:
    # threads is an execution detail that never changes results (the engine is
    # deterministic across schedules), so it stays out of the recorded config
    recorded = {k: v for k, v in cfg.items() if k != "threads"}
    return "# config: " + json.dumps(recorded, sort_keys=True)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path: Path, cfg: dict, columns: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_header(cfg) + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_select(args) -> int:
    cfg = resolve_config(args)
    dataset = load_dataset(args.features, args.probs, args.labels, args.fixed_features)
    result, cache, checked = run_selection(
        dataset, weights_from(cfg), selection_from(cfg), threads=int(cfg["threads"])
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "indices.txt", "w", encoding="utf-8") as fh:
        fh.write(config_header(cfg) + "\n")
        for idx in result.indices:
            fh.write(f"{idx}\n")
    rows = []
    running = 0.0
    for step, (idx, gain) in enumerate(zip(result.indices, result.step_gains)):
        running += gain
        rows.append([step, idx, gain, running])
    write_csv(out_dir / "gains.csv", cfg, ["step", "index", "gain", "chain_value"], rows)
    if args.dump_scores:
        score_rows = [
            [i, cache.u_scores[i], cache.mc_scores[i], cache.fm_scores[i]]
            for i in range(dataset.n)
        ]
        write_csv(Path(args.dump_scores), cfg, ["index", "u", "mc", "fm"], score_rows)
    print(
        f"selected {len(result.indices)} indices "
        f"(chain={result.chain_value:.6g}, set={result.set_value:.6g}, "
        f"evaluations={result.gain_evaluations})"
    )
    return 0


def _dataset_paths(data_dir: Path, prefix: str) -> tuple[Path, Path, Path]:
    for ext in ("csv", "bin"):
        feat = data_dir / f"{prefix}_features.{ext}"
        if feat.exists():
            return feat, data_dir / f"{prefix}_probs.{ext}", data_dir / f"{prefix}_labels.txt"
    raise DataError(f"no {prefix}_features.csv or .bin under {data_dir}")


def _load_split(data_dir: Path, prefix: str) -> Dataset:
    feat, probs, labels = _dataset_paths(data_dir, prefix)
    return load_dataset(feat, probs, labels)


def _run_train(cfg: dict, train_ds: Dataset, test_ds: Dataset):
    return train(
        train_ds, test_ds, trainer_from(cfg), selection_from(cfg), weights_from(cfg)
    )


def _summary(reports) -> dict:
    return {
        "mean_accuracy": float(np.mean([r.test_accuracy for r in reports])),
        "final_accuracy": reports[-1].test_accuracy,
        "mean_loss": float(np.mean([r.test_loss for r in reports])),
        "final_loss": reports[-1].test_loss,
    }


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    data_dir = Path(args.data_dir)
    train_ds = _load_split(data_dir, "train")
    test_ds = _load_split(data_dir, "test")
    result = _run_train(cfg, train_ds, test_ds)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    columns = [
        "epoch",
        "train_loss",
        "train_accuracy",
        "test_loss",
        "test_accuracy",
        "batches_selected",
    ]
    if args.with_timings:
        columns += ["selection_time", "step_time"]
    rows = []
    for r in result.reports:
        row = [
            r.epoch,
            r.train_loss,
            r.train_accuracy,
            r.test_loss,
            r.test_accuracy,
            r.batches_selected,
        ]
        if args.with_timings:
            row += [r.selection_time, r.step_time]
        rows.append(row)
    write_csv(out_dir / "epochs.csv", cfg, columns, rows)
    recorded = {k: v for k, v in cfg.items() if k != "threads"}
    summary = {
        "config": recorded,
        "refresh_count": result.refresh_count,
        **_summary(result.reports),
    }
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    last = result.reports[-1]
    print(
        f"trained {cfg['epochs']} epochs ({cfg['sampler']}): "
        f"final test acc {last.test_accuracy:.4f}, loss {last.test_loss:.4f}"
    )
    return 0


def cmd_gen_synth(args) -> int:
    cfg = resolve_config(args)
    spec = synth.BlobSpec(
        classes=args.classes,
        dim=args.dim,
        n_train=args.train,
        n_test=args.test,
        noise=args.noise,
        scale=args.scale,
        seed=int(cfg["seed"]),
    )
    train_ds, test_ds = synth.make_blobs(spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for prefix, ds in (("train", train_ds), ("test", test_ds)):
        save_dataset(out_dir, prefix, ds.features, ds.probs, ds.labels, fmt=args.format)
    manifest = {
        "classes": spec.classes,
        "dim": spec.dim,
        "n_train": spec.n_train,
        "n_test": spec.n_test,
        "noise": spec.noise,
        "scale": spec.scale,
        "seed": spec.seed,
        "format": args.format,
    }
    with open(out_dir / "gensynth.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"wrote blobs ({spec.n_train} train / {spec.n_test} test) to {out_dir}")
    return 0


def _parse_sweep(specs: list[str]) -> dict[str, list]:
    sweep: dict[str, list] = {}
    for spec in specs:
        if "=" not in spec:
            raise ConfigError(f"sweep must look like key=v1,v2,... got {spec!r}")
        key, _, values = spec.partition("=")
        key = key.strip()
        if key not in SWEEP_KEYS:
            raise ConfigError(f"cannot sweep {key!r}; allowed: {SWEEP_KEYS}")
        parsed = []
        for raw in values.split(","):
            raw = raw.strip()
            if key in ("metric", "sampler"):
                parsed.append(raw)
            elif key in ("batch_size", "refresh_rate", "single_term"):
                parsed.append(int(raw))
            else:
                parsed.append(float(raw))
        if not parsed:
            raise ConfigError(f"empty value list for sweep key {key!r}")
        sweep[key] = parsed
    if not sweep:
        raise ConfigError("empty sweep grid; pass at least one --sweep key=v1,v2,...")
    return sweep


def _parse_seeds(text: str) -> list[int]:
    if "," in text:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    return list(range(int(text)))


def _apply_cell(cfg: dict, cell: dict) -> dict:
    out = dict(cfg)
    for key, value in cell.items():
        if key == "single_term":
            for i in range(1, 5):
                out[f"lambda{i}"] = 1.0 if i == value else 0.0
            out["sampler"] = "smdl"
        else:
            out[key] = value
    return out


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    sweep = _parse_sweep(args.sweep or [])
    seeds = _parse_seeds(args.seeds)
    if not seeds:
        raise ConfigError("no seeds given")
    data_dir = Path(args.data_dir)
    train_ds = _load_split(data_dir, "train")
    test_ds = _load_split(data_dir, "test")
    keys = sorted(sweep)
    rows = []
    for combo in itertools.product(*(sweep[k] for k in keys)):
        cell = dict(zip(keys, combo))
        cell_text = ";".join(f"{k}={cell[k]}" for k in keys)
        for seed in seeds:
            run_cfg = _apply_cell(cfg, cell)
            run_cfg["seed"] = seed
            result = _run_train(run_cfg, train_ds, test_ds)
            s = _summary(result.reports)
            rows.append(
                [
                    cell_text,
                    seed,
                    s["mean_accuracy"],
                    s["final_accuracy"],
                    s["mean_loss"],
                    s["final_loss"],
                ]
            )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(
        out_dir / "ablate.csv",
        cfg,
        ["cell", "seed", "mean_accuracy", "final_accuracy", "mean_loss", "final_loss"],
        rows,
    )
    print(f"wrote {len(rows)} ablation rows to {out_dir / 'ablate.csv'}")
    return 0


def bench_selection(
    sizes: list[int],
    weights: ObjectiveWeights,
    sel: SelectionConfig,
    repeats: int = 3,
    threads: int = 1,
) -> list[dict]:
    """Mean per-batch selection time and gain-evaluation counts per ground-set
    size, with the algorithmic evaluation bound m*b*s + b*s for comparison."""
    out = []
    for n in sorted(sizes):
        dataset = synth.random_instance(sel.seed, n, dim=16, classes=4, fixed_dims=8)
        cache = scoring.refresh(None, dataset, 0, sel, weights)
        factory = StateFactory(dataset, weights, cache)
        s = sample_size(n, sel.batch_size, sel.epsilon)
        rng = Rng(sel.seed)
        get_mini_batch(
            dataset, sel.batch_size, sel.partitions, sel.epsilon,
            rng.fork("warmup"), factory, threads=threads,
        )
        times = []
        evals = 0
        for rep in range(repeats):
            t0 = time.perf_counter()
            result = get_mini_batch(
                dataset, sel.batch_size, sel.partitions, sel.epsilon,
                rng.fork("rep", rep), factory, threads=threads,
            )
            times.append(time.perf_counter() - t0)
            evals = max(evals, result.gain_evaluations)
        out.append(
            {
                "n": n,
                "repeats": repeats,
                "mean_seconds": float(np.mean(times)),
                "gain_evaluations": evals,
                "eval_bound": sel.partitions * sel.batch_size * s + sel.batch_size * s,
                "sample_size": s,
            }
        )
    return out


def cmd_bench(args) -> int:
    cfg = resolve_config(args)
    sizes = [int(tok) for tok in args.sizes.split(",") if tok.strip()]
    if not sizes:
        raise ConfigError("no sizes given")
    results = bench_selection(
        sizes,
        weights_from(cfg),
        selection_from(cfg),
        repeats=args.repeats,
        threads=int(cfg["threads"]),
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    columns = ["n", "repeats", "mean_seconds", "gain_evaluations", "eval_bound", "sample_size"]
    rows = [[r[c] for c in columns] for r in results]
    write_csv(out_dir / "bench.csv", cfg, columns, rows)
    for r in results:
        print(
            f"n={r['n']}: {r['mean_seconds'] * 1e3:.2f} ms/batch, "
            f"{r['gain_evaluations']} evaluations (bound {r['eval_bound']})"
        )
    return 0


def cmd_oracle_check(args) -> int:
    cfg = resolve_config(args)
    # The worst-case ratio only holds for a monotone submodular normalized
    # objective, so the check forces the certifiable configuration.
    weights = replace(weights_from(cfg), lambda2=0.0, fm_mode="set")
    if weights.lambda1 == weights.lambda3 == weights.lambda4 == 0:
        weights = replace(weights, lambda1=0.3, lambda3=0.3, lambda4=0.4)
    rows = []
    violations = 0
    for k in range(args.instances):
        seed = args.base_seed + k
        dataset = synth.random_instance(seed, args.n)
        factory = synth.make_factory(dataset, weights, seed=seed)
        pool = np.arange(dataset.n)
        g = greedy(pool, args.b, factory)
        opt = brute_force(pool, args.b, factory, mode="set")
        ratio = g.set_value / opt.set_value if opt.set_value > 0 else 1.0
        if ratio < GREEDY_WORST_CASE - 1e-12:
            violations += 1
        rows.append([seed, g.set_value, opt.set_value, ratio])
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(
        out_dir / "oracle_check.csv",
        cfg,
        ["instance_seed", "greedy_value", "opt_value", "ratio"],
        rows,
    )
    worst = min(r[3] for r in rows)
    print(
        f"{args.instances} instances, worst ratio {worst:.4f} "
        f"(bound {GREEDY_WORST_CASE:.4f}), violations: {violations}"
    )
    return 1 if violations else 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; keys mirror the config field names")
    p.add_argument("--out-dir", default=".", help="directory for output files")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="partition-level parallelism (env SMDL_THREADS)")
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--lambda3", type=float)
    p.add_argument("--lambda4", type=float)
    p.add_argument("--metric", choices=["euclidean", "cosine", "correlation", "gaussian"])
    p.add_argument("--gaussian-sigma", dest="gaussian_sigma", type=_parse_sigma)
    p.add_argument("--fm-mode", dest="fm_mode", choices=["modular", "set"])
    p.add_argument("--r-max", dest="r_max", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--partitions", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--refresh-rate", dest="refresh_rate", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--sampler", choices=["uniform", "loss_based", "smdl"])
    p.add_argument("--loss-based-exponent", dest="loss_based_exponent", type=float)
    p.add_argument("--hidden-units", dest="hidden_units", type=int)
    p.add_argument(
        "--epoch-without-replacement",
        dest="epoch_without_replacement",
        action="store_const",
        const=True,
        default=None,
        help="exclude points already consumed this epoch from selection",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smdl",
        description="Submodular mini-batch selection engine and training harness.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="run one partitioned batch selection on dataset files")
    p.add_argument("--features", required=True)
    p.add_argument("--probs", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--fixed-features", dest="fixed_features")
    p.add_argument("--dump-scores", dest="dump_scores", help="also write per-point score CSV")
    _add_config_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("train", help="train the reference classifier with a batch sampler")
    p.add_argument("--data-dir", required=True, help="directory produced by gen-synth")
    p.add_argument("--with-timings", action="store_true", help="include wall-clock columns")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="grid sweep of config values, one train run per cell/seed")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--sweep", action="append", help="key=v1,v2,... (repeatable)")
    p.add_argument("--seeds", default="1", help="seed count N (0..N-1) or comma list")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench", help="selection timing/evaluation counts across ground-set sizes")
    p.add_argument("--sizes", required=True, help="comma list of ground-set sizes")
    p.add_argument("--repeats", type=int, default=3)
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("oracle-check", help="greedy vs exhaustive-optimum ratio suite")
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--n", type=int, default=12)
    p.add_argument("--b", type=int, default=3)
    p.add_argument("--base-seed", dest="base_seed", type=int, default=0)
    _add_config_flags(p)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("gen-synth", help="write Gaussian-blob train/test dataset files")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--train", type=int, default=2000)
    p.add_argument("--test", type=int, default=1000)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--format", choices=["csv", "bin"], default="csv")
    _add_config_flags(p)
    p.set_defaults(func=cmd_gen_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
