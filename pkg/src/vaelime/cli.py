"""Command-line entry point: data generation, training, explanation, benchmarking.

Every option can come from ``--config <json>`` (keys spelled like the flags,
without the leading dashes) or from the command line; flags win. Exit codes:
0 on success, 2 for usage/configuration problems, 3 for compute failures.
"""

import argparse
import csv
import json
import logging
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from vaelime import __version__, dataio, serialize
from vaelime.blackbox import AnalyticBlackBox, AnalyticSpec, MlpConfig, default_analytic_spec, train_mlp_regressor
from vaelime.errors import DataError, SchemaError, VaeLimeError
from vaelime.sampler import ExplainConfig
from vaelime.surrogate import METHODS, explain_instance
from vaelime.vae import VaeModel, VaeTrainConfig, train_vae

logger = logging.getLogger("vaelime")

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE = 0, 2, 3
BENCHMARK_HEADER = ["instance_id", "method", "local_mse", "r2", "abs_error_at_x", "wall_ms"]


class ConfigError(Exception):
    pass


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


# (flag, type, default, help); a default of None with required=True in the
# help text means the value must come from the flag or the config file.
COMMON = [
    ("seed", int, 0, "random seed"),
    ("out", str, None, "output path"),
]
DATA_PARAMS = [("data", str, None, "CSV data file"), ("train-fraction", float, 0.8, "chronological training share")]
EXPLAIN_PARAMS = [
    ("n", int, 1000, "perturbation samples per explanation"),
    ("sigma-scale", float, 0.5, "latent sigma as a multiple of the training latent-mean std"),
    ("sigma", _floats, None, "explicit latent sigma, comma separated (overrides --sigma-scale)"),
    ("kappa", float, None, "LIME kernel width (default 0.75*sqrt(d))"),
    ("lambda", float, 1.0, "surrogate ridge penalty"),
    ("vae", str, None, "VAE model file"),
    ("blackbox", str, None, "black-box model file"),
    ("workers", int, 1, "threads for black-box queries / benchmark instances"),
]

PARAMS = {
    "gen-data": COMMON + [
        ("rows", int, 5000, "number of observations T"),
        ("features", int, 12, "number of features d"),
        ("rank", int, 3, "latent factor count k"),
        ("rho", float, 0.9, "AR(1) coefficient of the factors"),
        ("noise-std", float, 0.1, "feature noise std"),
        ("target-noise", float, 0.05, "target noise std"),
        ("mixing-seed", int, 7, "seed of the factor mixing matrix"),
        ("c", _floats, [1.0, 1.0, 0.5], "nonlinear target coefficients c1,c2,c3"),
        ("linear", _floats, None, "linear target coefficients for features 5..d"),
    ],
    "train-vae": COMMON + DATA_PARAMS + [
        ("hidden-width", int, 16, "hidden units in encoder and decoder"),
        ("latent-dim", int, None, "latent dimension (default max(2, ceil(d/4)))"),
        ("epochs", int, 150, "training epochs"),
        ("batch-size", int, 64, "mini-batch size"),
        ("kl-weight", float, 0.1, "weight of the KL term"),
        ("learning-rate", float, 3e-3, "Adam learning rate"),
        ("history", str, None, "loss-history CSV (default <out>.history.csv)"),
    ],
    "train-blackbox": COMMON + DATA_PARAMS + [
        ("kind", str, "mlp", "mlp or analytic"),
        ("target", str, "target", "target column"),
        ("hidden", _ints, [32, 16], "hidden widths, comma separated"),
        ("epochs", int, 120, "training epochs"),
        ("batch-size", int, 64, "mini-batch size"),
        ("learning-rate", float, 3e-3, "Adam learning rate"),
        ("c", _floats, [1.0, 1.0, 0.5], "analytic kind: c1,c2,c3"),
        ("linear", _floats, None, "analytic kind: coefficients for features 5..d"),
        ("metrics", str, None, "holdout-metrics JSON (default <out>.metrics.json)"),
    ],
    "explain": COMMON + DATA_PARAMS + EXPLAIN_PARAMS + [
        ("method", str, "vae-lime", "vae-lime or lime"),
        ("row", int, None, "row index of the instance in the data file"),
        ("top-k", int, 10, "number of ranked features to report"),
    ],
    "benchmark": COMMON + DATA_PARAMS + EXPLAIN_PARAMS + [
        ("instances", int, 50, "number of test instances"),
        ("select", str, "chronological", "chronological or random instance selection"),
        ("summary", str, None, "summary JSON (default <out>.summary.json)"),
    ],
}
BOOL_FLAGS = {"benchmark": [("timing", "record wall-clock ms in the CSV (breaks byte-identical reruns)")]}


def build_parser():
    parser = argparse.ArgumentParser(prog="vaelime", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"vaelime {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, params in PARAMS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file whose keys mirror the flag names")
        for flag, typ, _default, help_text in params:
            p.add_argument(f"--{flag}", type=typ, default=None, help=help_text)
        for flag, help_text in BOOL_FLAGS.get(name, []):
            p.add_argument(f"--{flag}", action="store_true", default=None, help=help_text)
    return parser


def resolve_config(command, args):
    """Merge defaults, the optional config file, and explicit flags."""
    file_cfg = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            file_cfg = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        file_cfg = {k.replace("_", "-"): v for k, v in file_cfg.items()}
    known = {flag for flag, *_ in PARAMS[command]} | {flag for flag, _ in BOOL_FLAGS.get(command, [])}
    unknown = set(file_cfg) - known
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")

    cfg = {}
    for flag, typ, default, _ in PARAMS[command]:
        cli_value = getattr(args, flag.replace("-", "_"))
        if cli_value is not None:
            cfg[flag] = cli_value
        elif flag in file_cfg and file_cfg[flag] is not None:
            try:
                cfg[flag] = typ(file_cfg[flag])
            except (TypeError, ValueError):
                raise ConfigError(f"config key {flag!r} has an invalid value {file_cfg[flag]!r}") from None
        else:
            cfg[flag] = default
    for flag, _ in BOOL_FLAGS.get(command, []):
        cli_value = getattr(args, flag)
        cfg[flag] = bool(cli_value if cli_value is not None else file_cfg.get(flag, False))
    return cfg


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join(f"--{k}" for k in missing))


def _existing(path, what):
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _output(path):
    p = Path(path)
    if not p.parent.exists():
        raise ConfigError(f"output directory does not exist: {p.parent}")
    return p


def _sibling(path, suffix):
    p = Path(path)
    return p.with_name(p.stem + suffix)


def _provenance(cfg):
    return {"tool_version": __version__, "config": cfg, "seed": cfg.get("seed")}


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, allow_nan=True) + "\n", encoding="utf-8")


def _load_split(cfg):
    data = dataio.load_csv(_existing(cfg["data"], "data file"))
    train, _test = dataio.split(data, cfg["train-fraction"])
    return data, train


def _target_spec(cfg, d):
    if cfg.get("linear") is None:
        spec = default_analytic_spec(d, c=tuple(cfg["c"]))
    else:
        spec = AnalyticSpec(*cfg["c"], linear=tuple(cfg["linear"]))
    if len(cfg["c"]) != 3:
        raise ConfigError("--c needs exactly three values")
    if spec.input_dim != d:
        raise ConfigError(f"analytic spec covers {spec.input_dim} features, data has {d}")
    return spec


def cmd_gen_data(cfg):
    _require(cfg, "out")
    out = _output(cfg["out"])
    if cfg["rank"] > cfg["features"]:
        raise ConfigError(f"rank {cfg['rank']} exceeds features {cfg['features']}")
    if cfg["features"] < 5:
        raise ConfigError("at least 5 features are needed for the analytic target")
    try:
        config = dataio.SynthConfig(
            n_rows=cfg["rows"],
            n_features=cfg["features"],
            latent_rank=cfg["rank"],
            ar_coefficient=cfg["rho"],
            noise_std=cfg["noise-std"],
            mixing_seed=cfg["mixing-seed"],
            target_noise_std=cfg["target-noise"],
            target_spec=_target_spec(cfg, cfg["features"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    ds = dataio.generate(config, seed=cfg["seed"])
    dataio.write_csv(ds, out)
    _write_json(_sibling(out, ".meta.json"), _provenance(cfg))
    logger.info("wrote %d rows x %d features to %s", len(ds), ds.n_features, out)
    return EXIT_OK


def cmd_train_vae(cfg):
    _require(cfg, "data", "out")
    out = _output(cfg["out"])
    _data, train = _load_split(cfg)
    try:
        config = VaeTrainConfig(
            hidden_width=cfg["hidden-width"],
            latent_dim=cfg["latent-dim"],
            epochs=cfg["epochs"],
            batch_size=cfg["batch-size"],
            kl_weight=cfg["kl-weight"],
            learning_rate=cfg["learning-rate"],
            seed=cfg["seed"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if len(train) < 2 * config.batch_size:
        raise ConfigError(f"training split has {len(train)} rows, need {2 * config.batch_size}")
    model = train_vae(train, config)
    serialize.save_model(model, out, feature_names=train.feature_names, config=cfg, seed=cfg["seed"])
    history = Path(cfg["history"]) if cfg["history"] else _sibling(out, ".history.csv")
    with history.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "total", "recon", "kl"])
        for epoch, loss in enumerate(model.history):
            writer.writerow([epoch, repr(loss.total), repr(loss.recon), repr(loss.kl)])
    logger.info("VAE: first epoch %s, last epoch %s", model.history[0], model.history[-1])
    return EXIT_OK


def cmd_train_blackbox(cfg):
    _require(cfg, "data", "out")
    out = _output(cfg["out"])
    data, train = _load_split(cfg)
    target = None if cfg["target"] == dataio.TARGET_COLUMN else cfg["target"]
    if target is None and train.target is None:
        raise ConfigError(f"data file has no {dataio.TARGET_COLUMN!r} column")
    if target is not None and target not in train.feature_names:
        raise ConfigError(f"target column {target!r} not in data file")
    if cfg["kind"] == "mlp":
        try:
            mcfg = MlpConfig(
                hidden=tuple(cfg["hidden"]),
                epochs=cfg["epochs"],
                batch_size=cfg["batch-size"],
                learning_rate=cfg["learning-rate"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if len(train) < 100:
            raise ConfigError(f"training split has {len(train)} rows, need at least 100")
        box = train_mlp_regressor(train, target, mcfg, seed=cfg["seed"])
        metrics = dict(box.metrics)
        names = [n for n in train.feature_names if n != target]
    elif cfg["kind"] == "analytic":
        if target is not None:
            raise ConfigError("the analytic kind explains the dataset's own target column")
        box = AnalyticBlackBox(_target_spec(cfg, train.n_features))
        _, test = dataio.split(data, cfg["train-fraction"])
        resid = box.predict(test.rows) - test.target
        metrics = {
            "holdout_mse": float(np.mean(resid**2)),
            "holdout_target_variance": float(np.var(test.target)),
        }
        names = list(train.feature_names)
    else:
        raise ConfigError(f"unknown black-box kind {cfg['kind']!r}")
    serialize.save_model(box, out, feature_names=names, config=cfg, seed=cfg["seed"])
    metrics_path = Path(cfg["metrics"]) if cfg["metrics"] else _sibling(out, ".metrics.json")
    _write_json(metrics_path, {**_provenance(cfg), "metrics": metrics})
    logger.info("black box metrics: %s", metrics)
    return EXIT_OK


def _explain_setup(cfg, need_vae):
    _require(cfg, "data", "blackbox")
    blackbox = serialize.load_model(_existing(cfg["blackbox"], "black-box model"))
    if isinstance(blackbox, VaeModel):
        raise ConfigError("--blackbox points at a VAE model")
    model = None
    if need_vae:
        _require(cfg, "vae")
        model = serialize.load_model(_existing(cfg["vae"], "VAE model"))
        if not isinstance(model, VaeModel):
            raise ConfigError("--vae does not point at a VAE model")
    data, train = _load_split(cfg)
    if blackbox.input_dim != data.n_features:
        raise ConfigError(f"black box expects {blackbox.input_dim} features, data has {data.n_features}")
    if model is not None and model.input_dim != data.n_features:
        raise ConfigError(f"VAE expects {model.input_dim} features, data has {data.n_features}")
    return data, train, blackbox, model


def _explain_config(cfg, seed):
    try:
        return ExplainConfig(
            n_samples=cfg["n"],
            sigma=cfg["sigma"],
            sigma_scale=cfg["sigma-scale"],
            kernel_width=cfg["kappa"],
            ridge_lambda=cfg["lambda"],
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_explain(cfg):
    if cfg["method"] not in METHODS:
        raise ConfigError(f"--method must be one of {METHODS}")
    if cfg["method"] == "vae-lime" and not cfg["vae"]:
        raise ConfigError("--method vae-lime requires --vae")
    _require(cfg, "row")
    if cfg["top-k"] < 1:
        raise ConfigError("--top-k must be >= 1")
    data, train, blackbox, model = _explain_setup(cfg, cfg["method"] == "vae-lime")
    if not 0 <= cfg["row"] < len(data):
        raise ConfigError(f"--row {cfg['row']} outside [0, {len(data)})")
    ecfg = _explain_config(cfg, cfg["seed"])
    if ecfg.n_samples < data.n_features + 2:
        raise ConfigError(f"--n must be at least d+2 = {data.n_features + 2}")
    exp = explain_instance(
        cfg["method"], blackbox, data.rows[cfg["row"]], data.feature_names, train.stds,
        model=model, config=ecfg, instance_id=cfg["row"], top_k=cfg["top-k"],
    )
    doc = {**_provenance(cfg), "explanation": exp.to_dict()}
    text = json.dumps(doc, indent=2) + "\n"
    if cfg["out"]:
        _output(cfg["out"]).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def select_instances(n_rows, test_start, count, mode, seed):
    """Row indices (into the full data file) of the benchmark instances."""
    pool = np.arange(test_start, n_rows)
    count = min(count, len(pool))
    if mode == "chronological":
        return pool[:count].tolist()
    if mode == "random":
        picked = np.random.default_rng(seed).choice(pool, size=count, replace=False)
        return sorted(int(i) for i in picked)
    raise ConfigError(f"--select must be chronological or random, not {mode!r}")


def _run_one(row_id, method, x, data, train, blackbox, model, cfg):
    # per-instance stream: seed + instance id, identical for both methods
    ecfg = _explain_config(cfg, cfg["seed"] + row_id)
    start = time.perf_counter()
    try:
        exp = explain_instance(method, blackbox, x, data.feature_names, train.stds,
                               model=model, config=ecfg, instance_id=row_id)
    except VaeLimeError as exc:
        logger.error("instance %d (%s) failed: %s", row_id, method, exc)
        return {"instance_id": row_id, "method": method, "failed": str(exc),
                "local_mse": float("nan"), "r2": float("nan"), "abs_error_at_x": float("nan"),
                "wall_ms": float("nan")}
    elapsed = (time.perf_counter() - start) * 1000.0
    return {"instance_id": row_id, "method": method, **exp.fidelity.as_dict(), "wall_ms": elapsed}


def summarize(rows):
    good = [r for r in rows if "failed" not in r]
    per_method = {}
    for method in METHODS:
        sel = [r for r in good if r["method"] == method]
        stats = {"n": len(sel)}
        for key in ("local_mse", "r2", "abs_error_at_x", "wall_ms"):
            vals = [r[key] for r in sel]
            stats[key] = {
                "mean": statistics.fmean(vals) if vals else None,
                "median": statistics.median(vals) if vals else None,
            }
        per_method[method] = stats
    by_instance = {}
    for r in good:
        by_instance.setdefault(r["instance_id"], {})[r["method"]] = r
    paired = [v for v in by_instance.values() if len(v) == len(METHODS)]

    def frac(better):
        if not paired:
            return None
        return sum(better(p["vae-lime"], p["lime"]) for p in paired) / len(paired)

    return {
        "methods": per_method,
        "paired_instances": len(paired),
        "vae_lime_win_fraction": {
            "local_mse": frac(lambda a, b: a["local_mse"] < b["local_mse"]),
            "r2": frac(lambda a, b: a["r2"] > b["r2"]),
            "abs_error_at_x": frac(lambda a, b: a["abs_error_at_x"] < b["abs_error_at_x"]),
        },
        "failures": len(rows) - len(good),
    }


def _fmt(value):
    return "nan" if value != value else repr(float(value))


def cmd_benchmark(cfg):
    _require(cfg, "out", "vae")
    out = _output(cfg["out"])
    if cfg["instances"] < 1:
        raise ConfigError("--instances must be >= 1")
    if cfg["workers"] < 1:
        raise ConfigError("--workers must be >= 1")
    data, train, blackbox, model = _explain_setup(cfg, True)
    if cfg["n"] < data.n_features + 2:
        raise ConfigError(f"--n must be at least d+2 = {data.n_features + 2}")
    _explain_config(cfg, cfg["seed"])
    ids = select_instances(len(data), len(train), cfg["instances"], cfg["select"], cfg["seed"])
    jobs = [(i, m) for i in ids for m in METHODS]

    def run(job):
        i, m = job
        return _run_one(i, m, data.rows[i], data, train, blackbox, model, cfg)

    if cfg["workers"] > 1:
        with ThreadPoolExecutor(max_workers=cfg["workers"]) as pool:
            rows = list(pool.map(run, jobs))
    else:
        rows = [run(job) for job in jobs]
    rows.sort(key=lambda r: (r["instance_id"], r["method"]))

    with out.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BENCHMARK_HEADER)
        for r in rows:
            wall = r["wall_ms"] if cfg["timing"] else 0.0
            writer.writerow([r["instance_id"], r["method"], _fmt(r["local_mse"]), _fmt(r["r2"]),
                             _fmt(r["abs_error_at_x"]), _fmt(wall)])
    summary = {**_provenance(cfg), "instance_ids": ids, **summarize(rows)}
    summary_path = Path(cfg["summary"]) if cfg["summary"] else _sibling(out, ".summary.json")
    _write_json(summary_path, summary)
    logger.info("benchmark: %s", summary["vae_lime_win_fraction"])
    return EXIT_COMPUTE if summary["failures"] else EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-vae": cmd_train_vae,
    "train-blackbox": cmd_train_blackbox,
    "explain": cmd_explain,
    "benchmark": cmd_benchmark,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args.command, args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, SchemaError, DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VaeLimeError as exc:
        print(f"compute error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
