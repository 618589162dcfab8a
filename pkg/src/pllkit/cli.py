"""Command-line experiment harness.

Subcommands:
    corrupt   build a partially labeled container from a supervised dataset
    train     run one configuration across seeds; emit metrics + checkpoints
    sweep     repeat train along one axis (q, strategy, or lr)
    repro     canned presets with pass/fail targets against reference numbers

All randomness flows from the seeds in the config, so rerunning any command
with an identical config rewrites identical output bytes (metrics CSVs,
containers, checkpoints). Wall-clock timings go to a separate timing CSV so
they never break that guarantee.

Exit codes: 0 success, 2 configuration or usage error, 3 data error,
4 training divergence.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import data as datamod
from .data import FlipSpec, load_partial, save_partial
from .errors import (
    ConfigError,
    ConsistencyError,
    DataFormatError,
    DivergenceError,
    DomainError,
    InsufficientDataError,
    MissingTruthError,
    PllkitError,
)
from .evaluate import summarize_seeds
from .network import save_checkpoint
from .training import TrainConfig, train
from .weighting import Strategy

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

DEFAULT_CONFIG = {
    "dataset": {
        "source": "csv",  # csv | idx | synthetic | partial
        "path": "",  # csv file or partial container
        "label_column": -1,
        "skip_header": False,
        "normalize": True,
        "test_fraction": 0.1,
        "split_seed": 7,
        "limit": 0,  # keep only the first N training rows (0 = all)
        "images": "",  # idx source
        "labels": "",
        "test_images": "",
        "test_labels": "",
        "n": 3000,  # synthetic source
        "test_n": 1000,
        "classes": 3,
        "dim": 2,
        "sigma": 0.3,
        "separation": 4.0,
        "data_seed": 0,
    },
    "flip": {"kind": "binomial", "q": 0.1, "seed": 0},
    "model": {"arch": "linear", "hidden": []},
    "train": {
        "epochs": 500,
        "batch_size": 256,
        "learning_rate": 0.0,  # 0 = architecture default
        "momentum": 0.9,
        "l2": 1e-4,
        "loss": "ce",
        "strategy": "progressive",
        "mode": "pll",
        "checkpoint_every": 0,
    },
    "run": {"seeds": [1, 2, 3, 4, 5], "out": "runs/run"},
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_override(text: str):
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not KEY=VALUE")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw  # bare string
    return key.strip(), value


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        try:
            with open(path, "rb") as f:
                cfg = _deep_merge(cfg, tomllib.load(f))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
    for text in overrides or []:
        key, value = _parse_override(text)
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return cfg


def echo_config(cfg: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "resolved_config.json", "w") as f:
        json.dump(cfg, f, indent=2, sort_keys=True)
        f.write("\n")


def _resolve_path(raw: str, data_dir: str | None) -> Path:
    path = Path(raw)
    if not path.is_absolute() and data_dir and not path.exists():
        candidate = Path(data_dir) / path
        if candidate.exists():
            return candidate
    return path


def build_datasets(cfg: dict, data_dir: str | None = None):
    """Materialize (train_supervised, test_supervised_or_None) from the config.

    CSV sources are z-scored as a whole before the stratified split, so both
    halves share the same column statistics. IDX sources arrive scaled to
    [0, 1] and are left as-is unless normalize is set.
    """
    ds = cfg["dataset"]
    source = ds["source"]
    if source == "csv":
        if not ds["path"]:
            raise ConfigError("dataset.path is required for a csv source")
        full = datamod.load_csv(
            _resolve_path(ds["path"], data_dir), ds["label_column"], ds["skip_header"]
        )
        if ds["normalize"]:
            full = datamod.zscore_normalize(full)
        if ds["test_fraction"] > 0:
            train_sup, test_sup = datamod.stratified_split(
                full, ds["test_fraction"], ds["split_seed"]
            )
        else:
            train_sup, test_sup = full, None
    elif source == "idx":
        if not ds["images"] or not ds["labels"]:
            raise ConfigError("dataset.images and dataset.labels are required for an idx source")
        train_sup = datamod.load_idx(
            _resolve_path(ds["images"], data_dir), _resolve_path(ds["labels"], data_dir)
        )
        test_sup = None
        if ds["test_images"]:
            test_sup = datamod.load_idx(
                _resolve_path(ds["test_images"], data_dir),
                _resolve_path(ds["test_labels"], data_dir),
            )
        if ds["normalize"]:
            train_sup = datamod.zscore_normalize(train_sup)
            if test_sup is not None:
                test_sup = datamod.zscore_normalize(test_sup)
    elif source == "synthetic":
        train_sup = datamod.make_gaussian_clusters(
            ds["n"], ds["classes"], ds["dim"], ds["sigma"], ds["separation"], seed=ds["data_seed"]
        )
        test_sup = datamod.make_gaussian_clusters(
            ds["test_n"], ds["classes"], ds["dim"], ds["sigma"], ds["separation"],
            seed=ds["data_seed"] + 1,
        )
    else:
        raise ConfigError(f"unknown dataset.source {source!r}")

    limit = int(ds.get("limit", 0))
    if limit and train_sup.n > limit:
        train_sup = datamod.SupervisedDataset(
            train_sup.features[:limit], train_sup.labels[:limit], train_sup.class_count
        )
    return train_sup, test_sup


def _corrupt(train_sup, flip_cfg: dict, seed: int):
    spec = FlipSpec(flip_cfg["kind"], flip_cfg["q"], seed)
    if spec.kind == "binomial":
        return datamod.corrupt_binomial(train_sup, spec)
    return datamod.corrupt_pair(train_sup, spec)


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    tr = cfg["train"]
    lr = tr["learning_rate"] or None
    return TrainConfig(
        epochs=tr["epochs"],
        batch_size=tr["batch_size"],
        learning_rate=lr,
        momentum=tr["momentum"],
        l2=tr["l2"],
        loss=tr["loss"],
        strategy=Strategy.parse(tr["strategy"]),
        seed=seed,
        mode=tr["mode"],
        checkpoint_every=tr.get("checkpoint_every", 0),
    )


def _model_args(cfg: dict):
    model = cfg["model"]
    hidden = tuple(model["hidden"]) or None
    return model["arch"], hidden


def cmd_corrupt(cfg: dict, out_dir: Path, data_dir: str | None) -> int:
    """Write a partial-dataset container plus an ambiguity report."""
    echo_config(cfg, out_dir)
    train_sup, _ = build_datasets(cfg, data_dir)
    pds = _corrupt(train_sup, cfg["flip"], cfg["flip"]["seed"])
    save_partial(out_dir / "partial.npz", pds)
    mean_s = float(pds.set_sizes().mean())
    gamma = datamod.estimate_ambiguity(pds)
    print(f"n={pds.n} c={pds.class_count} mean|S|={mean_s:.4f} ambiguity={gamma:.4f}")
    with open(out_dir / "corrupt_report.csv", "w") as f:
        f.write("n,c,mean_set_size,ambiguity\n")
        f.write(f"{pds.n},{pds.class_count},{mean_s!r},{gamma!r}\n")
    return 0


def _run_seeds(cfg: dict, out_dir: Path, data_dir: str | None):
    """Train once per seed; returns the list of MetricsLogs."""
    ds = cfg["dataset"]
    if ds["source"] == "partial":
        if not ds["path"]:
            raise ConfigError("dataset.path is required for a partial source")
        pds_base = load_partial(_resolve_path(ds["path"], data_dir))
        test_sup = None
        train_sup = None
    else:
        train_sup, test_sup = build_datasets(cfg, data_dir)
        pds_base = None

    arch, hidden = _model_args(cfg)
    logs = []
    for seed in cfg["run"]["seeds"]:
        if pds_base is not None:
            pds = pds_base
        else:
            pds = _corrupt(train_sup, cfg["flip"], cfg["flip"]["seed"] + seed)
        seed_dir = out_dir / f"seed{seed}"
        if cfg["train"].get("checkpoint_every", 0):
            seed_dir.mkdir(parents=True, exist_ok=True)
        result = train(_train_config(cfg, seed), pds, test_sup, arch=arch, hidden=hidden,
                       checkpoint_dir=seed_dir if cfg["train"].get("checkpoint_every", 0) else None)
        result.log.write_csv(out_dir / f"metrics_seed{seed}.csv")
        result.log.write_timing_csv(out_dir / f"timing_seed{seed}.csv")
        save_checkpoint(
            out_dir / f"checkpoint_seed{seed}.npz",
            result.params,
            weight_rows=result.weights.rows,
            candidates=result.weights.candidates,
        )
        acc = result.log.last_window_test_acc()
        print(f"seed {seed}: last-10-epoch test accuracy {acc:.4f}")
        logs.append(result.log)
    return logs


def _write_summary(logs, out_dir: Path) -> tuple[float, float]:
    if len(logs) >= 2:
        summary = summarize_seeds(logs)
        mean, std = summary["test_acc"]
    else:
        summary = None
        mean, std = logs[0].last_window_test_acc(), float("nan")
    with open(out_dir / "summary.csv", "w") as f:
        f.write("metric,mean,std\n")
        f.write(f"test_acc,{mean!r},{std!r}\n")
        if summary is not None:
            for name in ("transductive_acc", "risk"):
                m, s = summary[name]
                f.write(f"{name},{m!r},{s!r}\n")
    print(f"summary: test accuracy {mean:.4f} +/- {0.0 if np.isnan(std) else std:.4f}")
    return mean, std


def cmd_train(cfg: dict, out_dir: Path, data_dir: str | None) -> int:
    echo_config(cfg, out_dir)
    logs = _run_seeds(cfg, out_dir, data_dir)
    _write_summary(logs, out_dir)
    return 0


SWEEP_AXES = {
    "q": ("flip", "q"),
    "strategy": ("train", "strategy"),
    "lr": ("train", "learning_rate"),
}


def cmd_sweep(cfg: dict, axis: str, values: list, out_dir: Path, data_dir: str | None) -> int:
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {sorted(SWEEP_AXES)}")
    if not values:
        raise ConfigError("sweep needs a non-empty value list")
    echo_config(cfg, out_dir)
    section, key = SWEEP_AXES[axis]
    rows = []
    for value in values:
        point_cfg = copy.deepcopy(cfg)
        point_cfg[section][key] = value
        point_dir = out_dir / f"{axis}={value}"
        point_dir.mkdir(parents=True, exist_ok=True)
        echo_config(point_cfg, point_dir)
        logs = _run_seeds(point_cfg, point_dir, data_dir)
        for seed, log in zip(cfg["run"]["seeds"], logs):
            rows.append((value, seed, log.last_window_test_acc(), float(log.risks()[-1])))
    with open(out_dir / "sweep.csv", "w") as f:
        f.write(f"{axis},seed,last10_test_acc,final_risk\n")
        for value, seed, acc, risk in rows:
            f.write(f"{value},{seed},{acc!r},{risk!r}\n")
    print(f"sweep over {axis}: {len(rows)} runs -> {out_dir / 'sweep.csv'}")
    return 0


def _preset_yeast(q: float, lo: float, hi: float, reference: str):
    cfg = {
        "dataset": {"source": "csv", "path": "yeast.csv", "normalize": True,
                    "test_fraction": 0.1, "split_seed": 7},
        "flip": {"kind": "binomial", "q": q, "seed": 0},
        "model": {"arch": "linear"},
        "train": {"epochs": 500, "batch_size": 256, "learning_rate": 0.0,
                  "strategy": "progressive", "mode": "pll"},
        "run": {"seeds": [1, 2, 3, 4, 5]},
    }
    return {
        "config": cfg,
        "kind": "accuracy_interval",
        "lo": lo,
        "hi": hi,
        "reference": reference,
    }


def _preset_consistency(source_cfg: dict, q: float, epochs: int, gap: float,
                        seeds: list[int], note: str):
    cfg = {
        "dataset": source_cfg,
        "flip": {"kind": "binomial", "q": q, "seed": 0},
        "model": {"arch": "linear"},
        "train": {"epochs": epochs, "batch_size": 256, "learning_rate": 0.0,
                  "strategy": "progressive", "mode": "pll"},
        "run": {"seeds": seeds},
    }
    return {"config": cfg, "kind": "oracle_gap", "gap": gap, "reference": note}


PRESETS = {
    "yeast-binomial-01": _preset_yeast(0.1, 0.52, 0.66, "reference 59.05 +/- 4.66 %"),
    "yeast-binomial-07": _preset_yeast(0.7, 0.47, 0.63, "reference 55.15 +/- 3.87 %"),
    "synthetic-consistency": _preset_consistency(
        {"source": "synthetic", "n": 3000, "test_n": 1000, "classes": 3, "dim": 2,
         "sigma": 0.3, "separation": 4.0, "data_seed": 0},
        q=0.3, epochs=200, gap=0.02, seeds=[1, 2, 3, 4, 5],
        note="candidate-set training within 2 points of the supervised oracle",
    ),
    "mnist-linear-01-small": _preset_consistency(
        {"source": "idx", "images": "mnist/train-images-idx3-ubyte.gz",
         "labels": "mnist/train-labels-idx1-ubyte.gz",
         "test_images": "mnist/t10k-images-idx3-ubyte.gz",
         "test_labels": "mnist/t10k-labels-idx1-ubyte.gz",
         "normalize": False, "limit": 10000},
        q=0.1, epochs=100, gap=0.03, seeds=[1, 2],
        note="10k-example subset, advisory: within 3 points of the oracle",
    ),
}


def cmd_repro(preset: str, out_dir: Path, data_dir: str | None, seed_list=None) -> int:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; available: {', '.join(sorted(PRESETS))}")
    spec = PRESETS[preset]
    cfg = _deep_merge(DEFAULT_CONFIG, spec["config"])
    if seed_list:
        cfg["run"]["seeds"] = seed_list
    echo_config(cfg, out_dir)

    rows = []
    if spec["kind"] == "accuracy_interval":
        logs = _run_seeds(cfg, out_dir, data_dir)
        mean, _ = _write_summary(logs, out_dir)
        ok = spec["lo"] <= mean <= spec["hi"]
        rows.append((preset, "mean_last10_test_acc", mean, spec["lo"], spec["hi"], ok))
    else:  # oracle_gap: run candidate-set training and the oracle on the same seeds
        pll_dir = out_dir / "pll"
        oracle_dir = out_dir / "oracle"
        pll_dir.mkdir(parents=True, exist_ok=True)
        oracle_dir.mkdir(parents=True, exist_ok=True)
        pll_logs = _run_seeds(cfg, pll_dir, data_dir)
        oracle_cfg = copy.deepcopy(cfg)
        oracle_cfg["train"]["mode"] = "oracle"
        oracle_logs = _run_seeds(oracle_cfg, oracle_dir, data_dir)
        pll_mean, _ = _write_summary(pll_logs, pll_dir)
        oracle_mean, _ = _write_summary(oracle_logs, oracle_dir)
        gap = oracle_mean - pll_mean
        ok = gap <= spec["gap"]
        rows.append((preset, "oracle_minus_pll", gap, float("-inf"), spec["gap"], ok))
        rows.append((preset, "pll_mean", pll_mean, float("nan"), float("nan"), ok))
        rows.append((preset, "oracle_mean", oracle_mean, float("nan"), float("nan"), ok))
        print(f"gap to oracle: {gap:+.4f} (limit {spec['gap']:.2f})")

    with open(out_dir / "report.csv", "w") as f:
        f.write("preset,metric,value,target_lo,target_hi,pass\n")
        for r in rows:
            f.write(f"{r[0]},{r[1]},{r[2]!r},{r[3]!r},{r[4]!r},{r[5]}\n")
    ok = all(r[5] for r in rows)
    print(f"{preset}: {'PASS' if ok else 'FAIL'} ({spec['reference']})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pllkit", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--out", help="output directory (overrides run.out)")
        p.add_argument("--data-dir", default="data", help="fallback directory for dataset paths")
        p.add_argument("--seed-list", help="comma-separated seeds (overrides run.seeds)")
        p.add_argument("--format", choices=["csv", "idx", "synthetic", "partial"],
                       help="dataset source (overrides dataset.source)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-key config override, repeatable")

    p_corrupt = sub.add_parser("corrupt", help="corrupt a supervised dataset into candidate sets")
    common(p_corrupt)

    p_train = sub.add_parser("train", help="train across seeds and summarize")
    common(p_train)

    p_sweep = sub.add_parser("sweep", help="train across one axis of values")
    common(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    p_sweep.add_argument("--values", required=True, help="comma-separated axis values")

    p_repro = sub.add_parser("repro", help="run a reproduction preset")
    p_repro.add_argument("--preset", required=True)
    p_repro.add_argument("--out", help="output directory")
    p_repro.add_argument("--data-dir", default="data")
    p_repro.add_argument("--seed-list")
    return parser


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}") from None


def _apply_common(cfg: dict, args) -> dict:
    if args.seed_list:
        cfg["run"]["seeds"] = _parse_seeds(args.seed_list)
    if getattr(args, "format", None):
        cfg["dataset"]["source"] = args.format
    if args.out:
        cfg["run"]["out"] = args.out
    if not cfg["run"]["seeds"]:
        raise ConfigError("run.seeds must be non-empty")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "repro":
            seeds = _parse_seeds(args.seed_list) if args.seed_list else None
            out = Path(args.out) if args.out else Path("runs") / f"repro-{args.preset}"
            return cmd_repro(args.preset, out, args.data_dir, seeds)

        cfg = _apply_common(load_config(args.config, args.override), args)
        out = Path(cfg["run"]["out"])
        if args.command == "corrupt":
            return cmd_corrupt(cfg, out, args.data_dir)
        if args.command == "train":
            return cmd_train(cfg, out, args.data_dir)
        if args.command == "sweep":
            values = [_parse_override(f"v={v}")[1] for v in args.values.split(",") if v.strip()]
            return cmd_sweep(cfg, args.axis, values, out, args.data_dir)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, ConsistencyError, MissingTruthError, InsufficientDataError,
            FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as e:
        print(f"divergence: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except DomainError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except PllkitError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
