"""Config-driven experiment runner and report generator.

`synamap run -c config.json -o outdir` trains every configured method on
every seed and writes a bundle: per-run JSON reports, aggregate.csv,
an accuracy-over-tasks SVG chart, an ablation table when both mapper
variants are present, and an echo of the fully resolved config (which
re-parses to the identical configuration). `synamap report -b outdir`
rebuilds the derived files from the stored per-run reports.

Exit codes: 0 success, 1 run failure, 2 configuration or usage error.
"""

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .baselines import RunConfig, TrainingDivergedError
from .data_tasks import (DataConsistencyError, IdxFormatError, cap_stream,
                         load_idx, make_permuted_tasks, make_rotated_tasks,
                         make_split_tasks, make_synthetic_digits)
from .eval_harness import TRAINER_FACTORIES, run_protocol
from .importance import IsyanaTrainer

DATA_DIR_ENV = "SYNAMAP_DATA_DIR"

IDX_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

STREAM_DEFAULTS = {
    "split": {"tasks": 5, "layer_sizes": [784, 256, 256, 10]},
    "permuted": {"tasks": 10, "layer_sizes": [784, 500, 500, 10]},
    "rotated": {"tasks": 10, "layer_sizes": [784, 500, 500, 10]},
}

DEFAULTS = {
    "stream": "permuted",
    "methods": ["naive", "isyana"],
    "seeds": [0],
    "tasks": None,             # filled from the stream default when null
    "layer_sizes": None,       # likewise
    "epochs": 10,
    "batch_size": 128,
    "lr": 0.1,
    "ewc_lambda": 5000.0,
    "fisher_samples": 1024,
    "oewc_gamma": 1.0,
    "si_strength": 1.0,
    "si_damping": 0.1,
    "mod_a": 1.0,
    "mod_b": 1.0,
    "mod_c": -0.1,
    "sae_hidden": [128, 32],
    "sae_lr": 0.01,
    "train_cap": None,
    "test_cap": None,
    "data_source": "synthetic",
    "data_dir": None,
    "synthetic_train": 6000,
    "synthetic_test": 1500,
    "stream_seed": 0,
    "masked_eval": False,
    "dump_internals": False,
}

CHART_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


class ConfigError(ValueError):
    """Bad configuration file or command usage."""


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def parse_config(path) -> dict:
    """Load, validate, and fill a JSON run configuration.

    Unknown keys are rejected rather than ignored so typos cannot silently
    fall back to defaults. The returned dict is fully resolved: re-parsing
    a dump of it yields an equal dict."""
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    _require(isinstance(raw, dict), "config root must be a JSON object")
    unknown = sorted(set(raw) - set(DEFAULTS))
    _require(not unknown, f"unknown config keys: {', '.join(unknown)}")
    cfg = {**DEFAULTS, **raw}

    _require(cfg["stream"] in STREAM_DEFAULTS,
             f"stream must be one of {sorted(STREAM_DEFAULTS)}")
    _require(isinstance(cfg["methods"], list) and cfg["methods"],
             "methods must be a non-empty list")
    bad = [m for m in cfg["methods"] if m not in TRAINER_FACTORIES]
    _require(not bad, f"unknown methods: {', '.join(bad)}; "
                      f"choose from {sorted(TRAINER_FACTORIES)}")
    _require(len(set(cfg["methods"])) == len(cfg["methods"]),
             "methods must not repeat")
    _require(isinstance(cfg["seeds"], list) and cfg["seeds"]
             and all(isinstance(s, int) for s in cfg["seeds"]),
             "seeds must be a non-empty list of integers")
    if cfg["tasks"] is None:
        cfg["tasks"] = STREAM_DEFAULTS[cfg["stream"]]["tasks"]
    if cfg["layer_sizes"] is None:
        cfg["layer_sizes"] = list(STREAM_DEFAULTS[cfg["stream"]]["layer_sizes"])
    _require(isinstance(cfg["tasks"], int) and cfg["tasks"] >= 1,
             "tasks must be a positive integer")
    if cfg["stream"] == "rotated":
        _require(cfg["tasks"] >= 2, "a rotated stream needs at least 2 tasks")
    if cfg["stream"] == "split":
        _require(cfg["tasks"] == 5, "a split stream always has 5 tasks")
    for key in ("epochs", "batch_size", "fisher_samples",
                "synthetic_train", "synthetic_test"):
        _require(isinstance(cfg[key], int) and cfg[key] > 0,
                 f"{key} must be a positive integer")
    for key in ("lr", "sae_lr"):
        _require(isinstance(cfg[key], (int, float)) and cfg[key] > 0,
                 f"{key} must be positive")
    for key in ("ewc_lambda", "oewc_gamma", "si_strength", "si_damping",
                "mod_a", "mod_b", "mod_c", "stream_seed"):
        _require(isinstance(cfg[key], (int, float)), f"{key} must be a number")
    _require(cfg["mod_a"] > 0, "mod_a must be positive")
    for key in ("train_cap", "test_cap"):
        _require(cfg[key] is None or (isinstance(cfg[key], int) and cfg[key] > 0),
                 f"{key} must be null or a positive integer")
    _require(cfg["data_source"] in ("synthetic", "idx"),
             "data_source must be 'synthetic' or 'idx'")
    _require(isinstance(cfg["layer_sizes"], list) and len(cfg["layer_sizes"]) >= 3
             and all(isinstance(v, int) and v > 0 for v in cfg["layer_sizes"]),
             "layer_sizes must list input, hidden..., output sizes")
    _require(cfg["layer_sizes"][0] == 784 and cfg["layer_sizes"][-1] == 10,
             "layer_sizes must start at 784 inputs and end at 10 classes")
    _require(isinstance(cfg["sae_hidden"], list) and cfg["sae_hidden"]
             and all(isinstance(v, int) and v > 0 for v in cfg["sae_hidden"]),
             "sae_hidden must be a non-empty list of positive sizes")
    for key in ("masked_eval", "dump_internals"):
        _require(isinstance(cfg[key], bool), f"{key} must be true or false")
    return cfg


def to_run_config(cfg: dict) -> RunConfig:
    return RunConfig(
        layer_sizes=list(cfg["layer_sizes"]),
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        base_lr=cfg["lr"],
        ewc_lambda=cfg["ewc_lambda"],
        fisher_samples=cfg["fisher_samples"],
        oewc_gamma=cfg["oewc_gamma"],
        si_strength=cfg["si_strength"],
        si_damping=cfg["si_damping"],
        mod_a=cfg["mod_a"], mod_b=cfg["mod_b"], mod_c=cfg["mod_c"],
        sae_hidden=list(cfg["sae_hidden"]),
        sae_lr=cfg["sae_lr"],
        masked_eval=cfg["masked_eval"],
    )


def _load_idx_pair(cfg):
    root = cfg["data_dir"] or os.environ.get(DATA_DIR_ENV)
    if not root:
        raise ConfigError(
            f"data_source is 'idx' but neither data_dir nor ${DATA_DIR_ENV} is set")
    root = Path(root)
    for name in IDX_FILES.values():
        if not (root / name).exists():
            raise FileNotFoundError(f"missing IDX file: {root / name}")
    train = load_idx(root / IDX_FILES["train_images"], root / IDX_FILES["train_labels"])
    test = load_idx(root / IDX_FILES["test_images"], root / IDX_FILES["test_labels"])
    return train, test


def build_stream(cfg: dict, seed: int):
    """Materialize the configured stream for one run seed.

    The same seed always yields the same stream regardless of method, so
    every method within a seed sees identical data."""
    base_seed = cfg["stream_seed"] + 1000 * seed
    if cfg["data_source"] == "synthetic":
        train, test = make_synthetic_digits(cfg["synthetic_train"],
                                            cfg["synthetic_test"],
                                            seed=base_seed)
    else:
        train, test = _load_idx_pair(cfg)
    kind = cfg["stream"]
    if kind == "split":
        stream = make_split_tasks(train, test)
    elif kind == "permuted":
        stream = make_permuted_tasks(train, test, cfg["tasks"], seed=base_seed)
    else:
        stream = make_rotated_tasks(train, test, cfg["tasks"])
    return cap_stream(stream, cfg["train_cap"], cfg["test_cap"], seed=base_seed)


def series_over_tasks(matrix: np.ndarray):
    """Mean accuracy over the tasks seen so far, after each task."""
    return [float(np.mean(matrix[i, :i + 1])) for i in range(matrix.shape[0])]


def report_to_dict(report) -> dict:
    return {
        "method": report.method,
        "stream": report.stream,
        "seed": report.seed,
        "acc": report.acc,
        "bwt": report.bwt,
        "fwt": report.fwt,
        "degenerate_transfer": report.degenerate_transfer,
        "seconds": report.seconds,
        "matrix": report.matrix.tolist(),
        "b_hat": report.b_hat.tolist(),
        "series": series_over_tasks(report.matrix),
        "config": report.config,
    }


def _internals_dict(trainer: IsyanaTrainer) -> dict:
    sched = trainer.last_schedule
    out = {
        "st_tables": [t.tolist() for t in trainer.su.tables()],
        "cluster_means": {f"{t}/{c}": cl.mu.tolist()
                          for (t, c), cl in sorted(trainer.atlas.clusters.items())},
    }
    if sched is not None:
        out.update({
            "phi": [p.tolist() for p in sched.phi],
            "z": [z.tolist() for z in sched.z],
            "eta": [e.tolist() for e in sched.eta],
            "eta_out": sched.eta_out,
            "tt_values": sched.tt.values.tolist(),
            "tt_known": sched.tt.known.tolist(),
        })
    return out


def write_aggregate_csv(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["method", "stream", "seeds", "acc", "fwt", "bwt"])
        for row in rows:
            writer.writerow(row)


def svg_accuracy_chart(series_by_method: dict, path) -> None:
    """Hand-rolled SVG: mean accuracy over seen tasks as one line per method."""
    width, height = 640, 400
    left, right, top, bottom = 60, 20, 20, 60
    plot_w, plot_h = width - left - right, height - top - bottom
    t_count = max(len(s) for s in series_by_method.values())

    def x_at(i):
        return left + (plot_w * i / max(1, t_count - 1))

    def y_at(v):
        return top + plot_h * (1.0 - v)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" '
        f'y2="{top + plot_h}" stroke="black"/>',
    ]
    for tick in np.linspace(0.0, 1.0, 6):
        y = y_at(tick)
        parts.append(f'<line x1="{left - 4}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" '
                     'stroke="black"/>')
        parts.append(f'<text x="{left - 8}" y="{y + 4:.1f}" text-anchor="end" '
                     f'font-size="12">{tick:.1f}</text>')
    for i in range(t_count):
        x = x_at(i)
        parts.append(f'<line x1="{x:.1f}" y1="{top + plot_h}" x2="{x:.1f}" '
                     f'y2="{top + plot_h + 4}" stroke="black"/>')
        parts.append(f'<text x="{x:.1f}" y="{top + plot_h + 18}" text-anchor="middle" '
                     f'font-size="12">{i + 1}</text>')
    parts.append(f'<text x="{left + plot_w / 2:.1f}" y="{height - 16}" '
                 'text-anchor="middle" font-size="13">tasks trained</text>')
    parts.append(f'<text x="16" y="{top + plot_h / 2:.1f}" text-anchor="middle" '
                 f'font-size="13" transform="rotate(-90 16 {top + plot_h / 2:.1f})">'
                 'mean accuracy on seen tasks</text>')
    for k, (method, series) in enumerate(sorted(series_by_method.items())):
        color = CHART_COLORS[k % len(CHART_COLORS)]
        points = " ".join(f"{x_at(i):.1f},{y_at(v):.1f}" for i, v in enumerate(series))
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" '
                     'stroke-width="2"/>')
        ly = top + 16 + 16 * k
        parts.append(f'<line x1="{left + plot_w - 120}" y1="{ly - 4}" '
                     f'x2="{left + plot_w - 96}" y2="{ly - 4}" stroke="{color}" '
                     'stroke-width="2"/>')
        parts.append(f'<text x="{left + plot_w - 90}" y="{ly}" font-size="12">'
                     f'{method}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))


def _write_derived(out: Path, payloads) -> None:
    """Aggregate CSV, chart, and (when applicable) the ablation table."""
    by_method = {}
    for p in payloads:
        by_method.setdefault(p["method"], []).append(p)
    rows = []
    series_by_method = {}
    stats_by_method = {}
    for method, runs in sorted(by_method.items()):
        accs = [r["acc"] for r in runs]
        fwts = [r["fwt"] for r in runs]
        bwts = [r["bwt"] for r in runs]
        stats = {"acc": float(np.mean(accs)), "fwt": float(np.mean(fwts)),
                 "bwt": float(np.mean(bwts))}
        stats_by_method[method] = stats
        rows.append([method, runs[0]["stream"], len(runs),
                     f"{stats['acc']:.6f}", f"{stats['fwt']:.6f}", f"{stats['bwt']:.6f}"])
        series_by_method[method] = np.mean([r["series"] for r in runs], axis=0).tolist()
    write_aggregate_csv(out / "aggregate.csv", rows)
    svg_accuracy_chart(series_by_method, out / "accuracy_curves.svg")
    if {"isyana", "isyana_no_tt"} <= set(by_method):
        full, cut = stats_by_method["isyana"], stats_by_method["isyana_no_tt"]
        with open(out / "ablation.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["variant", "acc", "fwt", "bwt"])
            writer.writerow(["isyana", f"{full['acc']:.6f}",
                             f"{full['fwt']:.6f}", f"{full['bwt']:.6f}"])
            writer.writerow(["isyana_no_tt", f"{cut['acc']:.6f}",
                             f"{cut['fwt']:.6f}", f"{cut['bwt']:.6f}"])
            writer.writerow(["gap", f"{full['acc'] - cut['acc']:.6f}",
                             f"{full['fwt'] - cut['fwt']:.6f}",
                             f"{full['bwt'] - cut['bwt']:.6f}"])


def cmd_run(args) -> int:
    cfg = parse_config(args.config)
    out = Path(args.out)
    if (out / "runs").exists() or (out / "aggregate.csv").exists():
        if not args.force:
            raise ConfigError(f"{out} already holds a bundle; pass --force to replace it")
    (out / "runs").mkdir(parents=True, exist_ok=True)
    rc = to_run_config(cfg)
    payloads = []
    for seed in cfg["seeds"]:
        stream = build_stream(cfg, seed)
        for method in cfg["methods"]:
            report = run_protocol(method, stream, rc, seed)
            payload = report_to_dict(report)
            payloads.append(payload)
            run_path = out / "runs" / f"{method}_seed{seed}.json"
            with open(run_path, "w") as f:
                json.dump(payload, f, indent=1)
            if cfg["dump_internals"] and isinstance(report.trainer, IsyanaTrainer):
                with open(out / "runs" / f"{method}_seed{seed}_internals.json", "w") as f:
                    json.dump(_internals_dict(report.trainer), f, indent=1)
            print(f"{method} seed={seed}: acc={report.acc:.4f} "
                  f"bwt={report.bwt:.4f} fwt={report.fwt:.4f} "
                  f"({report.seconds:.1f}s)")
    with open(out / "config_echo.json", "w") as f:
        json.dump(cfg, f, indent=1)
    _write_derived(out, payloads)
    print(f"bundle written to {out}")
    return 0


def cmd_report(args) -> int:
    out = Path(args.bundle)
    runs_dir = out / "runs"
    if not runs_dir.is_dir():
        raise ConfigError(f"{out} has no runs/ directory to report on")
    payloads = []
    for path in sorted(runs_dir.glob("*.json")):
        if path.stem.endswith("_internals"):
            continue
        with open(path) as f:
            payloads.append(json.load(f))
    if not payloads:
        raise ConfigError(f"{runs_dir} holds no run reports")
    _write_derived(out, payloads)
    print(f"derived files refreshed in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synamap",
        description="Sequential-task benchmark runner with per-neuron "
                    "learning-rate modulation and baseline regularizers.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="train configured methods and write a bundle")
    p_run.add_argument("-c", "--config", required=True, help="JSON config path")
    p_run.add_argument("-o", "--out", required=True, help="bundle output directory")
    p_run.add_argument("--force", action="store_true",
                       help="replace an existing bundle")
    p_report = sub.add_parser("report", help="rebuild derived files from a bundle")
    p_report.add_argument("-b", "--bundle", required=True, help="bundle directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_report(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (TrainingDivergedError, IdxFormatError, DataConsistencyError,
            FileNotFoundError, OSError) as e:
        print(f"run failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
