"""Command-line entry point.

    vaemhn train {continual|ub|control|lb}
    vaemhn analyze {separation|completion|latents}
    vaemhn sweep --grid grid.json
    vaemhn fetch-data

Outputs go under ``--out`` as ``checkpoints/``, ``records/`` and ``reports/``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import checkpoint
from .analysis import ModelSet, completion_analysis, export_latents, separation_analysis
from .config import ConfigError, RunConfig
from .data import DATA_DIR_ENV, IDXError, load_mnist_dir
from .experiment import MODES, fit_judge, run_mode, score
from .fetch import MIRRORS, ChecksumError, DownloadError, fetch_mnist, identify
from .hopfield import RetrievalError
from .judge import JudgeError
from .replay import grid_cells, sweep
from .vae import TrainingError

log = logging.getLogger("vaemhn")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_JUDGE = 5
EXIT_TRAINING = 6
EXIT_RETRIEVAL = 7
EXIT_CHECKPOINT = 8
EXIT_DOWNLOAD = 9
EXIT_CHECKSUM = 10

# most specific first
_EXIT_CODES = (
    (ConfigError, EXIT_CONFIG),
    (ChecksumError, EXIT_CHECKSUM),
    (DownloadError, EXIT_DOWNLOAD),
    (checkpoint.CheckpointError, EXIT_CHECKPOINT),
    (JudgeError, EXIT_JUDGE),
    (TrainingError, EXIT_TRAINING),
    (RetrievalError, EXIT_RETRIEVAL),
    (IDXError, EXIT_DATA),
    (FileNotFoundError, EXIT_DATA),
)

ANALYSES = ("separation", "completion", "latents")
OVERRIDES = (
    ("--latent-dim", int),
    ("--tap-point", str),
    ("--replay-ratio", float),
    ("--storage-fraction", float),
    ("--epochs", int),
    ("--batch-size", int),
    ("--learning-rate", float),
    ("--replay-weighting", str),
    ("--replay-decoder", str),
    ("--beta-scale", float),
    ("--n-per-class", int),
)


class Layout:
    def __init__(self, root):
        self.root = Path(root)
        self.checkpoints = self.root / "checkpoints"
        self.records = self.root / "records"
        self.reports = self.root / "reports"
        for d in (self.checkpoints, self.records, self.reports):
            d.mkdir(parents=True, exist_ok=True)

    def model(self, mode, seed):
        return self.checkpoints / f"{mode}-seed{seed}.npz"

    def record(self, mode, seed):
        return self.records / f"{mode}-seed{seed}.json"

    def losses(self, mode, seed):
        return self.records / f"{mode}-seed{seed}-loss.csv"

    @property
    def judge(self):
        return self.checkpoints / "judge.npz"


def _common(p):
    p.add_argument("--config", type=Path, help="JSON config; explicit flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, default=Path("runs"), help="output root (default: ./runs)")
    p.add_argument("--data-dir", help=f"IDX directory (default: ${DATA_DIR_ENV})")
    for flag, typ in OVERRIDES:
        p.add_argument(flag, type=typ)
    p.add_argument("--hidden-dims", type=int, nargs="+")


def build_parser():
    parser = argparse.ArgumentParser(prog="vaemhn", description="VAE + modern Hopfield continual learning")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model and score it with the judge")
    p.add_argument("mode", choices=MODES)
    _common(p)

    p = sub.add_parser("analyze", help="separation / completion analysis or latent export")
    p.add_argument("kind", choices=ANALYSES)
    _common(p)

    p = sub.add_parser("sweep", help="grid over latent_dim x replay_ratio x tap_point")
    p.add_argument("--grid", type=Path, required=True, help="JSON object of lists")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    _common(p)

    p = sub.add_parser("fetch-data", help="download MNIST and verify checksums")
    p.add_argument("--data-dir", help=f"destination (default: ${DATA_DIR_ENV})")
    p.add_argument("--verify", action="store_true", help="only check files already present")
    p.add_argument("--mirror", action="append", help="base URL to try (repeatable)")
    return parser


def load_config(args):
    overrides = {flag[2:].replace("-", "_"): getattr(args, flag[2:].replace("-", "_")) for flag, _ in OVERRIDES}
    overrides.update(seed=args.seed, hidden_dims=args.hidden_dims, data_dir=args.data_dir)
    return RunConfig.load(args.config, overrides)


def load_data(cfg):
    train, test = load_mnist_dir(cfg.data_dir)
    log.info("data: %d train / %d test images", len(train), len(test))
    return train, test


def get_judge(layout, train, test):
    """Reuse the cached judge if present, otherwise train and cache it."""
    if layout.judge.exists():
        return checkpoint.load(layout.judge)["judge"]
    log.info("training judge")
    judge = fit_judge(train, test)
    checkpoint.save(layout.judge, judge=judge)
    log.info("judge test accuracy %.4f", judge.test_accuracy_)
    return judge


def cmd_train(args):
    cfg = load_config(args)
    layout = Layout(args.out)
    train, test = load_data(cfg)
    judge = get_judge(layout, train, test)
    vae, memory, record = run_mode(args.mode, cfg, train)
    score(record, vae, judge, test)
    checkpoint.save(layout.model(args.mode, cfg.seed), vae, memory, meta={"mode": args.mode, "config": cfg.to_dict()})
    record.to_json(layout.record(args.mode, cfg.seed))
    record.write_loss_csv(layout.losses(args.mode, cfg.seed))
    print(f"{args.mode} seed {cfg.seed}: accuracy {record.final_accuracy:.4f}")
    return EXIT_OK


def _load_models(layout, seed):
    parts = {}
    for mode in ("continual", "ub", "control"):
        path = layout.model(mode, seed)
        if not path.exists():
            raise checkpoint.CheckpointError(f"{path} not found; run `vaemhn train {mode} --seed {seed}` first")
        parts[mode] = checkpoint.load(path)
    return ModelSet(parts["continual"]["vae"], parts["continual"]["memory"], parts["ub"]["vae"], parts["control"]["vae"])


def cmd_analyze(args):
    cfg = load_config(args)
    layout = Layout(args.out)
    _, test = load_data(cfg)
    models = _load_models(layout, cfg.seed)
    if args.kind == "latents":
        path = layout.reports / "latents.csv"
        n = export_latents(models, test, cfg.n_per_class, path)
        print(f"wrote {n} rows to {path}")
        return EXIT_OK
    fn = separation_analysis if args.kind == "separation" else completion_analysis
    report = fn(models, test, n_per_class=cfg.n_per_class)
    report.to_csv(layout.reports / f"{args.kind}.csv")
    report.to_json(layout.reports / f"{args.kind}.json")
    print(report.summary())
    return EXIT_OK


def _write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def cmd_sweep(args):
    cfg = load_config(args)
    try:
        with open(args.grid) as fh:
            grid = json.load(fh)
        grid_cells(grid)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid {args.grid}: {exc}") from exc
    layout = Layout(args.out)
    train, test = load_data(cfg)
    judge = get_judge(layout, train, test)

    def run_cell(cell, seed):
        cell_cfg = RunConfig.from_dict({**cfg.to_dict(), **cell, "seed": seed})
        vae, _, record = run_mode("continual", cell_cfg, train)
        score(record, vae, judge, test)
        tag = f"sweep-d{cell['latent_dim']}-r{cell['replay_ratio']}-{cell['tap_point']}"
        record.to_json(layout.record(tag, seed))
        log.info("%s seed %d: %.4f", tag, seed, record.final_accuracy)
        return record.final_accuracy

    runs, aggregates = sweep(grid, args.seeds, run_cell)
    _write_rows(layout.reports / "sweep-runs.csv", runs)
    _write_rows(layout.reports / "sweep-summary.csv", aggregates)
    for row in aggregates:
        print(row)
    return EXIT_OK


def cmd_fetch(args):
    data_dir = args.data_dir or os.environ.get(DATA_DIR_ENV)
    if not data_dir:
        raise ConfigError(f"give --data-dir or set {DATA_DIR_ENV}")
    if not args.verify:
        fetch_mnist(data_dir, mirrors=tuple(args.mirror or MIRRORS))
    print(f"{data_dir}: {identify(data_dir)} files, checksums ok")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "analyze": cmd_analyze, "sweep": cmd_sweep, "fetch-data": cmd_fetch}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:
        for cls, code in _EXIT_CODES:
            if isinstance(exc, cls):
                print(f"vaemhn: error: {exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
