"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data/format error
(missing or malformed input files).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, fields

from gpa.augment import PAIRS, AugConfig
from gpa.encoder import EncoderConfig
from gpa.errors import DataError, GPAError
from gpa.evaluation import (
    augmentation_report,
    comparison_table,
    extract_embeddings,
    linear_probe_cv,
    probe_fixed_pairs,
)
from gpa.graph import build_features, parse_tudataset, split, stats
from gpa.trainer import (
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
    train_random_baseline,
    write_loss_history,
)

log = logging.getLogger("gpa")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

_SECTIONS = {"data", "encoder", "aug", "train", "split", "probe"}
_DATA_DEFAULTS = {"dir": None, "name": None, "features": "default", "degree_cap": 10,
                  "subset": None}
_SPLIT_DEFAULTS = {"valid_fraction": 0.1}
_PROBE_DEFAULTS = {"folds": 10, "repeats": 1, "pairs": None}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _section(raw: dict, name: str, defaults: dict) -> dict:
    got = raw.get(name, {})
    unknown = set(got) - set(defaults)
    if unknown:
        raise UsageError(f"unknown keys in [{name}]: {sorted(unknown)}")
    return {**defaults, **got}


def _dataclass_section(raw: dict, name: str, cls, **extra):
    got = dict(raw.get(name, {}))
    allowed = {f.name for f in fields(cls)}
    unknown = set(got) - allowed
    if unknown:
        raise UsageError(f"unknown keys in [{name}]: {sorted(unknown)}")
    got.update(extra)
    try:
        return cls(**got)
    except (TypeError, ValueError) as e:
        raise UsageError(f"[{name}]: {e}") from None


class RunConfig:
    """Parsed JSON configuration with sections ``data``, ``encoder``,
    ``aug``, ``train``, ``split`` and ``probe``."""

    def __init__(self, raw: dict, seed: int | None = None, base_dir: str = "."):
        if not isinstance(raw, dict):
            raise UsageError("config must be a JSON object")
        unknown = set(raw) - _SECTIONS
        if unknown:
            raise UsageError(f"unknown config sections: {sorted(unknown)}")
        self.raw = raw
        self.data = _section(raw, "data", _DATA_DEFAULTS)
        if not self.data["dir"] or not self.data["name"]:
            raise UsageError("[data] needs 'dir' and 'name'")
        if not os.path.isabs(self.data["dir"]):
            self.data["dir"] = os.path.normpath(os.path.join(base_dir, self.data["dir"]))
        self.split = _section(raw, "split", _SPLIT_DEFAULTS)
        self.probe = _section(raw, "probe", _PROBE_DEFAULTS)
        self.aug = _dataclass_section(raw, "aug", AugConfig)
        train_extra = {} if seed is None else {"seed": seed}
        self.train = _dataclass_section(raw, "train", TrainConfig, **train_extra)
        self._encoder_raw = raw.get("encoder", {})

    def encoder(self, feature_dim: int) -> EncoderConfig:
        return _dataclass_section({"encoder": self._encoder_raw}, "encoder", EncoderConfig,
                                  feature_dim=feature_dim)

    def load_dataset(self):
        ds = parse_tudataset(self.data["dir"], self.data["name"])
        policy = self.data["features"]
        if policy == "one_hot_degree" or (policy == "default" and ds.feature_dim == 0):
            ds = build_features(ds, "one_hot_degree", int(self.data["degree_cap"]))
        elif policy == "one_hot_labels":
            ds = build_features(ds, "one_hot_labels")
        elif policy != "default":
            raise UsageError(f"unknown feature policy {policy!r}")
        if self.data["subset"] is not None:
            ds = ds.subset(range(min(int(self.data["subset"]), len(ds))))
        return ds

    def as_dict(self, feature_dim: int) -> dict:
        return {"data": self.data, "split": self.split, "probe": self.probe,
                "aug": asdict(self.aug), "train": asdict(self.train),
                "encoder": asdict(self.encoder(feature_dim))}


def load_config(path, seed=None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON ({e})") from None
    return RunConfig(raw, seed, os.path.dirname(os.path.abspath(path)))


def _write(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _probe(cfg: RunConfig, ds, w):
    emb, labels = extract_embeddings(ds, w)
    return linear_probe_cv(emb, labels, int(cfg.probe["folds"]), cfg.train.seed)


# --------------------------------------------------------------------------- commands


def cmd_stats(args) -> int:
    ds = parse_tudataset(args.directory, args.name)
    out = json.dumps(stats(ds).as_dict(), sort_keys=True)
    print(out)
    if args.out:
        _write(os.path.join(args.out, "stats.json"), out + "\n")
    return EXIT_OK


def _train_gpa(cfg: RunConfig, ds, out_dir):
    sp = split(ds, float(cfg.split["valid_fraction"]), cfg.train.seed)
    enc = cfg.encoder(ds.feature_dim)
    t0 = time.perf_counter()
    state = train(ds, sp, enc, cfg.aug, cfg.train)
    elapsed = time.perf_counter() - t0
    save_checkpoint(state, os.path.join(out_dir, "checkpoint"), cfg.as_dict(ds.feature_dim))
    write_loss_history(os.path.join(out_dir, "loss_history.csv"), state.loss_history)
    return state, sp, elapsed


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed)
    ds = cfg.load_dataset()
    state, sp, elapsed = _train_gpa(cfg, ds, args.out)
    means = state.epoch_means()
    print(json.dumps({"epochs": state.epoch, "steps": state.step, "seconds": round(elapsed, 3),
                      "first_epoch_loss": means.get(0), "last_epoch_loss": means.get(state.epoch - 1),
                      "aborted": state.aborted, "checkpoint": os.path.join(args.out, "checkpoint")},
                     sort_keys=True))
    return EXIT_OK if state.aborted is None else EXIT_USAGE


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.seed)
    ds = cfg.load_dataset()
    w, _, _ = load_checkpoint(args.checkpoint)
    result = _probe(cfg, ds, w)
    _write(os.path.join(args.out, "probe_result.json"), result.to_json())
    print(result.to_json(), end="")
    return EXIT_OK


def cmd_report_aug(args) -> int:
    cfg = load_config(args.config, args.seed)
    ds = cfg.load_dataset()
    w, theta, _ = load_checkpoint(args.checkpoint)
    if theta is None:
        raise UsageError(f"{args.checkpoint} has no selector parameters")
    report = augmentation_report(ds, w, theta, cfg.aug, cfg.train.seed)
    os.makedirs(args.out, exist_ok=True)
    report.write_csv(os.path.join(args.out, "aug_report.csv"))
    hist = json.dumps(report.histogram_dict(), indent=2)
    _write(os.path.join(args.out, "aug_histogram.json"), hist + "\n")
    print(hist)
    return EXIT_OK


def cmd_probe_pairs(args) -> int:
    cfg = load_config(args.config, args.seed)
    ds = cfg.load_dataset()
    chosen = cfg.probe["pairs"]
    pairs = PAIRS if chosen is None else [PAIRS[int(p)] for p in chosen]
    grid = probe_fixed_pairs(ds, pairs, cfg.encoder(ds.feature_dim), cfg.aug, cfg.train,
                             int(cfg.probe["repeats"]), int(cfg.probe["folds"]))
    os.makedirs(args.out, exist_ok=True)
    grid.write_csv(os.path.join(args.out, "pair_probe_grid.csv"))
    summary = {p.name: {"mean_correct": float(grid.matrix[:, c].mean()),
                        "degenerate": bool(grid.degenerate[c])}
               for c, p in enumerate(grid.pairs)}
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_ablate_random(args) -> int:
    """Random-pair baseline against GPA on the same split and probe folds."""
    cfg = load_config(args.config, args.seed)
    ds = cfg.load_dataset()
    sp = split(ds, float(cfg.split["valid_fraction"]), cfg.train.seed)
    enc = cfg.encoder(ds.feature_dim)
    if args.gpa_checkpoint:
        w_gpa, _, _ = load_checkpoint(args.gpa_checkpoint)
    else:
        state, _, _ = _train_gpa(cfg, ds, os.path.join(args.out, "gpa"))
        w_gpa = state.w
    gpa_result = _probe(cfg, ds, w_gpa)
    rand_state = train_random_baseline(ds, sp, enc, cfg.aug, cfg.train)
    rand_dir = os.path.join(args.out, "random")
    save_checkpoint(rand_state, os.path.join(rand_dir, "checkpoint"), cfg.as_dict(ds.feature_dim))
    write_loss_history(os.path.join(rand_dir, "loss_history.csv"), rand_state.loss_history)
    rand_result = _probe(cfg, ds, rand_state.w)
    _write(os.path.join(args.out, "gpa", "probe_result.json"), gpa_result.to_json())
    _write(os.path.join(rand_dir, "probe_result.json"), rand_result.to_json())
    table = comparison_table({"GPA": gpa_result, "GPA-random": rand_result})
    _write(os.path.join(args.out, "ablation.md"), table)
    print(table, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gpa", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_text, *positionals):
        sp = sub.add_parser(name, help=help_text)
        for pos in positionals:
            sp.add_argument(pos)
        sp.add_argument("--seed", type=int, default=None, help="overrides train.seed")
        sp.add_argument("--out", default=None if name == "stats" else "out",
                        help="output directory")
        sp.set_defaults(fn=fn)
        return sp

    add("stats", cmd_stats, "dataset statistics as JSON", "directory", "name")
    add("train", cmd_train, "bi-level GPA training", "config")
    add("eval", cmd_eval, "10-fold linear probe of a checkpoint", "checkpoint", "config")
    add("report-aug", cmd_report_aug, "per-graph selected pairs", "checkpoint", "config")
    add("probe-pairs", cmd_probe_pairs, "fixed-pair sensitivity grid", "config")
    ab = add("ablate-random", cmd_ablate_random, "GPA versus random pair assignment", "config")
    ab.add_argument("--gpa-checkpoint", default=None,
                    help="reuse a trained GPA checkpoint instead of training one")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except DataError as e:
        print(f"gpa: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as e:
        print(f"gpa: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (UsageError, GPAError) as e:
        print(f"gpa: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
