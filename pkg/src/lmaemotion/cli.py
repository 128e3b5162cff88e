"""Command-line pipeline: synth -> extract -> train -> evaluate / explain / sweep -> report.

Exit codes: 0 success, 1 internal error, 2 invalid input or configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from sklearn.base import clone

from . import __version__
from .classifiers import (CvPlan, LinearSVMClassifier, RandomForestClassifier, cross_val_predict,
                          grid_search_cv, load_model, save_model)
from .descriptors import DEFAULT_SCHEMA, FeatureTable, ThresholdPolicy, extract_dataset
from .evaluation import (ConfusionMatrix, TrainingConfig, per_class_metrics, sequence_vote_accuracy,
                         sweep_csv, sweep_svg, window_sweep)
from .explain import (attributions_csv, class_probability_fn, kernel_shap, kmedoids_background,
                      summarize, summary_svg, tree_shap)
from .io_utils import atomic_write_text
from .motion import MotionFormatError, WindowSpec, load_sequence
from .synth import SynthConfig, generate, reversal_dataset, write_dataset

log = logging.getLogger("lmaemotion")

FAMILIES = {"rf": RandomForestClassifier, "svm": LinearSVMClassifier}


class UsageError(Exception):
    """Bad configuration or missing/invalid input (exit code 2)."""


@dataclass
class RunConfig:
    input_dir: str | None = None
    output_dir: str = "lma_out"
    window_length: int = 25
    stride: int = 1
    sub_window: int = 5
    threshold_multiplier: float = 1.0
    families: list = field(default_factory=lambda: ["rf", "svm"])
    grids: dict = field(default_factory=lambda: {
        "rf": {"n_trees": [100, 300], "max_depth": [8, 16, None], "features_per_split": [7, 16]},
        "svm": {"lam": [1e-4, 1e-3, 1e-2], "epochs": [20]},
    })
    folds: int = 3
    seed: int = 0
    jobs: int = 1
    explain_samples: int = 50
    kernel_samples: int = 2048
    background_size: int = 16
    sweep_lengths: list = field(default_factory=lambda: [5, 10, 15, 20, 25, 30, 35, 40])
    synth_per_class: int = 5
    synth_frames: int = 150
    synth_fps: float = 25.0
    synth_dataset: str = "emotions"

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        if path is None:
            return cls()
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise UsageError(f"invalid config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError(f"config {path} must be a mapping")
        return cls().merged(data)

    def merged(self, overrides: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
        cfg = dataclasses.replace(self, **{k: v for k, v in overrides.items() if v is not None})
        bad = [f for f in cfg.families if f not in FAMILIES]
        if bad:
            raise UsageError(f"unknown model family {bad[0]!r} (choose from rf, svm)")
        try:
            WindowSpec(cfg.window_length, cfg.stride, cfg.sub_window)
            ThresholdPolicy(cfg.threshold_multiplier)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        return cfg

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    def window_spec(self) -> WindowSpec:
        return WindowSpec(self.window_length, self.stride, self.sub_window)

    def estimator(self, family: str, **params):
        cls = FAMILIES[family]
        base = {"random_state": self.seed, "schema_hash": DEFAULT_SCHEMA.hash}
        if family == "rf":
            base["n_jobs"] = self.jobs
        return cls(**base).set_params(**params)


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise UsageError(f"missing {path}; run `lmaemotion {producer}` first")
    return path


def _features_path(cfg: RunConfig) -> Path:
    return cfg.out / "features.csv"


def _model_path(cfg: RunConfig, family: str) -> Path:
    return cfg.out / family / "model.json"


def _load_table(cfg: RunConfig) -> FeatureTable:
    return FeatureTable.read_csv(_require(_features_path(cfg), "extract"))


def _manifest(cfg: RunConfig, command: str, **extra) -> None:
    path = cfg.out / "manifest.json"
    data = json.loads(path.read_text()) if path.exists() else {}
    data["version"] = __version__
    data["seed"] = cfg.seed
    data.setdefault("commands", {})[command] = extra
    atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def _input_dir(cfg: RunConfig) -> Path:
    if cfg.input_dir:
        return Path(cfg.input_dir)
    fallback = cfg.out / "data"
    if fallback.is_dir():
        return fallback
    raise UsageError("no input directory given (use --input or run `lmaemotion synth`)")


def load_directory(directory: Path) -> list:
    if not directory.is_dir():
        raise UsageError(f"input directory {directory} does not exist")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in (".jsonl", ".csv"))
    sequences = []
    for p in files:
        try:
            sequences.append(load_sequence(p))
        except (MotionFormatError, OSError, ValueError) as exc:
            log.warning("skipping %s: %s", p.name, exc)
    return sequences


# ---------------------------------------------------------------- commands

def cmd_synth(cfg: RunConfig) -> int:
    if cfg.synth_dataset == "emotions":
        seqs = generate(SynthConfig(sequences_per_class=cfg.synth_per_class, frames=cfg.synth_frames,
                                    fps=cfg.synth_fps, seed=cfg.seed))
    elif cfg.synth_dataset == "reversal":
        seqs = reversal_dataset(n_per_class=cfg.synth_per_class, frames=cfg.synth_frames,
                                fps=cfg.synth_fps, seed=cfg.seed)
    else:
        raise UsageError(f"unknown synthetic dataset {cfg.synth_dataset!r}")
    target = Path(cfg.input_dir) if cfg.input_dir else cfg.out / "data"
    write_dataset(seqs, target)
    _manifest(cfg, "synth", sequences=len(seqs), directory=str(target))
    print(f"wrote {len(seqs)} sequences to {target}")
    return 0


def cmd_extract(cfg: RunConfig) -> int:
    directory = _input_dir(cfg)
    seqs = load_directory(directory)
    if not seqs:
        raise UsageError(f"no loadable motion files in {directory}")
    table = extract_dataset(seqs, cfg.window_spec(), ThresholdPolicy(cfg.threshold_multiplier), cfg.jobs)
    table.to_csv(_features_path(cfg))
    _manifest(cfg, "extract", rows=len(table), sequences=len(seqs))
    print(f"extracted {len(table)} windows from {len(seqs)} sequences -> {_features_path(cfg)}")
    return 0


def _labels(table: FeatureTable) -> np.ndarray:
    if any(lab is None for lab in table.labels):
        raise UsageError("every feature row needs a label for training/evaluation")
    return np.asarray(table.labels, dtype=object).astype(str)


def cmd_train(cfg: RunConfig) -> int:
    table = _load_table(cfg)
    y = _labels(table)
    plan = CvPlan.grouped(table.groups, y, cfg.folds, cfg.seed)
    for family in cfg.families:
        grid = cfg.grids.get(family, {})
        base = cfg.estimator(family, schema_hash=table.schema.hash)
        result = grid_search_cv(base, table.X, y, grid, plan, n_jobs=1 if family == "rf" else cfg.jobs)
        if result.best_params is None:
            raise UsageError(f"every grid cell failed for {family}")
        model = clone(base).set_params(**result.best_params).fit(table.X, y)
        save_model(model, _model_path(cfg, family))
        _write_grid(result, cfg.out / family / "grid.csv")
        print(f"{family}: best {result.best_params} mean CV accuracy {result.best_score:.4f}")
    _manifest(cfg, "train", families=list(cfg.families))
    return 0


def _write_grid(result, path: Path) -> None:
    rows = result.table()
    keys = list(dict.fromkeys(k for r in rows for k in r))
    lines = [",".join(keys)]
    for r in rows:
        lines.append(",".join("" if r.get(k) is None else str(r.get(k)) for k in keys))
    atomic_write_text(path, "\n".join(lines) + "\n")


def cmd_evaluate(cfg: RunConfig) -> int:
    table = _load_table(cfg)
    y = _labels(table)
    plan = CvPlan.grouped(table.groups, y, cfg.folds, cfg.seed)
    lines = ["family,window_accuracy,sequence_accuracy,macro_precision,macro_recall,macro_f1"]
    for family in cfg.families:
        model = load_model(_require(_model_path(cfg, family), "train"))
        params = {k: v for k, v in model.get_params().items() if k != "n_jobs"}
        estimator = cfg.estimator(family).set_params(**params)
        pred = cross_val_predict(estimator, table.X, y, plan)
        cm = ConfusionMatrix.from_labels(y, pred, sorted(set(y.tolist())))
        report = per_class_metrics(cm)
        report.to_csv(cfg.out / family / "metrics.csv")
        cm.to_csv(cfg.out / family / "confusion.csv")
        cm.to_svg(cfg.out / family / "confusion.svg")
        seq_acc = sequence_vote_accuracy(y, pred, table.groups)
        lines.append(f"{family},{report.accuracy!r},{seq_acc!r},{report.macro_precision!r},"
                     f"{report.macro_recall!r},{report.macro_f1!r}")
        print(f"{family}: window accuracy {report.accuracy:.4f}, sequence accuracy {seq_acc:.4f}")
    atomic_write_text(cfg.out / "accuracy.csv", "\n".join(lines) + "\n")
    _manifest(cfg, "evaluate", families=list(cfg.families))
    return 0


def cmd_explain(cfg: RunConfig) -> int:
    table = _load_table(cfg)
    rng = np.random.default_rng(cfg.seed)
    n = min(cfg.explain_samples, len(table))
    rows = np.sort(rng.choice(len(table), size=n, replace=False))
    names = list(table.schema.names)
    for family in cfg.families:
        model = load_model(_require(_model_path(cfg, family), "train"))
        attrs = []
        if family == "rf":
            for i in rows:
                attrs.append(tree_shap(model, table.vector(i)))
        else:
            background = kmedoids_background(table.X, cfg.background_size, cfg.seed)
            for i in rows:
                fv = table.vector(i)
                k = int(np.argmax(model.predict_proba(fv.values[None, :])[0]))
                attrs.append(kernel_shap(class_probability_fn(model, model.classes_[k]), fv, background,
                                         cfg.kernel_samples, seed=cfg.seed + int(i),
                                         predicted_class=model.classes_[k]))
        attributions_csv(attrs, names, cfg.out / family / "shap.csv")
        summarize(attrs, names).to_csv(cfg.out / family / "shap_summary.csv")
        summary_svg(attrs, table.X[rows], names, path=cfg.out / family / "shap_summary.svg")
        print(f"{family}: explained {len(attrs)} windows")
    _manifest(cfg, "explain", samples=int(n))
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    seqs = load_directory(_input_dir(cfg))
    if not seqs:
        raise UsageError("no loadable motion files for the sweep")
    family = cfg.families[0]
    tc = TrainingConfig(estimator=cfg.estimator(family), grid=cfg.grids.get(family, {}),
                        folds=cfg.folds, seed=cfg.seed, stride=cfg.stride, sub_window=cfg.sub_window,
                        threshold_multiplier=cfg.threshold_multiplier, n_jobs=cfg.jobs)
    rows = window_sweep(seqs, cfg.sweep_lengths, tc)
    sweep_csv(rows, cfg.out / "sweep.csv")
    sweep_svg(rows, cfg.out / "sweep.svg")
    for r in rows:
        print(f"window {r.length:>3}: " + (f"{r.accuracy:.4f}" if r.feasible else "infeasible"))
    _manifest(cfg, "sweep", family=family, lengths=[r.length for r in rows])
    return 0


def cmd_report(cfg: RunConfig) -> int:
    out = cfg.out
    if not out.is_dir():
        raise UsageError(f"output directory {out} does not exist; run the pipeline first")
    lines = ["# LMA emotion pipeline report", "", f"Root seed: {cfg.seed}", ""]
    if (out / "features.csv").exists():
        table = FeatureTable.read_csv(out / "features.csv")
        lines += [f"- Features: [features.csv](features.csv), {len(table)} windows, "
                  f"{len(set(table.sequence_ids))} sequences, {len(table.schema)} features", ""]
    if (out / "accuracy.csv").exists():
        lines += ["## Accuracy (grouped cross-validation)", "", "| family | window | sequence | macro F1 |",
                  "|---|---|---|---|"]
        for row in (out / "accuracy.csv").read_text().splitlines()[1:]:
            fam, acc, seq, _, _, f1 = row.split(",")
            lines.append(f"| {fam} | {float(acc):.4f} | {float(seq):.4f} | {float(f1):.4f} |")
        lines.append("")
    for family in cfg.families:
        d = out / family
        if not d.is_dir():
            continue
        lines += [f"## {family}", ""]
        for name in ("model.json", "grid.csv", "metrics.csv", "confusion.csv", "confusion.svg",
                     "shap.csv", "shap_summary.csv", "shap_summary.svg"):
            if (d / name).exists():
                lines.append(f"- [{name}]({family}/{name})")
        summary = d / "shap_summary.csv"
        if summary.exists():
            lines += ["", "Top features by mean |Shapley value|:", ""]
            for row in summary.read_text().splitlines()[1:11]:
                rank, feat, mabs = row.split(",")[:3]
                lines.append(f"{rank}. {feat} ({float(mabs):.4g})")
        lines.append("")
    if (out / "sweep.csv").exists():
        lines += ["## Window sweep", "", "- [sweep.csv](sweep.csv)", "- [sweep.svg](sweep.svg)", ""]
    atomic_write_text(out / "report.md", "\n".join(lines))
    print(f"wrote {out / 'report.md'}")
    return 0


COMMANDS = {"extract": cmd_extract, "train": cmd_train, "evaluate": cmd_evaluate,
            "explain": cmd_explain, "synth": cmd_synth, "sweep": cmd_sweep, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--seed", type=int, help="root seed for every random choice")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, help="parallel workers")
    common.add_argument("--input", help="directory of .jsonl/.csv motion files")
    common.add_argument("--window", type=int, help="window length in frames")
    common.add_argument("--stride", type=int, help="window stride in frames")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="lmaemotion", description=__doc__.splitlines()[0],
                                     parents=[common])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "sweep":
            p.add_argument("--lengths", type=int, nargs="+", help="window lengths to try")
        if name in ("train", "evaluate", "explain", "sweep", "report"):
            p.add_argument("--family", choices=sorted(FAMILIES), action="append",
                           help="model family (repeatable)")
        if name == "explain":
            p.add_argument("--samples", type=int, help="number of windows to explain")
        if name == "synth":
            p.add_argument("--dataset", choices=["emotions", "reversal"])
            p.add_argument("--per-class", type=int)
            p.add_argument("--frames", type=int)
    return parser


def _resolve(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(getattr(args, "config", None))
    overrides = {"seed": getattr(args, "seed", None), "output_dir": getattr(args, "out", None),
                 "jobs": getattr(args, "jobs", None), "input_dir": getattr(args, "input", None),
                 "window_length": getattr(args, "window", None), "stride": getattr(args, "stride", None),
                 "sweep_lengths": getattr(args, "lengths", None),
                 "families": getattr(args, "family", None),
                 "explain_samples": getattr(args, "samples", None),
                 "synth_dataset": getattr(args, "dataset", None),
                 "synth_per_class": getattr(args, "per_class", None),
                 "synth_frames": getattr(args, "frames", None)}
    return cfg.merged({k: v for k, v in overrides.items() if v is not None})


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - last-resort reporting
        log.exception("internal error: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
