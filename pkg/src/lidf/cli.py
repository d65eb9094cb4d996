"""Command-line entry point.

Subcommands: synth, scan, featurize, train, search, report. Every run
persists its fully resolved configuration into the output directory before
doing any work, so a run directory is always reproducible from its own
contents. Exit codes: 0 success, 2 usage/config error, 3 training
divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import architectures as arch
from . import search as hposearch
from . import training
from .cache import CACHE_ENV_VAR, default_cache_dir, featurize_manifest
from .corpus import Manifest, make_folds, scan_corpus, synth_corpus
from .errors import (
    DivergedError,
    InvalidCheckpointError,
    LidfError,
    UnsupportedFormatError,
    WavParseError,
)
from .melspec import MelConfig
from .mixup import MixupConfig
from .training import OptimizerSpec, TrainConfig

log = logging.getLogger("lidf")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _arch_config_from_args(args, file_config: dict):
    overrides = dict(file_config.get("arch_config", {}))
    overrides.pop("__kind__", None)
    if args.arch == "1d":
        base = arch.Arch1DConfig(**overrides)
        if args.filters:
            base = dataclasses.replace(base, first_layer_filters=args.filters)
        if args.kernel:
            base = dataclasses.replace(base, kernel_size=args.kernel)
        return base
    if "dropout_rates" in overrides:
        overrides["dropout_rates"] = tuple(overrides["dropout_rates"])
    base = arch.Arch2DConfig(**overrides)
    if args.filters:
        base = dataclasses.replace(base, first_layer_filters=args.filters)
    if args.kernel:
        base = dataclasses.replace(base, kernel_size=args.kernel)
    if args.image_size:
        base = dataclasses.replace(base, image_size=args.image_size)
    return base


def _train_config_from_args(args) -> TrainConfig:
    # precedence: dataclass defaults < --config file < explicit flags
    file_config = {}
    if args.config:
        file_config = json.loads(Path(args.config).read_text())
    arch_config = _arch_config_from_args(args, file_config)

    def pick(flag_value, key, fallback):
        if flag_value is not None:
            return flag_value
        return file_config.get(key, fallback)

    optimizer = OptimizerSpec(**file_config.get("optimizer", {}))
    if args.lr is not None:
        optimizer = dataclasses.replace(optimizer, lr=args.lr)
    if args.optimizer is not None:
        optimizer = dataclasses.replace(optimizer, kind=args.optimizer)
    mixup_cfg = MixupConfig(**file_config.get("mixup", {}))
    if args.mixup:
        mixup_cfg = dataclasses.replace(mixup_cfg, enabled=True)
    return TrainConfig(
        architecture=args.arch,
        arch_config=arch_config,
        batch_size=int(pick(args.batch_size, "batch_size", 32)),
        epochs=int(pick(args.epochs, "epochs", 50)),
        optimizer=optimizer,
        mixup=mixup_cfg,
        mel=MelConfig(**file_config.get("mel", {})),
        seed=int(pick(args.seed, "seed", 0)),
        folds=int(pick(args.folds, "folds", 5)),
        fold_seed=int(pick(None, "fold_seed", 0)),
    )


def cmd_synth(args) -> int:
    manifest = synth_corpus(args.out, n_per_class=args.per_class, seed=args.seed)
    manifest.save(Path(args.out) / "manifest.tsv")
    print(f"wrote {len(manifest.entries)} clips under {args.out}")
    return EXIT_OK


def cmd_scan(args) -> int:
    languages = args.languages.split(",") if args.languages else None
    manifest = scan_corpus(args.root, languages)
    manifest.save(args.out)
    print(f"manifest: {len(manifest.entries)} entries, "
          f"{len(manifest.languages)} languages -> {args.out}")
    return EXIT_OK


def cmd_featurize(args) -> int:
    manifest = Manifest.load(args.manifest)
    cache_dir = Path(args.cache_dir) if args.cache_dir else default_cache_dir()
    if cache_dir is None:
        print(f"error: no cache dir (pass --cache-dir or set {CACHE_ENV_VAR})", file=sys.stderr)
        return EXIT_USAGE
    mel = MelConfig(n_fft=args.n_fft, hop=args.hop, n_mels=args.n_mels)
    counts = featurize_manifest(manifest, mel, args.size, cache_dir)
    print(f"featurize: {counts['miss']} computed, {counts['hit']} cached, "
          f"{counts['repaired']} repaired -> {cache_dir}")
    return EXIT_OK


def cmd_train(args) -> int:
    manifest = Manifest.load(args.manifest)
    config = _train_config_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = training.config_to_dict(config)
    resolved["config_hash"] = training.config_hash(config)
    _write_json(out / "resolved_config.json", resolved)
    print(f"[lidf train] workers=1 seed={config.seed} arch={config.architecture} "
          f"folds={config.folds} epochs={config.epochs}")

    plan = make_folds(manifest, config.folds, config.fold_seed)
    cache_dir = Path(args.cache_dir) if args.cache_dir else default_cache_dir()
    provider = training.FeatureProvider(config, cache_dir)
    report, histories = training.cross_validate(config, manifest, plan, out, provider)

    payload = {
        "config": resolved,
        "languages": manifest.languages,
        "report": report.to_dict(),
        "histories": histories,
    }
    _write_json(out / "report.json", payload)
    summary = _format_summary(manifest, report)
    (out / "summary.txt").write_text(summary + "\n")
    (out / "confusion.csv").write_text(_confusion_csv(report.confusion, manifest.languages))
    print(summary)
    return EXIT_OK


def _format_summary(manifest: Manifest, report: training.EvalReport) -> str:
    lines = [
        "per-fold accuracy: " + ", ".join(f"{a:.4f}" for a in report.per_fold_accuracy),
        f"mean accuracy:     {report.mean_accuracy:.4f}",
        f"std (population):  {report.std_accuracy:.4f}",
        "",
        training.render_confusion(report.confusion, manifest.languages),
    ]
    return "\n".join(lines)


def _confusion_csv(confusion: np.ndarray, languages) -> str:
    percent = training.confusion_to_percent(confusion)
    lines = ["true\\pred," + ",".join(languages)]
    for i, lang in enumerate(languages):
        cells = [training.format_percent_cell(percent[i, j]) for j in range(len(languages))]
        lines.append(f"{lang}," + ",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_search(args) -> int:
    manifest = Manifest.load(args.manifest)
    if args.space:
        space = hposearch.space_from_dict(json.loads(Path(args.space).read_text()))
    else:
        space = hposearch.default_space(args.arch)
    base = _train_config_from_args(args)
    base = dataclasses.replace(base, epochs=args.budget_epochs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = {
        "space": {
            "architecture": space.architecture,
            "dimensions": [dataclasses.asdict(d) for d in space.dimensions],
        },
        "base_config": training.config_to_dict(base),
        "trials": args.trials,
        "master_seed": args.seed if args.seed is not None else 0,
        "budget_epochs": args.budget_epochs,
        "budget_folds": args.budget_folds,
        "workers": args.workers,
    }
    _write_json(out / "resolved_config.json", resolved)
    print(f"[lidf search] workers={args.workers} trials={args.trials} "
          f"master_seed={resolved['master_seed']}")

    cache_dir = Path(args.cache_dir) if args.cache_dir else default_cache_dir()
    results = hposearch.run_search(
        space, base, args.trials, manifest, out,
        master_seed=resolved["master_seed"], budget_folds=args.budget_folds,
        workers=args.workers, cache_dir=cache_dir,
    )
    try:
        report = hposearch.report_search(results)
        (out / "summary.csv").write_text(hposearch.report_to_csv(report))
    except LidfError as exc:
        print(f"no summary: {exc}", file=sys.stderr)
    done = sum(1 for r in results if r.status == "done")
    print(f"search finished: {done}/{len(results)} trials done -> {out/'results.jsonl'}")
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    payload = json.loads((run_dir / "report.json").read_text())
    report = training.EvalReport(
        per_fold_accuracy=payload["report"]["per_fold_accuracy"],
        mean_accuracy=payload["report"]["mean_accuracy"],
        std_accuracy=payload["report"]["std_accuracy"],
        confusion=np.array(payload["report"]["confusion"], dtype=np.int64),
        per_class_precision=payload["report"]["per_class_precision"],
        per_class_recall=payload["report"]["per_class_recall"],
    )
    manifest = Manifest(entries=[], languages=payload["languages"])
    summary = _format_summary(manifest, report)
    print(summary)
    csv_path = run_dir / "confusion.csv"
    csv_path.write_text(_confusion_csv(report.confusion, payload["languages"]))
    print(f"confusion exported -> {csv_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lidf", description="spoken language identification toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic verification corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("scan", help="build a manifest from a corpus tree")
    p.add_argument("--root", required=True)
    p.add_argument("--languages", help="comma-separated subdirectory names")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("featurize", help="precompute the log-Mel image cache")
    p.add_argument("--manifest", required=True)
    p.add_argument("--cache-dir")
    p.add_argument("--size", type=int, default=128, choices=(64, 128))
    p.add_argument("--n-fft", type=int, default=1024)
    p.add_argument("--hop", type=int, default=625)
    p.add_argument("--n-mels", type=int, default=128)
    p.set_defaults(func=cmd_featurize)

    def add_train_flags(p):
        p.add_argument("--manifest", required=True)
        p.add_argument("--arch", required=True, choices=("1d", "2d", "2d-attn-gru"))
        p.add_argument("--config", help="JSON config file (defaults < file < flags)")
        p.add_argument("--mixup", action="store_true")
        p.add_argument("--folds", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--optimizer", choices=("adam", "sgd"))
        p.add_argument("--filters", type=int)
        p.add_argument("--kernel", type=int)
        p.add_argument("--image-size", type=int)
        p.add_argument("--cache-dir")

    p = sub.add_parser("train", help="k-fold cross-validated training")
    add_train_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("search", help="random hyperparameter search")
    add_train_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--space", help="JSON search space file")
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--budget-epochs", type=int, default=10)
    p.add_argument("--budget-folds", type=int, default=1)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("report", help="re-render a run directory's summary")
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, WavParseError, UnsupportedFormatError, InvalidCheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except LidfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        print(f"error: bad JSON input ({exc})", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
