"""Random hyperparameter search with per-trial records.

Configs are sampled uniformly and independently per dimension from a
declared space; infeasible draws (shape underflow) are rejected and
resampled. The sampled sequence depends only on the master seed, so a sweep
can be interrupted and resumed: completed trials are read back from the
append-only results log and skipped.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from . import architectures as arch
from .corpus import Manifest, make_folds
from .errors import (
    DivergedError,
    EmptyReportError,
    InfeasibleSpaceError,
    InvalidArgumentError,
    InvalidConfigError,
)
from .training import (
    FeatureProvider,
    OptimizerSpec,
    TrainConfig,
    config_to_dict,
    evaluate,
    train_fold,
)

log = logging.getLogger(__name__)

MAX_RESAMPLES = 100


@dataclass(frozen=True)
class Dimension:
    """Either categorical (values) or a float range (low/high)."""

    name: str
    values: Optional[tuple] = None
    low: Optional[float] = None
    high: Optional[float] = None

    def sample(self, rng: np.random.Generator):
        if self.values is not None:
            return self.values[int(rng.integers(len(self.values)))]
        return float(rng.uniform(self.low, self.high))


@dataclass(frozen=True)
class SearchSpace:
    architecture: str
    dimensions: tuple

    def names(self) -> List[str]:
        return [d.name for d in self.dimensions]


def default_space(architecture: str) -> SearchSpace:
    if architecture == "1d":
        dims = (
            Dimension("filters", values=(32, 64, 128)),
            Dimension("kernel", values=(3, 5, 7, 9)),
            Dimension("dropout", values=(0.05, 0.1, 0.25, 0.5)),
            Dimension("batch_size", values=(32, 64, 128)),
            Dimension("block1_layers", values=(1, 2, 3)),
            Dimension("block2_layers", values=(1, 2, 3)),
        )
    elif architecture in ("2d", "2d-attn-gru"):
        dims = (
            Dimension("filters", values=(32, 64, 128)),
            Dimension("kernel", values=(3, 7)),
            Dimension("dropout", values=(0.05, 0.1, 0.25)),
            Dimension("batch_size", values=(32, 64, 128)),
            Dimension("gru_hidden", values=(256, 768, 1536)),
            Dimension("image_size", values=(64, 128)),
        )
    else:
        raise InvalidConfigError(f"unknown architecture {architecture!r}")
    return SearchSpace(architecture=architecture, dimensions=dims)


def space_from_dict(d: dict) -> SearchSpace:
    dims = []
    for item in d["dimensions"]:
        if "values" in item:
            dims.append(Dimension(item["name"], values=tuple(item["values"])))
        else:
            dims.append(Dimension(item["name"], low=item["low"], high=item["high"]))
    return SearchSpace(architecture=d["architecture"], dimensions=tuple(dims))


def apply_sample(base: TrainConfig, sampled: Dict[str, object]) -> TrainConfig:
    """Fold sampled dimension values into a TrainConfig."""
    ac = base.arch_config
    updates = {}
    if "filters" in sampled:
        updates["first_layer_filters"] = int(sampled["filters"])
    if "kernel" in sampled:
        updates["kernel_size"] = int(sampled["kernel"])
    if isinstance(ac, arch.Arch1DConfig):
        if "dropout" in sampled:
            updates["dropout_rate"] = float(sampled["dropout"])
        if "block1_layers" in sampled:
            updates["block1_layers"] = int(sampled["block1_layers"])
        if "block2_layers" in sampled:
            updates["block2_layers"] = int(sampled["block2_layers"])
    else:
        if "dropout" in sampled:
            d = float(sampled["dropout"])
            updates["dropout_rates"] = (2.0 * d, d)  # keeps the published (0.2, 0.1) at d=0.1
        if "gru_hidden" in sampled:
            updates["gru_hidden_per_direction"] = int(sampled["gru_hidden"])
        if "image_size" in sampled:
            updates["image_size"] = int(sampled["image_size"])
    config = dataclasses.replace(base, arch_config=dataclasses.replace(ac, **updates))
    if "batch_size" in sampled:
        config = dataclasses.replace(config, batch_size=int(sampled["batch_size"]))
    if "lr" in sampled:
        config = dataclasses.replace(
            config, optimizer=dataclasses.replace(config.optimizer, lr=float(sampled["lr"]))
        )
    return config


def sample_config(space: SearchSpace, rng: np.random.Generator,
                  base: TrainConfig) -> tuple:
    """Draw until feasible (bounded retries). Returns (TrainConfig, sampled)."""
    if not space.dimensions:
        raise InvalidArgumentError("search space has no dimensions")
    for _ in range(MAX_RESAMPLES):
        sampled = {d.name: d.sample(rng) for d in space.dimensions}
        config = apply_sample(base, sampled)
        try:
            if config.architecture == "1d":
                arch.plan_1d_shapes(config.arch_config)
            else:
                arch.plan_2d_shapes(config.arch_config)
        except InvalidConfigError:
            continue
        return config, sampled
    raise InfeasibleSpaceError(
        f"{MAX_RESAMPLES} consecutive draws from the space were infeasible"
    )


@dataclass
class TrialResult:
    trial: int
    sampled: Dict[str, object]
    config: dict
    accuracies: List[float]
    mean_accuracy: Optional[float]
    wall_seconds: float
    seed: int
    status: str  # done | diverged | error
    error: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @staticmethod
    def from_json(line: str) -> "TrialResult":
        return TrialResult(**json.loads(line))


def _trial_seed(master_seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([master_seed, trial]).generate_state(1)[0])


def sampled_configs(space: SearchSpace, base: TrainConfig, master_seed: int,
                    n_trials: int) -> List[tuple]:
    """The deterministic config sequence for a sweep."""
    rng = np.random.default_rng(np.random.SeedSequence([master_seed]))
    return [sample_config(space, rng, base) for _ in range(n_trials)]


def _run_trial(trial: int, config: TrainConfig, sampled: dict, manifest: Manifest,
               budget_folds: int, cache_dir) -> TrialResult:
    started = time.monotonic()
    seed = config.seed
    try:
        plan = make_folds(manifest, config.folds, config.fold_seed)
        provider = FeatureProvider(config, cache_dir)
        accuracies = []
        for fold in range(min(budget_folds, plan.k)):
            checkpoint, _ = train_fold(config, fold, manifest, plan, provider)
            accuracies.append(evaluate(checkpoint, fold, manifest, plan, provider)["accuracy"])
        return TrialResult(
            trial=trial, sampled=sampled, config=config_to_dict(config),
            accuracies=accuracies, mean_accuracy=float(np.mean(accuracies)),
            wall_seconds=time.monotonic() - started, seed=seed, status="done",
        )
    except DivergedError as exc:
        return TrialResult(
            trial=trial, sampled=sampled, config=config_to_dict(config), accuracies=[],
            mean_accuracy=None, wall_seconds=time.monotonic() - started, seed=seed,
            status="diverged", error=str(exc),
        )
    except Exception as exc:  # a failed trial must not abort the sweep
        log.warning("trial %d failed: %s", trial, exc)
        return TrialResult(
            trial=trial, sampled=sampled, config=config_to_dict(config), accuracies=[],
            mean_accuracy=None, wall_seconds=time.monotonic() - started, seed=seed,
            status="error", error=f"{type(exc).__name__}: {exc}",
        )


def load_results(log_path: Path) -> List[TrialResult]:
    results = []
    if Path(log_path).exists():
        for line in Path(log_path).read_text().splitlines():
            if line.strip():
                results.append(TrialResult.from_json(line))
    return results


def run_search(
    space: SearchSpace,
    base: TrainConfig,
    n_trials: int,
    manifest: Manifest,
    out_dir,
    master_seed: int = 0,
    budget_folds: int = 1,
    workers: int = 1,
    cache_dir=None,
) -> List[TrialResult]:
    """Execute (or resume) a sweep; every completed trial is appended to
    out_dir/results.jsonl as soon as it finishes."""
    if n_trials < 1:
        raise InvalidArgumentError(f"n_trials must be >= 1, got {n_trials}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "results.jsonl"
    existing = {r.trial: r for r in load_results(log_path)}
    if existing:
        log.info("resuming: %d trials already recorded", len(existing))

    configs = sampled_configs(space, base, master_seed, n_trials)
    pending = []
    for trial, (config, sampled) in enumerate(configs):
        if trial in existing:
            continue
        config = dataclasses.replace(config, seed=_trial_seed(master_seed, trial))
        pending.append((trial, config, sampled))

    append_lock = threading.Lock()

    def execute(args):
        trial, config, sampled = args
        result = _run_trial(trial, config, sampled, manifest, budget_folds, cache_dir)
        with append_lock:
            with open(log_path, "a") as fh:
                fh.write(result.to_json() + "\n")
        return result

    if workers <= 1:
        for args in pending:
            existing[args[0]] = execute(args)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for result in pool.map(execute, pending):
                existing[result.trial] = result
    return [existing[t] for t in sorted(existing)]


def report_search(results: Sequence[TrialResult]) -> Dict[str, List[dict]]:
    """Group done-trial accuracies by each dimension value: the flattened
    samples behind an accuracy-vs-hyperparameter distribution plot."""
    done = [r for r in results if r.status == "done"]
    if not done:
        raise EmptyReportError("no successful trials to report")
    grouped: Dict[str, Dict[object, List[float]]] = {}
    for r in done:
        for name, value in r.sampled.items():
            grouped.setdefault(name, {}).setdefault(value, []).append(r.mean_accuracy)
    report: Dict[str, List[dict]] = {}
    for name, by_value in grouped.items():
        rows = []
        for value in sorted(by_value, key=lambda v: (str(type(v)), v)):
            accs = by_value[value]
            rows.append(
                {
                    "value": value,
                    "count": len(accs),
                    "mean": float(np.mean(accs)),
                    "median": float(np.median(accs)),
                    "min": float(np.min(accs)),
                    "max": float(np.max(accs)),
                    "samples": [float(a) for a in accs],
                }
            )
        report[name] = rows
    return report


def report_to_csv(report: Dict[str, List[dict]]) -> str:
    lines = ["dimension,value,count,mean,median,min,max"]
    for name in sorted(report):
        for row in report[name]:
            lines.append(
                f"{name},{row['value']},{row['count']},{row['mean']:.6f},"
                f"{row['median']:.6f},{row['min']:.6f},{row['max']:.6f}"
            )
    return "\n".join(lines) + "\n"
