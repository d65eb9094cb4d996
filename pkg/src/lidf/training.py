"""Training loops, k-fold evaluation, metrics, and checkpointing.

A run is fully determined by (manifest, TrainConfig): every random stream
(weight init, shuffling, dropout, mixup) derives from the config seed and
fold id, so repeated runs produce bitwise-identical histories and
checkpoints.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import architectures as arch
from .audio import load_prepared
from .corpus import FoldPlan, Manifest, make_folds
from .errors import (
    DivergedError,
    InvalidArgumentError,
    InvalidCheckpointError,
    InvalidConfigError,
)
from .melspec import MelConfig, clip_to_image
from .mixup import MixupConfig, mixup_batch
from .tensor_core import Tensor, load_container, no_grad, save_container
from .tensor_core import functional as F
from .tensor_core import optim

log = logging.getLogger(__name__)

EXPLORED_BATCH_SIZES = (32, 64, 128)


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str = "adam"  # adam | sgd
    lr: float = 1e-3
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def build(self, parameters) -> optim.Optimizer:
        if self.kind == "adam":
            return optim.Adam(parameters, self.lr, self.beta1, self.beta2, self.eps)
        if self.kind == "sgd":
            return optim.SGD(parameters, self.lr, self.momentum)
        raise InvalidConfigError(f"unknown optimizer {self.kind!r}")


@dataclass(frozen=True)
class TrainConfig:
    architecture: str
    arch_config: Union[arch.Arch1DConfig, arch.Arch2DConfig]
    batch_size: int = 32
    epochs: int = 50
    optimizer: OptimizerSpec = OptimizerSpec()
    mixup: MixupConfig = MixupConfig()
    mel: MelConfig = MelConfig()
    seed: int = 0
    folds: int = 5
    fold_seed: int = 0

    def __post_init__(self):
        if self.batch_size not in EXPLORED_BATCH_SIZES:
            log.warning("batch size %d is outside the explored set %s",
                        self.batch_size, EXPLORED_BATCH_SIZES)


def config_to_dict(config: TrainConfig) -> dict:
    d = dataclasses.asdict(config)
    d["arch_config"]["__kind__"] = type(config.arch_config).__name__
    return d


def config_from_dict(d: dict) -> TrainConfig:
    ac = dict(d["arch_config"])
    kind = ac.pop("__kind__", None)
    if kind == "Arch1DConfig" or (kind is None and d["architecture"] == "1d"):
        arch_config = arch.Arch1DConfig(**ac)
    else:
        if "dropout_rates" in ac:
            ac["dropout_rates"] = tuple(ac["dropout_rates"])
        arch_config = arch.Arch2DConfig(**ac)
    return TrainConfig(
        architecture=d["architecture"],
        arch_config=arch_config,
        batch_size=d["batch_size"],
        epochs=d["epochs"],
        optimizer=OptimizerSpec(**d["optimizer"]),
        mixup=MixupConfig(**d["mixup"]),
        mel=MelConfig(**d["mel"]),
        seed=d["seed"],
        folds=d["folds"],
        fold_seed=d["fold_seed"],
    )


def config_hash(config: TrainConfig) -> str:
    blob = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# feature access


class FeatureProvider:
    """Loads model inputs for manifest entries, memoizing in RAM and in an
    optional on-disk cache (see lidf.cache for the disk format)."""

    def __init__(self, config: TrainConfig, cache_dir: Optional[Path] = None):
        self.config = config
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self._ram: Dict[int, np.ndarray] = {}

    def input_for(self, manifest: Manifest, index: int) -> np.ndarray:
        if index in self._ram:
            return self._ram[index]
        entry = manifest.entries[index]
        if self.config.architecture == "1d":
            clip = load_prepared(entry.path, entry.label)
            x = clip.samples.reshape(1, -1)
            # shrunken configs see the clip head only
            n = self.config.arch_config.input_samples
            if n < x.shape[1]:
                x = np.ascontiguousarray(x[:, :n])
        else:
            from .cache import load_or_compute_image

            x = load_or_compute_image(
                entry.path, self.config.mel, self.config.arch_config.image_size, self.cache_dir
            )
        self._ram[index] = x
        return x

    def batch(self, manifest: Manifest, indices: Sequence[int]) -> np.ndarray:
        return np.stack([self.input_for(manifest, i) for i in indices])


def one_hot(labels: Sequence[int], num_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), num_classes), dtype=np.float32)
    out[np.arange(len(labels)), labels] = 1.0
    return out


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    meta: dict
    arrays: Dict[str, np.ndarray]

    def save(self, path) -> None:
        save_container(path, self.meta, sorted(self.arrays.items()))

    @staticmethod
    def load(path) -> "Checkpoint":
        meta, arrays = load_container(path)
        return Checkpoint(meta=meta, arrays=arrays)


def snapshot_model(model: arch.ModelGraph, config: TrainConfig, fold: int, epoch: int) -> Checkpoint:
    arrays = {name: a.copy() for name, a in model.module.state_arrays()}
    meta = {
        "architecture": config.architecture,
        "config": config_to_dict(config),
        "config_hash": config_hash(config),
        "fold": fold,
        "epoch": epoch,
    }
    return Checkpoint(meta=meta, arrays=arrays)


def model_from_checkpoint(checkpoint: Checkpoint) -> Tuple[arch.ModelGraph, TrainConfig]:
    try:
        config = config_from_dict(checkpoint.meta["config"])
    except (KeyError, TypeError) as exc:
        raise InvalidCheckpointError(f"checkpoint meta unusable: {exc}") from exc
    rng = np.random.default_rng(0)  # weights are overwritten below
    model = arch.build_model(config.architecture, config.arch_config, rng)
    try:
        model.module.load_state(checkpoint.arrays)
    except InvalidArgumentError as exc:
        raise InvalidCheckpointError(str(exc)) from exc
    return model, config


# ---------------------------------------------------------------------------
# training


def _derive_rngs(config: TrainConfig, fold: int):
    seq = np.random.SeedSequence([config.seed, fold])
    init, shuffle, dropout, mix = [np.random.default_rng(s) for s in seq.spawn(4)]
    return init, shuffle, dropout, mix


def _mixup_applies(config: TrainConfig) -> bool:
    if not config.mixup.enabled:
        return False
    return config.architecture != "1d" or config.mixup.apply_to_waveform


def train_fold(
    config: TrainConfig,
    fold: int,
    manifest: Manifest,
    plan: Optional[FoldPlan] = None,
    provider: Optional[FeatureProvider] = None,
) -> Tuple[Checkpoint, List[dict]]:
    """Train one fold; returns the best-validation checkpoint and the
    per-epoch history [{epoch, train_loss, val_accuracy}, ...]."""
    plan = plan if plan is not None else make_folds(manifest, config.folds, config.fold_seed)
    provider = provider if provider is not None else FeatureProvider(config)
    init_rng, shuffle_rng, dropout_rng, mix_rng = _derive_rngs(config, fold)

    model = arch.build_model(config.architecture, config.arch_config, init_rng)
    model.set_dropout_rng(dropout_rng)
    optimizer = config.optimizer.build(model.module.parameters())

    train_idx = plan.train_indices(fold)
    val_idx = plan.val_indices(fold)
    if np.intersect1d(train_idx, val_idx).size:
        raise InvalidArgumentError("fold plan leaks validation indices into training")
    num_classes = len(manifest.languages)
    labels = np.array([e.label for e in manifest.entries])
    use_mixup = _mixup_applies(config)

    best = snapshot_model(model, config, fold, epoch=0)
    best_acc = -1.0
    history: List[dict] = []
    for epoch in range(config.epochs):
        model.module.train()
        order = train_idx[shuffle_rng.permutation(len(train_idx))]
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            x = provider.batch(manifest, batch_idx)
            y = one_hot(labels[batch_idx], num_classes)
            if use_mixup:
                x, y = mixup_batch(x, y, mix_rng, config.mixup)
            logits = model.forward(Tensor(x))
            loss = F.softmax_cross_entropy(logits, y)
            value = loss.item()
            if not np.isfinite(value):
                raise DivergedError(epoch=epoch, batch=start // config.batch_size)
            loss.backward()
            optimizer.step()
            losses.append(value)
        val_acc = _accuracy(model, manifest, provider, val_idx, labels, config.batch_size)
        history.append(
            {"epoch": epoch, "train_loss": float(np.mean(losses)), "val_accuracy": val_acc}
        )
        if val_acc > best_acc:
            best_acc = val_acc
            best = snapshot_model(model, config, fold, epoch=epoch + 1)
    return best, history


def _accuracy(model, manifest, provider, indices, labels, batch_size) -> float:
    preds = _predict(model, manifest, provider, indices, batch_size)
    return float(np.mean(preds == labels[indices])) if len(indices) else 0.0


def _predict(model, manifest, provider, indices, batch_size) -> np.ndarray:
    model.module.eval()
    preds = []
    with no_grad():
        for start in range(0, len(indices), batch_size):
            batch_idx = indices[start : start + batch_size]
            x = provider.batch(manifest, batch_idx)
            logits = model.forward(Tensor(x))
            preds.append(np.argmax(logits.data, axis=1))
    return np.concatenate(preds) if preds else np.array([], dtype=np.int64)


def evaluate(
    checkpoint: Checkpoint,
    fold: int,
    manifest: Manifest,
    plan: Optional[FoldPlan] = None,
    provider: Optional[FeatureProvider] = None,
    expected_hash: Optional[str] = None,
) -> dict:
    """Run the checkpointed model over its validation fold in eval mode.
    Returns {accuracy, confusion} with confusion row i = true class i."""
    if expected_hash is not None and checkpoint.meta.get("config_hash") != expected_hash:
        raise InvalidCheckpointError(
            f"checkpoint config hash {checkpoint.meta.get('config_hash')} does not match "
            f"expected {expected_hash}"
        )
    model, config = model_from_checkpoint(checkpoint)
    plan = plan if plan is not None else make_folds(manifest, config.folds, config.fold_seed)
    provider = provider if provider is not None else FeatureProvider(config)
    labels = np.array([e.label for e in manifest.entries])
    val_idx = plan.val_indices(fold)
    preds = _predict(model, manifest, provider, val_idx, config.batch_size)
    c = len(manifest.languages)
    confusion = np.zeros((c, c), dtype=np.int64)
    for truth, pred in zip(labels[val_idx], preds):
        confusion[truth, pred] += 1
    accuracy = float(np.trace(confusion) / max(1, confusion.sum()))
    return {"accuracy": accuracy, "confusion": confusion}


@dataclass
class EvalReport:
    per_fold_accuracy: List[float]
    mean_accuracy: float  # trace of the aggregated confusion / total samples
    std_accuracy: float  # population std of the per-fold accuracies
    confusion: np.ndarray
    per_class_precision: List[float]
    per_class_recall: List[float]

    def to_dict(self) -> dict:
        return {
            "per_fold_accuracy": self.per_fold_accuracy,
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "confusion": self.confusion.tolist(),
            "per_class_precision": self.per_class_precision,
            "per_class_recall": self.per_class_recall,
        }


def aggregate_report(per_fold_accuracy: List[float], confusion: np.ndarray) -> EvalReport:
    accs = np.array(per_fold_accuracy, dtype=np.float64)
    col_sums = confusion.sum(axis=0)
    row_sums = confusion.sum(axis=1)
    diag = np.diag(confusion)
    precision = [float(diag[i] / col_sums[i]) if col_sums[i] else 0.0 for i in range(len(diag))]
    recall = [float(diag[i] / row_sums[i]) if row_sums[i] else 0.0 for i in range(len(diag))]
    return EvalReport(
        per_fold_accuracy=[float(a) for a in accs],
        mean_accuracy=float(np.trace(confusion) / max(1, confusion.sum())),
        std_accuracy=float(accs.std()),  # population std
        confusion=confusion,
        per_class_precision=precision,
        per_class_recall=recall,
    )


def cross_validate(
    config: TrainConfig,
    manifest: Manifest,
    plan: Optional[FoldPlan] = None,
    out_dir: Optional[Path] = None,
    provider: Optional[FeatureProvider] = None,
) -> Tuple[EvalReport, List[List[dict]]]:
    """train_fold + evaluate over every fold. When out_dir is given, persists
    per-fold checkpoints and histories there."""
    plan = plan if plan is not None else make_folds(manifest, config.folds, config.fold_seed)
    provider = provider if provider is not None else FeatureProvider(config)
    expected = config_hash(config)
    c = len(manifest.languages)
    confusion = np.zeros((c, c), dtype=np.int64)
    fold_accs: List[float] = []
    histories: List[List[dict]] = []
    for fold in range(plan.k):
        try:
            checkpoint, history = train_fold(config, fold, manifest, plan, provider)
            fragment = evaluate(checkpoint, fold, manifest, plan, provider, expected_hash=expected)
        except DivergedError as exc:
            raise DivergedError(exc.epoch, exc.batch) from exc
        fold_accs.append(fragment["accuracy"])
        confusion += fragment["confusion"]
        histories.append(history)
        if out_dir is not None:
            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            checkpoint.save(out_dir / f"fold{fold}.lidf")
            (out_dir / f"fold{fold}_history.json").write_text(
                json.dumps(history, indent=2) + "\n"
            )
    return aggregate_report(fold_accs, confusion), histories


# ---------------------------------------------------------------------------
# confusion rendering


def confusion_to_percent(confusion: np.ndarray) -> np.ndarray:
    """Row-normalized percentages."""
    confusion = np.asarray(confusion, dtype=np.float64)
    row_sums = confusion.sum(axis=1, keepdims=True)
    if np.any(row_sums == 0):
        raise InvalidArgumentError("confusion_to_percent: a row has no samples")
    return confusion / row_sums * 100.0


def format_percent_cell(value: float) -> str:
    """Percent with two decimals; nonzero values below 0.1% render as '*'."""
    if 0.0 < value < 0.1:
        return "*"
    return f"{value:.2f}"


def render_confusion(confusion: np.ndarray, languages: Sequence[str]) -> str:
    percent = confusion_to_percent(confusion)
    width = max(8, max(len(l) for l in languages) + 2)
    header = " " * width + "".join(f"{l:>{width}}" for l in languages)
    lines = [header]
    for i, lang in enumerate(languages):
        cells = "".join(f"{format_percent_cell(percent[i, j]):>{width}}" for j in range(len(languages)))
        lines.append(f"{lang:<{width}}{cells}")
    return "\n".join(lines)
