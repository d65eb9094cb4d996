"""Mixup: convex combinations of random training pairs and their labels.

One mixing weight is drawn per batch from a symmetric Beta(a, a); partners
come from a random permutation of the batch. Labels must be probability rows
(one-hot or already soft) so the mixed labels stay distributions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import InvalidArgumentError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MixupConfig:
    enabled: bool = False
    beta_a: float = 0.4
    # waveform batches are left alone unless explicitly requested
    apply_to_waveform: bool = False

    def __post_init__(self):
        if self.beta_a <= 0:
            raise InvalidArgumentError(f"mixup beta_a must be > 0, got {self.beta_a}")


def sample_gamma(rng: np.random.Generator, a: float) -> float:
    """One Gamma(a, 1) draw via Marsaglia-Tsang squeeze; a < 1 uses the
    boost Gamma(a) = Gamma(a+1) * U^(1/a)."""
    if a < 1.0:
        return sample_gamma(rng, a + 1.0) * rng.random() ** (1.0 / a)
    d = a - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    while True:
        x = rng.standard_normal()
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = rng.random()
        if u < 1.0 - 0.0331 * x**4:
            return d * v
        if u > 0.0 and np.log(u) < 0.5 * x * x + d - d * v + d * np.log(v):
            return d * v


def sample_alpha(rng: np.random.Generator, beta_a: float) -> float:
    """Beta(a, a) as a ratio of two Gamma(a) draws."""
    if beta_a <= 0:
        raise InvalidArgumentError(f"beta_a must be > 0, got {beta_a}")
    while True:
        g1 = sample_gamma(rng, beta_a)
        g2 = sample_gamma(rng, beta_a)
        total = g1 + g2
        if total > 0.0:  # guards underflow to (0, 0) at tiny beta_a
            return g1 / total


def mixup_batch(
    images: np.ndarray,
    labels: np.ndarray,
    rng: np.random.Generator,
    config: MixupConfig,
    alpha: float = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Mix a batch with a permuted copy of itself:

        out_image[i] = alpha * image[i] + (1 - alpha) * image[perm[i]]
        out_label[i] = alpha * label[i] + (1 - alpha) * label[perm[i]]

    Disabled config is a bitwise identity. `alpha` overrides the Beta draw
    (used by tests)."""
    if not config.enabled:
        return images, labels
    b = images.shape[0]
    if labels.shape[0] != b:
        raise InvalidArgumentError(f"mixup: {b} images but {labels.shape[0]} label rows")
    if np.any(np.abs(labels.sum(axis=1) - 1.0) > 1e-6):
        raise InvalidArgumentError("mixup: label rows must sum to 1")
    if b < 2:
        log.warning("mixup skipped: batch of %d has no pair to mix with", b)
        return images, labels
    if alpha is None:
        alpha = sample_alpha(rng, config.beta_a)
    perm = rng.permutation(b)
    a = images.dtype.type(alpha)
    mixed_images = a * images + (images.dtype.type(1.0) - a) * images[perm]
    al = labels.dtype.type(alpha)
    mixed_labels = al * labels + (labels.dtype.type(1.0) - al) * labels[perm]
    return mixed_images, mixed_labels
