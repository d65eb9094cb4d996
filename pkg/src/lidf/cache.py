"""On-disk cache of rendered MelImages.

One container file per clip, keyed by the content hash of (audio bytes,
analysis config, image size), so edits to the audio or config invalidate the
entry automatically. Corrupt entries are recomputed with a warning.
"""

from __future__ import annotations

import hashlib
import logging
import os
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .audio import load_prepared
from .errors import InvalidCheckpointError
from .melspec import MelConfig, clip_to_image
from .tensor_core import load_container, save_container

log = logging.getLogger(__name__)

CACHE_ENV_VAR = "LIDF_CACHE_DIR"


def default_cache_dir() -> Optional[Path]:
    value = os.environ.get(CACHE_ENV_VAR)
    return Path(value) if value else None


def cache_key(audio_path, config: MelConfig, size: int) -> str:
    digest = hashlib.sha256()
    digest.update(Path(audio_path).read_bytes())
    digest.update(f"|{config.key()}|{size}".encode())
    return digest.hexdigest()


def _compute(audio_path, config: MelConfig, size: int) -> np.ndarray:
    return clip_to_image(load_prepared(audio_path), config, size).pixels


def load_or_compute_image(
    audio_path, config: MelConfig, size: int, cache_dir: Optional[Path]
) -> np.ndarray:
    if cache_dir is None:
        return _compute(audio_path, config, size)
    pixels, _ = fetch_image(audio_path, config, size, Path(cache_dir))
    return pixels


def fetch_image(
    audio_path, config: MelConfig, size: int, cache_dir: Path
) -> Tuple[np.ndarray, str]:
    """Returns (pixels, status) where status is hit | miss | repaired."""
    cache_dir.mkdir(parents=True, exist_ok=True)
    entry = cache_dir / f"{cache_key(audio_path, config, size)}.lidf"
    if entry.exists():
        try:
            meta, arrays = load_container(entry)
            pixels = arrays["pixels"]
            if pixels.shape == (3, size, size):
                return pixels, "hit"
            raise InvalidCheckpointError(f"cached shape {pixels.shape} != (3, {size}, {size})")
        except (InvalidCheckpointError, KeyError) as exc:
            log.warning("cache entry %s unusable (%s); recomputing", entry.name, exc)
            pixels = _compute(audio_path, config, size)
            _store(entry, audio_path, config, size, pixels)
            return pixels, "repaired"
    pixels = _compute(audio_path, config, size)
    _store(entry, audio_path, config, size, pixels)
    return pixels, "miss"


def _store(entry: Path, audio_path, config: MelConfig, size: int, pixels: np.ndarray) -> None:
    meta = {"source": str(audio_path), "mel": config.key(), "size": size}
    save_container(entry, meta, [("pixels", pixels)])


def featurize_manifest(manifest, config: MelConfig, size: int, cache_dir: Path) -> dict:
    """Warm the cache for every manifest entry; returns counts by status."""
    counts = {"hit": 0, "miss": 0, "repaired": 0}
    for entry in manifest.entries:
        _, status = fetch_image(entry.path, config, size, Path(cache_dir))
        counts[status] += 1
    return counts
