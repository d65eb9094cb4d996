"""Corpus ingestion, stratified k-fold planning, and the synthetic
desk-scale corpus used for verification.

A manifest is one line per clip (path, numeric label, duration in ms,
content hash) plus the ordered language list; it is the is the unit every
training and search command consumes.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .audio import AudioClip, write_wav
from .errors import InvalidArgumentError, InvalidCorpusError, WavParseError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    duration_ms: int
    content_hash: str


@dataclass
class Manifest:
    entries: List[ManifestEntry]
    languages: List[str]

    def by_language(self) -> Dict[int, List[int]]:
        out: Dict[int, List[int]] = {i: [] for i in range(len(self.languages))}
        for idx, entry in enumerate(self.entries):
            out[entry.label].append(idx)
        return out

    def save(self, path) -> None:
        lines = ["# languages: " + ",".join(self.languages),
                 "path\tlabel\tduration_ms\thash"]
        for e in self.entries:
            lines.append(f"{e.path}\t{e.label}\t{e.duration_ms}\t{e.content_hash}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @staticmethod
    def load(path) -> "Manifest":
        text = Path(path).read_text(encoding="utf-8").splitlines()
        if len(text) < 2 or not text[0].startswith("# languages:"):
            raise InvalidCorpusError(f"{path}: not a manifest file")
        languages = [x for x in text[0].split(":", 1)[1].strip().split(",") if x]
        entries = []
        for line in text[2:]:
            if not line.strip():
                continue
            p, label, dur, h = line.split("\t")
            entries.append(ManifestEntry(p, int(label), int(dur), h))
        return Manifest(entries, languages)


def _wav_duration_ms(data: bytes) -> int:
    """Duration from header fields alone (no sample decoding)."""
    if data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavParseError("not a RIFF/WAVE file", 0)
    rate = None
    block_align = None
    data_size = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        if cid == b"fmt " and pos + 24 <= len(data):
            _, _, rate, _, block_align, _ = struct.unpack_from("<HHIIHH", data, pos + 8)
        elif cid == b"data":
            data_size = min(size, len(data) - pos - 8)
        pos += 8 + size + (size & 1)
    if not rate or not block_align or data_size is None:
        raise WavParseError("missing fmt/data chunk", pos)
    return int(round(1000.0 * (data_size // block_align) / rate))


def scan_corpus(root_dir, language_dirs: Optional[Sequence[str]] = None) -> Manifest:
    """Walk per-language directories, hashing every WAV. Unreadable files are
    skipped with a warning; duplicate contents keep only the first occurrence.

    Languages default to the sorted subdirectories of root_dir."""
    root = Path(root_dir)
    if not root.is_dir():
        raise InvalidCorpusError(f"corpus root {root} does not exist")
    if language_dirs is None:
        language_dirs = sorted(d.name for d in root.iterdir() if d.is_dir())
    languages = list(language_dirs)
    if not languages:
        raise InvalidCorpusError(f"corpus root {root} has no language directories")

    entries: List[ManifestEntry] = []
    seen_hashes: Dict[str, str] = {}
    skipped = 0
    for label, lang in enumerate(languages):
        lang_dir = root / lang
        if not lang_dir.is_dir():
            raise InvalidCorpusError(f"language directory {lang_dir} does not exist")
        files = sorted(lang_dir.rglob("*.wav"))
        count_before = len(entries)
        for wav_path in files:
            try:
                blob = wav_path.read_bytes()
                duration_ms = _wav_duration_ms(blob)
            except (OSError, WavParseError) as exc:
                log.warning("skipping unreadable %s: %s", wav_path, exc)
                skipped += 1
                continue
            digest = hashlib.sha256(blob).hexdigest()
            if digest in seen_hashes:
                log.warning("duplicate content: %s matches %s, skipped", wav_path, seen_hashes[digest])
                skipped += 1
                continue
            seen_hashes[digest] = str(wav_path)
            entries.append(ManifestEntry(str(wav_path), label, duration_ms, digest))
        if len(entries) == count_before:
            raise InvalidCorpusError(f"language directory {lang_dir} contributed no usable WAVs")
    if skipped:
        log.warning("scan finished with %d skipped files", skipped)
    return Manifest(entries, languages)


@dataclass
class FoldPlan:
    k: int
    seed: int
    assignments: np.ndarray  # fold id per manifest entry

    def val_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def make_folds(manifest: Manifest, k: int, seed: int) -> FoldPlan:
    """Stratified assignment: shuffle each language's entries under the seed,
    then deal them round-robin, so per-language fold sizes differ by <= 1."""
    if k < 2:
        raise InvalidArgumentError(f"k must be >= 2, got {k}")
    per_language = manifest.by_language()
    smallest = min((len(v) for v in per_language.values()), default=0)
    if k > smallest:
        raise InvalidArgumentError(
            f"k={k} exceeds the smallest language count ({smallest} entries)"
        )
    rng = np.random.default_rng(seed)
    assignments = np.empty(len(manifest.entries), dtype=np.int64)
    for label in sorted(per_language):
        indices = np.array(per_language[label])
        rng.shuffle(indices)
        for pos, entry_idx in enumerate(indices):
            assignments[entry_idx] = pos % k
    return FoldPlan(k=k, seed=seed, assignments=assignments)


# ---------------------------------------------------------------------------
# synthetic corpus


@dataclass(frozen=True)
class SynthRecipe:
    """One synthetic 'language': a harmonic tone in a fixed band, amplitude-
    modulated at a class rate, over band-limited noise."""

    f0_band: Tuple[float, float]
    am_rate: float
    noise_band: Tuple[float, float]
    harmonics: int = 3


# Tone fundamentals sit on 8 kHz/1024 FFT bin centers and the per-class bands
# are +-0.2%: wider bands (or off-bin tones) smear harmonics across mel rows
# and shift the per-image peak normalization, collapsing class separability.
def _band(f: float, jitter: float = 0.002) -> Tuple[float, float]:
    return (f * (1.0 - jitter), f * (1.0 + jitter))


DEFAULT_RECIPES = [
    SynthRecipe(_band(250.0), 2.0, (200.0, 450.0), 4),
    SynthRecipe(_band(421.875), 4.0, (500.0, 800.0), 4),
    SynthRecipe(_band(671.875), 7.0, (900.0, 1300.0), 4),
    SynthRecipe(_band(1046.875), 11.0, (1500.0, 2000.0), 3),
    SynthRecipe(_band(1601.5625), 16.0, (2300.0, 2900.0), 2),
    SynthRecipe(_band(2437.5), 23.0, (3300.0, 3900.0), 1),
]

SYNTH_RATE = 16000


def _bandlimited_noise(rng: np.random.Generator, n: int, band: Tuple[float, float],
                       rate: int) -> np.ndarray:
    spectrum = np.fft.rfft(rng.normal(0.0, 1.0, n))
    freqs = np.fft.rfftfreq(n, 1.0 / rate)
    spectrum[(freqs < band[0]) | (freqs > band[1])] = 0.0
    noise = np.fft.irfft(spectrum, n)
    peak = np.abs(noise).max()
    return noise / peak if peak > 0 else noise


def synth_clip(recipe: SynthRecipe, rng: np.random.Generator) -> AudioClip:
    duration = rng.uniform(2.0, 12.0)
    n = int(round(duration * SYNTH_RATE))
    t = np.arange(n) / SYNTH_RATE
    f0 = rng.uniform(*recipe.f0_band)
    sig = np.zeros(n)
    for h in range(1, recipe.harmonics + 1):
        sig += (0.55 ** (h - 1)) * np.sin(2 * np.pi * f0 * h * t + rng.uniform(0, 2 * np.pi))
    am = 1.0 + 0.35 * np.sin(2 * np.pi * recipe.am_rate * t + rng.uniform(0, 2 * np.pi))
    sig *= am / 1.35
    sig += 0.25 * _bandlimited_noise(rng, n, recipe.noise_band, SYNTH_RATE)
    sig *= 0.7 / np.abs(sig).max()
    return AudioClip(samples=sig.astype(np.float32), sample_rate=SYNTH_RATE)


def synth_corpus(out_dir, n_per_class: int = 40, seed: int = 0,
                 recipes: Optional[Sequence[SynthRecipe]] = None) -> Manifest:
    """Render a deterministic corpus of len(recipes) synthetic languages into
    out_dir/lang<i>/clip<j>.wav and return its manifest."""
    if n_per_class < 1:
        raise InvalidArgumentError(f"n_per_class must be >= 1, got {n_per_class}")
    if recipes is None:
        recipes = DEFAULT_RECIPES
    out = Path(out_dir)
    for c, recipe in enumerate(recipes):
        lang_dir = out / f"lang{c}"
        lang_dir.mkdir(parents=True, exist_ok=True)
        for j in range(n_per_class):
            rng = np.random.default_rng(np.random.SeedSequence([seed, c, j]))
            clip = synth_clip(recipe, rng)
            write_wav(lang_dir / f"clip{j:03d}.wav", clip)
    return scan_corpus(out, [f"lang{c}" for c in range(len(recipes))])
