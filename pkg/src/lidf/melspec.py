"""Log-Mel spectrogram images for the 2-D models.

Pipeline: Hann-window STFT power -> triangular mel filterbank (HTK scale,
area-normalized) -> dB with a -80 floor and per-image 0 dB peak -> fixed
piecewise-linear RGB colormap -> bilinear resize to a square image in [0, 1].

Default analysis parameters (n_fft 1024, hop 625, 128 mels, 0-4000 Hz) turn
an 80000-sample clip into 129 frames, cropped to a square 128x128 before
rendering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .audio import TARGET_RATE, TARGET_SAMPLES, AudioClip
from .errors import InvalidArgumentError, InvalidStateError

DB_FLOOR = -80.0

# anchor points of the rendering colormap: t in [0, 1] -> RGB
_COLOR_ANCHORS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
_COLOR_RGB = np.array(
    [
        [0.0, 0.0, 0.5],
        [0.0, 0.5, 1.0],
        [0.0, 1.0, 0.5],
        [1.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
    ]
)


@dataclass(frozen=True)
class MelConfig:
    n_fft: int = 1024
    hop: int = 625
    n_mels: int = 128
    f_min: float = 0.0
    f_max: float = 4000.0

    def key(self) -> str:
        return f"fft{self.n_fft}_hop{self.hop}_mel{self.n_mels}_{self.f_min:g}-{self.f_max:g}"


@dataclass
class MelSpectrogram:
    """Log-power mel spectrogram in dB, peak-normalized to [DB_FLOOR, 0]."""

    values: np.ndarray  # (n_mels, n_frames)
    config: MelConfig


@dataclass
class MelImage:
    """3-channel square image, pixel values in [0, 1]."""

    pixels: np.ndarray  # (3, size, size) float32


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def stft_power(samples: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    """Hann-windowed short-time power spectrum, reflect-padded at the edges so
    n_frames = floor(len/hop) + 1. Returns (n_fft//2 + 1, n_frames)."""
    if n_fft < 2 or (n_fft & (n_fft - 1)) != 0:
        raise InvalidArgumentError(f"stft_power: n_fft must be a power of two, got {n_fft}")
    if hop < 1:
        raise InvalidArgumentError(f"stft_power: hop must be >= 1, got {hop}")
    x = np.asarray(samples, dtype=np.float64)
    n_frames = len(x) // hop + 1
    pad = n_fft // 2
    xp = np.pad(x, pad, mode="reflect")
    window = np.hanning(n_fft + 1)[:-1]  # periodic Hann
    starts = np.arange(n_frames) * hop
    frames = np.stack([xp[s : s + n_fft] for s in starts], axis=1)
    spec = np.fft.rfft(frames * window[:, None], axis=0)
    return (spec.real**2 + spec.imag**2).astype(np.float64)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int,
                   f_min: float, f_max: float) -> np.ndarray:
    """Triangular filters with peaks equally spaced on the HTK mel scale,
    rows scaled Slaney-style by 2 / (f_hi - f_lo). Shape (n_mels, n_fft//2+1)."""
    if not (0 <= f_min < f_max <= sample_rate / 2):
        raise InvalidArgumentError(
            f"mel_filterbank: need 0 <= f_min < f_max <= nyquist, got {f_min}..{f_max}"
        )
    mel_pts = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    bin_hz = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)

    fb = np.zeros((n_mels, len(bin_hz)))
    for i in range(n_mels):
        lo, center, hi = hz_pts[i], hz_pts[i + 1], hz_pts[i + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        fb[i] = np.maximum(0.0, np.minimum(rising, falling)) * (2.0 / (hi - lo))
    if np.any(fb.max(axis=1) <= 0.0):
        raise InvalidArgumentError(
            f"mel_filterbank: {n_mels} filters exceed the resolution of n_fft={n_fft} "
            f"over {f_min}-{f_max} Hz (empty filter)"
        )
    return fb


def filter_center_freqs(config: MelConfig) -> np.ndarray:
    """Peak frequency (Hz) of each filter in a bank built from `config`."""
    mel_pts = np.linspace(hz_to_mel(config.f_min), hz_to_mel(config.f_max), config.n_mels + 2)
    return mel_to_hz(mel_pts)[1:-1]


def log_mel(clip: AudioClip, config: MelConfig = MelConfig()) -> MelSpectrogram:
    """Mel-filtered log power in dB, peak-shifted to 0 and floored at -80.

    The frame axis is cropped to at most n_mels columns so the default setup
    yields a square image (129 frames -> 128)."""
    if clip.sample_rate != TARGET_RATE or len(clip.samples) != TARGET_SAMPLES:
        raise InvalidStateError(
            f"log_mel: clip must be prepared ({TARGET_SAMPLES} samples @ {TARGET_RATE} Hz), "
            f"got {len(clip.samples)} @ {clip.sample_rate}"
        )
    power = stft_power(clip.samples, config.n_fft, config.hop)
    fb = mel_filterbank(config.n_mels, config.n_fft, clip.sample_rate,
                        config.f_min, config.f_max)
    mel_power = fb @ power
    db = 10.0 * np.log10(np.maximum(mel_power, 1e-10))
    db -= db.max()
    db = np.maximum(db, DB_FLOOR)
    if db.shape[1] > config.n_mels:
        db = db[:, : config.n_mels]
    return MelSpectrogram(values=np.ascontiguousarray(db), config=config)


def apply_colormap(t: np.ndarray) -> np.ndarray:
    """Map normalized values in [0, 1] through the fixed RGB anchors.
    Input (H, W) -> output (3, H, W)."""
    out = np.empty((3,) + t.shape)
    for c in range(3):
        out[c] = np.interp(t, _COLOR_ANCHORS, _COLOR_RGB[:, c])
    return out


def bilinear_resize(img: np.ndarray, size: int) -> np.ndarray:
    """Channel-wise bilinear resize of (C, H, W) to (C, size, size), corners
    aligned so equal sizes are an exact identity."""
    c, h, w = img.shape
    if (h, w) == (size, size):
        return img.copy()

    def axis_coords(n_in, n_out):
        if n_out == 1 or n_in == 1:
            return np.zeros(n_out), np.zeros(n_out, dtype=np.int64), np.zeros(n_out, dtype=np.int64)
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
        lo = np.floor(pos).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return pos - lo, lo, hi

    fy, y0, y1 = axis_coords(h, size)
    fx, x0, x1 = axis_coords(w, size)
    top = img[:, y0][:, :, x0] * (1 - fx) + img[:, y0][:, :, x1] * fx
    bottom = img[:, y1][:, :, x0] * (1 - fx) + img[:, y1][:, :, x1] * fx
    return top * (1 - fy[:, None]) + bottom * fy[:, None]


def render_image(spec: MelSpectrogram, size: int = 128) -> MelImage:
    """Colorize a [-80, 0] dB spectrogram and resize to (3, size, size)."""
    v = spec.values
    if v.min() < DB_FLOOR - 1e-9 or v.max() > 1e-9:
        raise InvalidArgumentError(
            f"render_image: values must lie in [{DB_FLOOR}, 0], got "
            f"[{v.min():.3f}, {v.max():.3f}]"
        )
    t = (v - DB_FLOOR) / -DB_FLOOR
    rgb = apply_colormap(t)
    resized = bilinear_resize(rgb, size)
    return MelImage(pixels=np.ascontiguousarray(np.clip(resized, 0.0, 1.0), dtype=np.float32))


def clip_to_image(clip: AudioClip, config: MelConfig = MelConfig(), size: int = 128) -> MelImage:
    return render_image(log_mel(clip, config), size)
