"""WAV reading/writing, rate conversion, and fixed-length framing.

Every clip that reaches the models has been through prepare(): mono float
samples in [-1, 1], resampled to 8 kHz, and framed to exactly 10 seconds
(80000 samples) by tiling short clips and truncating long ones.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from math import gcd
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.signal import upfirdn

from .errors import InvalidArgumentError, UnsupportedFormatError, WavParseError

TARGET_RATE = 8000
TARGET_SECONDS = 10
TARGET_SAMPLES = TARGET_RATE * TARGET_SECONDS

# resampler design knobs (documented defaults; no prescription exists upstream)
KAISER_BETA = 8.6
TAPS_PER_PHASE = 64

_PCM = 1
_IEEE_FLOAT = 3
_EXTENSIBLE = 0xFFFE


@dataclass
class AudioClip:
    """Mono waveform with its sample rate, optional class label, and origin."""

    samples: np.ndarray
    sample_rate: int
    label: Optional[int] = None
    source_path: str = ""

    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


def read_wav(path) -> AudioClip:
    """Decode a PCM WAV file (8/16/24-bit int or 32-bit float, any channel
    count) to mono floats in [-1, 1]. The original sample rate is preserved."""
    path = Path(path)
    with open(path, "rb") as fh:
        data = fh.read()

    def need(offset: int, count: int, what: str) -> bytes:
        if offset + count > len(data):
            raise WavParseError(f"truncated while reading {what}", offset)
        return data[offset : offset + count]

    if need(0, 4, "RIFF tag") != b"RIFF":
        raise WavParseError("missing RIFF tag", 0)
    if need(8, 4, "WAVE tag") != b"WAVE":
        raise WavParseError("missing WAVE tag", 8)

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body_at = pos + 8
        if chunk_id == b"fmt ":
            body = need(body_at, max(chunk_size, 16), "fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            payload = need(body_at, chunk_size, "data chunk")
        pos = body_at + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None:
        raise WavParseError("no fmt chunk found", pos)
    if payload is None:
        raise WavParseError("no data chunk found", pos)

    audio_format, channels, sample_rate, _, block_align, bits = fmt
    if audio_format == _EXTENSIBLE:
        # subformat GUID starts with the effective format code
        raise UnsupportedFormatError(f"{path}: WAVE_FORMAT_EXTENSIBLE not supported")
    if channels < 1:
        raise WavParseError("fmt chunk declares zero channels", 0)

    if audio_format == _PCM and bits == 16:
        x = np.frombuffer(payload[: len(payload) // 2 * 2], dtype="<i2").astype(np.float32)
        x /= 32768.0
    elif audio_format == _PCM and bits == 8:
        x = (np.frombuffer(payload, dtype=np.uint8).astype(np.float32) - 128.0) / 128.0
    elif audio_format == _PCM and bits == 24:
        raw = payload[: len(payload) // 3 * 3]
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        vals = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        vals -= (vals & 0x800000) << 1  # sign-extend
        x = vals.astype(np.float32) / 8388608.0
    elif audio_format == _IEEE_FLOAT and bits == 32:
        x = np.clip(np.frombuffer(payload[: len(payload) // 4 * 4], dtype="<f4"), -1.0, 1.0)
        x = x.astype(np.float32)
    elif audio_format in (_PCM, _IEEE_FLOAT):
        raise UnsupportedFormatError(f"{path}: unsupported bit depth {bits} for format {audio_format}")
    else:
        raise UnsupportedFormatError(f"{path}: unsupported codec (format code {audio_format})")

    if channels > 1:
        x = x[: len(x) // channels * channels].reshape(-1, channels).mean(axis=1)
    return AudioClip(samples=np.ascontiguousarray(x, dtype=np.float32),
                     sample_rate=sample_rate, source_path=str(path))


def write_wav(path, clip: AudioClip) -> None:
    """Write 16-bit PCM little-endian mono WAV (debug/export format)."""
    x = np.clip(clip.samples, -1.0, 1.0)
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
    with open(path, "wb") as fh:
        fh.write(b"RIFF")
        fh.write(struct.pack("<I", 36 + len(pcm)))
        fh.write(b"WAVE")
        fh.write(b"fmt ")
        fh.write(struct.pack("<IHHIIHH", 16, _PCM, 1, clip.sample_rate,
                             clip.sample_rate * 2, 2, 16))
        fh.write(b"data")
        fh.write(struct.pack("<I", len(pcm)))
        fh.write(pcm)


def _design_lowpass(up: int, cutoff_ratio: float) -> np.ndarray:
    """Kaiser-windowed sinc for the polyphase filter, gain-compensated for
    zero stuffing. cutoff_ratio is the cutoff over the upsampled Nyquist."""
    n_taps = TAPS_PER_PHASE * up + 1  # odd length -> integer group delay
    n = np.arange(n_taps) - (n_taps - 1) / 2
    h = cutoff_ratio * np.sinc(cutoff_ratio * n)
    h *= np.kaiser(n_taps, KAISER_BETA)
    return (h * up).astype(np.float64)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited polyphase resampling to target_rate.

    The low-pass cuts at 0.9x the smaller Nyquist frequency. Equal rates are
    a bit-exact pass-through. Output length is round(len * target / source).
    """
    if clip.sample_rate <= 0 or target_rate <= 0:
        raise InvalidArgumentError(
            f"resample: rates must be positive, got {clip.sample_rate} -> {target_rate}"
        )
    if target_rate == clip.sample_rate:
        return replace(clip, samples=clip.samples.copy())
    g = gcd(clip.sample_rate, target_rate)
    up, down = target_rate // g, clip.sample_rate // g
    out_len = int(np.floor(len(clip.samples) * target_rate / clip.sample_rate + 0.5))

    cutoff_hz = 0.9 * 0.5 * min(clip.sample_rate, target_rate)
    fs_up = clip.sample_rate * up
    h = _design_lowpass(up, 2.0 * cutoff_hz / fs_up)

    # upfirdn emits conv indices that are multiples of `down`; pad the filter
    # so its (integer) group delay lands on one of them, then crop the delay.
    delay = (len(h) - 1) // 2
    pre_pad = (-delay) % down
    h_padded = np.concatenate([np.zeros(pre_pad), h])
    skip = (delay + pre_pad) // down

    x = clip.samples.astype(np.float64)
    # zeros so the tail of the crop window is fully covered
    tail = int(np.ceil((len(h_padded) / up) + down))
    y = upfirdn(h_padded, np.concatenate([x, np.zeros(tail)]), up=up, down=down)
    out = y[skip : skip + out_len]
    if len(out) < out_len:
        out = np.pad(out, (0, out_len - len(out)))
    out = np.clip(out, -1.0, 1.0).astype(np.float32)
    return AudioClip(samples=out, sample_rate=target_rate,
                     label=clip.label, source_path=clip.source_path)


def fix_length(clip: AudioClip, target_seconds: int = TARGET_SECONDS) -> AudioClip:
    """Frame a clip to exactly target_seconds: tile short clips from the start
    (full repeats, then a head fragment), truncate long ones to the head."""
    if len(clip.samples) == 0:
        raise InvalidArgumentError("fix_length: empty clip")
    target = clip.sample_rate * target_seconds
    x = clip.samples
    if len(x) >= target:
        out = x[:target].copy()
    else:
        reps = int(np.ceil(target / len(x)))
        out = np.tile(x, reps)[:target]
    return replace(clip, samples=np.ascontiguousarray(out, dtype=np.float32))


def prepare(clip: AudioClip, target_rate: int = TARGET_RATE,
            target_seconds: int = TARGET_SECONDS) -> AudioClip:
    """resample + fix_length; the canonical model-input form."""
    return fix_length(resample(clip, target_rate), target_seconds)


def load_prepared(path, label: Optional[int] = None) -> AudioClip:
    clip = prepare(read_wav(path))
    return replace(clip, label=label)
