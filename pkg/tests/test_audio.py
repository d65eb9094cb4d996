"""WAV decoding, resampling, and fixed-length framing."""

import struct

import numpy as np
import pytest

from lidf.audio import (
    AudioClip,
    TARGET_SAMPLES,
    fix_length,
    prepare,
    read_wav,
    resample,
    write_wav,
)
from lidf.errors import InvalidArgumentError, UnsupportedFormatError, WavParseError


def make_wav(path, payload: bytes, fmt=1, channels=1, rate=8000, bits=16,
             fmt_chunk_extra=b""):
    body = struct.pack("<HHIIHH", fmt, channels, rate,
                       rate * channels * bits // 8, channels * bits // 8, bits)
    body += fmt_chunk_extra
    chunks = b"fmt " + struct.pack("<I", len(body)) + body
    chunks += b"data" + struct.pack("<I", len(payload)) + payload
    path.write_bytes(b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks)


class TestReadWav:
    def test_16bit_scaling(self, tmp_path):
        path = tmp_path / "a.wav"
        make_wav(path, struct.pack("<3h", 16384, -16384, 0))
        clip = read_wav(path)
        assert clip.samples == pytest.approx([0.5, -0.5, 0.0], abs=1 / 32768)

    def test_stereo_mean_downmix(self, tmp_path):
        path = tmp_path / "st.wav"
        frames = struct.pack("<4h", int(0.2 * 32768), int(0.6 * 32768),
                             int(-0.5 * 32768), int(0.5 * 32768))
        make_wav(path, frames, channels=2)
        clip = read_wav(path)
        assert clip.samples == pytest.approx([0.4, 0.0], abs=1 / 16384)

    def test_header_arithmetic_16khz_second(self, tmp_path):
        path = tmp_path / "sec.wav"
        make_wav(path, b"\x00\x00" * 16000, rate=16000)
        clip = read_wav(path)
        assert len(clip.samples) == 16000
        assert clip.sample_rate == 16000

    def test_8bit_unsigned(self, tmp_path):
        path = tmp_path / "b8.wav"
        make_wav(path, bytes([128, 255, 0]), bits=8)
        clip = read_wav(path)
        assert clip.samples == pytest.approx([0.0, 127 / 128, -1.0], abs=1e-6)

    def test_24bit_sign_extension(self, tmp_path):
        path = tmp_path / "b24.wav"
        half = 1 << 22  # +0.5 in 24-bit full scale
        payload = struct.pack("<i", half)[:3] + struct.pack("<i", -half & 0xFFFFFF)[:3]
        make_wav(path, payload, bits=24)
        clip = read_wav(path)
        assert clip.samples == pytest.approx([0.5, -0.5], abs=1e-6)

    def test_float32_payload(self, tmp_path):
        path = tmp_path / "f32.wav"
        make_wav(path, struct.pack("<3f", 0.25, -0.75, 2.0), fmt=3, bits=32)
        clip = read_wav(path)
        assert clip.samples == pytest.approx([0.25, -0.75, 1.0])  # clipped to [-1, 1]

    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(OSError):
            read_wav(tmp_path / "nope.wav")

    def test_compressed_codec_unsupported(self, tmp_path):
        path = tmp_path / "mp3ish.wav"
        make_wav(path, b"\x00" * 8, fmt=85)
        with pytest.raises(UnsupportedFormatError):
            read_wav(path)

    def test_malformed_header_reports_offset(self, tmp_path):
        path = tmp_path / "bad.wav"
        path.write_bytes(b"RIFFxxxxNOPE")
        with pytest.raises(WavParseError) as err:
            read_wav(path)
        assert err.value.byte_offset == 8

    def test_truncated_file_reports_offset(self, tmp_path):
        path = tmp_path / "trunc.wav"
        make_wav(path, struct.pack("<4h", 1, 2, 3, 4))
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 4])
        with pytest.raises(WavParseError):
            read_wav(path)

    def test_round_trip_within_quantization(self, tmp_path, rng):
        samples = rng.uniform(-0.9, 0.9, 400).astype(np.float32)
        clip = AudioClip(samples, 8000)
        path = tmp_path / "rt.wav"
        write_wav(path, clip)
        back = read_wav(path)
        assert np.max(np.abs(back.samples - samples)) <= 1 / 32768


class TestResample:
    def test_equal_rates_bit_exact(self, rng):
        x = rng.normal(0, 0.3, 1000).astype(np.float32)
        out = resample(AudioClip(x, 8000), 8000)
        assert np.array_equal(out.samples, x)

    def test_sine_fidelity_16k_to_8k(self):
        sr = 16000
        t = np.arange(sr) / sr
        x = (0.8 * np.sin(2 * np.pi * 440 * t)).astype(np.float32)
        out = resample(AudioClip(x, sr), 8000)
        y = out.samples[100:-100].astype(np.float64)
        tt = (np.arange(len(out.samples)) / 8000)[100:-100]
        basis = np.column_stack([np.sin(2 * np.pi * 440 * tt), np.cos(2 * np.pi * 440 * tt)])
        coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
        amplitude = float(np.hypot(*coef))
        assert abs(amplitude - 0.8) / 0.8 < 0.02

    def test_alias_rejection_above_target_nyquist(self):
        sr = 16000
        t = np.arange(sr) / sr
        x = (0.8 * np.sin(2 * np.pi * 5000 * t)).astype(np.float32)
        out = resample(AudioClip(x, sr), 8000)
        rms_in = np.sqrt(np.mean(x.astype(np.float64) ** 2))
        rms_out = np.sqrt(np.mean(out.samples.astype(np.float64) ** 2))
        assert rms_out < 0.05 * rms_in

    @pytest.mark.parametrize("src,dst,n", [(16000, 8000, 16001), (44100, 8000, 44100),
                                           (8000, 16000, 1234), (22050, 8000, 50000)])
    def test_duration_preserved(self, src, dst, n, rng):
        x = rng.normal(0, 0.2, n).astype(np.float32)
        out = resample(AudioClip(x, src), dst)
        assert abs(len(out.samples) / dst - n / src) <= 1.0 / dst

    def test_invalid_rate_raises(self):
        with pytest.raises(InvalidArgumentError):
            resample(AudioClip(np.zeros(10, dtype=np.float32), 8000), 0)


class TestFixLength:
    def test_exact_length_unchanged(self):
        x = np.arange(TARGET_SAMPLES, dtype=np.float32) / TARGET_SAMPLES
        out = fix_length(AudioClip(x, 8000))
        assert np.array_equal(out.samples, x)

    def test_short_clip_tiles_with_head_fragment(self):
        x = np.arange(30000, dtype=np.float32)
        out = fix_length(AudioClip(x, 8000))
        expected = np.concatenate([x, x, x[:20000]])
        assert np.array_equal(out.samples, expected)

    def test_long_clip_truncates_to_head(self):
        x = np.arange(100000, dtype=np.float32)
        out = fix_length(AudioClip(x, 8000))
        assert np.array_equal(out.samples, x[:80000])

    def test_idempotent(self, rng):
        x = rng.normal(0, 0.1, 12345).astype(np.float32)
        once = fix_length(AudioClip(x, 8000))
        twice = fix_length(once)
        assert np.array_equal(once.samples, twice.samples)

    def test_empty_clip_raises(self):
        with pytest.raises(InvalidArgumentError):
            fix_length(AudioClip(np.zeros(0, dtype=np.float32), 8000))


def test_prepare_pipeline(tmp_path, rng):
    x = rng.uniform(-0.5, 0.5, 3 * 16000).astype(np.float32)
    out = prepare(AudioClip(x, 16000))
    assert out.sample_rate == 8000
    assert len(out.samples) == TARGET_SAMPLES
    assert np.all(np.abs(out.samples) <= 1.0)
