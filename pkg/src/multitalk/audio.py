"""Waveform rendering for simulated mixtures: mixing, reverberation, noise, loudness."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np
import pyloudnorm
from scipy.io import wavfile
from scipy.signal import fftconvolve

from .heat import assign
from .mixer import GenerationConfig, MixtureSpec

AUDIO_SUFFIXES = (".wav",)


@dataclass(frozen=True)
class RenderedMixture:
    audio: np.ndarray  # (num_samples,)
    sources: np.ndarray  # (num_channels, num_samples) clean per-channel sums
    sample_rate: int
    gain: float = 1.0
    assignment: tuple[int, ...] = ()


def read_wav(path) -> tuple[int, np.ndarray]:
    """Read a WAV file as float64 in [-1, 1], shape (samples, channels)."""
    sr, data = wavfile.read(str(path))
    if data.dtype == np.int16:
        data = data / 32768.0
    elif data.dtype == np.int32:
        data = data / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float64) - 128.0) / 128.0
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    return int(sr), data


def write_wav(path, audio: np.ndarray, sample_rate: int) -> None:
    wavfile.write(str(path), sample_rate, np.asarray(audio, dtype=np.float32))


@lru_cache(maxsize=64)
def _cached_wav(path: str):
    return read_wav(path)


def list_audio(directory) -> list[Path]:
    files = sorted(p for p in Path(directory).rglob("*") if p.suffix.lower() in AUDIO_SUFFIXES)
    if not files:
        raise FileNotFoundError(f"no WAV files under {directory}")
    return files


def integrated_loudness(audio: np.ndarray, sample_rate: int) -> float:
    """ITU-R BS.1770 gated integrated loudness in LUFS."""
    return float(pyloudnorm.Meter(sample_rate).integrated_loudness(audio))


def _segment_samples(seg, sample_rate: Optional[int]):
    if seg.source_audio is None:
        raise ValueError(f"segment {seg.id!r} has no source audio")
    sr, data = _cached_wav(str(seg.source_audio.path))
    if sample_rate is not None and sr != sample_rate:
        raise ValueError(f"segment {seg.id!r}: sample rate {sr} differs from {sample_rate}")
    if seg.source_audio.channel >= data.shape[1]:
        raise ValueError(f"segment {seg.id!r}: channel {seg.source_audio.channel} not in file")
    a, b = int(round(seg.start * sr)), int(round(seg.end * sr))
    return sr, data[a:b, seg.source_audio.channel]


def render_audio(spec: MixtureSpec, config: GenerationConfig,
                 rng: Optional[np.random.Generator] = None) -> RenderedMixture:
    """Add the offset segments into one waveform.

    Optional stages, in order: one room impulse response per speaker, noise
    at ``config.noise_snr_db``, and a scalar gain to a loudness drawn from
    ``config.loudness_db``. The clean per-channel sums follow the channel
    assignment of the mixture's utterances and receive the same gain.
    """
    if rng is None:
        rng = np.random.Generator(np.random.Philox(spec.seed))
    utts = spec.utterances()
    assignment = assign(utts, config.num_channels).channel_of if utts else ()
    channel_of = {u.id: c for u, c in zip(utts, assignment)}

    rirs = {}
    if config.rir_dir is not None:
        rir_files = list_audio(config.rir_dir)
        for spk in sorted(spec.speakers):
            rirs[spk] = rir_files[int(rng.integers(len(rir_files)))]

    sr = None
    pieces = []
    for seg, offset in spec.entries:
        sr, x = _segment_samples(seg, sr)
        if seg.speaker in rirs:
            rsr, rir = _cached_wav(str(rirs[seg.speaker]))
            if rsr != sr:
                raise ValueError(f"RIR {rirs[seg.speaker]} has sample rate {rsr}, expected {sr}")
            x = fftconvolve(x, rir[:, 0])
        pieces.append((int(round(offset * sr)), x, channel_of[seg.id]))
    if sr is None:
        raise ValueError(f"mixture {spec.id!r} is empty")

    length = max(start + x.size for start, x, _ in pieces)
    sources = np.zeros((config.num_channels, length))
    for start, x, c in pieces:
        sources[c, start : start + x.size] += x
    mixture = sources.sum(axis=0)

    if config.noise_dir is not None:
        noise_files = list_audio(config.noise_dir)
        noise_file = noise_files[int(rng.integers(len(noise_files)))]
        nsr, noise = _cached_wav(str(noise_file))
        if nsr != sr:
            raise ValueError(f"noise {noise_file} has sample rate {nsr}, expected {sr}")
        noise = np.resize(noise[:, 0], length)
        p_sig = np.mean(mixture**2)
        p_noise = np.mean(noise**2)
        if p_noise > 0 and p_sig > 0:
            noise = noise * np.sqrt(p_sig / (p_noise * 10 ** (config.noise_snr_db / 10)))
            mixture = mixture + noise

    gain = 1.0
    if config.loudness_db is not None:
        target = rng.uniform(*config.loudness_db)
        current = integrated_loudness(mixture, sr)
        if np.isfinite(current):
            gain = 10 ** ((target - current) / 20)
            mixture = mixture * gain
            sources = sources * gain
    return RenderedMixture(mixture, sources, sr, gain, tuple(assignment))
