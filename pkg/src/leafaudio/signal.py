"""Waveform ingestion, synthetic tones, and SNR-controlled noise injection.

All operations are pure: they return new Waveform values and never mutate
their inputs.  Gaussian noise is produced by an explicit Box-Muller
transform over a seeded PCG64 stream so that noise realizations are
reproducible across platforms.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import AliasedFrequency, NotWav, SilentInput, UnsupportedFormat

FRONTEND_RATE = 16000


@dataclass(frozen=True)
class Waveform:
    """Mono audio samples with their sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("waveform must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate

    def power(self) -> float:
        """Mean squared amplitude."""
        return float(np.mean(self.samples ** 2))


@dataclass(frozen=True)
class ToneSpec:
    """Recipe for a sum of cosines.

    Phases are drawn uniformly from [0, 2*pi) using ``phase_seed`` unless
    ``phases`` gives them explicitly.
    """

    frequencies: tuple[float, ...]
    amplitudes: tuple[float, ...]
    duration_s: float
    phase_seed: int = 0
    phases: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "frequencies", tuple(float(f) for f in self.frequencies))
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))
        if self.phases is not None:
            object.__setattr__(self, "phases", tuple(float(p) for p in self.phases))
        if len(self.frequencies) != len(self.amplitudes):
            raise ValueError("frequencies and amplitudes must pair up")
        if self.phases is not None and len(self.phases) != len(self.frequencies):
            raise ValueError("phases must pair up with frequencies")


def load_wav(path) -> Waveform:
    """Read a RIFF/WAVE file holding 16-bit PCM mono samples.

    Integer samples are scaled to [-1, 1) by dividing by 32768.  Chunks
    other than ``fmt `` and ``data`` are skipped.
    """
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) < 12 or header[:4] != b"RIFF" or header[8:12] != b"WAVE":
            raise NotWav(f"{path}: not a RIFF/WAVE file")
        fmt = None
        data = None
        while True:
            chunk = fh.read(8)
            if len(chunk) < 8:
                break
            chunk_id, chunk_size = chunk[:4], struct.unpack("<I", chunk[4:])[0]
            payload = fh.read(chunk_size)
            if len(payload) < chunk_size:
                raise NotWav(f"{path}: truncated {chunk_id!r} chunk")
            if chunk_size % 2 == 1:
                fh.read(1)  # RIFF chunks are word-aligned
            if chunk_id == b"fmt ":
                fmt = payload
            elif chunk_id == b"data":
                data = payload
    if fmt is None or data is None:
        raise NotWav(f"{path}: missing fmt or data chunk")
    if len(fmt) < 16:
        raise NotWav(f"{path}: malformed fmt chunk")
    audio_format, channels, rate, _, _, bits = struct.unpack("<HHIIHH", fmt[:16])
    if audio_format != 1:
        raise UnsupportedFormat(f"{path}: audio format {audio_format}, expected PCM")
    if channels != 1:
        raise UnsupportedFormat(f"{path}: {channels} channels, expected mono")
    if bits != 16:
        raise UnsupportedFormat(f"{path}: {bits}-bit samples, expected 16")
    if len(data) < 2:
        raise UnsupportedFormat(f"{path}: empty data chunk")
    raw = np.frombuffer(data[: len(data) - len(data) % 2], dtype="<i2")
    return Waveform(raw.astype(np.float64) / 32768.0, int(rate))


def synth_tones(spec: ToneSpec, rate: int) -> Waveform:
    """Render ``spec`` as a sum of cosines at the given sample rate."""
    for f in spec.frequencies:
        if f >= rate / 2:
            raise AliasedFrequency(f"tone at {f} Hz >= Nyquist {rate / 2} Hz")
        if f <= 0:
            raise ValueError(f"tone frequency must be positive, got {f}")
    n = round(spec.duration_s * rate)
    if n <= 0:
        raise ValueError("duration too short for this sample rate")
    if spec.phases is not None:
        phases = np.asarray(spec.phases)
    else:
        phases = np.random.default_rng(spec.phase_seed).uniform(0.0, 2.0 * np.pi, len(spec.frequencies))
    t = np.arange(n, dtype=np.float64)
    x = np.zeros(n, dtype=np.float64)
    for f, a, phi in zip(spec.frequencies, spec.amplitudes, phases):
        x += a * np.cos(2.0 * np.pi * f * t / rate + phi)
    return Waveform(x, rate)


def gaussian_noise(size: int, seed: int) -> np.ndarray:
    """Standard normal samples from a seeded PCG64 stream via Box-Muller."""
    rng = np.random.default_rng(seed)
    pairs = (size + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # in (0, 1], keeps log finite
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
    return z[:size]


def add_noise_snr(x: Waveform, snr_db: float, seed: int) -> Waveform:
    """Add seeded Gaussian noise scaled for the requested global SNR.

    The gain g satisfies 10*log10(P_x / g^2) = snr_db with P the mean
    squared amplitude, treating the noise as exactly unit variance.
    ``snr_db = +inf`` returns ``x`` unchanged.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return x
    power = x.power()
    if power == 0.0:
        raise SilentInput("cannot set a finite SNR against a silent signal")
    gain = math.sqrt(power * 10.0 ** (-snr_db / 10.0))
    noise = gaussian_noise(len(x.samples), seed)
    return Waveform(x.samples + gain * noise, x.sample_rate)
