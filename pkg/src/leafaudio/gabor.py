"""Gabor filterbank parametrization and its mel-scale initialization.

A bank holds per-channel center frequencies eta (cycles/sample) and
time-domain widths sigma (samples).  Filters are complex exponentials
under a Gaussian envelope evaluated on the symmetric integer grid
t = -(W-1)/2 ... (W-1)/2, and the frequency response of channel n is a
Gaussian of unit peak centered at eta_n.

Initialization matches a triangular mel filterbank: each channel's center
comes from the triangle's peak bin and its sigma from the triangle's full
width at half maximum on the design grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTriangle

SQRT_2LOG2 = math.sqrt(2.0 * math.log(2.0))
SIGMA_MIN = 4.0 * SQRT_2LOG2


def sigma_max(filter_len: int) -> float:
    return 2.0 * filter_len * SQRT_2LOG2


@dataclass(frozen=True)
class GaborBank:
    """Learnable bandpass filterbank parameters."""

    center_freqs: np.ndarray  # eta, normalized cycles/sample
    inv_bandwidths: np.ndarray  # sigma, samples
    filter_len: int

    def __post_init__(self):
        eta = np.asarray(self.center_freqs, dtype=np.float64)
        sigma = np.asarray(self.inv_bandwidths, dtype=np.float64)
        if eta.shape != sigma.shape or eta.ndim != 1:
            raise ValueError("center_freqs and inv_bandwidths must be equal-length vectors")
        if self.filter_len % 2 != 1:
            raise ValueError("filter_len must be odd")
        object.__setattr__(self, "center_freqs", eta)
        object.__setattr__(self, "inv_bandwidths", sigma)

    @property
    def n_filters(self) -> int:
        return len(self.center_freqs)


@dataclass(frozen=True)
class MelInitConfig:
    """Design grid for the triangular mel filterbank."""

    n_filters: int = 40
    sample_rate: int = 16000
    fmin: float = 60.0
    fmax: float = 7800.0
    n_fft: int = 512

    def __post_init__(self):
        if not (0 <= self.fmin < self.fmax <= self.sample_rate / 2):
            raise ValueError("need 0 <= fmin < fmax <= sample_rate/2")
        if self.n_fft <= 0 or self.n_fft & (self.n_fft - 1):
            raise ValueError("n_fft must be a power of two")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_breakpoints(cfg: MelInitConfig) -> np.ndarray:
    """The N+2 triangle breakpoint frequencies, equally spaced in mel."""
    mels = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_filters + 2)
    return mel_to_hz(mels)


def mel_matrix(cfg: MelInitConfig) -> np.ndarray:
    """Triangular mel filterbank sampled on the FFT-bin grid.

    Returns an (N, n_fft/2+1) matrix; each row is peak-normalized to 1.
    """
    breaks = mel_breakpoints(cfg)
    bin_hz = cfg.sample_rate / cfg.n_fft
    nearest = np.round(breaks / bin_hz).astype(int)
    if np.any(np.diff(nearest) == 0):
        raise DegenerateTriangle("adjacent mel breakpoints fall on the same FFT bin")
    freqs = np.arange(cfg.n_fft // 2 + 1) * bin_hz
    out = np.zeros((cfg.n_filters, len(freqs)))
    for n in range(cfg.n_filters):
        left, peak, right = breaks[n], breaks[n + 1], breaks[n + 2]
        rising = (freqs - left) / (peak - left)
        falling = (right - freqs) / (right - peak)
        row = np.maximum(0.0, np.minimum(rising, falling))
        top = row.max()
        if top == 0.0:
            raise DegenerateTriangle(f"mel filter {n} has no support on the bin grid")
        out[n] = row / top
    return out


def fwhm_to_sigma(fwhm_norm: float) -> float:
    """Constraint-bookkeeping map between a nominal response FWHM and sigma.

    This is the convention under which the sigma range [4*sqrt(2 ln 2),
    2W*sqrt(2 ln 2)] corresponds exactly to FWHM in [1/W, 1/2]:
    fwhm = 1/2 gives the widest allowed filter and fwhm = 1/W the
    narrowest.  Note it treats the response's standard deviation as
    1/sigma; the physical DTFT width of the implemented kernel is 2*pi
    smaller, which is why initialization (below) uses the physical map.
    """
    return 2.0 * SQRT_2LOG2 / fwhm_norm


MEL_ANALYSIS_WIN = 400  # Hann analysis window of the mel baseline, samples


def hann_power_fwhm(win_length: int = MEL_ANALYSIS_WIN, oversample: int = 64) -> float:
    """FWHM of the Hann window's power spectrum, normalized frequency."""
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win_length) / win_length)
    grid = oversample * 1024
    spectrum = np.abs(np.fft.rfft(window, grid)) ** 2
    return 2.0 * float((spectrum >= 0.5 * spectrum.max()).sum()) / grid


def gabor_params_from_mels(cfg: MelInitConfig, filter_len: int) -> GaborBank:
    """One Gabor filter per mel triangle, matched so that the frontends'
    pre-compression outputs agree at initialization.

    Centers sit on the triangle peaks.  Widths match the filter's physical
    squared-magnitude response (power FWHM = sqrt(ln 2)/(pi sigma)) to the
    triangle's half-max width combined, in quadrature, with the smearing of
    the mel pipeline's own Hann analysis window; without the window term
    the low channels come out visibly narrower than their mel counterparts.
    """
    if filter_len % 2 != 1:
        raise ValueError("filter_len must be odd")
    mel_matrix(cfg)  # validates grid support / degeneracy
    breaks = mel_breakpoints(cfg)
    centers = breaks[1:-1] / cfg.sample_rate
    # peak-normalized triangle crosses 1/2 midway up each side
    fwhm_triangle = (breaks[2:] - breaks[:-2]) / (2.0 * cfg.sample_rate)
    fwhm_effective = np.sqrt(fwhm_triangle ** 2 + hann_power_fwhm() ** 2)
    sigma = np.sqrt(np.log(2.0)) / (np.pi * fwhm_effective)
    sigma = np.clip(sigma, SIGMA_MIN, sigma_max(filter_len))
    return GaborBank(centers, sigma, filter_len)


def time_grid(filter_len: int) -> np.ndarray:
    half = (filter_len - 1) // 2
    return np.arange(-half, half + 1, dtype=np.float64)


def gabor_impulse_response(bank: GaborBank, n: int) -> np.ndarray:
    """Complex impulse response of channel n over the symmetric grid."""
    t = time_grid(bank.filter_len)
    eta = bank.center_freqs[n]
    sigma = bank.inv_bandwidths[n]
    envelope = np.exp(-(t ** 2) / (2.0 * sigma ** 2)) / (math.sqrt(2.0 * math.pi) * sigma)
    return np.exp(2j * np.pi * eta * t) * envelope


def gabor_real_imag(bank: GaborBank, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Channel n as the two real filters of the 2N-real-filter scheme."""
    phi = gabor_impulse_response(bank, n)
    return phi.real.copy(), phi.imag.copy()


def project_constraints(bank: GaborBank) -> GaborBank:
    """Clamp eta to [0, 1/2] and sigma to its allowed band.  Idempotent."""
    eta = np.clip(bank.center_freqs, 0.0, 0.5)
    sigma = np.clip(bank.inv_bandwidths, SIGMA_MIN, sigma_max(bank.filter_len))
    return GaborBank(eta, sigma, bank.filter_len)


def frequency_response(filt: np.ndarray, n_points: int) -> np.ndarray:
    """Squared magnitude of the zero-padded n_points-point DFT."""
    filt = np.asarray(filt)
    if n_points < len(filt):
        raise ValueError("n_points must be at least the filter length")
    spectrum = np.fft.fft(filt, n_points)
    return np.abs(spectrum) ** 2
