"""Frontend forward passes: filtering, pooling, and compression.

The learnable frontend is squared-modulus Gabor (or free-kernel) filtering
at the input rate, per-channel Gaussian lowpass pooling with decimation,
and log / PCEN / sPCEN compression.  The mel baseline replaces the first
two stages with an STFT power spectrogram projected on triangular mel
filters.

Every stage is written once, over tape variables, so the same code serves
eager feature extraction and gradient-based training.  Eager entry points
accept and return plain arrays wrapped in the domain types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import tape
from .errors import BadRate, NegativeInput, ZeroFilter
from .gabor import MEL_ANALYSIS_WIN, GaborBank, MelInitConfig, mel_matrix
from .signal import FRONTEND_RATE, Waveform

LOG_FLOOR = 1e-6
STFT_WIN_LENGTH = MEL_ANALYSIS_WIN

PCEN_ALPHA_INIT = 0.96
PCEN_DELTA_INIT = 2.0
PCEN_ROOT_INIT = 2.0
PCEN_SMOOTH_INIT = 0.04
PCEN_EPS = 1e-6

SQRT_2PI = math.sqrt(2.0 * math.pi)

COMPRESSIONS = ("log", "pcen", "spcen")
FILTERINGS = ("gabor", "normalized_conv", "mel")


@dataclass(frozen=True)
class FrontendConfig:
    """Sizes and variant switches shared by all frontends."""

    n_filters: int = 40
    filter_len: int = 401
    pool_len: int = 401
    pool_stride: int = 160
    compression: str = "spcen"
    filtering: str = "gabor"
    sample_rate: int = 16000

    def __post_init__(self):
        if self.filter_len % 2 != 1:
            raise ValueError("filter_len must be odd")
        if self.pool_len % 2 != 1:
            raise ValueError("pool_len must be odd")
        if self.pool_stride < 1:
            raise ValueError("pool_stride must be >= 1")
        if self.compression not in COMPRESSIONS:
            raise ValueError(f"compression must be one of {COMPRESSIONS}")
        if self.filtering not in FILTERINGS:
            raise ValueError(f"filtering must be one of {FILTERINGS}")

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.pool_stride


def mel_config_for(cfg: FrontendConfig) -> MelInitConfig:
    """Design grid used both for mel baselines and Gabor initialization."""
    return MelInitConfig(n_filters=cfg.n_filters, sample_rate=cfg.sample_rate)


@dataclass(frozen=True)
class PoolingParams:
    """Per-channel lowpass width fractions (w_n)."""

    widths: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "widths", np.asarray(self.widths, dtype=np.float64))


def pool_width_bounds(pool_len: int) -> tuple[float, float]:
    return 2.0 / pool_len, 0.5


def default_pooling(n_filters: int) -> PoolingParams:
    return PoolingParams(np.full(n_filters, 0.4))


@dataclass(frozen=True)
class PcenParams:
    """Per-channel PCEN parameters; the applied exponent is 1/root."""

    alpha: np.ndarray
    delta: np.ndarray
    root: np.ndarray
    smooth: np.ndarray
    eps: float = PCEN_EPS

    def __post_init__(self):
        for name in ("alpha", "delta", "root", "smooth"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if not (self.alpha.shape == self.delta.shape == self.root.shape == self.smooth.shape):
            raise ValueError("PCEN parameter vectors must share one shape")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


def default_pcen(n_filters: int) -> PcenParams:
    return PcenParams(
        alpha=np.full(n_filters, PCEN_ALPHA_INIT),
        delta=np.full(n_filters, PCEN_DELTA_INIT),
        root=np.full(n_filters, PCEN_ROOT_INIT),
        smooth=np.full(n_filters, PCEN_SMOOTH_INIT),
    )


@dataclass(frozen=True)
class FeatureMap:
    """Time-major (frames x channels) features at a fixed frame rate."""

    values: np.ndarray
    frame_rate: float

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ValueError("feature map must be 2-D (frames x channels)")
        if not np.all(np.isfinite(values)):
            raise ValueError("feature map contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ConvBank:
    """Free filter kernels; rows 2n, 2n+1 act as channel n's real/imag pair."""

    kernels: np.ndarray

    def __post_init__(self):
        kernels = np.asarray(self.kernels, dtype=np.float64)
        if kernels.ndim != 2 or kernels.shape[0] % 2 != 0:
            raise ValueError("kernels must be a (2N, W) matrix")
        object.__setattr__(self, "kernels", kernels)

    @property
    def n_filters(self) -> int:
        return self.kernels.shape[0] // 2

    @property
    def filter_len(self) -> int:
        return self.kernels.shape[1]


def renormalize_conv(bank: ConvBank) -> ConvBank:
    """Scale every kernel to unit l2 norm."""
    norms = np.linalg.norm(bank.kernels, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ZeroFilter("cannot normalize an all-zero kernel")
    return ConvBank(bank.kernels / norms)


def conv_bank_from_gabor(bank: GaborBank) -> ConvBank:
    """Free-kernel bank initialized from Gabor impulse responses."""
    kernels = gabor_kernel_graph(bank.center_freqs, bank.inv_bandwidths, bank.filter_len).value
    return renormalize_conv(ConvBank(kernels))


# -- graph builders (Var in, Var out; plain arrays act as constants) ------


def _gaussian_rows(centers_scale, t):
    """exp(-t^2 / (2 s^2)) / (sqrt(2 pi) s) for per-row widths s (N, 1)."""
    s = centers_scale
    return tape.exp(-((t * t) / (2.0 * (s * s)))) / (SQRT_2PI * s)


def gabor_kernel_graph(eta, sigma, filter_len):
    """Interleaved (2N, W) real kernels of the complex Gabor bank."""
    n = np.shape(tape._value(eta))[0]
    half = (filter_len - 1) // 2
    dtype = tape._value(eta).dtype
    t = np.arange(-half, half + 1, dtype=dtype)
    s = tape.reshape(sigma, (n, 1))
    envelope = _gaussian_rows(s, t)
    phase = (2.0 * np.pi) * tape.reshape(eta, (n, 1)) * t
    real = tape.cos(phase) * envelope
    imag = tape.sin(phase) * envelope
    return tape.reshape(tape.stack([real, imag], axis=1), (2 * n, filter_len))


def pool_kernel_graph(widths, pool_len):
    """(N, P) Gaussian lowpass kernels with sigma_t = w * (P-1)/2."""
    n = np.shape(tape._value(widths))[0]
    dtype = tape._value(widths).dtype
    half = (pool_len - 1) // 2
    t = np.arange(-half, half + 1, dtype=dtype)
    sigma_t = tape.reshape(widths, (n, 1)) * ((pool_len - 1) / 2.0)
    return _gaussian_rows(sigma_t, t)


def squared_modulus_graph(xs, kernels):
    """|x * phi|^2 via 2N real correlations and pairwise square-sums."""
    corr = tape.bank_correlate(xs, kernels)
    return tape.paired_square_sum(corr)


def log_graph(feats):
    return tape.log(feats + LOG_FLOOR)


def pcen_graph(feats, alpha, delta, root, smooth, eps=PCEN_EPS):
    """PCEN over (B, N, M) features with backprop through the EMA."""
    n_frames = tape._value(feats).shape[2]
    state = feats[:, :, 0]
    frames = [state]
    one_minus = 1.0 - smooth
    for t in range(1, n_frames):
        state = one_minus * state + smooth * feats[:, :, t]
        frames.append(state)
    ema = tape.stack(frames, axis=-1)
    n = np.shape(tape._value(alpha))[0]
    alpha_col = tape.reshape(alpha, (n, 1))
    delta_col = tape.reshape(delta, (n, 1))
    exponent = 1.0 / tape.reshape(root, (n, 1))
    normed = feats / tape.power(eps + ema, alpha_col)
    return tape.power(normed + delta_col, exponent) - tape.power(delta_col, exponent)


def stft_power(xs: np.ndarray, n_fft: int, hop: int, win_length: int = STFT_WIN_LENGTH) -> np.ndarray:
    """Centered Hann STFT power spectrum, (B, ceil(T/hop), n_fft/2+1)."""
    batch, n_samples = xs.shape
    n_frames = -(-n_samples // hop)
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win_length) / win_length)
    half = win_length // 2
    padded = np.zeros((batch, n_samples + win_length), dtype=np.float64)
    padded[:, half: half + n_samples] = xs
    frames = sliding_window_view(padded, win_length, axis=1)[:, ::hop][:, :n_frames]
    spectrum = np.fft.rfft(frames * window, n=n_fft, axis=-1)
    return np.abs(spectrum) ** 2


def mel_power_features(xs: np.ndarray, mel_cfg: MelInitConfig, hop: int) -> np.ndarray:
    """STFT power projected on the mel filterbank, (B, M, N)."""
    power = stft_power(xs, mel_cfg.n_fft, hop)
    return power @ mel_matrix(mel_cfg).T


def features_graph(xs: np.ndarray, leaves: Mapping, cfg: FrontendConfig, mel_cfg: MelInitConfig | None = None):
    """Pre-classifier features (B, N, M) for any frontend variant.

    ``leaves`` maps parameter names to Vars (or arrays, treated as
    constants): eta/sigma or conv_kernels, pool_widths, and pcen_* as the
    variant requires.
    """
    if cfg.filtering == "mel":
        mel_cfg = mel_cfg or mel_config_for(cfg)
        feats = mel_power_features(xs.astype(np.float64), mel_cfg, cfg.pool_stride)
        pooled = tape.constant(np.ascontiguousarray(feats.transpose(0, 2, 1)).astype(xs.dtype))
    else:
        if cfg.filtering == "gabor":
            kernels = gabor_kernel_graph(leaves["eta"], leaves["sigma"], cfg.filter_len)
        else:
            kernels = leaves["conv_kernels"]
        squared = squared_modulus_graph(xs, kernels)
        pool_kernels = pool_kernel_graph(leaves["pool_widths"], cfg.pool_len)
        pooled = tape.depthwise_pool(squared, pool_kernels, cfg.pool_stride)
    if cfg.compression == "log":
        return log_graph(pooled)
    if cfg.compression == "spcen":
        smooth = leaves["pcen_smooth"]
    else:
        smooth = np.full(cfg.n_filters, PCEN_SMOOTH_INIT, dtype=tape._value(pooled).dtype)
    return pcen_graph(pooled, leaves["pcen_alpha"], leaves["pcen_delta"], leaves["pcen_root"], smooth)


# -- eager single-clip operations ------------------------------------------


def _require_frontend_rate(x: Waveform) -> None:
    if x.sample_rate != FRONTEND_RATE:
        raise BadRate(f"frontend requires {FRONTEND_RATE} Hz input, got {x.sample_rate} Hz")


def filter_squared_modulus(x: Waveform, bank: GaborBank | ConvBank) -> np.ndarray:
    """Squared-modulus filterbank output at the input rate, (T, N)."""
    _require_frontend_rate(x)
    if isinstance(bank, GaborBank):
        kernels = gabor_kernel_graph(bank.center_freqs, bank.inv_bandwidths, bank.filter_len).value
    else:
        kernels = bank.kernels
    out = squared_modulus_graph(x.samples[None, :], kernels)
    return out.value[0].T.copy()


def gaussian_lowpass_kernel(width: float, pool_len: int) -> np.ndarray:
    """Gaussian pooling kernel with sigma_t = width * (pool_len - 1) / 2."""
    return pool_kernel_graph(np.array([float(width)]), pool_len).value[0]


def pool_decimate(f: np.ndarray, pool: PoolingParams, cfg: FrontendConfig) -> FeatureMap:
    """Depthwise lowpass + decimation of a (T, N) matrix to a FeatureMap."""
    f = np.asarray(f)
    kernels = pool_kernel_graph(pool.widths, cfg.pool_len).value
    pooled = tape.depthwise_pool(np.ascontiguousarray(f.T)[None], kernels, cfg.pool_stride)
    return FeatureMap(pooled.value[0].T.copy(), cfg.frame_rate)


def log_compress(feature_map: FeatureMap) -> FeatureMap:
    """Elementwise ln(x + 1e-6)."""
    if np.any(feature_map.values < 0):
        raise NegativeInput("log compression requires non-negative features")
    return FeatureMap(np.log(feature_map.values + LOG_FLOOR), feature_map.frame_rate)


def pcen_forward(feature_map: FeatureMap, params: PcenParams) -> FeatureMap:
    """PCEN compression of a (M, N) feature map."""
    if np.any(feature_map.values < 0):
        raise NegativeInput("PCEN requires non-negative features")
    feats = np.ascontiguousarray(feature_map.values.T)[None]
    out = pcen_graph(feats, params.alpha, params.delta, params.root, params.smooth, eps=params.eps)
    return FeatureMap(out.value[0].T.copy(), feature_map.frame_rate)


def frontend_forward(x: Waveform, params: Mapping, cfg: FrontendConfig) -> FeatureMap:
    """Full frontend: filtering, pooling, compression, per the config."""
    _require_frontend_rate(x)
    out = features_graph(x.samples[None, :], params, cfg)
    return FeatureMap(out.value[0].T.copy(), cfg.frame_rate)


def mel_frontend_forward(
    x: Waveform,
    cfg: MelInitConfig,
    compression: str = "log",
    pcen: PcenParams | None = None,
    hop: int = 160,
) -> FeatureMap:
    """Mel-filterbank baseline: STFT power -> mel projection -> compression."""
    _require_frontend_rate(x)
    feats = mel_power_features(x.samples[None, :], cfg, hop)
    fm = FeatureMap(feats[0], x.sample_rate / hop)
    if compression == "log":
        return log_compress(fm)
    if compression not in COMPRESSIONS:
        raise ValueError(f"compression must be one of {COMPRESSIONS}")
    return pcen_forward(fm, pcen or default_pcen(cfg.n_filters))


VARIANT_NAMES = {
    ("gabor", "spcen"): "leaf",
    ("gabor", "pcen"): "leaf-pcen",
    ("gabor", "log"): "leaf-log",
    ("mel", "log"): "mel",
    ("mel", "spcen"): "mel-pcen",
    ("normalized_conv", "spcen"): "convnorm",
}


def variant_name(cfg: FrontendConfig) -> str:
    return VARIANT_NAMES.get((cfg.filtering, cfg.compression),
                             f"{cfg.filtering}/{cfg.compression}")


def variant_config(name: str, **overrides) -> FrontendConfig:
    """FrontendConfig for a named variant (leaf, mel, mel-pcen, ...)."""
    by_name = {v: k for k, v in VARIANT_NAMES.items()}
    if name not in by_name:
        raise ValueError(f"unknown frontend variant {name!r}; choose from {sorted(by_name)}")
    filtering, compression = by_name[name]
    return FrontendConfig(filtering=filtering, compression=compression, **overrides)


def param_count(cfg: FrontendConfig) -> int:
    """Learnable frontend parameters of a variant (classifier excluded)."""
    n = cfg.n_filters
    filtering = {"gabor": 2 * n, "normalized_conv": 2 * n * cfg.filter_len, "mel": 0}[cfg.filtering]
    pooling = 0 if cfg.filtering == "mel" else n
    compression = {"log": 0, "pcen": 3 * n, "spcen": 4 * n}[cfg.compression]
    return filtering + pooling + compression
