"""Named parameter collections, initialization, and constraint projection.

A ParamSet maps parameter names to real vectors/matrices.  Frontend keys
depend on the variant (eta/sigma or conv_kernels, pool_widths, pcen_*);
classifier heads are ``head_weights``/``head_bias`` for a single task and
``head{k}_weights``/``head{k}_bias`` under multi-task training.
"""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from .errors import ShapeMismatch
from .frontend import (
    FrontendConfig,
    PCEN_ALPHA_INIT,
    PCEN_DELTA_INIT,
    PCEN_ROOT_INIT,
    PCEN_SMOOTH_INIT,
    conv_bank_from_gabor,
    mel_config_for,
    pool_width_bounds,
    renormalize_conv,
    ConvBank,
)
from .gabor import SIGMA_MIN, gabor_params_from_mels, sigma_max


class ParamSet(Mapping):
    """Ordered name -> ndarray mapping with congruence-checked arithmetic."""

    def __init__(self, values: Mapping[str, np.ndarray]):
        self._values = {k: np.asarray(v) for k, v in values.items()}

    def __getitem__(self, key):
        return self._values[key]

    def __iter__(self):
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def __repr__(self):
        inner = ", ".join(f"{k}:{v.shape}" for k, v in self._values.items())
        return f"ParamSet({inner})"

    def copy(self) -> "ParamSet":
        return ParamSet({k: v.copy() for k, v in self._values.items()})

    def astype(self, dtype) -> "ParamSet":
        return ParamSet({k: v.astype(dtype) for k, v in self._values.items()})

    def congruent(self, other: Mapping) -> bool:
        if set(self) != set(other):
            return False
        return all(np.shape(other[k]) == v.shape for k, v in self._values.items())

    def require_congruent(self, other: Mapping, what: str = "gradients") -> None:
        if not self.congruent(other):
            raise ShapeMismatch(f"{what} do not match parameter shapes")

    def n_params(self) -> int:
        return sum(v.size for v in self._values.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self._values.values()]) if self._values else np.zeros(0)

    def with_flat(self, vec: np.ndarray) -> "ParamSet":
        out, offset = {}, 0
        for k, v in self._values.items():
            out[k] = vec[offset: offset + v.size].reshape(v.shape).astype(v.dtype)
            offset += v.size
        if offset != len(vec):
            raise ShapeMismatch("flat vector length does not match parameter count")
        return ParamSet(out)


Gradients = ParamSet  # same keyed structure, one real per parameter


def frontend_param_values(cfg: FrontendConfig, dtype=np.float64) -> dict[str, np.ndarray]:
    """Initial frontend parameters (mel-matched filters, 0.4 pooling widths,
    standard PCEN start point).  The mel variant has no frontend keys except
    its compression."""
    values: dict[str, np.ndarray] = {}
    if cfg.filtering in ("gabor", "normalized_conv"):
        bank = gabor_params_from_mels(mel_config_for(cfg), cfg.filter_len)
        if cfg.filtering == "gabor":
            values["eta"] = bank.center_freqs
            values["sigma"] = bank.inv_bandwidths
        else:
            values["conv_kernels"] = conv_bank_from_gabor(bank).kernels
        values["pool_widths"] = np.full(cfg.n_filters, 0.4)
    if cfg.compression in ("pcen", "spcen"):
        values["pcen_alpha"] = np.full(cfg.n_filters, PCEN_ALPHA_INIT)
        values["pcen_delta"] = np.full(cfg.n_filters, PCEN_DELTA_INIT)
        values["pcen_root"] = np.full(cfg.n_filters, PCEN_ROOT_INIT)
        if cfg.compression == "spcen":
            values["pcen_smooth"] = np.full(cfg.n_filters, PCEN_SMOOTH_INIT)
    return {k: v.astype(dtype) for k, v in values.items()}


def head_param_values(n_features: int, num_classes: int, dtype=np.float64, prefix: str = "head") -> dict:
    """Zero-initialized linear head (uniform softmax before training)."""
    return {
        f"{prefix}_weights": np.zeros((n_features, num_classes), dtype=dtype),
        f"{prefix}_bias": np.zeros(num_classes, dtype=dtype),
    }


def init_params(cfg: FrontendConfig, num_classes: int, dtype=np.float64) -> ParamSet:
    """Frontend plus a single linear head over time-averaged features."""
    values = frontend_param_values(cfg, dtype)
    values.update(head_param_values(cfg.n_filters, num_classes, dtype))
    return ParamSet(values)


def init_multitask_params(cfg: FrontendConfig, class_counts: list[int], dtype=np.float64) -> ParamSet:
    """Shared frontend with one head per task."""
    values = frontend_param_values(cfg, dtype)
    for k, n_classes in enumerate(class_counts):
        values.update(head_param_values(cfg.n_filters, n_classes, dtype, prefix=f"head{k}"))
    return ParamSet(values)


FRONTEND_KEYS = ("eta", "sigma", "conv_kernels", "pool_widths",
                 "pcen_alpha", "pcen_delta", "pcen_root", "pcen_smooth")


def project_params(params: ParamSet, cfg: FrontendConfig) -> ParamSet:
    """Clamp every constrained parameter into its allowed range.

    Applied after each optimizer step; gradients themselves are always for
    the unprojected function.
    """
    low_w, high_w = pool_width_bounds(cfg.pool_len)
    out = {}
    for key, value in params.items():
        if key == "eta":
            out[key] = np.clip(value, 0.0, 0.5)
        elif key == "sigma":
            out[key] = np.clip(value, SIGMA_MIN, sigma_max(cfg.filter_len))
        elif key == "pool_widths":
            out[key] = np.clip(value, low_w, high_w)
        elif key == "conv_kernels":
            out[key] = renormalize_conv(ConvBank(value)).kernels.astype(value.dtype)
        elif key == "pcen_alpha":
            out[key] = np.clip(value, 0.0, 1.0)
        elif key == "pcen_delta":
            out[key] = np.clip(value, 0.0, None)
        elif key == "pcen_root":
            out[key] = np.clip(value, 1.0, None)
        elif key == "pcen_smooth":
            out[key] = np.clip(value, 0.0, 1.0)
        else:
            out[key] = value.copy()
    return ParamSet(out)
