"""Tests for filtering, pooling, compression, and the mel baseline."""

import math

import numpy as np
import pytest

from leafaudio import tape
from leafaudio.errors import BadRate, NegativeInput, ZeroFilter
from leafaudio.frontend import (
    ConvBank,
    FeatureMap,
    FrontendConfig,
    PcenParams,
    PoolingParams,
    conv_bank_from_gabor,
    default_pcen,
    default_pooling,
    filter_squared_modulus,
    frontend_forward,
    gaussian_lowpass_kernel,
    log_compress,
    mel_config_for,
    mel_frontend_forward,
    param_count,
    pcen_forward,
    pool_decimate,
    renormalize_conv,
)
from leafaudio.gabor import GaborBank, gabor_impulse_response, gabor_params_from_mels, mel_matrix
from leafaudio.params import init_params
from leafaudio.signal import ToneSpec, Waveform, synth_tones

CFG = FrontendConfig()


def tone(freq, duration=1.0, amp=1.0, phase=0.0, rate=16000):
    return synth_tones(ToneSpec((freq,), (amp,), duration, phases=(phase,)), rate)


class TestFilterSquaredModulus:
    def test_impulse_traces_squared_envelope(self):
        # the output of a centered impulse is the squared Gaussian envelope,
        # independent of the filter's center frequency
        n = 2001
        center = 1000
        x = np.zeros(n)
        x[center] = 1.0
        bank = GaborBank(np.array([0.05, 0.25, 0.45]), np.array([30.0, 30.0, 50.0]), 401)
        out = filter_squared_modulus(Waveform(x, 16000), bank)
        t = np.arange(n) - center
        support = np.abs(t) <= 200  # kernel reaches +-(W-1)/2 around the impulse
        for ch, sigma in enumerate([30.0, 30.0, 50.0]):
            expected = np.exp(-(t ** 2) / sigma ** 2) / (2.0 * np.pi * sigma ** 2)
            expected[~support] = 0.0
            np.testing.assert_allclose(out[:, ch], expected, atol=1e-12)
        # identical sigma, different eta: identical envelope
        np.testing.assert_allclose(out[:, 0], out[:, 1], atol=1e-12)

    def test_zero_input(self):
        bank = GaborBank(np.array([0.1]), np.array([20.0]), 101)
        out = filter_squared_modulus(Waveform(np.zeros(500), 16000), bank)
        np.testing.assert_allclose(out, 0.0, atol=1e-20)

    def test_tone_envelope_matches_complex_dot_oracle(self):
        # interior response to a matched tone is flat and equals the direct
        # complex correlation evaluated independently per time step
        x = tone(0.25 * 16000, duration=0.25)
        bank = GaborBank(np.array([0.25]), np.array([40.0]), 401)
        out = filter_squared_modulus(x, bank)[:, 0]
        phi = gabor_impulse_response(bank, 0)
        half = 200
        interior = slice(401, len(x.samples) - 401)
        for t in (500, 1234, 2000, 3210):
            window = x.samples[t - half: t + half + 1]
            oracle = np.abs(np.dot(window, phi)) ** 2
            np.testing.assert_allclose(out[t], oracle, rtol=1e-10)
        ripple = out[interior].max() / out[interior].min() - 1.0
        assert ripple < 0.02

    def test_conv_bank_pairs_adjacent_kernels(self):
        # channel n of a ConvBank output is corr(x, k_2n)^2 + corr(x, k_2n+1)^2
        rng = np.random.default_rng(11)
        x = rng.standard_normal(50)
        kernels = rng.standard_normal((4, 9))
        kernels /= np.linalg.norm(kernels, axis=1, keepdims=True)
        out = filter_squared_modulus(Waveform(x, 16000), ConvBank(kernels))

        def correlate_same(sig, k):
            h = (len(k) - 1) // 2
            res = np.zeros(len(sig))
            for t in range(len(sig)):
                for j in range(len(k)):
                    u = t + j - h
                    if 0 <= u < len(sig):
                        res[t] += sig[u] * k[j]
            return res

        for n in range(2):
            oracle = correlate_same(x, kernels[2 * n]) ** 2 + correlate_same(x, kernels[2 * n + 1]) ** 2
            np.testing.assert_allclose(out[:, n], oracle, atol=1e-12)

    def test_bad_rate(self):
        bank = GaborBank(np.array([0.1]), np.array([20.0]), 101)
        with pytest.raises(BadRate):
            filter_squared_modulus(Waveform(np.zeros(100), 8000), bank)


class TestGaussianLowpassKernel:
    def test_even_and_positive(self):
        k = gaussian_lowpass_kernel(0.2, 401)
        assert np.all(k > 0)
        np.testing.assert_allclose(k, k[::-1], rtol=1e-15)

    def test_center_value_at_default_width(self):
        k = gaussian_lowpass_kernel(0.4, 401)
        np.testing.assert_allclose(k[200], 1.0 / (math.sqrt(2 * math.pi) * 80.0), rtol=1e-12)
        np.testing.assert_allclose(k[200], 4.9867785e-3, rtol=1e-6)

    def test_sums_match_direct_summation_oracle(self):
        # truncation at +-(P-1)/2 keeps the sum within 1e-3 of 1 up to
        # w ~ 0.3; at the 0.4 init width the deficit is ~1.2e-2
        for w, expected in [(0.05, 1.0), (0.1, 1.0), (0.2, 0.999999463), (0.3, 0.999167346)]:
            assert abs(gaussian_lowpass_kernel(w, 401).sum() - expected) < 1e-6
        assert abs(gaussian_lowpass_kernel(0.4, 401).sum() - 0.987798632) < 1e-6


class TestPoolDecimate:
    def test_constant_column_passes_kernel_sum(self):
        f = np.full((4000, 2), 3.0)
        pool = PoolingParams(np.array([0.4, 0.1]))
        fm = pool_decimate(f, pool, CFG)
        interior = fm.values[5:-5]
        for ch, w in enumerate([0.4, 0.1]):
            ksum = gaussian_lowpass_kernel(w, 401).sum()
            np.testing.assert_allclose(interior[:, ch], 3.0 * ksum, rtol=1e-10)
        # near-unit kernel sum keeps constants within ~1.3% at w = 0.4
        assert np.all(np.abs(interior / 3.0 - 1.0) < 0.02)

    def test_frame_count_and_rate(self):
        f = np.zeros((16000, 3))
        fm = pool_decimate(f, PoolingParams(np.full(3, 0.4)), CFG)
        assert fm.values.shape == (100, 3)
        assert fm.frame_rate == 100.0

    def test_matches_naive_convolution_oracle(self):
        rng = np.random.default_rng(3)
        t, p, stride = 700, 401, 160
        f = np.linspace(0.0, 1.0, t)[:, None] + 0.1 * rng.standard_normal((t, 1))
        pool = PoolingParams(np.array([0.23]))
        fm = pool_decimate(f, pool, CFG)
        k = gaussian_lowpass_kernel(0.23, p)
        h = (p - 1) // 2
        m = -(-t // stride)
        oracle = np.zeros(m)
        for idx, center in enumerate(range(0, m * stride, stride)):
            for j in range(p):
                u = center + j - h
                if 0 <= u < t:
                    oracle[idx] += f[u, 0] * k[j]
        np.testing.assert_allclose(fm.values[:, 0], oracle, atol=1e-10)


class TestLogCompress:
    def test_values(self):
        fm = FeatureMap(np.array([[0.0, 1.0 - 1e-6]]), 100.0)
        out = log_compress(fm)
        np.testing.assert_allclose(out.values[0, 0], math.log(1e-6), rtol=1e-12)
        assert abs(out.values[0, 1]) < 1e-9

    def test_monotone(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(0, 10, 50)
        b = a + rng.uniform(1e-6, 1.0, 50)
        fa = log_compress(FeatureMap(a[None], 100.0)).values
        fb = log_compress(FeatureMap(b[None], 100.0)).values
        assert np.all(fb > fa)

    def test_negative_input(self):
        with pytest.raises(NegativeInput):
            log_compress(FeatureMap(np.array([[-0.1]]), 100.0))


class TestPcenForward:
    def test_identity_parameters(self):
        rng = np.random.default_rng(1)
        values = rng.uniform(0.0, 4.0, (30, 5))
        p = PcenParams(np.zeros(5), np.zeros(5), np.ones(5), np.full(5, 0.3))
        out = pcen_forward(FeatureMap(values, 100.0), p)
        np.testing.assert_array_equal(out.values, values)

    def test_zero_input_zero_output(self):
        p = default_pcen(4)
        out = pcen_forward(FeatureMap(np.zeros((20, 4)), 100.0), p)
        np.testing.assert_allclose(out.values, 0.0, atol=1e-15)

    def test_constant_input_closed_form(self):
        # (1/(1+1e-6)^0.96 + 2)^0.5 - 2^0.5 evaluated at 50-digit precision
        p = PcenParams(np.full(3, 0.96), np.full(3, 2.0), np.full(3, 2.0), np.full(3, 0.04))
        out = pcen_forward(FeatureMap(np.ones((50, 3)), 100.0), p)
        np.testing.assert_allclose(out.values, 0.31783696806790245, rtol=1e-12)

    def test_scaling_up_never_decreases_output(self):
        rng = np.random.default_rng(5)
        values = rng.uniform(0.0, 3.0, (40, 6))
        p = PcenParams(
            rng.uniform(0.0, 0.99, 6), rng.uniform(0.0, 3.0, 6),
            rng.uniform(1.0, 4.0, 6), rng.uniform(0.01, 0.9, 6),
        )
        base = pcen_forward(FeatureMap(values, 100.0), p).values
        scaled = pcen_forward(FeatureMap(1.7 * values, 100.0), p).values
        assert np.all(scaled >= base - 1e-12)

    def test_no_nan_inf_for_nonnegative_input(self):
        rng = np.random.default_rng(6)
        values = np.abs(rng.standard_normal((60, 8))) * 1e3
        values[0] = 0.0
        out = pcen_forward(FeatureMap(values, 100.0), default_pcen(8))
        assert np.all(np.isfinite(out.values))

    def test_negative_input(self):
        with pytest.raises(NegativeInput):
            pcen_forward(FeatureMap(np.array([[-1.0]]), 100.0), default_pcen(1))


class TestFrontendForward:
    def test_zero_waveform_log(self):
        cfg = FrontendConfig(compression="log")
        params = init_params(cfg, 2)
        fm = frontend_forward(Waveform(np.zeros(16000), 16000), params, cfg)
        np.testing.assert_allclose(fm.values, math.log(1e-6), rtol=1e-9)

    def test_output_shape_at_defaults(self):
        params = init_params(CFG, 2)
        fm = frontend_forward(tone(440.0), params, CFG)
        assert fm.values.shape == (100, 40)
        assert fm.frame_rate == 100.0

    def test_tone_peaks_at_nearest_center(self):
        bank = gabor_params_from_mels(mel_config_for(CFG), 401)
        x = tone(1000.0)
        squared = filter_squared_modulus(x, bank)
        pooled = pool_decimate(squared, default_pooling(40), CFG)
        profile = pooled.values.mean(axis=0)
        nearest = int(np.argmin(np.abs(bank.center_freqs * 16000 - 1000.0)))
        assert int(profile.argmax()) == nearest

    def test_deterministic(self):
        params = init_params(CFG, 2)
        x = tone(700.0, duration=0.2)
        a = frontend_forward(x, params, CFG)
        b = frontend_forward(x, params, CFG)
        assert np.array_equal(a.values, b.values)

    def test_shift_quasi_invariance(self):
        # eta = 0.1 tone shifted by up to 8 samples: interior pooled outputs
        # move by < 1% relative
        cfg = CFG
        bank = gabor_params_from_mels(mel_config_for(cfg), 401)
        pool = default_pooling(40)
        base = None
        x = synth_tones(ToneSpec((1600.0,), (1.0,), 1.2, phases=(0.0,)), 16000)
        for shift in (0, 3, 8):
            shifted = Waveform(x.samples[shift: shift + 16000], 16000)
            fm = pool_decimate(filter_squared_modulus(shifted, bank), pool, cfg)
            interior = fm.values[10:-10]
            if base is None:
                base = interior
            else:
                rel = np.abs(interior - base) / (np.abs(base).max())
                assert rel.max() < 0.01


class TestMelFrontend:
    def test_zero_input_log(self):
        fm = mel_frontend_forward(Waveform(np.zeros(16000), 16000), mel_config_for(CFG))
        np.testing.assert_allclose(fm.values, math.log(1e-6), rtol=1e-9)
        assert fm.values.shape == (100, 40)

    def test_tone_argmax_channel(self):
        mel_cfg = mel_config_for(CFG)
        fm = mel_frontend_forward(tone(1000.0), mel_cfg)
        profile = fm.values.mean(axis=0)
        rows = mel_matrix(mel_cfg)
        target_bin = round(1000 / 16000 * 512)
        expected = int(np.argmin(np.abs(rows.argmax(axis=1) - target_bin)))
        assert int(profile.argmax()) == expected

    def test_spcen_compression(self):
        fm = mel_frontend_forward(tone(500.0, 0.5), mel_config_for(CFG), compression="spcen")
        assert fm.values.shape == (50, 40)
        assert np.all(np.isfinite(fm.values))

    def test_bad_rate(self):
        with pytest.raises(BadRate):
            mel_frontend_forward(Waveform(np.zeros(8000), 8000), mel_config_for(CFG))


class TestParamCount:
    def test_table_values(self):
        leaf64 = FrontendConfig(n_filters=64, filtering="gabor", compression="spcen")
        assert param_count(leaf64) == 448
        melpcen64 = FrontendConfig(n_filters=64, filtering="mel", compression="spcen")
        assert param_count(melpcen64) == 256
        mel = FrontendConfig(n_filters=40, filtering="mel", compression="log")
        assert param_count(mel) == 0

    def test_other_variants(self):
        assert param_count(FrontendConfig(filtering="gabor", compression="log")) == 120
        assert param_count(FrontendConfig(filtering="gabor", compression="pcen")) == 240
        conv = FrontendConfig(filtering="normalized_conv", compression="spcen")
        assert param_count(conv) == 2 * 40 * 401 + 40 + 160


class TestRenormalizeConv:
    def test_scales_to_unit_norm(self):
        bank = ConvBank(np.array([[3.0, 4.0, 0.0], [0.0, 5.0, 12.0]]))
        out = renormalize_conv(bank)
        np.testing.assert_allclose(np.linalg.norm(out.kernels, axis=1), 1.0, rtol=1e-15)
        np.testing.assert_allclose(out.kernels[0], [0.6, 0.8, 0.0])

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        bank = renormalize_conv(ConvBank(rng.standard_normal((4, 7))))
        again = renormalize_conv(bank)
        np.testing.assert_allclose(again.kernels, bank.kernels, atol=1e-12)

    def test_zero_filter(self):
        with pytest.raises(ZeroFilter):
            renormalize_conv(ConvBank(np.zeros((2, 5))))

    def test_output_invariant_to_prescaling(self):
        rng = np.random.default_rng(4)
        kernels = rng.standard_normal((4, 101))
        x = tone(900.0, duration=0.05)
        a = filter_squared_modulus(x, renormalize_conv(ConvBank(kernels)))
        b = filter_squared_modulus(x, renormalize_conv(ConvBank(10.0 * kernels)))
        np.testing.assert_allclose(a, b, rtol=1e-10)


class TestMelEquivalenceAtInit:
    def test_channel_correlations_on_white_noise(self):
        # initialized filterbank tracks the mel pipeline frame by frame
        from leafaudio.cli import mel_equivalence_correlations
        from leafaudio.signal import gaussian_noise

        x = Waveform(0.3 * gaussian_noise(16000, seed=42), 16000)
        corr = mel_equivalence_correlations(CFG, x)
        assert corr.shape == (40,)
        assert corr.min() >= 0.9
