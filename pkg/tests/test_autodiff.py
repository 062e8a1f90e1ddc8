"""Gradient correctness: reverse mode against central finite differences."""

import numpy as np
import pytest

from leafaudio import tape
from leafaudio.autodiff import (
    batch_loss,
    finite_diff,
    grad_check_report,
    gradcheck_config,
    loss_and_grad,
    loss_graph,
    perturbed_params,
    relative_errors,
    synthetic_batch,
)
from leafaudio.errors import NonFiniteLoss
from leafaudio.frontend import FrontendConfig
from leafaudio.params import ParamSet, init_params
from leafaudio.signal import Waveform

CFG = gradcheck_config()


def small_batch(seed=7, n=4, num_classes=3):
    return synthetic_batch(seed, batch_size=n, num_classes=num_classes)


class TestLossValues:
    def test_zero_head_gives_uniform_loss(self):
        params = init_params(CFG, num_classes=3)
        batch = small_batch(n=6)
        loss, grads = loss_and_grad(batch, params, CFG)
        np.testing.assert_allclose(loss, np.log(3.0), rtol=1e-12)
        assert abs(grads["head_bias"].sum()) < 1e-12

    def test_duplicating_batch_preserves_loss_and_grads(self):
        params = perturbed_params(CFG, num_classes=3, seed=1)
        batch = small_batch(n=3)
        loss_a, grads_a = loss_and_grad(batch, params, CFG)
        loss_b, grads_b = loss_and_grad(batch + batch, params, CFG)
        np.testing.assert_allclose(loss_b, loss_a, rtol=1e-12)
        for name in grads_a:
            np.testing.assert_allclose(grads_b[name], grads_a[name], rtol=1e-9, atol=1e-12)

    def test_deterministic(self):
        params = perturbed_params(CFG, num_classes=3, seed=2)
        batch = small_batch(n=2)
        loss_a, grads_a = loss_and_grad(batch, params, CFG)
        loss_b, grads_b = loss_and_grad(batch, params, CFG)
        assert loss_a == loss_b
        for name in grads_a:
            np.testing.assert_allclose(grads_a[name], grads_b[name], atol=1e-12)

    def test_non_finite_loss_raises(self):
        params = init_params(CFG, num_classes=3)
        bad = ParamSet({k: (np.full_like(v, np.nan) if k == "head_bias" else v)
                        for k, v in params.items()})
        with pytest.raises(NonFiniteLoss):
            loss_and_grad(small_batch(n=2), bad, CFG)

    def test_all_grads_finite(self):
        params = perturbed_params(CFG, num_classes=3, seed=3)
        _, grads = loss_and_grad(small_batch(n=3), params, CFG)
        for name in grads:
            assert np.all(np.isfinite(grads[name])), name


class TestFiniteDiff:
    def test_quadratic(self):
        params = ParamSet({"theta": np.array([0.3, -1.2, 2.0])})

        def loss(p):
            return float((p["theta"] ** 2).sum())

        grads = finite_diff(loss, params, h_rel=1e-5)
        np.testing.assert_allclose(grads["theta"], 2.0 * params["theta"], atol=1e-8)

    def test_constant_loss(self):
        params = ParamSet({"theta": np.linspace(-1, 1, 5)})
        grads = finite_diff(lambda p: 3.5, params)
        np.testing.assert_array_equal(grads["theta"], np.zeros(5))

    def test_step_scales_with_magnitude(self):
        # for |p| >> 1 the step is h_rel * |p|; exact for quadratics anyway
        params = ParamSet({"theta": np.array([1e4])})
        grads = finite_diff(lambda p: float((p["theta"] ** 2).sum()), params, h_rel=1e-6)
        np.testing.assert_allclose(grads["theta"], 2e4, rtol=1e-9)


class TestGradAgreement:
    def test_leaf_loss_matches_finite_differences(self):
        params = perturbed_params(CFG, num_classes=3, seed=5)
        batch = small_batch(seed=6, n=2)
        _, analytic = loss_and_grad(batch, params, CFG)
        numeric = finite_diff(lambda p: batch_loss(batch, p, CFG), params, h_rel=1e-5)
        errors = np.concatenate([e.ravel() for e in relative_errors(analytic, numeric).values()])
        assert errors.max() < 1e-3
        assert np.mean(errors < 1e-4) >= 0.99

    def test_eta_fd_error_shrinks_quadratically(self):
        # the oracle's truncation error in the oscillatory eta direction
        # drops ~100x per 10x step reduction, i.e. the analytic gradient is
        # the h -> 0 limit of the central differences
        params = perturbed_params(CFG, num_classes=3, seed=5)
        batch = small_batch(seed=6, n=2)
        _, analytic = loss_and_grad(batch, params, CFG)
        a = analytic["eta"][2]
        flat = params.astype(np.float64).flat()  # eta occupies the first N slots
        errs = []
        for h in (1e-3, 1e-4, 1e-5):
            probe = flat.copy()
            probe[2] = flat[2] + h
            hi = batch_loss(batch, params.with_flat(probe), CFG)
            probe[2] = flat[2] - h
            lo = batch_loss(batch, params.with_flat(probe), CFG)
            errs.append(abs((hi - lo) / (2 * h) - a))
        assert errs[0] / errs[1] > 30
        assert errs[1] / errs[2] > 30

    def test_gradient_linearity(self):
        params = perturbed_params(CFG, num_classes=3, seed=8)
        batch_a = small_batch(seed=9, n=2)
        batch_b = small_batch(seed=10, n=2)
        from leafaudio.autodiff import batch_arrays

        xs_a, y_a = batch_arrays(batch_a)
        xs_b, y_b = batch_arrays(batch_b)
        a, b = 0.7, -1.3

        loss_a, leaves = loss_graph(xs_a, y_a, params, CFG)
        loss_b, _ = loss_graph(xs_b, y_b, leaves, CFG)
        combined = a * loss_a + b * loss_b
        tape.backward(combined)
        combined_grads = {k: v.grad.copy() for k, v in leaves.items()}

        _, grads_a = loss_and_grad(batch_a, params, CFG)
        _, grads_b = loss_and_grad(batch_b, params, CFG)
        for name in combined_grads:
            np.testing.assert_allclose(
                combined_grads[name], a * grads_a[name] + b * grads_b[name],
                rtol=1e-9, atol=1e-12,
            )


@pytest.fixture(scope="module")
def report():
    return grad_check_report(seed=0)


class TestGradCheckReport:

    def test_covers_every_variant_and_group(self, report):
        by_variant = {}
        for row in report:
            by_variant.setdefault(row["variant"], set()).add(row["param_group"])
        gabor_groups = {"eta", "sigma", "pool_widths", "head_weights", "head_bias"}
        assert by_variant["gabor/log"] == gabor_groups
        assert by_variant["gabor/pcen"] == gabor_groups | {"pcen_alpha", "pcen_delta", "pcen_root"}
        assert by_variant["gabor/spcen"] == gabor_groups | {
            "pcen_alpha", "pcen_delta", "pcen_root", "pcen_smooth"}
        assert by_variant["normalized_conv/spcen"] == {
            "conv_kernels", "pool_widths", "pcen_alpha", "pcen_delta", "pcen_root",
            "pcen_smooth", "head_weights", "head_bias"}
        assert by_variant["mel/spcen"] == {
            "pcen_alpha", "pcen_delta", "pcen_root", "pcen_smooth", "head_weights", "head_bias"}

    def test_mel_log_has_only_head_parameters(self, report):
        groups = {r["param_group"] for r in report if r["variant"] == "mel/log"}
        assert groups == {"head_weights", "head_bias"}

    def test_all_errors_below_tolerance(self, report):
        for row in report:
            assert row["max_rel_err"] < 1e-3, row
