import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from pdvol.kernels import (
    Exponential,
    ExponentialCombo,
    Kernel,
    KernelError,
    ShiftedPower,
    TimeShiftedPowerLaw,
    approximate_with_exponentials,
    integral_quadrature,
    kernel_from_dict,
    kernel_to_dict,
    parse_kernel,
    serialize_kernel,
    tspl_normalization,
)


def random_kernel(rng, family=None):
    family = family or rng.choice(["exp", "tspl", "combo", "shifted_power"])
    if family == "exp":
        return Exponential(float(rng.uniform(0.5, 80.0)))
    if family == "tspl":
        return TimeShiftedPowerLaw(alpha=float(rng.uniform(1.05, 3.0)),
                                   delta=float(rng.uniform(0.005, 0.5)))
    if family == "combo":
        return ExponentialCombo(theta=float(rng.uniform(0.0, 1.0)),
                                lam_a=float(rng.uniform(0.5, 80.0)),
                                lam_b=float(rng.uniform(0.5, 80.0)))
    return ShiftedPower(a=float(rng.uniform(0.1, 4.0)), cutoff=float(rng.uniform(0.5, 5.0)))


class TestEvaluate:
    def test_exponential_diagonal(self):
        assert Exponential(1.0).evaluate(0.5, 0.5) == 1.0

    def test_tspl_diagonal(self):
        k = TimeShiftedPowerLaw(alpha=2.0, delta=0.1, z=0.1)
        assert_allclose(k.evaluate(1.0, 1.0), 10.0, rtol=1e-15)

    def test_shifted_power_value(self):
        assert ShiftedPower(a=1.0, cutoff=1.0).evaluate(0.0, 1.0) == 0.5

    def test_combo_is_convex_mix(self):
        k = ExponentialCombo(0.25, 4.0, 1.5)
        a, b = Exponential(4.0), Exponential(1.5)
        s, t = -0.3, 0.7
        assert_allclose(k.evaluate(s, t),
                        0.25 * a.evaluate(s, t) + 0.75 * b.evaluate(s, t), rtol=1e-15)

    def test_rejects_s_greater_than_t(self):
        with pytest.raises(KernelError):
            Exponential(1.0).evaluate(1.0, 0.5)

    def test_rejects_non_finite(self):
        with pytest.raises(KernelError):
            Exponential(1.0).evaluate(np.nan, 0.5)
        with pytest.raises(KernelError):
            Exponential(1.0).evaluate(-np.inf, 0.5)

    def test_shifted_power_zero_below_window(self):
        assert ShiftedPower(a=1.0, cutoff=1.0).evaluate(-2.0, 0.0) == 0.0

    def test_finite_window_rejects_below_support(self):
        with pytest.raises(KernelError):
            Exponential(1.0, cutoff=1.0).evaluate(-2.0, 0.0)

    def test_vectorized_broadcast(self):
        k = Exponential(3.0)
        s = np.linspace(-1.0, 0.5, 7)
        out = k.evaluate(s, 0.5)
        assert out.shape == (7,)
        assert_allclose(out, 3.0 * np.exp(-3.0 * (0.5 - s)), rtol=1e-15)

    def test_never_negative(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            k = random_kernel(rng)
            t = rng.uniform(0.0, 2.0)
            lo = -k.cutoff if math.isfinite(k.cutoff) else -5.0
            s = np.linspace(lo, t, 41)
            assert np.all(np.asarray(k.evaluate(s, t)) >= 0.0)


class TestNormalization:
    def test_infinite_support(self):
        assert_allclose(tspl_normalization(2.0, 0.1), 0.1, rtol=1e-15)
        assert tspl_normalization(2.0, 1.0) == 1.0

    def test_finite_support_alpha_below_one(self):
        # 1 / int_0^1 (u + 0.1)^(-1/2) du, antiderivative 2 sqrt(u + delta)
        expected = 1.0 / (2.0 * (math.sqrt(1.1) - math.sqrt(0.1)))
        assert_allclose(tspl_normalization(0.5, 0.1, 1.0), expected, rtol=1e-14)
        assert_allclose(expected, 0.68252, rtol=1e-4)

    def test_finite_support_alpha_one_uses_log(self):
        z = tspl_normalization(1.0, 0.1, 1.0)
        assert_allclose(z, 1.0 / math.log(1.1 / 0.1), rtol=1e-14)

    def test_rejects_alpha_at_most_one_on_infinite_support(self):
        with pytest.raises(KernelError):
            tspl_normalization(1.0, 0.1)
        with pytest.raises(KernelError):
            TimeShiftedPowerLaw(alpha=0.8, delta=0.1)

    def test_unit_mass_on_random_draws(self):
        rng = np.random.default_rng(123)
        for _ in range(200):
            alpha = float(rng.uniform(0.2, 3.0))
            delta = float(rng.uniform(0.004, 0.8))
            cutoff = float(rng.choice([math.inf, rng.uniform(0.5, 6.0)]))
            if not math.isfinite(cutoff):
                alpha = float(rng.uniform(1.05, 3.0))
            k = TimeShiftedPowerLaw(alpha=alpha, delta=delta, cutoff=cutoff)
            mass = k.integral(1.0, -cutoff if math.isfinite(cutoff) else -math.inf, 0.0, 0.0)
            assert_allclose(mass, 1.0, atol=1e-8)


class TestTimeDerivative:
    def test_exponential_diagonal(self):
        assert_allclose(Exponential(2.0).time_derivative(0.5, 0.5), -4.0, rtol=1e-15)

    def test_tspl_diagonal(self):
        k = TimeShiftedPowerLaw(alpha=2.0, delta=1.0, z=1.0)
        assert_allclose(k.time_derivative(0.3, 0.3), -2.0, rtol=1e-15)

    def test_shifted_power(self):
        assert_allclose(ShiftedPower(a=1.0, cutoff=1.0).time_derivative(0.0, 0.0), -1.0,
                        rtol=1e-15)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        step = 1e-6
        for _ in range(40):
            k = random_kernel(rng)
            t = float(rng.uniform(0.5, 2.0))
            lo = -k.cutoff * 0.99 if math.isfinite(k.cutoff) else -3.0
            s = np.linspace(lo, t - 2e-3, 17)
            if isinstance(k, TimeShiftedPowerLaw) and k.delta < 0.05:
                s = s[t - s > 1e-3]
            exact = k.time_derivative(s, t)
            fd = (np.asarray(k.evaluate(s, t + step)) - np.asarray(k.evaluate(s, t - step))) / (2 * step)
            assert_allclose(exact, fd, rtol=1e-5)

    def test_monotone_decay_in_t(self):
        rng = np.random.default_rng(5)
        for _ in range(40):
            k = random_kernel(rng)
            s = float(rng.uniform(-0.4, 0.0))
            t = np.linspace(max(s, 0.0) + 1e-6, 2.0, 50)
            vals = np.asarray(k.evaluate(s, t))
            assert np.all(np.diff(vals) <= 1e-15)


class TestSeparable:
    def test_exponential_parts(self):
        k = Exponential(3.0)
        parts = k.separable()
        s, t = np.array([-0.5, 0.0, 0.2]), 0.7
        assert_allclose(parts.f(s), 3.0 * np.exp(3.0 * s), rtol=1e-15)
        assert_allclose(parts.h(t), -3.0 * t, rtol=1e-15)
        assert_allclose(parts.f(s) * np.exp(parts.h(t)), k.evaluate(s, t), rtol=1e-13)

    def test_shifted_power_parts(self):
        k = ShiftedPower(a=2.0, cutoff=5.0)
        parts = k.separable()
        assert_allclose(parts.h(1.0), -2.0 * math.log(6.0), rtol=1e-15)
        assert_allclose(parts.h_prime(1.0), -2.0 / 6.0, rtol=1e-15)

    def test_mix_not_separable(self):
        assert ExponentialCombo(0.5, 2.0, 8.0).separable() is None
        assert TimeShiftedPowerLaw(1.5, 0.1).separable() is None

    def test_degenerate_mix_is_separable(self):
        assert ExponentialCombo(1.0, 2.0, 8.0).separable() is not None
        assert ExponentialCombo(0.0, 2.0, 8.0).separable() is not None

    def test_consistency_on_grid(self):
        for k in (Exponential(7.0), ShiftedPower(a=1.3, cutoff=2.0)):
            parts = k.separable()
            lo = -k.cutoff if math.isfinite(k.cutoff) else -2.0
            t = np.linspace(0.0, 1.5, 100)
            s = np.linspace(lo, 0.0, 100)
            direct = np.asarray(k.evaluate(s[None, :], t[:, None]))
            product = parts.f(s)[None, :] * np.exp(parts.h(t))[:, None]
            assert np.max(np.abs(direct - product)) <= 1e-12

    def test_h_non_increasing(self):
        t = np.linspace(0.0, 3.0, 200)
        for k in (Exponential(2.0), ShiftedPower(a=0.7, cutoff=1.0),
                  ExponentialCombo(1.0, 4.0, 9.0)):
            h = np.asarray(k.separable().h(t))
            assert np.all(np.diff(h) <= 0.0)


class TestIntegral:
    def test_exponential_square_full_window(self):
        assert_allclose(Exponential(1.0).integral(2.0, -math.inf, 1.0, 1.0), 0.5, rtol=1e-14)

    def test_tspl_mass_full_window(self):
        k = TimeShiftedPowerLaw(alpha=2.0, delta=1.0, z=1.0)
        assert_allclose(k.integral(1.0, -math.inf, 1.0, 1.0), 1.0, rtol=1e-14)

    def test_empty_interval(self):
        rng = np.random.default_rng(3)
        for _ in range(8):
            k = random_kernel(rng)
            assert k.integral(2.0, 0.25, 0.25, 1.0) == 0.0

    def test_rejects_inverted_bounds(self):
        with pytest.raises(KernelError):
            Exponential(1.0).integral(1.0, 0.5, 0.1, 1.0)

    def test_rejects_upper_beyond_t(self):
        with pytest.raises(KernelError):
            Exponential(1.0).integral(1.0, 0.0, 2.0, 1.0)

    def test_divergent_tail_reported_infinite(self):
        k = TimeShiftedPowerLaw(alpha=1.2, delta=0.01)
        assert k.integral(0.5, -math.inf, 0.0, 0.0) == math.inf

    def test_closed_form_matches_quadrature_on_random_draws(self):
        rng = np.random.default_rng(2024)
        for _ in range(80):
            k = random_kernel(rng)
            t = float(rng.uniform(0.2, 2.0))
            lower = float(rng.uniform(-2.0, t - 0.2))
            upper = float(rng.uniform(lower, t))
            if rng.uniform() < 0.35:
                lower = -math.inf
            power = float(rng.choice([1.0, 2.0, 2.5, 4.0]))
            if isinstance(k, ExponentialCombo) and power not in (1.0, 2.0):
                power = 2.0  # closed form limited to the expanded square
            closed = k.integral(power, lower, upper, t)
            quad = integral_quadrature(k, power, lower, upper, t)
            assert_allclose(quad, closed, rtol=1e-9, atol=1e-12)

    def test_finite_window_clamps_lower_bound(self):
        k = Exponential(2.0, cutoff=1.0)
        assert_allclose(k.integral(1.0, -math.inf, 0.0, 0.0),
                        k.integral(1.0, -1.0, 0.0, 0.0), rtol=1e-15)


class TestExponentialSumApproximation:
    def test_power_law_fit_residual_small(self):
        k = TimeShiftedPowerLaw(alpha=1.25, delta=0.05)
        factors, residual = approximate_with_exponentials(k, n_terms=12)
        assert residual < 0.05
        lags = np.geomspace(1e-3, 5.0, 64)
        approx = sum(w * lam * np.exp(-lam * lags) for w, lam in factors)
        assert_allclose(approx, k.lag_value(lags), rtol=3 * residual + 1e-9)

    def test_weights_nonnegative(self):
        k = TimeShiftedPowerLaw(alpha=1.5, delta=0.02)
        factors, _ = approximate_with_exponentials(k, n_terms=10)
        assert all(w > 0.0 and lam > 0.0 for w, lam in factors)

    def test_rejects_non_stationary_kernel(self):
        with pytest.raises(KernelError):
            approximate_with_exponentials(ShiftedPower(a=1.0, cutoff=1.0))


class TestSerialization:
    def test_format_round_trip(self):
        k = TimeShiftedPowerLaw(alpha=1.2, delta=0.01)
        text = serialize_kernel(k)
        assert "family=tspl" in text
        assert "alpha=1.2" in text
        assert "delta=0.01" in text
        assert "cutoff=inf" in text
        assert "z=" not in text
        back = parse_kernel(text)
        assert back == k

    def test_round_trip_all_families(self):
        rng = np.random.default_rng(9)
        for fam in ("exp", "tspl", "combo", "shifted_power"):
            for _ in range(10):
                k = random_kernel(rng, fam)
                assert parse_kernel(serialize_kernel(k)) == k

    def test_normalization_recomputed_not_parsed(self):
        k = parse_kernel("family=tspl\nalpha=2.0\ndelta=0.1\ncutoff=inf\nz=99\n")
        assert_allclose(k.z, 0.1, rtol=1e-15)

    def test_unknown_family_rejected(self):
        with pytest.raises(KernelError):
            parse_kernel("family=gaussian\nsigma=1\n")

    def test_unknown_key_rejected(self):
        with pytest.raises(KernelError):
            parse_kernel("family=exp\nlam=2\nrate=3\n")

    def test_dict_round_trip_accepts_aliases(self):
        k = kernel_from_dict({"family": "exp", "lambda": "10.0"})
        assert k == Exponential(10.0)
        assert kernel_to_dict(k)["lam"] == "10.0"

    def test_validation_errors_on_bad_parameters(self):
        with pytest.raises(KernelError):
            Exponential(-1.0)
        with pytest.raises(KernelError):
            ExponentialCombo(1.5, 1.0, 1.0)
        with pytest.raises(KernelError):
            ShiftedPower(a=1.0, cutoff=math.inf)
        with pytest.raises(KernelError):
            TimeShiftedPowerLaw(alpha=2.0, delta=0.0)
