import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import curve_fit

from superramsey.errors import FitDiverged, NoPeak, SingularDesign
from superramsey.fitting import (AREA_FACTOR, ScalingFit, fit_gaussian_pulse, fit_scaling,
                                 gaussian, gaussian_area, numeric_integral)

T = np.arange(0, 1.2e-6 + 1e-12, 1e-9)
I_MAX, T_DELAY, TAU, T0 = 1e4, 0.45e-6, 0.16e-6, 0.1e-6


def synthetic(t=T, i_max=I_MAX, delay=T_DELAY, tau=TAU, t0=T0):
    return gaussian(t, i_max, t0 + delay, tau)


def test_exact_gaussian_recovered():
    c = fit_gaussian_pulse(T, synthetic(), T0)
    assert c.i_max == pytest.approx(I_MAX, rel=1e-3)
    assert c.t_delay == pytest.approx(T_DELAY, rel=1e-3)
    assert c.tau == pytest.approx(TAU, rel=1e-3)
    assert c.i_int == pytest.approx(gaussian_area(I_MAX, TAU), rel=1e-3)
    assert c.detected and c.converged


def test_area_factor():
    assert AREA_FACTOR * 1.0 * 1.0 == pytest.approx(math.sqrt(math.pi / (4 * math.log(2))))


def test_noise_monte_carlo():
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        v = synthetic() + 0.01 * I_MAX * rng.uniform(-1, 1, T.size)
        c = fit_gaussian_pulse(T, v, T0)
        worst = max(worst, abs(c.i_max / I_MAX - 1), abs(c.t_delay / T_DELAY - 1),
                    abs(c.tau / TAU - 1))
    assert worst < 0.02


def test_matches_scipy_curve_fit():
    rng = np.random.default_rng(5)
    v = synthetic() + 0.02 * I_MAX * rng.uniform(-1, 1, T.size)
    c = fit_gaussian_pulse(T, v, T0)
    lo, hi = c.fit_window
    m = (T >= lo) & (T <= hi)
    popt, _ = curve_fit(gaussian, T[m], v[m], p0=[I_MAX, T0 + T_DELAY, TAU])
    assert c.i_max == pytest.approx(popt[0], rel=1e-6)
    assert c.t_center == pytest.approx(popt[1], rel=1e-6)
    assert c.tau == pytest.approx(abs(popt[2]), rel=1e-6)


def test_idempotent():
    rng = np.random.default_rng(1)
    v = synthetic() * (1 + 0.05 * rng.uniform(-1, 1, T.size))
    c = fit_gaussian_pulse(T, v, T0)
    again = fit_gaussian_pulse(T, gaussian(T, c.i_max, c.t_center, c.tau), T0)
    assert again.i_max == pytest.approx(c.i_max, rel=1e-9)
    assert again.t_center == pytest.approx(c.t_center, rel=1e-9)
    assert again.tau == pytest.approx(c.tau, rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e-6, 1e-6), st.integers(-20, 20))
def test_shift_and_scale_equivariance(shift, k):
    rng = np.random.default_rng(2)
    v = synthetic() * (1 + 0.03 * rng.uniform(-1, 1, T.size))
    base = fit_gaussian_pulse(T, v, T0)
    shifted = fit_gaussian_pulse(T + shift, v, T0 + shift)
    assert shifted.t_center - base.t_center == pytest.approx(shift, abs=1e-18)
    assert shifted.t_delay == pytest.approx(base.t_delay, rel=1e-9)
    c = 2.0 ** k
    scaled = fit_gaussian_pulse(T, c * v, T0)
    assert scaled.i_max == c * base.i_max
    assert scaled.i_int == c * base.i_int
    assert scaled.tau == base.tau


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1.0, 1e3))
def test_detection_monotone_in_amplitude(a, up):
    ref = 1e4
    v = synthetic(i_max=1.0)
    lo = fit_gaussian_pulse(T, a * v, T0, reference=ref, threshold_frac=1e-3)
    hi = fit_gaussian_pulse(T, a * up * v, T0, reference=ref, threshold_frac=1e-3)
    assert hi.detected or not lo.detected


def test_threshold_rule():
    v = synthetic()
    assert fit_gaussian_pulse(T, v, T0, reference=I_MAX * 999).detected
    assert not fit_gaussian_pulse(T, v, T0, reference=I_MAX * 1001).detected


def test_no_peak():
    with pytest.raises(NoPeak):
        fit_gaussian_pulse(T, np.zeros_like(T), T0)


def test_too_few_samples():
    with pytest.raises(ValueError):
        fit_gaussian_pulse(T[:5], synthetic()[:5], T0)


def test_fit_diverged_reports_best_effort():
    # a rising edge with its maximum on the window boundary has no interior centre
    v = np.exp(T / 1e-7)
    with pytest.raises(FitDiverged) as info:
        fit_gaussian_pulse(T, v, 0.0)
    best = info.value.best_effort
    assert not best.detected and not best.converged
    assert best.i_max == pytest.approx(v.max())


def test_ringing_excluded_from_fit():
    tail = 0.3 * I_MAX * np.exp(-((T - 1.0e-6) / 0.05e-6) ** 2)
    c = fit_gaussian_pulse(T, synthetic() + tail, T0)
    assert c.fit_window[1] < 0.95e-6
    assert c.tau == pytest.approx(TAU, rel=0.01)
    assert c.i_int_numeric > c.i_int


def test_numeric_integral_constant():
    t = np.linspace(0, 1, 11)
    assert numeric_integral(t, np.full_like(t, 3.0), (0.13, 0.77)) == pytest.approx(3.0 * 0.64)


def test_numeric_integral_gaussian():
    v = synthetic()
    assert numeric_integral(T, v) == pytest.approx(gaussian_area(I_MAX, TAU), rel=1e-4)


def test_numeric_integral_window_checked():
    with pytest.raises(ValueError):
        numeric_integral(T, synthetic(), (-1.0, 0.5e-6))


def test_scaling_linear_example():
    r = np.linspace(0.2, 1.0, 9)
    fit = fit_scaling(np.column_stack([r, 1.21 * r - 0.22]), "linear")
    assert fit.slope == pytest.approx(1.21) and fit.intercept == pytest.approx(-0.22)
    assert fit.r_squared == pytest.approx(1.0)


def test_scaling_quadratic_example():
    r = np.linspace(0.1, 1.0, 7)
    fit = fit_scaling(np.column_stack([r, r ** 2]), "quadratic_in_r")
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.slope == pytest.approx(1.0) and fit.intercept == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("model", ["log_over_r", "inverse_r"])
def test_scaling_other_bases(model):
    r = np.linspace(0.3, 1.0, 8)
    truth = ScalingFit(model, (0.08, 0.45), 1.0)
    fit = fit_scaling(np.column_stack([r, truth.predict(r)]), model)
    assert fit.coefficients == pytest.approx((0.08, 0.45))


def test_scaling_errors():
    with pytest.raises(SingularDesign):
        fit_scaling([(0.5, 1.0), (0.5, 2.0), (0.5, 3.0)])
    with pytest.raises(ValueError):
        fit_scaling([(0.5, 1.0), (0.6, 2.0)])
    with pytest.raises(ValueError):
        fit_scaling([(0.0, 1.0), (0.6, 2.0), (0.7, 3.0)])
    with pytest.raises(ValueError):
        fit_scaling([(0.5, 1.0), (0.6, 2.0), (0.7, 3.0)], "cubic")
