"""Gaussian characterization of superradiant pulses and scaling-law regression.

A pulse is modelled as

    f(t) = I_max exp(-4 ln2 (t - t_c)^2 / tau^2)

with tau the full width at half maximum, so that its area is
I_int = sqrt(pi / ln2) / 2 * I_max * tau.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import FitDiverged, NoPeak, SingularDesign

FOUR_LN2 = 4.0 * math.log(2.0)
AREA_FACTOR = math.sqrt(math.pi / math.log(2.0)) / 2.0

LM_LAMBDA0 = 1e-3
LM_TOL = 1e-9
LM_MAX_ITER = 200
DEFAULT_FLOOR = 1e-12
DEFAULT_THRESHOLD_FRAC = 1e-3


@dataclass
class PulseCharacteristics:
    i_max: float
    i_int: float
    t_delay: float
    tau: float
    t0: float
    residual_rms: float
    detected: bool
    i_int_numeric: float
    converged: bool = True
    fit_window: tuple = (math.nan, math.nan)

    @property
    def t_center(self):
        return self.t0 + self.t_delay

    def to_dict(self):
        d = asdict(self)
        d["fit_window"] = list(self.fit_window)
        return d

    @classmethod
    def undetected(cls, t0, i_int_numeric=0.0, peak=0.0):
        """Placeholder for traces with no pulse to fit."""
        return cls(i_max=peak, i_int=0.0, t_delay=math.nan, tau=math.nan, t0=t0,
                   residual_rms=math.nan, detected=False, i_int_numeric=i_int_numeric,
                   converged=False)


def gaussian(t, i_max, t_center, tau):
    return i_max * np.exp(-FOUR_LN2 * (np.asarray(t) - t_center) ** 2 / tau ** 2)


def gaussian_area(i_max, tau):
    return AREA_FACTOR * i_max * tau


def numeric_integral(times, values, window=None):
    """Trapezoidal integral of a sampled trace over ``window`` (edges interpolated)."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if window is None:
        return float(trapezoid(values, times))
    lo, hi = window
    if lo < times[0] or hi > times[-1] or hi < lo:
        raise ValueError("window must lie inside the trace")
    inside = (times > lo) & (times < hi)
    t = np.concatenate(([lo], times[inside], [hi]))
    v = np.concatenate(([np.interp(lo, times, values)], values[inside],
                        [np.interp(hi, times, values)]))
    return float(trapezoid(v, t))


def _levenberg_marquardt(fun, x0, lam0=LM_LAMBDA0, tol=LM_TOL, max_iter=LM_MAX_ITER):
    """Minimise |r(x)|^2; ``fun(x)`` returns (r, J). Returns (x, converged, cost)."""
    x = np.array(x0, dtype=float)
    r, J = fun(x)
    cost = float(r @ r)
    lam = lam0
    for _ in range(max_iter):
        A = J.T @ J
        grad = J.T @ r
        try:
            step = -np.linalg.solve(A + lam * np.diag(np.diag(A) + 1e-300), grad)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        if not np.all(np.isfinite(step)):
            return x, False, cost
        # parameters are O(1) in the normalized coordinates used by the caller
        small = np.max(np.abs(step) / np.maximum(np.abs(x), 1.0)) < tol
        x_new = x + step
        r_new, J_new = fun(x_new)
        cost_new = float(r_new @ r_new)
        if np.isfinite(cost_new) and cost_new <= cost:
            x, r, J, cost = x_new, r_new, J_new, cost_new
            lam /= 10.0
            if small or cost == 0.0:
                return x, True, cost
        else:
            if small:
                # the predicted step is below resolution: we are at the optimum
                return x, True, cost
            lam *= 10.0
            if lam > 1e20:
                return x, False, cost
    return x, False, cost


def _half_max_width(t, v, i_peak):
    """FWHM from linearly interpolated half-maximum crossings around the peak."""
    half = 0.5 * v[i_peak]
    left = right = None
    for i in range(i_peak, 0, -1):
        if v[i - 1] < half:
            left = t[i - 1] + (half - v[i - 1]) * (t[i] - t[i - 1]) / (v[i] - v[i - 1])
            break
    for i in range(i_peak, len(v) - 1):
        if v[i + 1] < half:
            right = t[i] + (v[i] - half) * (t[i + 1] - t[i]) / (v[i] - v[i + 1])
            break
    if left is None and right is None:
        return t[-1] - t[0]
    if left is None:
        return 2.0 * (right - t[i_peak])
    if right is None:
        return 2.0 * (t[i_peak] - left)
    return right - left


def _ringing_cut(v, i_peak):
    """Index of the first local minimum after the peak that lies below 10% of it."""
    level = 0.1 * v[i_peak]
    for i in range(i_peak + 1, len(v) - 1):
        if v[i] < level and v[i] <= v[i - 1] and v[i] <= v[i + 1]:
            return i
    return len(v) - 1


def fit_gaussian_pulse(times, values, t0, window=None, reference=None,
                       threshold_frac=DEFAULT_THRESHOLD_FRAC, floor=DEFAULT_FLOOR):
    """Fit the dominant pulse in ``window`` and characterize it relative to ``t0``.

    ``reference`` is the I_max that defines detection (a pulse counts as
    detected when its fitted I_max reaches threshold_frac * reference); with
    no reference every successfully fitted pulse is detected.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape:
        raise ValueError("times and values differ in shape")
    if window is None:
        window = (times[0], times[-1])
    mask = (times >= window[0]) & (times <= window[1])
    if np.count_nonzero(mask) < 10:
        raise ValueError("need at least 10 samples inside the fit window")
    t = times[mask]
    v = values[mask]
    area_num = numeric_integral(times, values, window)

    i_peak = int(np.argmax(v))
    peak = float(v[i_peak])
    if not peak > floor:
        raise NoPeak(f"trace maximum {peak:.3e} below floor {floor:.3e}")

    i_end = _ringing_cut(v, i_peak)
    tf = t[:i_end + 1]
    vf = v[:i_end + 1]
    t_ref = t[i_peak]
    width0 = _half_max_width(tf, vf, i_peak)
    if not width0 > 0:
        width0 = tf[-1] - tf[0]
    # normalized coordinates keep the problem well conditioned at any scale
    u = (tf - t_ref) / width0
    y = vf / peak

    def residual(x):
        amp, c, w = x
        z = (u - c) / w
        e = np.exp(-FOUR_LN2 * z * z)
        r = amp * e - y
        J = np.empty((len(u), 3))
        J[:, 0] = e
        J[:, 1] = amp * e * 2.0 * FOUR_LN2 * z / w
        J[:, 2] = amp * e * 2.0 * FOUR_LN2 * z * z / w
        return r, J

    span = (u[0], u[-1])
    seeds = [(1.0, 0.0, 1.0), (1.0, 0.25, 0.5), (1.0, -0.25, 2.0)]
    best = None
    for seed in seeds:
        x, ok, cost = _levenberg_marquardt(residual, seed)
        good = (ok and np.all(np.isfinite(x)) and x[0] > 0 and abs(x[2]) > 0
                and span[0] <= x[1] <= span[1])
        if best is None or cost < best[2]:
            best = (x, good, cost)
        if good:
            best = (x, True, cost)
            break

    x, good, cost = best
    if not good:
        fallback = PulseCharacteristics(
            i_max=peak, i_int=gaussian_area(peak, width0), t_delay=t_ref - t0, tau=width0,
            t0=t0, residual_rms=math.nan, detected=False, i_int_numeric=area_num,
            converged=False, fit_window=(float(tf[0]), float(tf[-1])))
        raise FitDiverged("Levenberg-Marquardt failed from all seeds", best_effort=fallback)

    amp, c, w = x
    i_max = float(amp * peak)
    tau = float(abs(w) * width0)
    t_center = float(t_ref + c * width0)
    rms = float(math.sqrt(cost / len(u)) * peak)
    detected = True if reference is None else bool(i_max >= threshold_frac * reference)
    return PulseCharacteristics(
        i_max=i_max, i_int=gaussian_area(i_max, tau), t_delay=t_center - t0, tau=tau, t0=t0,
        residual_rms=rms, detected=detected, i_int_numeric=area_num,
        fit_window=(float(tf[0]), float(tf[-1])))


SCALING_MODELS = {
    "linear": lambda r: r,
    "quadratic": lambda r: r ** 2,
    "log_over_r": lambda r: np.log(r) / r,
    "inverse_r": lambda r: 1.0 / r,
}
_MODEL_ALIASES = {"linear_in_r": "linear", "quadratic_in_r": "quadratic"}


@dataclass
class ScalingFit:
    """y ~ slope * basis(r) + intercept."""

    model: str
    coefficients: tuple
    r_squared: float

    @property
    def slope(self):
        return self.coefficients[0]

    @property
    def intercept(self):
        return self.coefficients[1]

    def predict(self, r):
        return self.slope * SCALING_MODELS[self.model](np.asarray(r, dtype=float)) + self.intercept


def fit_scaling(points, model="linear"):
    """Ordinary least squares of value against basis(r) with an intercept."""
    model = _MODEL_ALIASES.get(model, model)
    if model not in SCALING_MODELS:
        raise ValueError(f"unknown scaling model {model!r}")
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("need at least 3 (r, value) points")
    r, y = pts[:, 0], pts[:, 1]
    if np.any(r <= 0) or np.any(r > 1):
        raise ValueError("r must lie in (0, 1]")
    X = np.column_stack([SCALING_MODELS[model](r), np.ones_like(r)])
    if np.linalg.matrix_rank(X) < 2:
        raise SingularDesign(f"basis for model {model!r} is degenerate on these points")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return ScalingFit(model=model, coefficients=(float(coef[0]), float(coef[1])), r_squared=r2)
