"""Adaptive Dormand-Prince 5(4) integration with dense output.

The stepper advances the fifth-order solution (local extrapolation), controls
the componentwise error ``|err_i| <= atol + rtol * max(|y_i|, |y_new_i|)`` in
the max norm and samples the continuous fourth-order extension of Shampine
on a requested time grid.  States are flat float64 arrays; complex systems are
integrated through their interleaved real view.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteState, StepLimitExceeded

# Butcher tableau (Hairer, Norsett & Wanner, Solving ODEs I, table 5.2)
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
E = B5 - B4

# dense output: y(t + theta h) = y + h K^T P [theta, theta^2, theta^3, theta^4]
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-8
    atol: float = 1e-12
    max_step: float = math.inf
    initial_step: float | None = None
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ValueError("initial_step must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class Trajectory:
    """Sampled solution; ``states[i]`` is the flat real state at ``times[i]``."""

    times: np.ndarray
    states: np.ndarray
    segment_marks: list = field(default_factory=lambda: [0])
    n_steps: int = 0
    n_rejected: int = 0
    n_evals: int = 0
    observables: dict | None = None

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @property
    def complex_states(self):
        """(K, n/2) complex view of the samples."""
        return np.ascontiguousarray(self.states).view(np.complex128)

    @property
    def final(self):
        return self.states[-1]

    @classmethod
    def concatenate(cls, parts):
        """Join back-to-back pieces; each piece starts where the previous ended."""
        times = [parts[0].times]
        states = [parts[0].states]
        marks = [0]
        offset = len(parts[0].times)
        for part in parts[1:]:
            if part.times[0] != times[-1][-1]:
                raise ValueError("pieces are not contiguous in time")
            marks.append(offset - 1)
            times.append(part.times[1:])
            states.append(part.states[1:])
            offset += len(part.times) - 1
        return cls(
            times=np.concatenate(times),
            states=np.concatenate(states),
            segment_marks=marks,
            n_steps=sum(p.n_steps for p in parts),
            n_rejected=sum(p.n_rejected for p in parts),
            n_evals=sum(p.n_evals for p in parts),
        )


def sample_grid(t0, t1, sample_dt):
    """Uniform grid from t0 with spacing sample_dt, always including both endpoints."""
    if not sample_dt > 0:
        raise ValueError("sample_dt must be positive")
    n = int(math.floor((t1 - t0) / sample_dt))
    grid = t0 + sample_dt * np.arange(n + 1)
    # keep strictly increasing and end exactly on t1
    grid = grid[grid < t1 - 1e-9 * sample_dt]
    return np.append(grid, t1)


def _initial_step(f, t0, y0, f0, direction_span, rtol, atol):
    scale = atol + rtol * np.abs(y0)
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 * direction_span if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6 * direction_span, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, direction_span)


def integrate(f, y0, t_span, config=None, sample_dt=None, t_eval=None):
    """Integrate dy/dt = f(t, y) over t_span and sample the dense output.

    Samples are taken on ``t_eval`` if given, otherwise on a uniform grid of
    spacing ``sample_dt`` that includes both endpoints.
    """
    config = config or IntegratorConfig()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError("t_span must be increasing and non-degenerate")
    if t_eval is None:
        if sample_dt is None:
            raise ValueError("give sample_dt or t_eval")
        t_eval = sample_grid(t0, t1, sample_dt)
    else:
        t_eval = np.asarray(t_eval, dtype=float)
        if t_eval[0] < t0 or t_eval[-1] > t1 or np.any(np.diff(t_eval) <= 0):
            raise ValueError("t_eval must be increasing and inside t_span")

    y = np.array(y0, dtype=np.float64)
    n = y.size
    rtol, atol = config.rtol, config.atol
    out = np.empty((len(t_eval), n))
    i_out = 0
    while i_out < len(t_eval) and t_eval[i_out] == t0:
        out[i_out] = y
        i_out += 1

    K = np.empty((7, n))
    K[0] = f(t0, y)
    n_evals = 1
    if not np.all(np.isfinite(K[0])) or not np.all(np.isfinite(y)):
        bad = np.flatnonzero(~np.isfinite(K[0]) | ~np.isfinite(y))[0]
        raise NonFiniteState(t0, int(bad))

    span = t1 - t0
    if config.initial_step is not None:
        h = config.initial_step
    else:
        h = _initial_step(f, t0, y, K[0], span, rtol, atol)
        n_evals += 1
    h = min(h, config.max_step)

    t = t0
    n_steps = n_rejected = 0
    while t < t1:
        if n_steps + n_rejected >= config.max_steps:
            raise StepLimitExceeded(t, config.max_steps)
        h = min(h, config.max_step)
        if t + h >= t1 or t1 - (t + h) < 1e-12 * span:
            h = t1 - t
            t_new = t1
        else:
            t_new = t + h

        for s in range(1, 7):
            ys = y + h * (A[s] @ K[:s])
            K[s] = f(t + C[s] * h, ys)
        y_new = ys  # stage 7 is evaluated at the fifth-order solution (FSAL)
        n_evals += 6

        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(K[6]))):
            n_rejected += 1
            h *= MIN_FACTOR
            if h < 1e-14 * max(abs(t), span):
                bad = np.flatnonzero(~np.isfinite(y_new) | ~np.isfinite(K[6]))[0]
                raise NonFiniteState(t, int(bad))
            continue

        err = h * (E @ K)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.max(np.abs(err) / scale))

        if err_norm <= 1.0:
            if i_out < len(t_eval) and t_eval[i_out] <= t_new:
                Q = K.T @ P
                while i_out < len(t_eval) and t_eval[i_out] <= t_new:
                    ts = t_eval[i_out]
                    if ts == t_new:
                        out[i_out] = y_new
                    else:
                        theta = (ts - t) / h
                        out[i_out] = y + h * (Q @ (theta ** np.arange(1, 5)))
                    i_out += 1
            t = t_new
            y = y_new
            K[0] = K[6]
            n_steps += 1
            factor = MAX_FACTOR if err_norm == 0 else min(MAX_FACTOR, SAFETY * err_norm ** -0.2)
            h = h * factor
        else:
            n_rejected += 1
            h = h * max(MIN_FACTOR, SAFETY * err_norm ** -0.2)

    return Trajectory(times=np.array(t_eval), states=out, n_steps=n_steps,
                      n_rejected=n_rejected, n_evals=n_evals)
