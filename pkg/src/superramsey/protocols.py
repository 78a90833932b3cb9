"""Pulse sequences: drive + decay, Ramsey readout, detuning sweeps and lock cycles.

Everything lives in the drive frame.  A laser detuned by ``offset`` from the
nominal frequency shifts every detuning (atoms and cavity) by the same amount;
the drive is switched off during free precession but the detunings stay, so
coherences pick up the Ramsey phase on their own.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from functools import lru_cache

import numpy as np

from .errors import FitDiverged, FitError, NoPeak, NumericError, OutOfRange, ZeroDrive
from .fitting import (DEFAULT_THRESHOLD_FRAC, PulseCharacteristics, fit_gaussian_pulse,
                      numeric_integral)
from .integrator import IntegratorConfig, Trajectory, integrate
from .model import DriveSetting, ground_state, make_rhs
from .observables import CollectiveObservables

DEFAULT_SAMPLE_DT = 1e-9
DEFAULT_READOUT = 2e-6
LONG_DRIVE_DURATION = 0.427e-6
LOCK_T_FREE = 4.7e-6
LOCK_N0 = 4.47e7
LOCK_GAMMA_LOSS = 0.00345  # 1/ms


@dataclass(frozen=True)
class PulseSegment:
    duration: float
    omega: tuple = (0.0, 0.0)
    delta: tuple = (0.0, 0.0)
    delta_c: float = 0.0
    label: str = ""

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"segment {self.label!r}: duration must be > 0")
        object.__setattr__(self, "omega", tuple(float(v) for v in self.omega))
        object.__setattr__(self, "delta", tuple(float(v) for v in self.delta))

    @property
    def driven(self):
        return any(w != 0.0 for w in self.omega)

    def setting(self):
        return DriveSetting(omega=self.omega, delta=self.delta, delta_c=self.delta_c)


def drive_segment(params, duration, offset=0.0, label="drive", omega=None):
    """Drive at the baseline amplitudes with the laser shifted by ``offset`` (rad/s)."""
    return PulseSegment(duration=duration, omega=params.omega if omega is None else omega,
                        delta=tuple(d + offset for d in params.delta),
                        delta_c=params.delta_c + offset, label=label)


def free_segment(params, duration, offset=0.0, label="free"):
    return PulseSegment(duration=duration, omega=(0.0, 0.0),
                        delta=tuple(d + offset for d in params.delta),
                        delta_c=params.delta_c + offset, label=label)


@dataclass(frozen=True)
class Protocol:
    segments: tuple
    readout_window: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("a protocol needs at least one segment")
        if self.readout_window is not None:
            lo, hi = (float(v) for v in self.readout_window)
            if not (0.0 <= lo < hi <= self.total_duration * (1 + 1e-12)):
                raise ValueError("readout window must lie inside the protocol")
            object.__setattr__(self, "readout_window", (lo, hi))

    @property
    def boundaries(self):
        t = [0.0]
        for seg in self.segments:
            t.append(t[-1] + seg.duration)
        return t

    @property
    def total_duration(self):
        return self.boundaries[-1]

    @property
    def drive_end(self):
        """End of the last driven segment (0 if nothing is driven)."""
        end = 0.0
        for seg, t1 in zip(self.segments, self.boundaries[1:]):
            if seg.driven:
                end = t1
        return end

    @property
    def window(self):
        if self.readout_window is not None:
            return self.readout_window
        t0 = self.drive_end
        return (t0, min(t0 + DEFAULT_READOUT, self.total_duration))


def _segment_grid(t0, t1, dt):
    """Global grid k*dt strictly inside (t0, t1) plus both ends."""
    k0 = math.floor(t0 / dt) + 1
    k1 = math.ceil(t1 / dt) - 1
    inner = dt * np.arange(k0, k1 + 1) if k1 >= k0 else np.empty(0)
    tiny = 1e-6 * dt
    inner = inner[(inner > t0 + tiny) & (inner < t1 - tiny)]
    return np.concatenate(([t0], inner, [t1]))


def observables_dict(states, params):
    obs = CollectiveObservables.compute(states, params)
    return {f.name: getattr(obs, f.name) for f in fields(obs)}


def run_protocol(params, protocol, config=None, sample_dt=DEFAULT_SAMPLE_DT, state0=None,
                 observables=True):
    """Integrate the segments back to back from ``state0`` (default: ground state)."""
    config = config or IntegratorConfig()
    y = (state0 if state0 is not None else ground_state(params)).to_real()
    parts = []
    bounds = protocol.boundaries
    for i, seg in enumerate(protocol.segments):
        t0, t1 = bounds[i], bounds[i + 1]
        try:
            part = integrate(make_rhs(params, seg.setting()), y, (t0, t1), config,
                             t_eval=_segment_grid(t0, t1, sample_dt))
        except NumericError as exc:
            exc.args = (f"segment {i} ({seg.label or 'unnamed'}): {exc}",)
            raise
        parts.append(part)
        y = part.final
    traj = Trajectory.concatenate(parts) if len(parts) > 1 else parts[0]
    if observables:
        traj.observables = observables_dict(traj.complex_states, params)
    return traj


def pi_half_duration(params):
    """Duration of a resonant pi/2 pulse: pulse area 2 Omega t = pi/2."""
    w1, w2 = (abs(w) for w in params.omega)
    if w1 == 0.0 and w2 == 0.0:
        raise ZeroDrive("pi/2 duration undefined without drive")
    if not math.isclose(w1, w2, rel_tol=1e-12):
        raise ValueError("pi/2 calibration needs |Omega_1| = |Omega_2|")
    return math.pi / (4.0 * w1)


def single_pulse_protocol(params, drive_duration, free_duration=DEFAULT_READOUT):
    """One drive pulse followed by free decay; the readout window is the free part."""
    segs = [drive_segment(params, drive_duration), free_segment(params, free_duration)]
    return Protocol(segs, readout_window=(drive_duration, drive_duration + free_duration))


def ramsey_protocol(params, t_free, delta, readout=DEFAULT_READOUT, t_half=None):
    t_half = pi_half_duration(params) if t_half is None else t_half
    segs = [drive_segment(params, t_half, delta, "pi/2")]
    if t_free > 0:
        segs.append(free_segment(params, t_free, delta, "free"))
    elif t_free < 0:
        raise ValueError("free precession time must be >= 0")
    segs.append(drive_segment(params, t_half, delta, "pi/2"))
    segs.append(free_segment(params, readout, delta, "readout"))
    # second pulse end, exactly as accumulated by Protocol.boundaries
    end = Protocol(segs).boundaries[-2]
    return Protocol(segs, readout_window=(end, end + readout))


def characterize(traj, protocol, reference=None, threshold_frac=DEFAULT_THRESHOLD_FRAC):
    """Fit the photon trace inside the readout window; failures become undetected results."""
    lo, hi = protocol.window
    n = traj.observables["n_phot"]
    try:
        return fit_gaussian_pulse(traj.times, n, lo, (lo, hi), reference=reference,
                                  threshold_frac=threshold_frac)
    except NoPeak:
        return PulseCharacteristics.undetected(lo, numeric_integral(traj.times, n, (lo, hi)))
    except FitDiverged as exc:
        return exc.best_effort


@lru_cache(maxsize=64)
def reference_i_max(params, config=None, sample_dt=DEFAULT_SAMPLE_DT, readout=DEFAULT_READOUT):
    """I_max of the pulse after a resonant pi pulse; the detection yardstick."""
    proto = single_pulse_protocol(params, 2 * pi_half_duration(params), readout)
    traj = run_protocol(params, proto, config, sample_dt)
    char = characterize(traj, proto)
    if not char.converged:
        raise FitDiverged("reference pi-pulse readout could not be fitted")
    return char.i_max


def ramsey(params, t_free, delta, config=None, sample_dt=DEFAULT_SAMPLE_DT,
           readout=DEFAULT_READOUT, reference=None, threshold_frac=DEFAULT_THRESHOLD_FRAC,
           t_half=None, detect=True):
    """pi/2 - free(T) - pi/2 - readout with the laser detuned by ``delta`` throughout.

    With ``detect=False`` no reference run is made and any fitted pulse counts
    as detected.
    """
    proto = ramsey_protocol(params, t_free, delta, readout, t_half)
    traj = run_protocol(params, proto, config, sample_dt)
    if detect and reference is None:
        reference = reference_i_max(params, config, sample_dt, readout)
    return traj, characterize(traj, proto, reference, threshold_frac)


@dataclass
class SweepPoint:
    delta: float
    characteristics: PulseCharacteristics
    error: str = ""
    t_free: float = 0.0

    @property
    def phi(self):
        """Ramsey phase delta * T."""
        return self.delta * self.t_free


def _sweep_task(args):
    params, t_free, delta, config, sample_dt, readout, reference, threshold_frac = args
    try:
        _, char = ramsey(params, t_free, delta, config, sample_dt, readout, reference,
                         threshold_frac)
        return SweepPoint(delta, char, "", t_free)
    except (NumericError, FitError, OutOfRange) as exc:
        lo = 2 * pi_half_duration(params) + t_free
        return SweepPoint(delta, PulseCharacteristics.undetected(lo), f"{type(exc).__name__}: {exc}",
                          t_free)


def _map(tasks, fn, jobs):
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def spectroscopy_sweep(params, t_free, deltas, config=None, sample_dt=DEFAULT_SAMPLE_DT,
                       readout=DEFAULT_READOUT, jobs=1, threshold_frac=DEFAULT_THRESHOLD_FRAC):
    """Independent Ramsey runs, one per detuning; output order follows ``deltas``."""
    deltas = [float(d) for d in deltas]
    if not deltas:
        raise ValueError("deltas must not be empty")
    reference = reference_i_max(params, config, sample_dt, readout)
    tasks = [(params, t_free, d, config, sample_dt, readout, reference, threshold_frac)
             for d in deltas]
    return _map(tasks, _sweep_task, jobs)


@dataclass(frozen=True)
class LockConfig:
    t_free: float = LOCK_T_FREE
    delta_probe: float | None = None  # rad/s; default gives a Ramsey phase of pi/4
    atom_offset: float = 0.0
    cycles: int = 25
    cycle_period: float = 4e-3
    n0: float = LOCK_N0
    gamma_loss: float = LOCK_GAMMA_LOSS  # 1/ms
    normalized: bool = False

    def __post_init__(self):
        if self.cycles < 1:
            raise ValueError("cycles must be >= 1")
        if not self.cycle_period > 0:
            raise ValueError("cycle_period must be > 0")
        if not self.n0 > 0:
            raise ValueError("n0 must be > 0")
        if self.gamma_loss < 0:
            raise ValueError("gamma_loss must be >= 0")
        if self.t_free <= 0:
            raise ValueError("t_free must be > 0")

    @property
    def probe(self):
        return math.pi / (4.0 * self.t_free) if self.delta_probe is None else self.delta_probe

    def atoms_at(self, t):
        return self.n0 * math.exp(-self.gamma_loss * t * 1e3)


@dataclass
class LockSample:
    cycle: int
    time: float
    sign: int
    i_int: float
    n_atoms: float
    error_signal: float = math.nan


@dataclass
class LockResult:
    samples: list
    errors: list = field(default_factory=list)

    def zigzag_signs(self):
        """Signs of consecutive half-cycle I_int differences."""
        series = np.array([s.i_int for s in self.samples])
        return np.sign(np.diff(series))


def _lock_task(args):
    params, t_free, delta, config, sample_dt, readout = args
    _, char = ramsey(params, t_free, delta, config, sample_dt, readout, detect=False)
    return char.i_int


def frequency_lock_run(params, lock, config=None, sample_dt=DEFAULT_SAMPLE_DT,
                       readout=DEFAULT_READOUT, jobs=1):
    """Two Ramsey readouts per cycle at atom_offset +/- delta_probe with decaying N."""
    frac = params.n_atoms[0] / params.n_total
    tasks, meta = [], []
    for c in range(lock.cycles):
        t_c = c * lock.cycle_period
        n = lock.atoms_at(t_c)
        p = params.replace(n_atoms=(frac * n, (1 - frac) * n))
        for sign, t in ((+1, t_c), (-1, t_c + 0.5 * lock.cycle_period)):
            tasks.append((p, lock.t_free, lock.atom_offset + sign * lock.probe, config,
                          sample_dt, readout))
            meta.append((c, t, sign, n))
    # identical cycles (no atom loss) are simulated once
    unique = list(dict.fromkeys(tasks))
    values = dict(zip(unique, _map(unique, _lock_task, jobs)))
    samples = [LockSample(c, t, s, float(values[task]), n)
               for (c, t, s, n), task in zip(meta, tasks)]
    errors = []
    for c in range(lock.cycles):
        plus, minus = samples[2 * c], samples[2 * c + 1]
        e = plus.i_int - minus.i_int
        if lock.normalized:
            e = e / (plus.i_int + minus.i_int)
        plus.error_signal = minus.error_signal = e
        errors.append(e)
    return LockResult(samples, errors)


def default_jobs():
    return os.cpu_count() or 1
