"""Run configuration files (TOML).

User-facing frequencies are ordinary frequencies in Hz and carry an ``_hz``
suffix; times carry ``_us``, ``_ns`` or ``_ms``.  Conversion to rad/s and
seconds happens here and nowhere else.  Unknown keys are rejected.
"""
from __future__ import annotations

import math
import re
from typing import Literal, Optional, Union

import tomli
import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError
from .integrator import IntegratorConfig
from .model import TWO_PI, SystemParams
from .protocols import (LockConfig, Protocol, PulseSegment, drive_segment, free_segment,
                        pi_half_duration)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class SystemBlock(_Strict):
    n1: float = Field(1e7, ge=1)
    n2: float = Field(1e7, ge=1)
    delta_c_hz: float = 0.0
    kappa_hz: float = Field(0.78e6, ge=0)
    delta1_hz: float = 0.0
    delta2_hz: float = 0.0
    g1_hz: float = 0.61e3
    g2_hz: float = 0.61e3
    gamma1_hz: float = Field(7.5e3, ge=0)
    gamma2_hz: float = Field(7.5e3, ge=0)
    chi1_hz: float = Field(0.0, ge=0)
    chi2_hz: float = Field(0.0, ge=0)
    omega1_hz: float = 4.16e5
    omega2_hz: float = -4.16e5

    def to_params(self):
        return SystemParams.from_hz(
            delta_c=self.delta_c_hz, kappa=self.kappa_hz, n_atoms=(self.n1, self.n2),
            delta=(self.delta1_hz, self.delta2_hz), g=(self.g1_hz, self.g2_hz),
            gamma=(self.gamma1_hz, self.gamma2_hz), chi=(self.chi1_hz, self.chi2_hz),
            omega=(self.omega1_hz, self.omega2_hz))


class IntegratorBlock(_Strict):
    rtol: float = Field(1e-8, gt=0)
    atol: float = Field(1e-12, gt=0)
    max_step_us: Optional[float] = Field(None, gt=0)
    initial_step_us: Optional[float] = Field(None, gt=0)
    max_steps: int = Field(1_000_000, ge=1)
    sample_dt_ns: float = Field(1.0, gt=0)

    def to_config(self):
        return IntegratorConfig(
            rtol=self.rtol, atol=self.atol,
            max_step=math.inf if self.max_step_us is None else self.max_step_us * 1e-6,
            initial_step=None if self.initial_step_us is None else self.initial_step_us * 1e-6,
            max_steps=self.max_steps)

    @property
    def sample_dt(self):
        return self.sample_dt_ns * 1e-9


class SegmentTable(_Strict):
    duration_us: float = Field(gt=0)
    omega1_hz: float = 0.0
    omega2_hz: float = 0.0
    delta_hz: float = 0.0
    label: str = ""


_SYMBOL = re.compile(r"^(pi_half|pi|drive|free|readout)(?::([0-9.eE+-]+))?$")


def _check_symbol(text):
    m = _SYMBOL.match(text)
    if not m:
        raise ValueError(f"unknown segment symbol {text!r}")
    kind, arg = m.groups()
    if kind in ("pi_half", "pi") and arg is not None:
        raise ValueError(f"{kind!r} takes no duration")
    if kind in ("drive", "free", "readout"):
        if arg is None:
            raise ValueError(f"{kind!r} needs a duration in us, e.g. '{kind}:2'")
        if not float(arg) > 0:
            raise ValueError(f"{text!r}: duration must be > 0")
    return text


class ProtocolBlock(_Strict):
    segments: list[Union[SegmentTable, str]] = Field(
        default_factory=lambda: ["drive:0.427", "free:2"])
    readout_window_us: Optional[tuple[float, float]] = None

    @field_validator("segments")
    @classmethod
    def _segments(cls, value):
        if not value:
            raise ValueError("at least one segment is required")
        for seg in value:
            if isinstance(seg, str):
                _check_symbol(seg)
        return value

    def to_protocol(self, params):
        segs = []
        for seg in self.segments:
            if isinstance(seg, SegmentTable):
                off = TWO_PI * seg.delta_hz
                segs.append(PulseSegment(
                    duration=seg.duration_us * 1e-6,
                    omega=(TWO_PI * seg.omega1_hz, TWO_PI * seg.omega2_hz),
                    delta=tuple(d + off for d in params.delta), delta_c=params.delta_c + off,
                    label=seg.label))
                continue
            kind, arg = _SYMBOL.match(seg).groups()
            if kind == "pi_half":
                segs.append(drive_segment(params, pi_half_duration(params), label="pi/2"))
            elif kind == "pi":
                segs.append(drive_segment(params, 2 * pi_half_duration(params), label="pi"))
            elif kind == "drive":
                segs.append(drive_segment(params, float(arg) * 1e-6))
            else:
                segs.append(free_segment(params, float(arg) * 1e-6, label=kind))
        window = None
        if self.readout_window_us is not None:
            window = tuple(v * 1e-6 for v in self.readout_window_us)
        return Protocol(segs, readout_window=window)


class RamseyBlock(_Strict):
    t_free_us: float = Field(4.7, ge=0)
    delta_hz: float = 0.0
    readout_us: float = Field(2.0, gt=0)
    threshold_frac: float = Field(1e-3, gt=0)


class SweepBlock(_Strict):
    t_free_us: float = Field(4.7, ge=0)
    delta_min_hz: float = -1.3e6
    delta_max_hz: float = 1.3e6
    points: int = Field(200, ge=1)
    readout_us: float = Field(2.0, gt=0)
    threshold_frac: float = Field(1e-3, gt=0)

    def deltas(self):
        if self.points == 1:
            return [TWO_PI * self.delta_min_hz]
        step = (self.delta_max_hz - self.delta_min_hz) / (self.points - 1)
        return [TWO_PI * (self.delta_min_hz + i * step) for i in range(self.points)]


class LockBlock(_Strict):
    t_free_us: float = Field(4.7, gt=0)
    delta_probe_hz: Optional[float] = None
    atom_offset_hz: float = 0.0
    cycles: int = Field(25, ge=1)
    cycle_period_ms: float = Field(4.0, gt=0)
    n0: float = Field(4.47e7, gt=0)
    gamma_loss_per_ms: float = Field(0.00345, ge=0)
    normalized: bool = False
    readout_us: float = Field(2.0, gt=0)

    def to_lock(self):
        return LockConfig(
            t_free=self.t_free_us * 1e-6,
            delta_probe=None if self.delta_probe_hz is None else TWO_PI * self.delta_probe_hz,
            atom_offset=TWO_PI * self.atom_offset_hz, cycles=self.cycles,
            cycle_period=self.cycle_period_ms * 1e-3, n0=self.n0,
            gamma_loss=self.gamma_loss_per_ms, normalized=self.normalized)


class OracleBlock(_Strict):
    n1: int = Field(1, ge=0, le=3)
    n2: int = Field(1, ge=0, le=3)
    fock_cutoff: int = Field(6, ge=1)
    g_hz: Optional[float] = 50e3
    drive_us: float = Field(0.1, gt=0)
    total_us: float = Field(2.0, gt=0)
    rel_tol: float = Field(0.02, gt=0)
    floor: float = Field(1e-8, ge=0)
    check_cutoff: bool = True


class OutputBlock(_Strict):
    directory: Optional[str] = None
    formats: list[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])


class RunConfig(_Strict):
    system: SystemBlock = Field(default_factory=SystemBlock)
    integrator: IntegratorBlock = Field(default_factory=IntegratorBlock)
    protocol: ProtocolBlock = Field(default_factory=ProtocolBlock)
    ramsey: RamseyBlock = Field(default_factory=RamseyBlock)
    sweep: SweepBlock = Field(default_factory=SweepBlock)
    lock: LockBlock = Field(default_factory=LockBlock)
    oracle: OracleBlock = Field(default_factory=OracleBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)

    def to_dict(self):
        return self.model_dump(mode="json", exclude_none=True)

    def dumps(self):
        return tomli_w.dumps(self.to_dict())


def _wrap(exc):
    if isinstance(exc, ValidationError):
        lines = [f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors()]
        return ConfigError("invalid configuration:\n  " + "\n  ".join(lines))
    return ConfigError(str(exc))


def loads(text):
    try:
        return RunConfig.model_validate(tomli.loads(text))
    except (tomli.TOMLDecodeError, ValidationError, ValueError) as exc:
        raise _wrap(exc) from exc


def load(path):
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise _wrap(exc) from exc


def default_config():
    """Default operating point with a 0.427 us drive and 2 us of free decay."""
    return RunConfig()
