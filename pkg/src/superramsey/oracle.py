"""Exact Lindblad evolution of a handful of atoms in a Fock-truncated cavity.

The density matrix is propagated directly in matrix form,

    d rho/dt = -i (H_eff rho - rho H_eff^+) + sum_k r_k L_k rho L_k^+,
    H_eff = H - (i/2) sum_k r_k L_k^+ L_k,

with sparse operators, so the cost stays well below that of an explicit
superoperator even at the dimension cap.  Expectation values are symmetrized
over atom labels within each ensemble so they are directly comparable with
the mean-field fields.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from itertools import permutations, product

import numpy as np
import scipy.sparse as sp

from .errors import CutoffInadequate, DimensionCap, TraceDrift
from .integrator import IntegratorConfig, integrate
from .model import FIELD_LABELS, INDEX, N_FIELDS
from .protocols import (DEFAULT_SAMPLE_DT, Protocol, _segment_grid, drive_segment, free_segment,
                        run_protocol)

DIMENSION_CAP = 2 ** 14
TRACE_TOL = 1e-8
CUTOFF_TOL = 1e-6
PSD_TOL = 1e-8

_SM = sp.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex))  # |g><e|
_SP = sp.csr_matrix(np.array([[0, 0], [1, 0]], dtype=complex))  # |e><g|
_EE = sp.csr_matrix(np.array([[0, 0], [0, 1]], dtype=complex))  # |e><e|


class ExactSystem:
    """Operators on cavity (x) n1 atoms of ensemble 1 (x) n2 atoms of ensemble 2."""

    def __init__(self, n1, n2, fock_cutoff=6, cap=DIMENSION_CAP):
        if n1 < 0 or n2 < 0 or n1 + n2 < 1:
            raise ValueError("need at least one atom")
        if fock_cutoff < 1:
            raise ValueError("fock_cutoff must be >= 1")
        self.n1, self.n2, self.fock_cutoff = int(n1), int(n2), int(fock_cutoff)
        self.dims = [fock_cutoff + 1] + [2] * (n1 + n2)
        self.dim = int(np.prod(self.dims))
        if self.dim > cap:
            raise DimensionCap(f"Hilbert dimension {self.dim} exceeds cap {cap}")
        nc = fock_cutoff + 1
        a = sp.diags(np.sqrt(np.arange(1, nc)).astype(complex), 1, format="csr")
        self.a = self._embed(a, 0)
        self.ad = self.a.conj().T.tocsr()
        self.n_op = (self.ad @ self.a).tocsr()
        sites = [list(range(1, 1 + n1)), list(range(1 + n1, 1 + n1 + n2))]
        self.ensembles = sites
        self.sm = {k: self._embed(_SM, k) for k in range(1, 1 + n1 + n2)}
        self.sp = {k: self._embed(_SP, k) for k in range(1, 1 + n1 + n2)}
        self.ee = {k: self._embed(_EE, k) for k in range(1, 1 + n1 + n2)}
        self.moment_ops = self._moment_operators()
        self._coo = [None if op is None else op.tocoo() for op in self.moment_ops]

    def _embed(self, op, site):
        eyes = [sp.identity(d, dtype=complex, format="csr") for d in self.dims]
        eyes[site] = op
        return reduce(lambda x, y: sp.kron(x, y, format="csr"), eyes)

    def _moment_operators(self):
        ops = [None] * N_FIELDS

        def mean(terms):
            terms = list(terms)
            return (sum(terms[1:], terms[0]) / len(terms)).tocsr() if terms else None

        ops[INDEX["a"]] = self.a
        ops[INDEX["aa"]] = (self.a @ self.a).tocsr()
        ops[INDEX["n_phot"]] = self.n_op
        single = {"s12": self.sm, "s22": self.ee}
        with_a = {"a_s12": self.sm, "a_s21": self.sp, "a_s22": self.ee}
        pairs = {"p12_12": (self.sm, self.sm), "p21_12": (self.sp, self.sm),
                 "p22_12": (self.ee, self.sm), "p22_22": (self.ee, self.ee)}
        for e, atoms in enumerate(self.ensembles, start=1):
            for name, op in single.items():
                ops[INDEX[f"{name}[{e}]"]] = mean(op[k] for k in atoms)
            for name, op in with_a.items():
                ops[INDEX[f"{name}[{e}]"]] = mean(self.a @ op[k] for k in atoms)
            for name, (o1, o2) in pairs.items():
                ops[INDEX[f"{name}[{e}]"]] = mean(o1[k] @ o2[l] for k, l in permutations(atoms, 2))
        inter = {"x12_12": (self.sm, self.sm), "x21_12": (self.sp, self.sm),
                 "x22_12": (self.ee, self.sm), "x21_22": (self.sp, self.ee),
                 "x22_22": (self.ee, self.ee)}
        for name, (o1, o2) in inter.items():
            ops[INDEX[name]] = mean(o1[k] @ o2[l]
                                    for k, l in product(self.ensembles[0], self.ensembles[1]))
        return ops

    def hamiltonian(self, params, drive):
        H = drive.delta_c * self.n_op
        for e, atoms in enumerate(self.ensembles):
            g, d, w = params.g[e], drive.delta[e], drive.omega[e]
            for k in atoms:
                H = H + d * self.ee[k] + g * (self.ad @ self.sm[k] + self.sp[k] @ self.a) \
                    + w * (self.sm[k] + self.sp[k])
        return H.tocsr()

    def jump_operators(self, params):
        jumps = [(params.kappa, self.a)]
        for e, atoms in enumerate(self.ensembles):
            for k in atoms:
                jumps.append((params.gamma[e], self.sm[k]))
                jumps.append((2.0 * params.chi[e], self.ee[k]))
        return [(r, L) for r, L in jumps if r > 0]

    def generator(self, params, drive=None):
        """Return L(rho) acting on dense complex (D, D) matrices."""
        drive = drive or params.baseline_drive()
        jumps = self.jump_operators(params)
        heff = self.hamiltonian(params, drive).astype(complex)
        for r, L in jumps:
            heff = heff - 0.5j * r * (L.conj().T @ L)
        heff = heff.tocsr()
        jumps = [(r, L.tocsr()) for r, L in jumps]

        def apply(rho):
            out = -1j * (heff @ rho - (heff @ rho.conj().T).conj().T)
            for r, L in jumps:
                out += r * (L @ (L @ rho.conj().T).conj().T)
            return out

        return apply

    def expectations(self, rhos):
        """Symmetrized expectation values, shape (..., 26); undefined fields are NaN."""
        rhos = np.asarray(rhos)
        out = np.full(rhos.shape[:-2] + (N_FIELDS,), np.nan + 0j)
        for i, coo in enumerate(self._coo):
            if coo is not None:
                # Tr(O rho) = sum_ij O_ij rho_ji
                out[..., i] = rhos[..., coo.col, coo.row] @ coo.data
        return out

    def moment_derivatives(self, rho, params, drive=None):
        return self.expectations(self.generator(params, drive)(rho))

    def ground_density(self):
        rho = np.zeros((self.dim, self.dim), dtype=complex)
        rho[0, 0] = 1.0
        return rho

    def product_density(self, cavity, atoms):
        """rho = cavity (x) atoms[0] (x) ... ; ``atoms`` holds one 2x2 matrix per atom."""
        if len(atoms) != self.n1 + self.n2:
            raise ValueError("one atomic density matrix per atom is required")
        if np.shape(cavity) != (self.fock_cutoff + 1,) * 2:
            raise ValueError("cavity density matrix has the wrong size")
        return reduce(np.kron, [np.asarray(cavity)] + [np.asarray(m) for m in atoms])


def coherent_density(alpha, fock_cutoff):
    """Truncated, renormalized coherent state |alpha><alpha|."""
    n = np.arange(fock_cutoff + 1)
    logfact = np.array([math.lgamma(k + 1) for k in n])
    amp = np.exp(-0.5 * abs(alpha) ** 2 - 0.5 * logfact) * alpha ** n
    amp /= np.linalg.norm(amp)
    return np.outer(amp, amp.conj())


def atom_density(p_excited, coherence):
    """Single-atom density matrix with <s22> = p and <s12> = coherence (basis g, e)."""
    # <s12> = Tr(|g><e| rho) = rho_eg
    return np.array([[1 - p_excited, np.conj(coherence)], [coherence, p_excited]], dtype=complex)


@dataclass
class OracleConfig:
    n1: int
    n2: int
    params: object
    protocol: Protocol
    fock_cutoff: int = 6
    integrator: IntegratorConfig = field(
        default_factory=lambda: IntegratorConfig(rtol=1e-10, atol=1e-13))
    sample_dt: float = DEFAULT_SAMPLE_DT
    check_cutoff: bool = True
    cap: int = DIMENSION_CAP


@dataclass
class ExactTrajectory:
    times: np.ndarray
    values: np.ndarray
    trace: np.ndarray
    segment_marks: list
    fock_cutoff: int
    min_eigenvalues: list
    hermiticity_errors: list
    cutoff_difference: float = math.nan

    def field(self, label):
        return self.values[:, INDEX[label]]


def _evolve(system, config):
    params = config.params
    rho = system.ground_density()
    D = system.dim
    bounds = config.protocol.boundaries
    times, values, traces, marks, spot = [], [], [], [], []
    for i, seg in enumerate(config.protocol.segments):
        gen = system.generator(params, seg.setting())

        def f(t, y, gen=gen):
            return gen(y.view(np.complex128).reshape(D, D)).reshape(-1).view(np.float64)

        t0, t1 = bounds[i], bounds[i + 1]
        part = integrate(f, rho.reshape(-1).view(np.float64), (t0, t1), config.integrator,
                         t_eval=_segment_grid(t0, t1, config.sample_dt))
        rhos = part.states.view(np.complex128).reshape(-1, D, D)
        skip = 1 if i else 0
        marks.append(sum(len(t) for t in times) - (1 if i else 0))
        times.append(part.times[skip:])
        values.append(system.expectations(rhos[skip:]))
        traces.append(np.trace(rhos[skip:], axis1=1, axis2=2))
        spot.extend(rhos[[0, len(rhos) // 2, -1]])
        rho = rhos[-1].copy()
    times = np.concatenate(times)
    traces = np.concatenate(traces)
    drift = np.max(np.abs(traces - 1.0))
    if drift > TRACE_TOL:
        raise TraceDrift(f"|Tr rho - 1| reached {drift:.3e}")
    # Hermiticity and positivity spot checks at five times spread over the run
    picks = np.unique(np.linspace(0, len(spot) - 1, 5).round().astype(int))
    herm = [float(np.max(np.abs(spot[k] - spot[k].conj().T))) for k in picks]
    eigs = [float(np.linalg.eigvalsh(0.5 * (spot[k] + spot[k].conj().T))[0]) for k in picks]
    return ExactTrajectory(times=times, values=np.concatenate(values), trace=traces.real,
                           segment_marks=marks, fock_cutoff=system.fock_cutoff,
                           min_eigenvalues=eigs, hermiticity_errors=herm)


def exact_evolve(config):
    """Evolve from vacuum + all atoms in the ground state through ``config.protocol``."""
    system = ExactSystem(config.n1, config.n2, config.fock_cutoff, config.cap)
    result = _evolve(system, config)
    if config.check_cutoff:
        bigger = ExactSystem(config.n1, config.n2, config.fock_cutoff + 2,
                             max(config.cap, DIMENSION_CAP))
        check = _evolve(bigger, config)
        a, b = result.values[-1], check.values[-1]
        ok = np.isfinite(a)
        diff = float(np.max(np.abs(a[ok] - b[ok])))
        result.cutoff_difference = diff
        if diff > CUTOFF_TOL:
            raise CutoffInadequate(
                f"endpoint expectations move by {diff:.3e} when the cutoff grows to "
                f"{config.fock_cutoff + 2}")
    return result


@dataclass
class ComparisonReport:
    fields: dict
    passed: bool
    first_divergence_time: float | None
    rel_tol: float
    floor: float

    def summary(self):
        lines = [f"{'field':<12} {'max_rel_err':>12} {'max_abs_err':>12}  ok"]
        for name, r in self.fields.items():
            lines.append(f"{name:<12} {r['max_rel_error']:12.3e} {r['max_abs_error']:12.3e}  "
                         f"{'yes' if r['passed'] else 'NO'}")
        verdict = "PASS" if self.passed else "FAIL"
        when = "" if self.first_divergence_time is None else \
            f" (first divergence at {self.first_divergence_time * 1e6:.4f} us)"
        lines.append(f"{verdict} at rel_tol={self.rel_tol:g}, floor={self.floor:g}{when}")
        return "\n".join(lines)

    def to_dict(self):
        return {"passed": self.passed, "first_divergence_time": self.first_divergence_time,
                "rel_tol": self.rel_tol, "floor": self.floor, "fields": self.fields}


def compare_meanfield(config, rel_tol=0.02, floor=1e-8, exact=None):
    """Run the mean-field model on the same protocol and compare every defined field.

    A sample passes when |mf - exact| <= rel_tol * |exact| + floor.
    """
    if config.n1 < 1 or config.n2 < 1:
        raise ValueError("mean-field comparison needs at least one atom per ensemble")
    exact = exact if exact is not None else exact_evolve(config)
    mf_params = config.params.replace(n_atoms=(config.n1, config.n2))
    traj = run_protocol(mf_params, config.protocol, config.integrator, config.sample_dt,
                        observables=False)
    if len(traj.times) != len(exact.times) or not np.allclose(traj.times, exact.times,
                                                              rtol=0, atol=1e-15):
        raise RuntimeError("mean-field and exact sample grids differ")
    mf = traj.complex_states
    report = {}
    first_bad = None
    for i, name in enumerate(FIELD_LABELS):
        ex = exact.values[:, i]
        if not np.all(np.isfinite(ex)):
            continue
        err = np.abs(mf[:, i] - ex)
        bad = err > rel_tol * np.abs(ex) + floor
        rel = err / np.maximum(np.abs(ex), floor)
        if bad.any():
            t_bad = float(exact.times[np.argmax(bad)])
            first_bad = t_bad if first_bad is None else min(first_bad, t_bad)
        report[name] = {"max_rel_error": float(rel.max()), "max_abs_error": float(err.max()),
                        "passed": bool(not bad.any())}
    return ComparisonReport(fields=report, passed=first_bad is None,
                            first_divergence_time=first_bad, rel_tol=rel_tol, floor=floor)


def single_drive_config(params, n1=1, n2=1, drive_duration=0.1e-6, total=2e-6, fock_cutoff=6,
                        **kwargs):
    """Drive pulse then free decay up to ``total`` seconds."""
    segs = [drive_segment(params, drive_duration), free_segment(params, total - drive_duration)]
    return OracleConfig(n1=n1, n2=n2, params=params, protocol=Protocol(segs),
                        fock_cutoff=fock_cutoff, **kwargs)


__all__ = ["ExactSystem", "OracleConfig", "ExactTrajectory", "ComparisonReport", "exact_evolve",
           "compare_meanfield", "coherent_density", "atom_density", "single_drive_config"]
