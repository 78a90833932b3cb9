import csv
import math
from pathlib import Path

import numpy as np
import pytest

from superramsey.errors import CutoffInadequate, DimensionCap
from superramsey.integrator import IntegratorConfig, integrate
from superramsey.model import SystemParams
from superramsey.oracle import (ExactSystem, OracleConfig, compare_meanfield, exact_evolve,
                                single_drive_config)
from superramsey.protocols import Protocol, drive_segment, free_segment

GOLDEN = Path(__file__).parent / "golden"
TWO_PI = 2 * math.pi


def weak_params():
    return SystemParams.operating_point().replace(g=(TWO_PI * 50e3,) * 2)


def test_no_drive_stationary():
    p = SystemParams.operating_point().replace(omega=(0.0, 0.0))
    cfg = OracleConfig(1, 1, p, Protocol([free_segment(p, 0.5e-6)]), fock_cutoff=2,
                       sample_dt=5e-8)
    ex = exact_evolve(cfg)
    vals = ex.values[:, np.all(np.isfinite(ex.values), axis=0)]
    assert np.all(vals == 0)
    assert np.all(ex.trace == 1.0)


def test_single_atom_rabi():
    w = TWO_PI * 4.16e5
    p = SystemParams(n_atoms=(1, 1), omega=(w, 0.0))
    cfg = OracleConfig(1, 0, p, Protocol([drive_segment(p, 2e-6)]), fock_cutoff=1,
                       sample_dt=1e-7, check_cutoff=False)
    ex = exact_evolve(cfg)
    np.testing.assert_allclose(ex.field("s22[1]").real, np.sin(w * ex.times) ** 2, atol=1e-8)
    assert np.all(np.isnan(ex.field("s22[2]")))


def test_dimension_cap():
    with pytest.raises(DimensionCap):
        ExactSystem(3, 3, fock_cutoff=300)
    with pytest.raises(ValueError):
        ExactSystem(0, 0)


def test_trace_hermiticity_and_positivity():
    ex = exact_evolve(single_drive_config(weak_params(), 1, 1, sample_dt=2e-8))
    assert np.max(np.abs(ex.trace - 1)) < 1e-8
    assert len(ex.min_eigenvalues) == 5
    assert min(ex.min_eigenvalues) >= -1e-8
    assert max(ex.hermiticity_errors) < 1e-8
    assert ex.cutoff_difference < 1e-6


def test_permutation_symmetry():
    """Atoms of one ensemble stay interchangeable under symmetric dynamics."""
    p = weak_params()
    sysx = ExactSystem(2, 1, fock_cutoff=3)
    gen = sysx.generator(p)
    D = sysx.dim
    f = lambda t, y: gen(y.view(np.complex128).reshape(D, D)).reshape(-1).view(np.float64)
    traj = integrate(f, sysx.ground_density().reshape(-1).view(np.float64), (0, 0.3e-6),
                     IntegratorConfig(rtol=1e-10, atol=1e-13), t_eval=[0.1e-6, 0.3e-6])
    for y in traj.states:
        rho = y.view(np.complex128).reshape(D, D)
        k, l = sysx.ensembles[0]
        for ops in (sysx.ee, sysx.sm):
            a = np.trace(ops[k] @ rho)
            b = np.trace(ops[l] @ rho)
            assert a == pytest.approx(b, abs=1e-12)
            assert abs(a) > 1e-6


def test_uncoupled_meanfield_is_exact():
    p = weak_params().replace(g=(0.0, 0.0))
    cfg = single_drive_config(p, 1, 1, drive_duration=0.3e-6, total=1e-6, sample_dt=2e-8,
                              check_cutoff=False, fock_cutoff=1)
    report = compare_meanfield(cfg, rel_tol=0.0, floor=1e-6)
    for name in ("s12[1]", "s12[2]", "s22[1]", "s22[2]"):
        assert report.fields[name]["max_abs_error"] < 1e-6


def test_weak_drive_within_two_percent():
    cfg = single_drive_config(weak_params(), 1, 1, sample_dt=1e-8)
    report = compare_meanfield(cfg, rel_tol=0.02, floor=1e-8)
    assert report.passed, report.summary()
    assert report.first_divergence_time is None


def test_strong_drive_report_documents_degradation():
    p = weak_params()
    t_pi = math.pi / (2 * abs(p.omega[0]))
    cfg = single_drive_config(p, 2, 2, drive_duration=t_pi, total=1.5e-6, sample_dt=2e-8,
                              fock_cutoff=4, check_cutoff=False)
    report = compare_meanfield(cfg)
    text = report.summary()
    assert "x22_22" in text and ("PASS" in text or "FAIL" in text)
    assert set(report.to_dict()) >= {"passed", "first_divergence_time", "fields"}


def test_cutoff_inadequate():
    p = SystemParams.operating_point().replace(g=(TWO_PI * 2e6,) * 2, kappa=TWO_PI * 0.1e6)
    t_pi = math.pi / (2 * abs(p.omega[0]))
    cfg = single_drive_config(p, 2, 2, drive_duration=t_pi, total=0.8e-6, fock_cutoff=1,
                              sample_dt=5e-8)
    with pytest.raises(CutoffInadequate):
        exact_evolve(cfg)


def test_golden_weak_drive_trace():
    with open(GOLDEN / "oracle_weak_n1n1.csv") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], np.array(rows[1:], dtype=float)
    ex = exact_evolve(single_drive_config(weak_params(), 1, 1, drive_duration=0.1e-6,
                                          total=2e-6, sample_dt=10e-9))
    np.testing.assert_allclose(ex.times, data[:, 0], rtol=0, atol=1e-18)
    for j, name in enumerate(header[1:], start=1):
        part, label = name.split("_", 1)
        col = ex.field(label)
        col = col.real if part == "re" else col.imag
        scale = np.max(np.abs(data[:, j])) + 1e-30
        np.testing.assert_allclose(col, data[:, j], rtol=0, atol=1e-7 * scale, err_msg=name)
