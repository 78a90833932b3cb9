"""Collective spin moments, Bloch vectors and average Dicke numbers.

Every function accepts a MeanFieldState or a complex array of shape (..., 26)
(for example a whole trajectory) and broadcasts over the leading axes.

For ensemble alpha with N atoms, identical atoms give

    <J_x> = N Re s12,   <J_y> = -N Im s12,   <J_z> = N (s22 - 1/2)

and the in-phase (+) / out-phase (-) superpositions combine the transverse
components as J_1 +/- J_2 while the z components always add.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HermiticityViolation, NegativeCasimir, OutOfRange
from .model import (INDEX, N_FIELDS, REAL_FIELDS, MeanFieldState, _P12, _P21, _P2222,
                    _S12, _S22, _X12, _X21, _X2222)

EPS_HERM = 1e-9
CASIMIR_SLACK = 1e-6


def _as_array(state):
    if isinstance(state, MeanFieldState):
        return state.data
    arr = np.asarray(state)
    if arr.dtype != np.complex128:
        arr = np.ascontiguousarray(arr, dtype=np.float64).view(np.complex128)
    if arr.shape[-1] != N_FIELDS:
        raise ValueError(f"last axis must hold {N_FIELDS} complex fields")
    return arr


def check_hermiticity(state, eps_herm=EPS_HERM):
    """Raise if a physically real field carries an imaginary part above tolerance."""
    y = _as_array(state)[..., REAL_FIELDS]
    excess = np.abs(y.imag) - eps_herm * np.maximum(1.0, np.abs(y.real))
    if np.any(excess > 0):
        worst = np.unravel_index(np.argmax(excess), excess.shape)
        label = [k for k, r in zip(INDEX, REAL_FIELDS) if r][worst[-1]]
        raise HermiticityViolation(f"imaginary residue in {label}: {y[worst].imag:.3e}")


def first_moments(state, params, eps_herm=EPS_HERM):
    """(..., 2, 3) array of (<J_x>, <J_y>, <J_z>) for each ensemble."""
    y = _as_array(state)
    check_hermiticity(y, eps_herm)
    n = np.asarray(params.n_atoms)
    s = y[..., _S12:_S12 + 2]
    p = y[..., _S22:_S22 + 2].real
    return np.stack([n * s.real, -n * s.imag, n * (p - 0.5)], axis=-1)


def second_moments(state, params, eps_herm=EPS_HERM):
    """Squares <J_{alpha,i}^2> per ensemble and cross terms <J_{1,i} J_{2,i}>."""
    y = _as_array(state)
    check_hermiticity(y, eps_herm)
    n = np.asarray(params.n_atoms)
    n1, n2 = params.n_atoms
    pair = n * (n - 1) / 4
    p12 = y[..., _P12:_P12 + 2]
    p21 = y[..., _P21:_P21 + 2].real
    p2222 = y[..., _P2222:_P2222 + 2].real
    p = y[..., _S22:_S22 + 2].real
    x12 = y[..., _X12]
    x21 = y[..., _X21]
    x2222 = y[..., _X2222].real
    cross = n1 * n2 / 4
    return {
        "jx2": n / 4 + pair * (2 * p12.real + 2 * p21),
        "jy2": n / 4 - pair * (2 * p12.real - 2 * p21),
        "jz2": n / 4 + pair * (4 * p2222 - 4 * p + 1),
        "jxjx": cross * (2 * x12.real + 2 * x21.real),
        "jyjy": -cross * (2 * x12.real - 2 * x21.real),
        "jzjz": cross * (4 * x2222 - 2 * p[..., 0] - 2 * p[..., 1] + 1),
    }


def total_j2(state, params, branch="plus", eps_herm=EPS_HERM):
    """sum_i <(J_i^+/-)^2> assembled from the ensemble moments."""
    sign = _branch_sign(branch)
    m = second_moments(state, params, eps_herm)
    own = (m["jx2"] + m["jy2"] + m["jz2"]).sum(axis=-1)
    return own + 2 * sign * (m["jxjx"] + m["jyjy"]) + 2 * m["jzjz"]


def _branch_sign(branch):
    if branch in ("plus", "+", 1):
        return 1.0
    if branch in ("minus", "-", -1):
        return -1.0
    raise ValueError(f"branch must be 'plus' or 'minus', got {branch!r}")


def _jbar_from_casimir(S, n_total, slack=CASIMIR_SLACK):
    S = np.asarray(S, dtype=float)
    tol = slack * n_total
    if np.any(S < -tol):
        raise NegativeCasimir(f"sum <J_i^2> = {np.min(S):.6e} below -{tol:.3e}")
    S = np.maximum(S, 0.0)
    # positive root of J(J+1) = S, written to avoid cancellation at small S
    return 2 * S / (1 + np.sqrt(1 + 4 * S))


def dicke_numbers(state, params, branch="plus", eps_herm=EPS_HERM):
    """Average Dicke numbers (jbar, mbar) for the in-phase or out-phase picture."""
    S = total_j2(state, params, branch, eps_herm)
    jbar = _jbar_from_casimir(S, params.n_total)
    mbar = first_moments(state, params, eps_herm)[..., 2].sum(axis=-1)
    return jbar, mbar


def bloch_vectors(state, params, eps_herm=EPS_HERM):
    """(A_plus, A_minus), each (..., 3)."""
    j = first_moments(state, params, eps_herm)
    plus = j[..., 0, :] + j[..., 1, :]
    minus = j[..., 0, :] - j[..., 1, :]
    minus[..., 2] = plus[..., 2]
    return plus, minus


def closure_free_dicke(s22, params, branch="plus"):
    """Closed-form sum_i <(J_i^+/-)^2> for uncorrelated states with zero coherences."""
    s22 = np.asarray(s22, dtype=float)
    n = np.asarray(params.n_atoms)
    jz = n * (s22 - 0.5)
    # each atom contributes 1/4 to each transverse square; z has the variance p(1-p)
    S = (n / 2).sum() + jz.sum(axis=-1) ** 2 + (n * s22 * (1 - s22)).sum(axis=-1)
    return _jbar_from_casimir(S, params.n_total), jz.sum(axis=-1)


@dataclass
class CollectiveObservables:
    """Derived quantities; fields are scalars for one state or arrays for a trajectory."""

    n_phot: np.ndarray
    bloch_plus: np.ndarray
    bloch_minus: np.ndarray
    jbar_plus: np.ndarray
    mbar_plus: np.ndarray
    jbar_minus: np.ndarray
    mbar_minus: np.ndarray
    total_j2_plus: np.ndarray
    total_j2_minus: np.ndarray

    @classmethod
    def compute(cls, state, params, eps_herm=EPS_HERM):
        y = _as_array(state)
        plus, minus = bloch_vectors(y, params, eps_herm)
        s_plus = total_j2(y, params, "plus", eps_herm)
        s_minus = total_j2(y, params, "minus", eps_herm)
        return cls(
            n_phot=y[..., INDEX["n_phot"]].real,
            bloch_plus=plus,
            bloch_minus=minus,
            jbar_plus=_jbar_from_casimir(s_plus, params.n_total),
            mbar_plus=plus[..., 2],
            jbar_minus=_jbar_from_casimir(s_minus, params.n_total),
            mbar_minus=minus[..., 2],
            total_j2_plus=s_plus,
            total_j2_minus=s_minus,
        )


def effective_atom_number(trajectory, t0, params):
    """N_eff = 2 jbar_plus(t0), linearly interpolated between samples."""
    times = trajectory.times
    if not times[0] <= t0 <= times[-1]:
        raise OutOfRange(f"t0={t0:.6e} outside [{times[0]:.6e}, {times[-1]:.6e}]")
    obs = trajectory.observables
    if obs is not None and "jbar_plus" in obs:
        jbar = obs["jbar_plus"]
    else:
        jbar, _ = dicke_numbers(trajectory.complex_states, params, "plus")
    return 2.0 * float(np.interp(t0, times, jbar))


def effective_atom_diagnostics(state, params):
    """Population-based approximations of N_eff/N; diagnostics only."""
    p = _as_array(state)[..., INDEX["s22[1]"]].real
    return {"abs_2p_minus_1": np.abs(2 * p - 1), "abs_2p_minus_half": np.abs(2 * p - 0.5)}
