"""Second-order cumulant mean-field model of two atomic sub-ensembles in a cavity.

Conventions
-----------
All rates and detunings are angular frequencies (rad/s). The frame rotates
with the drive laser; the Hamiltonian is

    H/hbar = delta_c a^+a + sum_{alpha,k} [ delta_alpha s22 + g_alpha (a^+ s12 + s21 a)
                                           + Omega_alpha (s12 + s21) ]

with s12 = |g><e| (lowering), s21 = |e><g|, s22 = |e><e|.  Dissipation:
cavity loss kappa D[a], spontaneous emission gamma D[s12] and dephasing
2 chi D[s22] per atom.  With this sign convention d<a>/dt = -i delta_c <a> - ...,
so a positive detuning rotates coherences clockwise (s12 ~ exp(-i delta t)).
Coherences decay at gamma/2 + chi.

State layout: 26 complex expectation values (see ``FIELDS``), stored as a flat
array of 52 reals with interleaved real/imaginary parts, i.e. exactly the
memory layout of a complex128 array.  Third-order moments are closed with

    <opq> ~ <o><pq> + <p><oq> + <q><op> - 2<o><p><q>.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is optional
    numba = None

# (name, ensemble or None, physically real)
FIELDS = (
    ("a", None, False),
    ("aa", None, False),
    ("n_phot", None, True),
    ("s12", 1, False), ("s12", 2, False),
    ("s22", 1, True), ("s22", 2, True),
    ("a_s12", 1, False), ("a_s12", 2, False),
    ("a_s21", 1, False), ("a_s21", 2, False),
    ("a_s22", 1, False), ("a_s22", 2, False),
    ("p12_12", 1, False), ("p12_12", 2, False),
    ("p21_12", 1, True), ("p21_12", 2, True),
    ("p22_12", 1, False), ("p22_12", 2, False),
    ("p22_22", 1, True), ("p22_22", 2, True),
    ("x12_12", None, False),
    ("x21_12", None, False),
    ("x22_12", None, False),
    ("x21_22", None, False),
    ("x22_22", None, True),
)
N_FIELDS = len(FIELDS)
N_REAL = 2 * N_FIELDS

FIELD_LABELS = tuple(n if e is None else f"{n}[{e}]" for n, e, _ in FIELDS)
INDEX = {label: i for i, label in enumerate(FIELD_LABELS)}
REAL_FIELDS = np.array([r for _, _, r in FIELDS])

# first index of each per-ensemble pair (ensemble 1 at idx, ensemble 2 at idx + 1)
_A, _AA, _N = 0, 1, 2
_S12, _S22, _AS12, _AS21, _AS22 = 3, 5, 7, 9, 11
_P12, _P21, _P2212, _P2222 = 13, 15, 17, 19
_X12, _X21, _X2212, _X2122, _X2222 = 21, 22, 23, 24, 25

# U(1) charge of every field under a -> a e^{i theta}, s12 -> s12 e^{i theta}
PHASE_CHARGE = np.array([1, 2, 0, 1, 1, 0, 0, 2, 2, 0, 0, 1, 1,
                         2, 2, 0, 0, 1, 1, 0, 0, 2, 0, 1, -1, 0])

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters; every rate in rad/s, per-ensemble values as 2-tuples."""

    delta_c: float = 0.0
    kappa: float = 0.0
    n_atoms: tuple = (1.0, 1.0)
    delta: tuple = (0.0, 0.0)
    g: tuple = (0.0, 0.0)
    gamma: tuple = (0.0, 0.0)
    chi: tuple = (0.0, 0.0)
    omega: tuple = (0.0, 0.0)

    def __post_init__(self):
        for name in ("n_atoms", "delta", "g", "gamma", "chi", "omega"):
            value = tuple(float(v) for v in getattr(self, name))
            if len(value) != 2:
                raise ValueError(f"{name} needs one value per ensemble")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "delta_c", float(self.delta_c))
        object.__setattr__(self, "kappa", float(self.kappa))
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if min(self.gamma) < 0 or min(self.chi) < 0:
            raise ValueError("gamma and chi must be >= 0")
        if min(self.n_atoms) < 1:
            raise ValueError("n_atoms must be >= 1 for each ensemble")
        values = (self.delta_c, self.kappa) + self.n_atoms + self.delta + self.g \
            + self.gamma + self.chi + self.omega
        if not all(math.isfinite(v) for v in values):
            raise ValueError("parameters must be finite")

    @classmethod
    def from_hz(cls, *, delta_c=0.0, kappa=0.0, n_atoms=(1.0, 1.0), delta=(0.0, 0.0),
                g=(0.0, 0.0), gamma=(0.0, 0.0), chi=(0.0, 0.0), omega=(0.0, 0.0)):
        """Build from ordinary frequencies in Hz; multiplies by 2 pi exactly once."""
        def w(v):
            return tuple(TWO_PI * x for x in v)
        return cls(delta_c=TWO_PI * delta_c, kappa=TWO_PI * kappa, n_atoms=n_atoms,
                   delta=w(delta), g=w(g), gamma=w(gamma), chi=w(chi), omega=w(omega))

    @classmethod
    def operating_point(cls, n_atoms=(1e7, 1e7)):
        """Operating point of the Sr-88 experiment: Omega_1 = -Omega_2, resonant."""
        return cls.from_hz(kappa=0.78e6, n_atoms=n_atoms, g=(0.61e3, 0.61e3),
                           gamma=(7.50e3, 7.50e3), omega=(4.16e5, -4.16e5))

    @property
    def n_total(self):
        return self.n_atoms[0] + self.n_atoms[1]

    def replace(self, **changes):
        return replace(self, **changes)

    def swapped(self):
        """Relabel ensembles 1 <-> 2."""
        def s(v):
            return (v[1], v[0])
        return replace(self, n_atoms=s(self.n_atoms), delta=s(self.delta), g=s(self.g),
                       gamma=s(self.gamma), chi=s(self.chi), omega=s(self.omega))

    def baseline_drive(self):
        return DriveSetting(omega=self.omega, delta=self.delta, delta_c=self.delta_c)


@dataclass(frozen=True)
class DriveSetting:
    """Instantaneous, piecewise-constant drive and detunings (rad/s)."""

    omega: tuple = (0.0, 0.0)
    delta: tuple = (0.0, 0.0)
    delta_c: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(v) for v in self.omega))
        object.__setattr__(self, "delta", tuple(float(v) for v in self.delta))
        object.__setattr__(self, "delta_c", float(self.delta_c))
        if not all(math.isfinite(v) for v in self.omega + self.delta + (self.delta_c,)):
            raise ValueError("drive setting must be finite")

    def swapped(self):
        return DriveSetting(omega=self.omega[::-1], delta=self.delta[::-1],
                            delta_c=self.delta_c)


def parameter_vector(params, drive=None):
    """Pack params + drive into the float array consumed by the RHS kernel."""
    if drive is None:
        drive = params.baseline_drive()
    return np.array([
        drive.delta_c, params.kappa,
        params.n_atoms[0], params.n_atoms[1],
        drive.delta[0], drive.delta[1],
        params.g[0], params.g[1],
        params.gamma[0], params.gamma[1],
        params.chi[0], params.chi[1],
        drive.omega[0], drive.omega[1],
    ], dtype=np.float64)


class MeanFieldState:
    """Named view on the 26 stored expectation values."""

    __slots__ = ("data",)

    def __init__(self, data=None):
        if data is None:
            data = np.zeros(N_FIELDS, dtype=np.complex128)
        data = np.asarray(data)
        if data.dtype != np.complex128:
            if data.shape == (N_REAL,):
                data = np.ascontiguousarray(data, dtype=np.float64).view(np.complex128)
            else:
                data = data.astype(np.complex128)
        if data.shape != (N_FIELDS,):
            raise ValueError(f"expected {N_FIELDS} complex fields, got shape {data.shape}")
        self.data = data

    @classmethod
    def from_real(cls, flat):
        return cls(np.array(flat, dtype=np.float64).view(np.complex128))

    def to_real(self):
        return np.ascontiguousarray(self.data).view(np.float64).copy()

    def copy(self):
        return MeanFieldState(self.data.copy())

    def __getitem__(self, label):
        return self.data[INDEX[label]]

    def __setitem__(self, label, value):
        self.data[INDEX[label]] = value

    def __eq__(self, other):
        return isinstance(other, MeanFieldState) and np.array_equal(self.data, other.data)

    def __repr__(self):
        body = ", ".join(f"{k}={v:.4g}" for k, v in zip(FIELD_LABELS, self.data) if v != 0)
        return f"MeanFieldState({body})"

    # convenient accessors; per-ensemble fields come back as length-2 arrays
    a = property(lambda self: self.data[_A])
    aa = property(lambda self: self.data[_AA])
    n_phot = property(lambda self: self.data[_N])
    s12 = property(lambda self: self.data[_S12:_S12 + 2])
    s22 = property(lambda self: self.data[_S22:_S22 + 2])
    a_s12 = property(lambda self: self.data[_AS12:_AS12 + 2])
    a_s21 = property(lambda self: self.data[_AS21:_AS21 + 2])
    a_s22 = property(lambda self: self.data[_AS22:_AS22 + 2])
    p12_12 = property(lambda self: self.data[_P12:_P12 + 2])
    p21_12 = property(lambda self: self.data[_P21:_P21 + 2])
    p22_12 = property(lambda self: self.data[_P2212:_P2212 + 2])
    p22_22 = property(lambda self: self.data[_P2222:_P2222 + 2])
    x12_12 = property(lambda self: self.data[_X12])
    x21_12 = property(lambda self: self.data[_X21])
    x22_12 = property(lambda self: self.data[_X2212])
    x21_22 = property(lambda self: self.data[_X2122])
    x22_22 = property(lambda self: self.data[_X2222])

    def swapped(self):
        """Relabel ensembles 1 <-> 2 (inter-ensemble fields map through conjugation)."""
        d = self.data
        out = d.copy()
        for start in (_S12, _S22, _AS12, _AS21, _AS22, _P12, _P21, _P2212, _P2222):
            out[start], out[start + 1] = d[start + 1], d[start]
        out[_X21] = np.conj(d[_X21])
        out[_X2212] = np.conj(d[_X2122])
        out[_X2122] = np.conj(d[_X2212])
        return MeanFieldState(out)

    def rotated(self, theta):
        """Apply the global U(1) phase a -> a e^{i theta}, s12 -> s12 e^{i theta}."""
        return MeanFieldState(self.data * np.exp(1j * theta * PHASE_CHARGE))


def ground_state(params=None):
    """All atoms in the ground state, empty cavity: every stored field is zero."""
    return MeanFieldState()


def superposition_coefficients(params, drive=None):
    """In-phase (+) and out-phase (-) combinations of detunings, drives and couplings."""
    delta = params.delta if drive is None else drive.delta
    omega = params.omega if drive is None else drive.omega
    r = 1.0 / math.sqrt(2.0)
    return {
        "xi_plus": 0.5 * (delta[0] + delta[1]),
        "xi_minus": 0.5 * (delta[0] - delta[1]),
        "omega_plus": r * (omega[0] + omega[1]),
        "omega_minus": r * (omega[0] - omega[1]),
        "g_plus": r * (params.g[0] + params.g[1]),
        "g_minus": r * (params.g[0] - params.g[1]),
    }


def _rhs_kernel(y, p, out):
    """d/dt of all 26 fields; y and out are complex128[26], p from parameter_vector."""
    dc = p[0]
    kap = p[1]
    a = y[0]
    aa = y[1]
    n = y[2].real
    ca = a.conjugate()
    abs_a2 = (ca * a).real

    sum_gs = 0j
    sum_gas12 = 0j
    sum_g_im = 0.0
    for al in range(2):
        ng = p[2 + al] * p[6 + al]
        sum_gs += ng * y[3 + al]
        sum_gas12 += ng * y[7 + al]
        sum_g_im += ng * y[9 + al].imag
    out[0] = -(1j * dc + 0.5 * kap) * a - 1j * sum_gs
    out[1] = -(2j * dc + kap) * aa - 2j * sum_gas12
    out[2] = -kap * n - 2.0 * sum_g_im

    for al in range(2):
        be = 1 - al
        nat = p[2 + al]
        nb = p[2 + be]
        d = p[4 + al]
        g = p[6 + al]
        gb = p[6 + be]
        gam = p[8 + al]
        Gam = 0.5 * gam + p[10 + al]
        om = p[12 + al]

        s = y[3 + al]
        cs = s.conjugate()
        pp = y[5 + al].real
        as12 = y[7 + al]
        as21 = y[9 + al]
        as22 = y[11 + al]
        p12 = y[13 + al]
        p21 = y[15 + al].real
        p2212 = y[17 + al]
        p2222 = y[19 + al].real
        # <s12_al s12_be>, <s21_al s12_be>, <s22_al s12_be>
        xs = y[21]
        if al == 0:
            xd = y[22]
            xp = y[23]
        else:
            xd = y[22].conjugate()
            xp = y[24].conjugate()

        out[3 + al] = -(1j * d + Gam) * s + 1j * g * (2.0 * as22 - a) + 1j * om * (2.0 * pp - 1.0)
        out[5 + al] = -gam * pp + 2.0 * g * as21.imag - 2.0 * om * s.imag

        # closures of third-order moments
        aaP = 2.0 * a * as22 + pp * aa - 2.0 * a * a * pp             # <a a s22>
        adaP = 2.0 * (ca * as22).real + pp * n - 2.0 * abs_a2 * pp    # <a+ a s22>
        adaS = ca * as12 + a * as21.conjugate() + s * n - 2.0 * abs_a2 * s   # <a+ a s12>
        aaSd = 2.0 * a * as21 + cs * aa - 2.0 * a * a * cs           # <a a s21>

        out[7 + al] = (-(1j * (dc + d) + 0.5 * kap + Gam) * as12
                       - 1j * (nat - 1.0) * g * p12 - 1j * nb * gb * xs
                       + 1j * g * (2.0 * aaP - aa) + 1j * om * (2.0 * as22 - a))
        out[9 + al] = ((-1j * dc - 0.5 * kap + 1j * d - Gam) * as21
                       - 1j * g * (pp - n + 2.0 * adaP)
                       - 1j * (nat - 1.0) * g * p21 - 1j * nb * gb * xd
                       - 1j * om * (2.0 * as22 - a))
        out[11 + al] = (-(1j * dc + 0.5 * kap + gam) * as22
                        - 1j * (nat - 1.0) * g * p2212 - 1j * nb * gb * xp
                        + 1j * g * (adaS - aaSd) + 1j * om * (as12 - as21))

        # intra-ensemble pairs (atoms 1, 2 of the same ensemble)
        aPs = a * p2212 + pp * as12 + s * as22 - 2.0 * a * pp * s               # <a s22_1 s12_2>
        aSdP = a * p2212.conjugate() + cs * as22 + pp * as21 - 2.0 * a * cs * pp  # <a s21_1 s22_2>
        adSS = ca * p12 + 2.0 * s * as21.conjugate() - 2.0 * ca * s * s          # <a+ s12_1 s12_2>
        aSdS = a * p21 + cs * as12 + s * as21 - 2.0 * a * cs * s                 # <a s21_1 s12_2>
        aPP = a * p2222 + 2.0 * pp * as22 - 2.0 * a * pp * pp                     # <a s22_1 s22_2>

        out[13 + al] = (-2.0 * (1j * d + Gam) * p12 + 2j * g * (2.0 * aPs - as12)
                        + 2j * om * (2.0 * p2212 - s))
        out[15 + al] = (-2.0 * Gam * p21 + 2.0 * g * as21.imag - 4.0 * g * aSdP.imag
                        - 2.0 * om * s.imag + 4.0 * om * p2212.imag)
        out[17 + al] = (-(gam + 1j * d + Gam) * p2212
                        + 1j * g * (adSS - aSdS + 2.0 * aPP - as22)
                        + 1j * om * (p12 - p21 + 2.0 * p2222 - pp))
        out[19 + al] = -2.0 * gam * p2222 + 4.0 * g * aSdP.imag - 4.0 * om * p2212.imag

    # inter-ensemble pairs: atom A of ensemble 1, atom B of ensemble 2
    d1 = p[4]
    d2 = p[5]
    g1 = p[6]
    g2 = p[7]
    gam1 = p[8]
    gam2 = p[9]
    G1 = 0.5 * gam1 + p[10]
    G2 = 0.5 * gam2 + p[11]
    o1 = p[12]
    o2 = p[13]
    sA = y[3]
    sB = y[4]
    csA = sA.conjugate()
    csB = sB.conjugate()
    pA = y[5].real
    pB = y[6].real
    as12A = y[7]
    as12B = y[8]
    as21A = y[9]
    as21B = y[10]
    as22A = y[11]
    as22B = y[12]
    x12 = y[21]
    x21 = y[22]
    x2212 = y[23]
    x2122 = y[24]
    x2222 = y[25].real

    aPAsB = a * x2212 + pA * as12B + sB * as22A - 2.0 * a * pA * sB                   # <a PA sB>
    aSAPB = a * x2122.conjugate() + sA * as22B + pB * as12A - 2.0 * a * sA * pB        # <a sA PB>
    adPAsB = ca * x2212 + pA * as21B.conjugate() + sB * as22A.conjugate() - 2.0 * ca * pA * sB  # <a+ PA sB>
    aSdAPB = a * x2122 + csA * as22B + pB * as21A - 2.0 * a * csA * pB                # <a sA+ PB>
    adSASB = ca * x12 + sA * as21B.conjugate() + sB * as21A.conjugate() - 2.0 * ca * sA * sB    # <a+ sA sB>
    aSdASB = a * x21 + csA * as12B + sB * as21A - 2.0 * a * csA * sB                   # <a sA+ sB>
    aPAPB = a * x2222 + pA * as22B + pB * as22A - 2.0 * a * pA * pB                    # <a PA PB>
    adSdASB = ca * x21 + csA * as21B.conjugate() + sB * as12A.conjugate() - 2.0 * ca * csA * sB  # <a+ sA+ sB>
    aSdASdB = a * x12.conjugate() + csA * as21B + csB * as21A - 2.0 * a * csA * csB   # <a sA+ sB+>

    out[21] = (-(1j * (d1 + d2) + G1 + G2) * x12
               + 1j * g1 * (2.0 * aPAsB - as12B) + 1j * o1 * (2.0 * x2212 - sB)
               + 1j * g2 * (2.0 * aSAPB - as12A) + 1j * o2 * (2.0 * x2122.conjugate() - sA))
    out[22] = ((1j * (d1 - d2) - G1 - G2) * x21
               - 1j * g1 * (2.0 * adPAsB - as21B.conjugate())
               + 1j * g2 * (2.0 * aSdAPB - as21A)
               - 1j * o1 * (2.0 * x2212 - sB) + 1j * o2 * (2.0 * x2122 - csA))
    out[23] = (-(gam1 + 1j * d2 + G2) * x2212
               + 1j * g1 * (adSASB - aSdASB) + 1j * o1 * (x12 - x21)
               + 1j * g2 * (2.0 * aPAPB - as22A) + 1j * o2 * (2.0 * x2222 - pA))
    out[24] = ((1j * d1 - G1 - gam2) * x2122
               - 1j * g1 * (2.0 * aPAPB.conjugate() - as22B.conjugate())
               - 1j * o1 * (2.0 * x2222 - pB)
               + 1j * g2 * (adSdASB - aSdASdB) + 1j * o2 * (x21 - x12.conjugate()))
    out[25] = (-(gam1 + gam2) * x2222 + 2.0 * g1 * aSdAPB.imag + 2.0 * o1 * x2122.imag
               - 2.0 * g2 * adPAsB.imag - 2.0 * o2 * x2212.imag)


rhs_kernel_py = _rhs_kernel
if numba is not None:
    rhs_kernel = numba.njit(cache=True, fastmath=False)(_rhs_kernel)
else:  # pragma: no cover
    rhs_kernel = _rhs_kernel


def rhs(state, params, drive=None):
    """Time derivative of every stored field, as a MeanFieldState-shaped object."""
    y = state.data if isinstance(state, MeanFieldState) else MeanFieldState(state).data
    out = np.empty(N_FIELDS, dtype=np.complex128)
    rhs_kernel(np.ascontiguousarray(y), parameter_vector(params, drive), out)
    return MeanFieldState(out)


def make_rhs(params, drive=None):
    """Return f(t, y_real) -> dy_real over the flat 52-real layout for the integrator."""
    p = parameter_vector(params, drive)
    kernel = rhs_kernel

    def f(t, y):
        out = np.empty(N_REAL)
        kernel(y.view(np.complex128), p, out.view(np.complex128))
        return out

    return f
