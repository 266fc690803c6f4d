"""Complement-of-the-Hamiltonian observables for bounded discrete spectra.

A spectrum is stored as integer labels on a period: E_i = E0 + hbar * r_i * 2pi / T.
All phases that enter a time state are reduced through those integers before
any trigonometry, so resolutions of the identity come out exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd, lcm
from typing import Iterable, Sequence

import numpy as np

from .errors import SpectrumError
from .hilbert import Operator, StateVector

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ClockSpectrum:
    E0: float
    period_T: float
    labels: tuple[int, ...]
    hbar: float = 1.0

    def __post_init__(self):
        labels = tuple(int(r) for r in self.labels)
        object.__setattr__(self, "labels", labels)
        if not labels:
            raise SpectrumError("a spectrum needs at least one level")
        if labels[0] != 0:
            raise SpectrumError("the lowest label must be 0")
        if any(b <= a for a, b in zip(labels, labels[1:])):
            raise SpectrumError(f"labels must be strictly increasing (non-degenerate), got {labels}")
        if not (self.period_T > 0 and np.isfinite(self.period_T)):
            raise SpectrumError("period must be positive and finite")
        if not self.hbar > 0:
            raise SpectrumError("hbar must be positive")

    @classmethod
    def equally_spaced(cls, d: int, period_T: float = TWO_PI, E0: float = 0.0, hbar: float = 1.0):
        return cls(E0, period_T, tuple(range(d)), hbar)

    @property
    def d(self) -> int:
        return len(self.labels)

    @property
    def r_max(self) -> int:
        return self.labels[-1]

    @property
    def r(self) -> np.ndarray:
        return np.array(self.labels, dtype=np.int64)

    @property
    def quantum(self) -> float:
        """Energy per label step."""
        return self.hbar * TWO_PI / self.period_T

    @property
    def energies(self) -> np.ndarray:
        return self.E0 + self.quantum * self.r

    @property
    def is_equally_spaced(self) -> bool:
        return self.labels == tuple(range(self.d))

    def hamiltonian(self) -> Operator:
        return Operator.diagonal(self.energies)

    def ket_amplitudes(self, t) -> np.ndarray:
        """Rows of e^{-i E_i t / hbar} for each t (unnormalized continuous kets)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cycles = np.mod(np.outer(t / self.period_T, self.r), 1.0)
        phase = np.outer(self.E0 * t / self.hbar, np.ones(self.d)) + TWO_PI * cycles
        return np.exp(-1j * phase)


@dataclass(frozen=True, eq=False)
class ContinuousKet:
    spectrum: ClockSpectrum
    t: float

    @property
    def state(self) -> StateVector:
        return StateVector(self.spectrum.ket_amplitudes(self.t)[0])


def _as_fraction(item) -> Fraction:
    if isinstance(item, Fraction):
        return item
    if isinstance(item, str):
        return Fraction(item)
    if isinstance(item, int):
        return Fraction(item)
    a, b = item
    a, b = int(a), int(b)
    if b <= 0:
        raise SpectrumError(f"denominator must be positive in {item}")
    if gcd(a, b) != 1:
        raise SpectrumError(f"ratio {a}/{b} is not reduced")
    return Fraction(a, b)


def build_spectrum(
    E0: float,
    ratios: Iterable,
    T_hint: float | None = None,
    *,
    unit: float = 1.0,
    hbar: float = 1.0,
) -> ClockSpectrum:
    """Spectrum with gaps E_i - E0 = unit * A_i/B_i above the ground level.

    ``ratios`` holds (A, B) pairs, Fractions or "A/B" strings. Labels are put on
    the common denominator L = lcm(B_i), giving T = 2 pi hbar L / unit. Passing
    ``T_hint`` fixes the period instead and rescales the unit to match.
    """
    fracs = [_as_fraction(x) for x in ratios]
    if any(f <= 0 for f in fracs):
        raise SpectrumError("ratios must be positive")
    if len(set(fracs)) != len(fracs):
        raise SpectrumError("duplicate ratios give degenerate levels")
    L = lcm(*(f.denominator for f in fracs)) if fracs else 1
    scaled = [f * L for f in fracs]
    if any(s.denominator != 1 for s in scaled):
        raise SpectrumError("labels are not integer after taking the common denominator")
    labels = (0, *sorted(int(s) for s in scaled))
    if T_hint is None:
        if not unit > 0:
            raise SpectrumError("unit must be positive")
        T = TWO_PI * hbar * L / unit
    else:
        T = float(T_hint)
    return ClockSpectrum(float(E0), T, labels, hbar)


@dataclass(frozen=True, eq=False)
class ComplementFamily:
    spectrum: ClockSpectrum
    D: int
    t0: float
    amplitudes: np.ndarray  # D x d, row m is the state alpha_m in the energy basis
    values: np.ndarray

    @property
    def states(self) -> tuple[StateVector, ...]:
        return tuple(StateVector(row) for row in self.amplitudes)

    @property
    def is_orthogonal(self) -> bool:
        return self.D == self.spectrum.d and self.spectrum.is_equally_spaced

    @property
    def weight(self) -> float:
        """POVM weight d/D attached to each projector."""
        return self.spectrum.d / self.D

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Lattice index of a clock value, tolerant to one period of wrap."""
        T = self.spectrum.period_T
        x = ((t - self.t0) / T) % 1.0 * self.D
        m = int(round(x)) % self.D
        if abs(x - round(x)) > tol * self.D:
            raise SpectrumError(f"{t} is not a value of this clock family")
        return m


def _family_amplitudes(spec: ClockSpectrum, D: int, t0: float) -> np.ndarray:
    m = np.arange(D, dtype=np.int64)
    r = spec.r
    lattice = np.mod(np.outer(m, r), D) / D
    offset = np.mod(r * (t0 / spec.period_T), 1.0)
    alpha = t0 + m * (spec.period_T / D)
    phase = np.outer(spec.E0 * alpha / spec.hbar, np.ones(spec.d)) + TWO_PI * (lattice + offset)
    return np.exp(-1j * phase) / np.sqrt(spec.d)


def complement_family(spec: ClockSpectrum, D: int | None = None, t0: float = 0.0) -> ComplementFamily:
    D = spec.d if D is None else int(D)
    if D < spec.d or D < spec.r_max + 1:
        raise SpectrumError(
            f"D={D} is too small: need D >= d={spec.d} and D >= r_max+1={spec.r_max + 1}"
        )
    amps = _family_amplitudes(spec, D, t0)
    amps.flags.writeable = False
    values = t0 + np.arange(D) * (spec.period_T / D)
    values.flags.writeable = False
    return ComplementFamily(spec, D, float(t0), amps, values)


def povm_sum(family: ComplementFamily) -> np.ndarray:
    a = family.amplitudes
    return family.weight * (a.T @ a.conj())


def identity_defect(family: ComplementFamily, energies: Sequence[float] | None = None) -> float:
    """Max-abs entry of (d/D) sum_m |alpha_m><alpha_m| - I.

    With ``energies`` the states are rebuilt at the family's clock values from
    those levels instead of the lattice ones, which measures how far an
    approximant lattice is from resolving the identity of the true spectrum.
    """
    spec = family.spectrum
    if energies is None:
        total = povm_sum(family)
    else:
        E = np.asarray(energies, dtype=float)
        if E.shape != (spec.d,):
            raise SpectrumError("need one energy per level")
        a = np.exp(-1j * np.outer(family.values, E) / spec.hbar) / np.sqrt(spec.d)
        total = family.weight * (a.T @ a.conj())
    return float(np.max(np.abs(total - np.eye(spec.d))))


def tau_operator(spec: ClockSpectrum, t0: float = 0.0) -> Operator:
    """Hermitian time operator sum_m tau_m |tau_m><tau_m| (equally spaced only)."""
    if not spec.is_equally_spaced:
        raise SpectrumError("a Hermitian time operator needs an equally spaced spectrum")
    fam = complement_family(spec, spec.d, t0)
    a = fam.amplitudes
    return Operator((a.T * fam.values) @ a.conj())


def age_operator(spec: ClockSpectrum, alpha0: float = 0.0) -> Operator:
    T = spec.period_T
    r = spec.r
    diff = r[None, :] - r[:, None]  # r_k - r_l at [l, k]
    A = np.empty((spec.d, spec.d), dtype=complex)
    off = diff != 0
    cyc = np.mod(diff * (alpha0 / T), 1.0)
    A[off] = -(1j * T / TWO_PI) * np.exp(1j * TWO_PI * cyc[off]) / diff[off]
    np.fill_diagonal(A, alpha0 + T / 2)
    return Operator(A)


def alpha_probability_density(state: StateVector, spec: ClockSpectrum, t) -> np.ndarray | float:
    """(1/T) |<t~|psi>|^2 for a clock-space state; vectorized over ``t``."""
    if state.dim != spec.d:
        raise SpectrumError("state does not live on this clock")
    amps = spec.ket_amplitudes(t)
    p = np.abs(amps.conj() @ state.amplitudes) ** 2 / spec.period_T
    return float(p[0]) if np.ndim(t) == 0 else p


def quadrature_nodes(spec: ClockSpectrum, N: int = 1024, t0: float = 0.0) -> np.ndarray:
    """Uniform nodes on one period; the periodic trapezoid rule uses weight T/N each."""
    return t0 + np.arange(N) * (spec.period_T / N)
