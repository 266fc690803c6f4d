"""Random pure states on an energy shell, with a large environment serving as clock.

Units have hbar = 1 throughout. The environment is an integer-labelled
spectrum, so averaging over one of its periods is a finite lattice sum.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil
from typing import Sequence

import numpy as np

from .clockwork import ClockSpectrum
from .errors import ConstraintError, ShapeError
from .hilbert import Operator, Spectrum, StateVector, eigh, trace_distance


@dataclass(frozen=True)
class EnergyShell:
    E: float
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("shell width must be positive")


@dataclass(frozen=True, eq=False)
class ShellSample:
    system: Spectrum
    env: ClockSpectrum
    shell: EnergyShell
    coeffs: np.ndarray  # d_C x d_S amplitudes on |E_i^C> (x) |E_j^S>, zero off-shell
    offsets: np.ndarray  # Delta_ij on allowed pairs, nan elsewhere
    windows: tuple[np.ndarray, ...]  # I_j as arrays of environment indices
    seed: int
    global_state: StateVector

    @property
    def d_S(self) -> int:
        return self.system.eigenvalues.size

    def weights(self) -> np.ndarray:
        """sum_{i in I_j} |c_ij|^2 for each system level j."""
        return np.sum(np.abs(self.coeffs) ** 2, axis=0)


def shell_pairs(system_energies, env: ClockSpectrum, shell: EnergyShell):
    """Allowed (i, j) mask and offsets E_i^C + E_j^S - E inside [0, delta]."""
    E_S = np.asarray(system_energies, dtype=float)
    total = env.energies[:, None] + E_S[None, :]
    slack = 1e-12 * max(1.0, float(np.max(np.abs(total))))
    offsets = total - shell.E
    mask = (offsets >= -slack) & (offsets <= shell.delta + slack)
    return mask, np.where(mask, np.clip(offsets, 0.0, shell.delta), np.nan)


def sample_shell_state(system_H: Operator, env: ClockSpectrum, shell: EnergyShell, seed: int) -> ShellSample:
    """Gaussian random amplitudes on every shell pair, normalized.

    Real and imaginary parts are independent normals of variance 1/2, drawn
    in row-major (environment level, system level) order over allowed pairs.
    """
    if env.hbar != 1.0:
        raise ValueError("the environment must use hbar = 1")
    spec = eigh(system_H)
    mask, offsets = shell_pairs(spec.eigenvalues, env, shell)
    windows = tuple(np.nonzero(mask[:, j])[0] for j in range(mask.shape[1]))
    for j, w in enumerate(windows):
        if w.size == 0:
            raise ConstraintError(f"the shell contains no environment level for system level {j}")
    if np.any(mask.sum(axis=1) > 1):
        raise ConstraintError("environment windows overlap; shrink delta below the system gaps")
    rng = np.random.default_rng(seed)
    n = int(mask.sum())
    z = rng.normal(0.0, np.sqrt(0.5), size=(n, 2))
    c = np.zeros(mask.shape, dtype=complex)
    c[mask] = z[:, 0] + 1j * z[:, 1]
    c /= np.linalg.norm(c)
    c.flags.writeable = False
    # global amplitudes in the system's computational basis
    psi = c @ spec.eigenvectors.T
    state = StateVector(psi.ravel(), (env.d, spec.eigenvalues.size))
    return ShellSample(spec, env, shell, c, offsets, windows, int(seed), state)


@dataclass(frozen=True, eq=False)
class ShellDesign:
    system_H: Operator
    env: ClockSpectrum
    shell: EnergyShell
    counts: tuple[int, ...]


def _apportion(weights: np.ndarray, total: int) -> np.ndarray:
    raw = weights / weights.sum() * total
    counts = np.maximum(np.floor(raw).astype(int), 1)
    order = np.argsort(-(raw - np.floor(raw)), kind="stable")
    k = 0
    while counts.sum() < total:
        counts[order[k % len(order)]] += 1
        k += 1
    while counts.sum() > total:
        j = int(np.argmax(counts))
        counts[j] -= 1
    return counts


def canonical_shell(
    levels: Sequence[int], beta: float, total: int, delta: float, gap: float = 1.0
) -> ShellDesign:
    """Environment whose window sizes follow exp(-beta E_j), for E_j = gap * levels[j].

    Window j holds counts[j] environment levels at -E_j + s*q, s = 0..counts[j]-1,
    with q = gap/K chosen so every window fits inside the shell [0, delta].
    """
    n = np.asarray(levels, dtype=np.int64)
    if np.any(np.diff(np.sort(n)) == 0):
        raise ValueError("system levels must be distinct")
    min_gap = gap * float(np.min(np.diff(np.sort(n)))) if n.size > 1 else np.inf
    if not 0 < delta < min_gap:
        raise ValueError("delta must be positive and smaller than the system gaps")
    E_S = gap * n
    counts = _apportion(np.exp(-beta * (E_S - E_S.min())), int(total))
    K = int(ceil(gap * counts.max() / delta))
    q = gap / K
    n_max = int(n.max())
    labels = sorted(int(K * (n_max - nj) + s) for nj, c in zip(n, counts) for s in range(c))
    env = ClockSpectrum(-gap * n_max, 2 * np.pi / q, tuple(labels), 1.0)
    return ShellDesign(Operator.diagonal(E_S), env, EnergyShell(0.0, delta), tuple(int(c) for c in counts))


@dataclass(frozen=True, eq=False)
class CanonicalComparison:
    rho_S: Operator
    canonical: Operator
    trace_dist: float


def canonical_state(system_H: Operator, beta: float) -> Operator:
    spec = eigh(system_H)
    E = spec.eigenvalues
    w = np.exp(-beta * (E - E.min()))
    w /= w.sum()
    V = spec.eigenvectors
    return Operator((V * w) @ V.conj().T)


def reduced_vs_canonical(sample: ShellSample, beta: float) -> CanonicalComparison:
    """Reduced system state, which is diagonal in energy because the windows are disjoint."""
    V = sample.system.eigenvectors
    rho = Operator((V * sample.weights()) @ V.conj().T)
    H = Operator((V * sample.system.eigenvalues) @ V.conj().T)
    can = canonical_state(H, beta)
    return CanonicalComparison(rho, can, trace_distance(rho, can))


def fit_beta(sample: ShellSample) -> float:
    """Least-squares slope of -log(weight) against energy; a diagnostic only."""
    E = sample.system.eigenvalues
    w = sample.weights()
    slope = np.polyfit(E, -np.log(w), 1)[0]
    return float(slope)


def temporal_trace(sample: ShellSample, grid_N: int | None = None) -> Operator:
    """Average of |<t~|Psi>><Psi|t~>| over one environment period.

    With the environment on integer labels the average is a lattice sum over
    grid_N >= r_max + 1 equally spaced readings, evaluated as a discrete
    Fourier transform. It is exact, not a quadrature.
    """
    env = sample.env
    D = env.r_max + 1 if grid_N is None else int(grid_N)
    if D < env.r_max + 1:
        raise ConstraintError(f"{D} readings cannot resolve labels up to {env.r_max}")
    psi = sample.global_state.tensor()
    padded = np.zeros((D, psi.shape[1]), dtype=complex)
    padded[env.r] = psi
    # phi_m = sum_r e^{+2 pi i r m / D} psi_r
    phis = np.fft.ifft(padded, axis=0) * D
    return Operator(phis.T @ phis.conj() / D)


@dataclass(frozen=True, eq=False)
class RelativeDynamics:
    t: float
    state: StateVector
    alpha: np.ndarray
    norm: float


def alpha_coefficients(sample: ShellSample, t: float) -> np.ndarray:
    """alpha_j(t) = sum_{i in I_j} c_ij exp(i Delta_ij t)."""
    phase = np.where(np.isnan(sample.offsets), 0.0, sample.offsets) * t
    return np.sum(sample.coeffs * np.exp(1j * phase), axis=0)


def relative_dynamics(sample: ShellSample, t: float) -> RelativeDynamics:
    """System state conditioned on environment reading t, shell phase e^{iEt} removed.

    The state comes from projecting the global state; ``alpha`` and ``norm``
    are evaluated independently from the shell offsets.
    """
    bra = sample.env.ket_amplitudes(t)[0].conj()
    in_energy = (bra @ sample.coeffs) * np.exp(-1j * sample.shell.E * t)
    state = StateVector(sample.system.eigenvectors @ in_energy)
    alpha = alpha_coefficients(sample, t)
    return RelativeDynamics(float(t), state, alpha, float(np.sum(np.abs(alpha) ** 2)))


def _two_level(sample: ShellSample):
    if sample.d_S != 2:
        raise ShapeError("the oscillator model keeps exactly two system levels")
    E = sample.system.eigenvalues
    return E[1] - E[0]


def position_operator(m: float, omega: float) -> Operator:
    """sqrt(1/2 m omega)(a + a^dagger) on the two lowest oscillator levels."""
    x = np.sqrt(1.0 / (2 * m * omega))
    return Operator(np.array([[0.0, x], [x, 0.0]]))


def _pair_terms(sample: ShellSample):
    I0, I1 = sample.windows
    c0 = sample.coeffs[I0, 0]
    c1 = sample.coeffs[I1, 1]
    d0 = sample.offsets[I0, 0]
    d1 = sample.offsets[I1, 1]
    amp = np.abs(c0)[:, None] * np.abs(c1)[None, :]
    dphi = np.angle(c1)[None, :] - np.angle(c0)[:, None]
    ddelta = d0[:, None] - d1[None, :]
    return amp, dphi, ddelta


def oscillator_x_expectation(sample: ShellSample, m: float, omega: float, t: float) -> float:
    """<X>(t) on the unnormalized conditioned state, as a double sum over both windows.

    ``omega`` must equal the system gap E_1 - E_0.
    """
    gap = _two_level(sample)
    if abs(gap - omega) > 1e-12 * max(1.0, abs(omega)):
        raise ValueError("omega must equal the two-level gap")
    amp, dphi, ddelta = _pair_terms(sample)
    return float(np.sqrt(2 / (m * omega)) * np.sum(amp * np.cos((omega + ddelta) * t - dphi)))


def oscillator_x_first_order(sample: ShellSample, m: float, omega: float, t: float) -> float:
    """<X>(t) expanded to first order in t (Delta_i0 - Delta_k1)."""
    _two_level(sample)
    amp, dphi, ddelta = _pair_terms(sample)
    a0 = np.sum(sample.coeffs[sample.windows[0], 0])
    a1 = np.sum(sample.coeffs[sample.windows[1], 1])
    pref = np.sqrt(2 / (m * omega))
    lead = abs(a0) * abs(a1) * np.cos(omega * t - (np.angle(a1) - np.angle(a0)))
    drift = np.sum(amp * t * ddelta * np.sin(omega * t - dphi))
    return float(pref * (lead - drift))
