"""Rods conjugate to momentum, and universes constrained in both energy and momentum.

Positions are built exactly like clock readings, with a momentum grid in
the role of the spectrum. A spacetime universe pairs each system momentum p
with a frame momentum -p and a clock level at minus the mode's energy.
One or three spatial axes are supported, stored as explicit tensors.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import lcm
from typing import Sequence

import numpy as np

from .clockwork import ClockSpectrum, ComplementFamily, TWO_PI, complement_family
from .errors import ConstraintError, NumericContractError, ShapeError
from .hilbert import Operator, StateVector

MAX_FACTOR_DIM = 4096


@dataclass(frozen=True)
class MomentumGrid:
    p0: float
    L: float
    d: int
    hbar: float = 1.0

    def __post_init__(self):
        if self.d < 1 or not self.L > 0:
            raise ShapeError("a momentum grid needs d >= 1 and L > 0")

    @property
    def step(self) -> float:
        return TWO_PI * self.hbar / self.L

    @property
    def values(self) -> np.ndarray:
        return self.p0 + self.step * np.arange(self.d)

    def as_spectrum(self) -> ClockSpectrum:
        return ClockSpectrum(self.p0, self.L, tuple(range(self.d)), self.hbar)

    def index_of(self, p: float, tol: float = 1e-9) -> int | None:
        k = (p - self.p0) / self.step
        kr = int(round(k))
        if abs(k - kr) > tol * max(1.0, abs(k)) or not 0 <= kr < self.d:
            return None
        return kr

    def momentum_operator(self) -> Operator:
        return Operator.diagonal(self.values)


def symmetric_grid(d: int, L: float, hbar: float = 1.0) -> MomentumGrid:
    """Grid centred on zero momentum (d odd) or straddling it (d even)."""
    return MomentumGrid(-(TWO_PI * hbar / L) * ((d - 1) // 2), L, d, hbar)


def position_family(grid: MomentumGrid, D: int | None = None, x0: float = 0.0) -> ComplementFamily:
    """States (1/sqrt d) sum_k exp(-i p_k x_j / hbar)|p_k>, x_j = x0 + j L/D."""
    return complement_family(grid.as_spectrum(), D, x0)


def position_operator(grid: MomentumGrid, x0: float = 0.0) -> Operator:
    fam = position_family(grid, grid.d, x0)
    a = fam.amplitudes
    return Operator((a.T * fam.values) @ a.conj())


# -- dispersion relations -------------------------------------------------------


def _sq(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.sum(p * p, axis=-1)


@dataclass(frozen=True)
class FreeParticle:
    """Frame of mass M and system of mass m, both non-relativistic."""

    M: float
    m: float

    def frame_energy(self, p) -> np.ndarray:
        return _sq(p) / (2 * self.M) if np.isfinite(self.M) else np.zeros(np.shape(p)[:-1])

    def system_energy(self, p) -> np.ndarray:
        return _sq(p) / (2 * self.m)


@dataclass(frozen=True)
class Relativistic:
    """Massive scalar system, c = 1; the frame's kinetic energy is neglected."""

    m: float

    def frame_energy(self, p) -> np.ndarray:
        return np.zeros(np.shape(p)[:-1])

    def system_energy(self, p) -> np.ndarray:
        return np.sqrt(_sq(p) + self.m**2)


# -- momentum-only universes ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class MomentumUniverse:
    R_grid: MomentumGrid
    S_grid: MomentumGrid
    coeffs: np.ndarray
    pairing: tuple[int, ...]  # R index paired with each S index
    global_state: StateVector

    def total_momentum_residual(self) -> float:
        P = self.R_grid.values[:, None] + self.S_grid.values[None, :]
        return float(np.linalg.norm(P.ravel() * self.global_state.amplitudes))


def _pair_index(R: MomentumGrid, p: float) -> int:
    i = R.index_of(-p)
    if i is None:
        raise ConstraintError(f"system momentum {p:.12g} has no partner {-p:.12g} on the frame grid")
    return i


def momentum_constrained_universe(R_grid: MomentumGrid, S_grid: MomentumGrid, coeffs) -> MomentumUniverse:
    """sum_k c_k |-p_k>_R |p_k>_S; frame modes without a partner stay empty."""
    c = np.asarray(coeffs, dtype=complex)
    if c.shape != (S_grid.d,):
        raise ShapeError(f"need {S_grid.d} coefficients")
    if abs(np.linalg.norm(c) - 1) > 1e-10:
        raise ValueError("coefficients must be normalized")
    if R_grid.d < S_grid.d:
        raise ConstraintError("the frame grid must be at least as large as the system grid")
    pairing = tuple(_pair_index(R_grid, p) for p in S_grid.values)
    amps = np.zeros((R_grid.d, S_grid.d), dtype=complex)
    for k, i in enumerate(pairing):
        amps[i, k] = c[k]
    u = MomentumUniverse(R_grid, S_grid, c, pairing, StateVector(amps.ravel(), (R_grid.d, S_grid.d)))
    if u.total_momentum_residual() > 1e-12 * max(1.0, float(np.max(np.abs(S_grid.values)))):
        raise NumericContractError("total momentum constraint violated")
    return u


def momentum_relative_state(u: MomentumUniverse, x: float) -> StateVector:
    """System state conditioned on the frame reading position x (unnormalized bra)."""
    bra = u.R_grid.as_spectrum().ket_amplitudes(x)[0].conj()
    return StateVector(bra @ u.global_state.tensor())


def relative_position_probability(
    u: MomentumUniverse, x: float, y: float, discrete: bool = True, D_S: int | None = None, D_R: int | None = None
) -> float:
    """P(system at y | frame at x); a probability on the lattice or a density on [0, L_S)."""
    if discrete:
        D_S = u.S_grid.d if D_S is None else D_S
        D_R = u.R_grid.d if D_R is None else D_R
        position_family(u.R_grid, D_R).index_of(x)
        position_family(u.S_grid, D_S).index_of(y)
    phi = momentum_relative_state(u, x).amplitudes
    wave = np.exp(1j * np.mod(u.S_grid.values * y / u.S_grid.hbar, TWO_PI)) @ phi
    norm = float(np.vdot(phi, phi).real)
    scale = 1.0 / D_S if discrete else 1.0 / u.S_grid.L
    return float(scale * abs(wave) ** 2 / norm)


# -- energy + momentum universes ---------------------------------------------------


def snap_to_lattice(values, tol: float, max_denominator: int = 1 << 24):
    """Put every value on a common lattice E0 + q r with integer r >= 0.

    E0 is the smallest value. Each gap ratio to the largest gap is replaced by
    its best rational approximation under a growing denominator bound, until
    every value is within ``tol``. Returns (E0, q, labels, max snap error).
    """
    v = np.asarray(values, dtype=float)
    E0 = float(np.min(v))
    span = float(np.max(v) - E0)
    if span <= tol:
        return E0, None, np.zeros(v.size, dtype=np.int64), span
    ratios = (v - E0) / span
    bound = 1
    while bound <= max_denominator:
        fracs = [Fraction(float(r)).limit_denominator(bound) for r in ratios]
        N = lcm(*(f.denominator for f in fracs))
        labels = np.array([int(f * N) for f in fracs], dtype=np.int64)
        q = span / N
        err = float(np.max(np.abs(E0 + q * labels - v)))
        if err <= tol:
            return E0, q, labels, err
        bound *= 2
    raise ConstraintError(f"energies are not commensurate to within {tol:.3e} on any lattice with denominator <= {max_denominator}")


@dataclass(frozen=True, eq=False)
class SpacetimeUniverse:
    clock: ClockSpectrum
    R_grids: tuple[MomentumGrid, ...]
    S_grids: tuple[MomentumGrid, ...]
    coeffs: np.ndarray  # shape of the S grid tensor
    dispersion: object
    modes: np.ndarray  # populated S multi-indices, K x n_axes
    energies: np.ndarray  # exact mode energies eps_k
    clock_index: np.ndarray  # clock level hosting -eps_k
    snap_error: float
    global_state: StateVector

    @property
    def n_axes(self) -> int:
        return len(self.S_grids)

    @property
    def R_dims(self) -> tuple[int, ...]:
        return tuple(g.d for g in self.R_grids)

    @property
    def S_dims(self) -> tuple[int, ...]:
        return tuple(g.d for g in self.S_grids)

    def system_momenta(self) -> np.ndarray:
        return _grid_points(self.S_grids)

    def frame_momenta(self) -> np.ndarray:
        return _grid_points(self.R_grids)

    def mode_momenta(self) -> np.ndarray:
        return np.stack([g.values[self.modes[:, a]] for a, g in enumerate(self.S_grids)], axis=1)

    def mode_coeffs(self) -> np.ndarray:
        return self.coeffs[tuple(self.modes.T)]

    def frame_hamiltonian(self) -> Operator:
        return Operator.diagonal(self.dispersion.frame_energy(self.frame_momenta()))

    def system_hamiltonian(self) -> Operator:
        return Operator.diagonal(self.dispersion.system_energy(self.system_momenta()))

    def amplitude_tensor(self) -> np.ndarray:
        """Global amplitudes as (clock, frame flat, system flat)."""
        return self.global_state.amplitudes.reshape(self.clock.d, int(np.prod(self.R_dims)), int(np.prod(self.S_dims)))

    def energy_residual(self) -> float:
        E = (
            self.clock.energies[:, None, None]
            + self.dispersion.frame_energy(self.frame_momenta())[None, :, None]
            + self.dispersion.system_energy(self.system_momenta())[None, None, :]
        )
        return float(np.linalg.norm(E * self.amplitude_tensor()))

    def momentum_residuals(self) -> list[float]:
        pR, pS = self.frame_momenta(), self.system_momenta()
        A = self.amplitude_tensor()
        return [float(np.linalg.norm((pR[:, a][None, :, None] + pS[:, a][None, None, :]) * A)) for a in range(self.n_axes)]


def _grid_points(grids: Sequence[MomentumGrid]) -> np.ndarray:
    mesh = np.meshgrid(*[g.values for g in grids], indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def build_spacetime_universe(
    R_grids: MomentumGrid | Sequence[MomentumGrid],
    S_grids: MomentumGrid | Sequence[MomentumGrid],
    coeffs,
    dispersion,
    *,
    d_C: int | None = None,
    T: float | None = None,
    snap_tol: float | None = None,
) -> SpacetimeUniverse:
    """Clock (x) frame (x) system state annihilated by total energy and by total momentum per axis.

    Mode energies eps_k = frame(-p_k) + system(p_k) are placed on a clock
    lattice. Without ``T`` the lattice is found by rational snapping with
    tolerance ``snap_tol`` (default 1e-12 of the largest |eps|); with ``T``
    the given period must already host every -eps_k within that tolerance.
    """
    R = (R_grids,) if isinstance(R_grids, MomentumGrid) else tuple(R_grids)
    S = (S_grids,) if isinstance(S_grids, MomentumGrid) else tuple(S_grids)
    if len(R) != len(S) or len(S) not in (1, 3):
        raise ShapeError("use one or three spatial axes, the same for frame and system")
    R_dims, S_dims = tuple(g.d for g in R), tuple(g.d for g in S)
    for dims in (R_dims, S_dims):
        if int(np.prod(dims)) > MAX_FACTOR_DIM:
            raise ShapeError(f"factor dimension {int(np.prod(dims))} exceeds {MAX_FACTOR_DIM}")
    c = np.array(coeffs, dtype=complex).reshape(S_dims)
    if abs(np.linalg.norm(c) - 1) > 1e-10:
        raise ValueError("coefficients must be normalized")

    modes = np.argwhere(np.abs(c) > 0)
    pS = np.stack([g.values[modes[:, a]] for a, g in enumerate(S)], axis=1)
    R_idx = np.array([[_pair_index(R[a], p[a]) for a in range(len(S))] for p in pS], dtype=np.int64)
    eps = np.asarray(dispersion.frame_energy(-pS) + dispersion.system_energy(pS), dtype=float)

    scale = max(1.0, float(np.max(np.abs(eps))))
    tol = 1e-12 * scale if snap_tol is None else snap_tol
    targets = -eps
    if T is None:
        E0, q, labels, err = snap_to_lattice(targets, tol)
        T = TWO_PI / q if q is not None else TWO_PI / scale
    else:
        q = TWO_PI / T
        E0 = float(np.min(targets))
        raw = (targets - E0) / q
        labels = np.rint(raw).astype(np.int64)
        err = float(np.max(np.abs(raw - labels))) * q
        if err > tol:
            raise ConstraintError(f"period {T} cannot host the mode energies (snap error {err:.3e})")
    used = sorted(set(labels.tolist()))
    n_levels = max(len(used), 1 if d_C is None else int(d_C))
    full = set(used)
    r = 0
    while len(full) < n_levels:
        full.add(r)
        r += 1
    clock = ClockSpectrum(E0, float(T), tuple(sorted(full)))
    index = {lab: i for i, lab in enumerate(clock.labels)}
    c_idx = np.array([index[int(lab)] for lab in labels], dtype=np.int64)

    amps = np.zeros((clock.d, *R_dims, *S_dims), dtype=complex)
    for k, mode in enumerate(modes):
        amps[(c_idx[k], *R_idx[k], *mode)] = c[tuple(mode)]
    state = StateVector(amps.ravel(), (clock.d, int(np.prod(R_dims)), int(np.prod(S_dims))))
    c.flags.writeable = False
    su = SpacetimeUniverse(clock, R, S, c, dispersion, modes, eps, c_idx, float(err), state)

    bound = 1e-10 * scale
    if max(su.momentum_residuals()) > bound:
        raise NumericContractError("total momentum constraint violated")
    if su.energy_residual() > max(bound, 2 * err):
        raise NumericContractError(f"energy constraint residual {su.energy_residual():.3e} too large")
    return su


def _plane_waves(grids: Sequence[MomentumGrid], pos) -> np.ndarray:
    """exp(i p . pos / hbar) over the flattened grid tensor."""
    pos = np.atleast_1d(np.asarray(pos, dtype=float))
    if pos.shape != (len(grids),):
        raise ShapeError(f"position needs {len(grids)} components")
    out = np.ones(1, dtype=complex)
    for g, x in zip(grids, pos):
        out = np.kron(out, np.exp(1j * np.mod(g.values * x / g.hbar, TWO_PI)))
    return out


def clock_relative_state(su: SpacetimeUniverse, t: float) -> StateVector:
    """Frame+system state conditioned on clock reading t."""
    bra = su.clock.ket_amplitudes(np.mod(t, su.clock.period_T))[0].conj()
    A = su.amplitude_tensor()
    return StateVector(np.tensordot(bra, A, axes=1).ravel(), (A.shape[1], A.shape[2]))


def system_relative_state(su: SpacetimeUniverse, t: float, x) -> StateVector:
    """System momentum amplitudes conditioned on clock t and frame position x."""
    bra_C = su.clock.ket_amplitudes(np.mod(t, su.clock.period_T))[0].conj()
    bra_R = _plane_waves(su.R_grids, x)
    return StateVector(np.einsum("i,r,irs->s", bra_C, bra_R, su.amplitude_tensor()))


def _per_axis(grids, D) -> list[int]:
    if D is None:
        return [g.d for g in grids]
    return [int(D)] * len(grids) if np.isscalar(D) else [int(n) for n in D]


def _check_lattice(grids, pos, D) -> None:
    pts = np.atleast_2d(np.asarray(pos, dtype=float).reshape(-1, len(grids)))
    for a, (g, n) in enumerate(zip(grids, _per_axis(grids, D))):
        fam = position_family(g, n)
        for x in np.unique(pts[:, a]):
            fam.index_of(float(x))


def _plane_wave_table(grids: Sequence[MomentumGrid], pts: np.ndarray) -> np.ndarray:
    """Rows exp(i p . pos / hbar) over the flattened grid tensor, one per point."""
    out = np.ones((pts.shape[0], 1), dtype=complex)
    for a, g in enumerate(grids):
        w = np.exp(1j * np.mod(np.outer(pts[:, a], g.values) / g.hbar, TWO_PI))
        out = (out[:, :, None] * w[:, None, :]).reshape(pts.shape[0], -1)
    return out


def joint_probability_table(
    su: SpacetimeUniverse, ts, xs, ys, discrete: bool = True, D_S=None, D_R=None
) -> np.ndarray:
    """P(system at y | clock at t, frame at x) for every (t, x, y) combination.

    ``xs`` and ``ys`` hold one position per row (a plain list in one dimension).
    The result has shape (len(ts), len(xs), len(ys)).
    """
    n = su.n_axes
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    xs = np.asarray(xs, dtype=float).reshape(-1, n)
    ys = np.asarray(ys, dtype=float).reshape(-1, n)
    if not (np.all(np.isfinite(ts)) and np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise ValueError("query must be finite")
    S = su.S_grids
    if discrete:
        _check_lattice(su.R_grids, xs, D_R)
        _check_lattice(S, ys, D_S)
        scale = 1.0 / float(np.prod(_per_axis(S, D_S)))
    else:
        scale = 1.0 / float(np.prod([g.L for g in S]))
    bra_C = su.clock.ket_amplitudes(np.mod(ts, su.clock.period_T)).conj()
    bra_R = _plane_wave_table(su.R_grids, xs)
    phi = np.einsum("ti,xr,irs->txs", bra_C, bra_R, su.amplitude_tensor())
    wave = phi @ _plane_wave_table(S, ys).T
    norm = np.sum(np.abs(phi) ** 2, axis=2)
    return scale * np.abs(wave) ** 2 / norm[:, :, None]


def joint_conditional_probability(
    su: SpacetimeUniverse, t: float, x, y, discrete: bool = True, D_S=None, D_R=None
) -> float:
    """P(system at y | clock at t, frame at x); lattice probability or a density."""
    return float(joint_probability_table(su, [t], [x], [y], discrete, D_S, D_R)[0, 0, 0])


def clock_frame_system_probability(su: SpacetimeUniverse, t: float, x, y, D_R=None, D_S=None) -> float:
    """P(frame at x, system at y | clock at t), both on their position lattices."""
    S, R = su.S_grids, su.R_grids
    DR, DS = _per_axis(R, D_R), _per_axis(S, D_S)
    _check_lattice(R, x, DR)
    _check_lattice(S, y, DS)
    psi = clock_relative_state(su, t).amplitudes.reshape(int(np.prod(su.R_dims)), int(np.prod(su.S_dims)))
    amp = _plane_waves(R, x) @ psi @ _plane_waves(S, y)
    return float(abs(amp) ** 2 / (np.prod(DR) * np.prod(DS)) / np.vdot(psi, psi).real)


def dispersion_residual(su: SpacetimeUniverse, k: int) -> float:
    """eps_k^2 - |p_k|^2 - m^2 for populated mode k of a relativistic universe."""
    if not isinstance(su.dispersion, Relativistic):
        raise TypeError("the residual is defined for the relativistic dispersion only")
    p = su.mode_momenta()[k]
    return float(su.energies[k] ** 2 - p @ p - su.dispersion.m**2)


def klein_gordon_stencil(su: SpacetimeUniverse, t: float, x, y, h: float, axis: int = 0) -> tuple[complex, complex]:
    """(d_t^2 - laplacian_y) psi and -m^2 psi for the conditioned wavefunction psi(t, y).

    Derivatives are fourth-order central differences of step h; the Laplacian
    runs over every spatial axis.
    """
    if not isinstance(su.dispersion, Relativistic):
        raise TypeError("the stencil check is defined for the relativistic dispersion only")
    y = np.atleast_1d(np.asarray(y, dtype=float))

    def psi(tt, yy):
        phi = system_relative_state(su, tt, x).amplitudes
        return complex(_plane_waves(su.S_grids, yy) @ phi)

    w = np.array([-1, 16, -30, 16, -1]) / (12 * h * h)
    offs = np.arange(-2, 3) * h
    d_tt = sum(wi * psi(t + o, y) for wi, o in zip(w, offs))
    lap = 0.0
    for a in range(len(y)):
        e = np.zeros_like(y)
        e[a] = 1.0
        lap += sum(wi * psi(t, y + o * e) for wi, o in zip(w, offs))
    return d_tt - lap, -su.dispersion.m**2 * psi(t, y)
