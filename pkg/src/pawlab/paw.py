"""Energy-constrained clock+system universes and the dynamics seen from inside them."""

from __future__ import annotations

from dataclasses import dataclass
from math import lgamma
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .clockwork import ClockSpectrum, ComplementFamily, TWO_PI
from .errors import ConstraintError, NumericContractError, ShapeError
from .hilbert import (
    HERMITIAN_TOL,
    Operator,
    Spectrum,
    StateVector,
    eigh,
    is_projector,
    tensor_product,
    unitary_from_hamiltonian,
)

LABEL_TOL = 1e-9
CONSTRAINT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ConstrainedUniverse:
    clock: ClockSpectrum
    system_H: Operator
    system_spectrum: Spectrum
    coeffs: np.ndarray
    pairing: tuple[int, ...]  # clock level index paired with each system eigenvector
    global_state: StateVector

    @property
    def d_C(self) -> int:
        return self.clock.d

    @property
    def d_S(self) -> int:
        return self.system_H.dim

    def hamiltonian(self) -> Operator:
        return tensor_product(self.clock.hamiltonian(), Operator.identity(self.d_S)) + tensor_product(
            Operator.identity(self.d_C), self.system_H
        )

    def constraint_residual(self) -> float:
        return self.hamiltonian().apply(self.global_state).norm()

    def amplitude_matrix(self) -> np.ndarray:
        """Global amplitudes as a d_C x d_S array."""
        return self.global_state.tensor()


@dataclass(frozen=True, eq=False)
class RelativeState:
    t: float
    state: StateVector


def _check_coeffs(coeffs, n: int) -> np.ndarray:
    c = np.asarray(coeffs, dtype=complex)
    if c.shape != (n,):
        raise ShapeError(f"need {n} coefficients, got shape {c.shape}")
    if abs(np.linalg.norm(c) - 1.0) > 1e-10:
        raise ValueError("coefficients must be normalized")
    return c


def _labels_for_levels(E: np.ndarray, T: float, hbar: float) -> tuple[float, np.ndarray]:
    """Clock E0 and integer labels putting a level at -E_k for every k."""
    E0 = -float(np.max(E))
    q = hbar * TWO_PI / T
    raw = (-E - E0) / q
    labels = np.rint(raw)
    bad = np.abs(raw - labels) > LABEL_TOL * np.maximum(1.0, np.abs(raw))
    if np.any(bad):
        k = int(np.argmax(bad))
        nearest = E0 + q * labels[k]
        raise ConstraintError(
            f"system level {E[k]:.12g} needs a clock level at {-E[k]:.12g}, which is not on the "
            f"lattice E0 + r*{q:.6g}; nearest representable is {nearest:.12g} "
            f"(constraint residual {abs(nearest + E[k]):.3e} per unit amplitude)"
        )
    return E0, labels.astype(np.int64)


def _fill_labels(used: Sequence[int], d_C: int) -> tuple[int, ...]:
    labels = set(int(r) for r in used)
    r = 0
    while len(labels) < d_C:
        labels.add(r)
        r += 1
    return tuple(sorted(labels))


def build_universe(
    system_H: Operator,
    coeffs,
    *,
    d_C: int | None = None,
    T: float | None = None,
    clock: ClockSpectrum | None = None,
    hbar: float = 1.0,
) -> ConstrainedUniverse:
    """Global state sum_k c_k |E=-E_k>_C |E_k>_S annihilated by H_C + H_S.

    ``coeffs`` are amplitudes on the eigenvectors of ``system_H`` in ascending
    energy order. Either pass a ready ``clock`` whose levels already host every
    -E_k, or a period ``T`` from which the clock lattice is derived; unused
    clock levels are filled from the lowest free labels up to ``d_C``.
    """
    spec = eigh(system_H)
    E = spec.eigenvalues
    d_S = system_H.dim
    c = _check_coeffs(coeffs, d_S)

    if clock is None:
        if T is None:
            raise ValueError("give either a clock or a period T")
        E0, labels = _labels_for_levels(E, float(T), hbar)
        need = sorted(set(labels.tolist()))
        d_C = max(need[-1] + 1, d_S + 1) if d_C is None else int(d_C)
        if d_C <= d_S:
            raise ConstraintError(f"clock dimension {d_C} must exceed system dimension {d_S}")
        if d_C < len(need):
            raise ConstraintError(f"clock dimension {d_C} cannot host {len(need)} distinct levels")
        clock = ClockSpectrum(E0, float(T), _fill_labels(need, d_C), hbar)
    else:
        if clock.d <= d_S:
            raise ConstraintError(f"clock dimension {clock.d} must exceed system dimension {d_S}")
        raw = (-E - clock.E0) / clock.quantum
        labels = np.rint(raw).astype(np.int64)
        for k in range(d_S):
            if labels[k] not in clock.labels or abs(raw[k] - labels[k]) > LABEL_TOL * max(1.0, abs(raw[k])):
                near = min(clock.energies, key=lambda e: abs(e + E[k]))
                raise ConstraintError(
                    f"system level {E[k]:.12g} has no clock partner at {-E[k]:.12g}; nearest clock "
                    f"level is {near:.12g} (constraint residual {abs(near + E[k]):.3e} per unit amplitude)"
                )

    index = {r: i for i, r in enumerate(clock.labels)}
    pairing = tuple(index[int(r)] for r in labels)
    amps = np.zeros((clock.d, d_S), dtype=complex)
    for k in range(d_S):
        amps[pairing[k]] += c[k] * spec.eigenvectors[:, k]
    psi = StateVector(amps.ravel(), (clock.d, d_S))
    u = ConstrainedUniverse(clock, system_H, spec, c, pairing, psi)
    res = u.constraint_residual()
    if res > CONSTRAINT_TOL * max(1.0, float(np.max(np.abs(E)))):
        raise NumericContractError(f"constraint residual {res:.3e} exceeds tolerance")
    return u


def relative_state(u: ConstrainedUniverse, t: float) -> RelativeState:
    """<t~|Psi>, the system state conditioned on the clock reading t.

    The clock reading is reduced modulo the period first, so the result is
    exactly periodic.
    """
    t_red = float(np.mod(t, u.clock.period_T))
    bra = u.clock.ket_amplitudes(t_red)[0].conj()
    return RelativeState(float(t), StateVector(bra @ u.amplitude_matrix()))


def relative_state_on_family(u: ConstrainedUniverse, family: ComplementFamily, m: int) -> StateVector:
    """sqrt(d_C) <alpha_m|Psi> for one member of a clock family."""
    if family.spectrum != u.clock:
        raise ShapeError("family was built on a different clock")
    bra = family.amplitudes[m].conj() * np.sqrt(u.d_C)
    return StateVector(bra @ u.amplitude_matrix())


def verify_schrodinger(u: ConstrainedUniverse, t0: float, t: float) -> float:
    """|| phi(t) - U_S(t - t0) phi(t0) ||."""
    phi0 = relative_state(u, t0).state
    phi = relative_state(u, t).state
    U = unitary_from_hamiltonian(u.system_H, t - t0, u.clock.hbar)
    return float(np.linalg.norm(phi.amplitudes - U.apply(phi0).amplitudes))


def conditional_probability(u: ConstrainedUniverse, t: float, effect: Operator) -> float:
    if effect.dim != u.d_S:
        raise ShapeError("effect must act on the system")
    if not is_projector(effect, HERMITIAN_TOL):
        raise ValueError("effect must be an orthogonal projector")
    phi = relative_state(u, t).state
    return float(effect.expectation(phi).real / phi.norm() ** 2)


@dataclass(frozen=True)
class SpeedLimit:
    bound: float
    first_orthogonal_t: float | None


def _overlap(u: ConstrainedUniverse, dt):
    w = np.abs(u.coeffs) ** 2
    E = u.system_spectrum.eigenvalues
    return np.abs(np.exp(-1j * np.outer(np.atleast_1d(dt), E) / u.clock.hbar) @ w)


def speed_limit(u: ConstrainedUniverse, t0: float = 0.0, grid_N: int = 10_000, zero_tol: float = 1e-6) -> SpeedLimit:
    """Minimal time to reach an orthogonal state, and the first time it happens.

    The bound is max(pi hbar / 2(<E> - E_ground), pi hbar / 2 dE). Orthogonality
    is searched on a uniform grid over one period, each local minimum of the
    overlap modulus being refined by a bounded scalar minimization.
    """
    hbar = u.clock.hbar
    E = u.system_spectrum.eigenvalues
    w = np.abs(u.coeffs) ** 2
    mean = float(w @ E)
    spread = float(np.sqrt(max(w @ E**2 - mean**2, 0.0)))
    excess = mean - float(E[0])
    bound = max(
        np.pi * hbar / (2 * excess) if excess > 0 else np.inf,
        np.pi * hbar / (2 * spread) if spread > 0 else np.inf,
    )

    T = u.clock.period_T
    h = T / grid_N
    grid = np.arange(1, grid_N + 1) * h
    ov = _overlap(u, grid)
    first = None
    padded = np.concatenate([[1.0], ov, [np.inf]])
    minima = np.nonzero((padded[1:-1] <= padded[:-2]) & (padded[1:-1] <= padded[2:]))[0]
    for j in minima:
        lo, hi = grid[j] - h, grid[j] + h
        res = minimize_scalar(lambda s: float(_overlap(u, s)[0]), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-13 * T})
        if ov[j] <= zero_tol:
            first = float(grid[j]) if ov[j] <= res.fun else float(res.x)
        elif res.fun <= zero_tol:
            first = float(res.x)
        if first is not None:
            break
    if first is not None and first < bound * (1 - 1e-9):
        raise NumericContractError(f"orthogonal after {first:.6g}, below the speed limit {bound:.6g}")
    return SpeedLimit(float(bound), None if first is None else t0 + first)


# -- interacting clock and system ----------------------------------------------


@dataclass(frozen=True, eq=False)
class InteractingUniverse:
    clock: ClockSpectrum
    system_H: Operator
    H_int: Operator
    global_state: StateVector

    @property
    def d_S(self) -> int:
        return self.system_H.dim

    def hamiltonian(self) -> Operator:
        d_C, d_S = self.clock.d, self.d_S
        return (
            tensor_product(self.clock.hamiltonian(), Operator.identity(d_S))
            + tensor_product(Operator.identity(d_C), self.system_H)
            + self.H_int
        )

    def constraint_residual(self) -> float:
        return self.hamiltonian().apply(self.global_state).norm()


def gravitational_universe(
    clock: ClockSpectrum, clock_levels: Sequence[int], coeffs, strength: float
) -> InteractingUniverse:
    """Universe constrained by H_C + H_S - strength * H_C (x) H_S.

    Each chosen clock level E_C pairs with a system level E = -E_C / (1 - strength E_C),
    so the coupled constraint holds exactly.
    """
    c = _check_coeffs(coeffs, len(clock_levels))
    Ec = clock.energies[list(clock_levels)]
    if np.any(np.abs(1 - strength * Ec) < 1e-12):
        raise ConstraintError("coupling strength puts a level at infinity")
    E_S = -Ec / (1 - strength * Ec)
    H_S = Operator.diagonal(E_S)
    H_int = tensor_product(clock.hamiltonian(), H_S).scaled(-strength)
    amps = np.zeros((clock.d, len(E_S)), dtype=complex)
    for k, i in enumerate(clock_levels):
        amps[i, k] = c[k]
    psi = StateVector(amps.ravel(), (clock.d, len(E_S)))
    return InteractingUniverse(clock, H_S, H_int, psi)


def coupling_kernel(u: InteractingUniverse, t: float, t_prime: float) -> Operator:
    """K(t, t') = <t~| H_int |t~'>, an operator on the system."""
    d_C, d_S = u.clock.d, u.d_S
    bra = u.clock.ket_amplitudes(t)[0].conj()
    ket = u.clock.ket_amplitudes(t_prime)[0]
    blocks = u.H_int.matrix.reshape(d_C, d_S, d_C, d_S)
    return Operator(np.einsum("i,iajb,j->ab", bra, blocks, ket))


def interacting_relative_state(u: InteractingUniverse, t) -> np.ndarray:
    bra = u.clock.ket_amplitudes(t).conj()
    return bra @ u.global_state.tensor()


@dataclass(frozen=True, eq=False)
class InteractionRHS:
    value: StateVector
    quadrature_error: float


def interaction_rhs(u: InteractingUniverse, t: float, grid_N: int = 2048, tol: float = 1e-8) -> InteractionRHS:
    """H_S phi(t) + (1/T) integral of K(t, t') phi(t') dt' by the periodic trapezoid rule.

    The error estimate compares grid_N against grid_N // 2 nodes.
    """
    res = u.constraint_residual()
    if res > tol:
        raise ConstraintError(f"global state violates the constraint by {res:.3e}")

    def nonlocal_term(N: int) -> np.ndarray:
        nodes = np.arange(N) * (u.clock.period_T / N)
        kets = u.clock.ket_amplitudes(nodes)  # N x d_C
        phis = interacting_relative_state(u, nodes)  # N x d_S
        chi = kets.T @ phis / N  # (1/N) sum_j |t~_j> (x) phi(t_j)
        chi = u.H_int.matrix @ chi.ravel()
        bra = u.clock.ket_amplitudes(t)[0].conj()
        return bra @ chi.reshape(u.clock.d, u.d_S)

    phi = interacting_relative_state(u, t)[0]
    fine = nonlocal_term(grid_N)
    coarse = nonlocal_term(max(grid_N // 2, 1))
    value = u.system_H.matrix @ phi + fine
    return InteractionRHS(StateVector(value), float(np.max(np.abs(fine - coarse))))


# -- two spins ---------------------------------------------------------------


def _spin_x_top(two_s: int) -> np.ndarray:
    # <m|S_x = s> in the basis m = s, s-1, ..., -s: binomial amplitudes
    n = np.arange(two_s + 1)
    log_amp = 0.5 * (lgamma(two_s + 1) - np.array([lgamma(k + 1) + lgamma(two_s - k + 1) for k in n])) - 0.5 * two_s * np.log(2)
    return np.exp(log_amp)


def spin_operators(two_s: int) -> tuple[Operator, Operator]:
    """(S_x, S_z) for spin two_s/2 in the basis m = s, ..., -s."""
    s = two_s / 2
    m = s - np.arange(two_s + 1)
    sp = np.zeros((two_s + 1, two_s + 1))
    for i in range(1, two_s + 1):
        sp[i - 1, i] = np.sqrt(s * (s + 1) - m[i] * (m[i] + 1))
    return Operator((sp + sp.T) / 2), Operator.diagonal(m)


def wootters_universe(two_s: int) -> StateVector:
    """Zero total S_z state of two spins precessing together about z.

    This is the projection onto zero total S_z of the product of two spins
    both pointing along +x.
    """
    if two_s < 1:
        raise ValueError("spin must be at least 1/2")
    a = _spin_x_top(two_s)
    d = two_s + 1
    amps = np.zeros((d, d))
    idx = np.arange(d)
    amps[idx, d - 1 - idx] = a * a[::-1]
    amps /= np.linalg.norm(amps)
    return StateVector(amps.ravel(), (d, d))


def wootters_agreement(two_s: int) -> float:
    """P(system along +x with maximal projection | clock along +x with maximal projection)."""
    psi = wootters_universe(two_s)
    top = _spin_x_top(two_s)
    cond = top @ psi.tensor()  # system amplitudes after the clock reads +x
    return float(abs(top @ cond) ** 2 / np.vdot(cond, cond).real)
