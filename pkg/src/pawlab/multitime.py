"""Two-time measurement statistics inside a constrained universe.

Two prescriptions are offered. The external-time average conditions on a
first clock+system event and averages the Heisenberg-picture second event
over the clock lattice. The memory construction instead writes measurement
records into ancilla registers, piecewise in clock time, and reads them at
the end. Both should reproduce the ordinary two-time propagator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clockwork import ComplementFamily, complement_family
from .errors import ConstraintError, ShapeError
from .hilbert import StateVector, unitary_from_hamiltonian
from .paw import ConstrainedUniverse, relative_state_on_family


@dataclass(frozen=True, eq=False)
class TwoTimeQuery:
    """Outcome ``first`` at clock reading t1, then ``second`` at t2.

    Outcomes are column indices into an orthonormal ``basis`` of the system
    (``second_basis`` for the later measurement, defaulting to ``basis``).
    """

    t1: float
    t2: float
    basis: np.ndarray
    first: int
    second: int
    second_basis: np.ndarray | None = None

    def __post_init__(self):
        B = np.array(self.basis, dtype=complex)
        B2 = B if self.second_basis is None else np.array(self.second_basis, dtype=complex)
        for M in (B, B2):
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise ShapeError("measurement basis must be a square matrix of columns")
            if np.max(np.abs(M.conj().T @ M - np.eye(M.shape[0]))) > 1e-10:
                raise ShapeError("measurement basis must be orthonormal")
        B.flags.writeable = False
        B2.flags.writeable = False
        object.__setattr__(self, "basis", B)
        object.__setattr__(self, "second_basis", B2)

    @property
    def a(self) -> np.ndarray:
        return self.basis[:, self.first]

    @property
    def b(self) -> np.ndarray:
        return self.second_basis[:, self.second]


def default_family(u: ConstrainedUniverse) -> ComplementFamily:
    return complement_family(u.clock, max(u.clock.d, u.clock.r_max + 1), 0.0)


def propagator_probability(u: ConstrainedUniverse, q: TwoTimeQuery) -> float:
    """|<b| exp(-i H_S (t2 - t1)/hbar) |a>|^2, the textbook answer."""
    U = unitary_from_hamiltonian(u.system_H, q.t2 - q.t1, u.clock.hbar)
    return float(abs(np.vdot(q.b, U.matrix @ q.a)) ** 2)


def _lattice_steps(family: ComplementFamily, q: TwoTimeQuery) -> tuple[int, int]:
    if q.t2 < q.t1:
        raise ValueError("the second measurement must not precede the first")
    return family.index_of(q.t1), family.index_of(q.t2)


def gppt_two_time(u: ConstrainedUniverse, q: TwoTimeQuery, family: ComplementFamily | None = None) -> float:
    """External-time averaged conditional probability of the second outcome.

    The Heisenberg-evolved second projector is averaged over the lattice of
    clock shifts T/D. For an orthogonal clock only the shift that carries t1
    onto t2 survives, and the result is exact; for a covariant POVM clock the
    neighbouring shifts leak in with their state overlaps.
    """
    family = default_family(u) if family is None else family
    m1, m2 = _lattice_steps(family, q)
    clock, d_S, D = u.clock, u.d_S, family.D
    alpha = family.amplitudes

    # first event applied to the global state: |alpha_m1> (x) |a><a| <alpha_m1|Psi>
    cond = alpha[m1].conj() @ u.amplitude_matrix()
    amp = np.vdot(q.a, cond)
    if abs(amp) < 1e-14:
        raise ValueError("the first event has zero probability")
    chi = np.outer(alpha[m1], q.a) * amp

    num = den = 0.0
    shifts = np.arange(D) * (clock.period_T / D)
    clock_phases = clock.ket_amplitudes(shifts)  # e^{-i E_C s}
    for s in range(D):
        evolved = (clock_phases[s][:, None] * chi) @ unitary_from_hamiltonian(u.system_H, shifts[s], clock.hbar).matrix.T
        c_amp = alpha[m2].conj() @ evolved  # clock projected on alpha_m2
        den += float(np.vdot(c_amp, c_amp).real)
        num += float(abs(np.vdot(q.b, c_amp)) ** 2)
    if den == 0.0:
        raise ValueError("the second clock reading is never reached")
    return num / den


@dataclass(frozen=True)
class MemoryLayout:
    """Dimensions of the two memory registers and their ready states."""

    memory_dim: int
    ready_index: int

    @classmethod
    def for_outcomes(cls, n: int) -> "MemoryLayout":
        # one slot per outcome plus an orthogonal ready slot at the end
        return cls(n + 1, n)


def _require_orthogonal(family: ComplementFamily) -> None:
    if not family.is_orthogonal:
        raise ConstraintError("the memory construction needs orthogonal clock states (equally spaced, D = d)")


def glm_global_state(
    u: ConstrainedUniverse, q: TwoTimeQuery, layout: MemoryLayout | None = None, family: ComplementFamily | None = None
) -> StateVector:
    """Piecewise global state on C (x) Q (x) M1 (x) M2.

    Before t1 the memories sit in their ready state; at t1 the first memory
    copies the measured outcome and the system continues from the selected
    basis state; at t2 the second memory does the same.
    """
    family = default_family(u) if family is None else family
    _require_orthogonal(family)
    m1, m2 = _lattice_steps(family, q)
    if m2 < m1:
        raise ValueError("t2 must come after t1 within one clock period")
    d, d_S = family.D, u.d_S
    layout = MemoryLayout.for_outcomes(d_S) if layout is None else layout
    if layout.memory_dim < d_S:
        raise ShapeError("memory must have at least one slot per outcome")
    M, r = layout.memory_dim, layout.ready_index
    hbar, H = u.clock.hbar, u.system_H
    step = u.clock.period_T / d
    B, B2 = q.basis, q.second_basis

    phi1 = relative_state_on_family(u, family, m1).amplitudes
    first_amps = B.conj().T @ phi1  # <a|phi(t1)>
    between = unitary_from_hamiltonian(H, (m2 - m1) * step, hbar).matrix
    # joint amplitude <b|U(t2 - t1)|a><a|phi(t1)>
    joint = (B2.conj().T @ between @ B) * first_amps[None, :]

    psi = np.zeros((d, d_S, M, M), dtype=complex)
    for m in range(d):
        if m < m1:
            psi[m, :, r, r] = relative_state_on_family(u, family, m).amplitudes
        elif m < m2:
            U = unitary_from_hamiltonian(H, (m - m1) * step, hbar).matrix
            for a in range(d_S):
                psi[m, :, a, r] += first_amps[a] * (U @ B[:, a])
        else:
            U = unitary_from_hamiltonian(H, (m - m2) * step, hbar).matrix
            for a in range(d_S):
                for b in range(d_S):
                    psi[m, :, a, b] += joint[b, a] * (U @ B2[:, b])
    # slices carry the 1/sqrt(d) weight of an orthogonal clock
    psi /= np.sqrt(d)
    return StateVector(psi.ravel(), (d, d_S, M, M))


def glm_two_time(
    u: ConstrainedUniverse,
    q: TwoTimeQuery,
    layout: MemoryLayout | None = None,
    family: ComplementFamily | None = None,
    read_at: float | None = None,
) -> float:
    """P(second memory shows b | first memory shows a), read at clock time ``read_at`` (default t2)."""
    family = default_family(u) if family is None else family
    psi = glm_global_state(u, q, layout, family).tensor()
    m = family.index_of(q.t2 if read_at is None else read_at)
    if m < family.index_of(q.t2):
        raise ValueError("memories can only be read once both measurements happened")
    slice_ = psi[m]
    pa = float(np.sum(np.abs(slice_[:, q.first, :]) ** 2))
    if pa == 0.0:
        raise ValueError("the first outcome has zero probability")
    pab = float(np.sum(np.abs(slice_[:, q.first, q.second]) ** 2))
    return pab / pa


def glm_marginal(
    u: ConstrainedUniverse,
    q: TwoTimeQuery,
    read_at: float,
    layout: MemoryLayout | None = None,
    family: ComplementFamily | None = None,
) -> float:
    """Probability that the first memory shows ``q.first`` given the clock reads ``read_at``."""
    family = default_family(u) if family is None else family
    psi = glm_global_state(u, q, layout, family).tensor()
    slice_ = psi[family.index_of(read_at)]
    total = float(np.sum(np.abs(slice_) ** 2))
    return float(np.sum(np.abs(slice_[:, q.first, :]) ** 2)) / total


def spacetime_two_time(su, t: float, x, y, t_prime: float, x_prime, y_prime) -> float:
    """Frame and system found at (x', y') at t' after (x, y) at t.

    The joint propagator exp(-i(H_R + H_S)(t' - t)) acts inside the sector of
    paired momenta that the universe populates, which gives
    (1/d_R^2 d_S^2) |sum_k exp(-i eps_k dt) exp(i p_k ((y' - x') - (y - x)))|^2.
    """
    n = su.n_axes
    pts = [np.atleast_1d(np.asarray(v, dtype=float)) for v in (x, y, x_prime, y_prime)]
    if any(p.shape != (n,) for p in pts):
        raise ShapeError(f"positions need {n} components to match the grids")
    if t_prime <= t:
        raise ValueError("the second reading must come later")
    x, y, xp, yp = pts
    p = su.mode_momenta()
    dt = t_prime - t
    hbar = su.S_grids[0].hbar
    phase = -su.energies * dt / hbar + p @ ((yp - xp) - (y - x)) / hbar
    d_R = float(np.prod(su.R_dims))
    d_S = float(np.prod(su.S_dims))
    return float(abs(np.sum(np.exp(1j * phase))) ** 2 / (d_R * d_S) ** 2)
