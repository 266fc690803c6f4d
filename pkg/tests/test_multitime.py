import numpy as np
import pytest
from scipy.linalg import expm
from scipy.stats import unitary_group

from pawlab.clockwork import ClockSpectrum, complement_family
from pawlab.errors import ConstraintError, ShapeError
from pawlab.hilbert import Operator
from pawlab.multitime import (
    MemoryLayout,
    TwoTimeQuery,
    glm_global_state,
    glm_marginal,
    glm_two_time,
    gppt_two_time,
    propagator_probability,
    spacetime_two_time,
)
from pawlab.paw import build_universe
from pawlab.spacetime import FreeParticle, build_spacetime_universe, symmetric_grid

from conftest import lattice_hamiltonian, random_unit

T = 2 * np.pi
HADAMARD = np.array([[1, 1], [1, -1]]) / np.sqrt(2)


def equal_clock_universe(rng, d_S, d_C=6):
    clock = ClockSpectrum.equally_spaced(d_C, T, E0=-(d_C - 1))
    labels = np.sort(rng.choice(d_C, size=d_S, replace=False))
    H = lattice_hamiltonian(rng, labels, T)
    return build_universe(H, random_unit(rng, d_S), clock=clock)


def oracle(u, q):
    U = expm(-1j * u.system_H.matrix * (q.t2 - q.t1))
    return abs(np.vdot(q.b, U @ q.a)) ** 2


def qubit_plus_universe():
    clock = ClockSpectrum.equally_spaced(4, T, E0=-3.0)
    H = Operator.diagonal([0.0, 2 * np.pi / T])
    return build_universe(H, np.array([1, 1]) / np.sqrt(2), clock=clock)


def test_quarter_period_plus_state():
    u = qubit_plus_universe()
    q = TwoTimeQuery(0.0, T / 4, HADAMARD, 0, 0)
    assert propagator_probability(u, q) == pytest.approx(0.5, abs=1e-12)
    assert gppt_two_time(u, q) == pytest.approx(0.5, abs=1e-12)
    assert glm_two_time(u, q) == pytest.approx(0.5, abs=1e-12)


def test_repeated_measurement():
    u = qubit_plus_universe()
    for a in (0, 1):
        q = TwoTimeQuery(T / 4, T / 4, HADAMARD, a, a)
        assert gppt_two_time(u, q) == pytest.approx(1.0, abs=1e-12)
        assert glm_two_time(u, q) == pytest.approx(1.0, abs=1e-12)


def test_full_period_is_identity():
    u = qubit_plus_universe()
    for a in (0, 1):
        for b in (0, 1):
            q = TwoTimeQuery(T / 4, T / 4 + T, HADAMARD, a, b)
            assert gppt_two_time(u, q) == pytest.approx(float(a == b), abs=1e-12)


@pytest.mark.parametrize("d_S", [1, 2, 3, 4])
def test_random_queries_match_propagator(rng, d_S):
    u = equal_clock_universe(rng, d_S)
    basis = unitary_group.rvs(d_S, random_state=rng) if d_S > 1 else np.eye(1)
    basis2 = unitary_group.rvs(d_S, random_state=rng) if d_S > 1 else np.eye(1)
    for _ in range(12):
        m1, m2 = sorted(rng.integers(0, 6, size=2))
        a, b = rng.integers(0, d_S, size=2)
        q = TwoTimeQuery(m1 * T / 6, m2 * T / 6, basis, int(a), int(b), basis2)
        want = oracle(u, q)
        assert gppt_two_time(u, q) == pytest.approx(want, abs=1e-10)
        assert glm_two_time(u, q) == pytest.approx(want, abs=1e-10)


def test_gppt_sums_to_one(rng):
    u = equal_clock_universe(rng, 3)
    basis = unitary_group.rvs(3, random_state=rng)
    total = sum(gppt_two_time(u, TwoTimeQuery(T / 6, 4 * T / 6, basis, 1, b)) for b in range(3))
    assert total == pytest.approx(1.0, abs=1e-10)


def test_gppt_povm_clock_is_approximate(rng):
    # a finer POVM lattice still lands close to the propagator
    u = equal_clock_universe(rng, 2)
    fam = complement_family(u.clock, 12)
    q = TwoTimeQuery(T / 12, 7 * T / 12, HADAMARD, 0, 1)
    val = gppt_two_time(u, q, fam)
    assert 0.0 <= val <= 1.0


def test_glm_needs_orthogonal_clock(rng):
    u = equal_clock_universe(rng, 2)
    q = TwoTimeQuery(0.0, T / 2, HADAMARD, 0, 1)
    with pytest.raises(ConstraintError):
        glm_global_state(u, q, family=complement_family(u.clock, 12))


def test_glm_memories_frozen_after_records(rng):
    u = equal_clock_universe(rng, 2)
    q = TwoTimeQuery(T / 6, 3 * T / 6, HADAMARD, 0, 1)
    layout = MemoryLayout.for_outcomes(2)
    psi = glm_global_state(u, q, layout).tensor()
    # system-traced memory weights are constant once both records exist
    weights = [np.sum(np.abs(psi[m]) ** 2, axis=0) for m in range(3, 6)]
    for w in weights[1:]:
        assert np.max(np.abs(w - weights[0])) <= 1e-12
    # before t1 the memories are ready
    ready = layout.ready_index
    assert np.sum(np.abs(psi[0]) ** 2) == pytest.approx(np.sum(np.abs(psi[0][:, ready, ready]) ** 2))
    # late reads agree
    assert glm_two_time(u, q, read_at=5 * T / 6) == pytest.approx(glm_two_time(u, q), abs=1e-12)


def test_glm_marginal_is_born_rule(rng):
    u = equal_clock_universe(rng, 2)
    q = TwoTimeQuery(2 * T / 6, 4 * T / 6, HADAMARD, 1, 0)
    phi = expm(-1j * u.system_H.matrix * q.t1) @ (u.amplitude_matrix().sum(axis=0))
    born = abs(np.vdot(q.a, phi)) ** 2 / np.vdot(phi, phi).real
    assert glm_marginal(u, q, 3 * T / 6) == pytest.approx(born, abs=1e-10)


def test_query_validation():
    with pytest.raises(ShapeError):
        TwoTimeQuery(0.0, 1.0, np.ones((2, 2)), 0, 0)
    u = qubit_plus_universe()
    with pytest.raises(ValueError):
        gppt_two_time(u, TwoTimeQuery(T / 2, 0.0, HADAMARD, 0, 0))


def toy_universe(c=(0.5, 0.5, np.sqrt(0.5))):
    L = 2 * np.pi
    g = symmetric_grid(3, L)
    return build_spacetime_universe(g, g, np.asarray(c), FreeParticle(3.0, 1.0)), L


def test_spacetime_two_time_oracle(rng):
    su, L = toy_universe()
    HR = su.frame_hamiltonian().matrix
    HS = su.system_hamiltonian().matrix
    H = np.kron(HR, np.eye(HS.shape[0])) + np.kron(np.eye(HR.shape[0]), HS)
    pR, pS = su.R_grids[0].values, su.S_grids[0].values
    d_R, d_S = pR.size, pS.size
    # the populated sector: frame momentum -p paired with system momentum p
    sector = np.zeros(d_R * d_S, dtype=complex)
    for k in range(3):
        sector[(d_R - 1 - k) * d_S + k] = 1.0
    for _ in range(10):
        t, dt = rng.uniform(0, 5), rng.uniform(0.1, 5)
        x, y, xp, yp = rng.uniform(0, L, 4)
        U = expm(-1j * H * dt)
        ket = sector * np.kron(np.exp(1j * pR * x), np.exp(1j * pS * y)).conj() / np.sqrt(d_R * d_S)
        bra = np.kron(np.exp(1j * pR * xp), np.exp(1j * pS * yp)).conj() / np.sqrt(d_R * d_S)
        want = abs(np.vdot(bra, sector * (U @ ket))) ** 2
        assert spacetime_two_time(su, t, x, y, t + dt, xp, yp) == pytest.approx(want, abs=1e-10)


def test_spacetime_two_time_peaks_at_same_separation():
    su, L = toy_universe()
    near = spacetime_two_time(su, 0.0, 0.3, 1.1, 1e-9, 0.5, 1.3)
    far = spacetime_two_time(su, 0.0, 0.3, 1.1, 1e-9, 0.5, 2.9)
    assert near == pytest.approx(1 / 9, abs=1e-8)
    assert far < near


def test_spacetime_two_time_shapes():
    su, _ = toy_universe()
    with pytest.raises(ShapeError):
        spacetime_two_time(su, 0.0, [0.0, 1.0], 0.0, 1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        spacetime_two_time(su, 1.0, 0.0, 0.0, 0.5, 0.0, 0.0)
