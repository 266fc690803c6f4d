"""End-to-end acceptance checks, one test per criterion with its tolerance and time budget.

A summary line per criterion is printed in the terminal report.
"""

import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.stats import unitary_group

from pawlab.clockwork import ClockSpectrum, build_spectrum, complement_family, identity_defect
from pawlab.gravity import ClockPairConfig, DiscreteQuery, clock_conditional_stats, redshift, tick_ratio
from pawlab.hilbert import partial_trace
from pawlab.multitime import TwoTimeQuery, glm_two_time, gppt_two_time, spacetime_two_time
from pawlab.paw import (
    build_universe,
    gravitational_universe,
    interacting_relative_state,
    interaction_rhs,
    relative_state,
    relative_state_on_family,
    verify_schrodinger,
    wootters_agreement,
)
from pawlab.spacetime import FreeParticle, build_spacetime_universe, joint_probability_table, symmetric_grid
from pawlab.typicality import (
    canonical_shell,
    oscillator_x_expectation,
    oscillator_x_first_order,
    position_operator,
    reduced_vs_canonical,
    relative_dynamics,
    sample_shell_state,
    temporal_trace,
)

from conftest import lattice_hamiltonian, random_unit


def acceptance(label):
    def mark(fn):
        fn.acceptance_label = label
        return fn

    return mark


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def detail(request, text):
    request.node.user_properties.append(("detail", text))


@acceptance("criterion 1")
def test_identity_resolutions(request):
    rng = np.random.default_rng(101)
    worst = 0.0
    with Timer() as clock:
        for _ in range(50):
            d = int(rng.integers(2, 9))
            labels = rng.choice(np.arange(1, 25), size=d - 1, replace=False)
            scale = int(rng.integers(1, 5))
            spec = build_spectrum(0.0, [Fraction(int(r), scale) for r in labels])
            assert spec.d == d and spec.r_max <= 24
            D = int(rng.integers(spec.r_max + 1, max(2 * spec.r_max, spec.r_max + 1) + 1))
            worst = max(worst, identity_defect(complement_family(spec, D)))
    detail(request, f"max defect {worst:.2e}, {clock.elapsed:.2f}s")
    assert worst <= 1e-12
    assert clock.elapsed < 1.0


@acceptance("criterion 2")
def test_emergent_schrodinger(request):
    rng = np.random.default_rng(202)
    worst = 0.0
    with Timer() as clock:
        for k in range(25):
            d_S = int(rng.integers(1, 5))
            if k % 2:
                # unevenly spaced clock, read through its covariant POVM
                labels = sorted({0, *(int(r) for r in rng.choice(np.arange(1, 13), size=d_S, replace=False))})
                spec = ClockSpectrum(-float(labels[-1]), 2 * np.pi, tuple(labels))
                chosen = rng.choice(labels, size=d_S, replace=False)
                H = lattice_hamiltonian(rng, np.sort(labels[-1] - chosen), 2 * np.pi)
                u = build_universe(H, random_unit(rng, d_S), clock=spec)
                fam = complement_family(spec, spec.r_max + 1 + int(rng.integers(0, 4)))
                phi0 = relative_state_on_family(u, fam, 0).amplitudes
                for m in range(fam.D):
                    direct = expm(-1j * H.matrix * fam.values[m]) @ phi0
                    worst = max(worst, np.linalg.norm(relative_state_on_family(u, fam, m).amplitudes - direct))
            else:
                labels = np.sort(rng.choice(16, size=d_S, replace=False))
                H = lattice_hamiltonian(rng, labels, 2 * np.pi)
                u = build_universe(H, random_unit(rng, d_S), T=2 * np.pi)
            T = u.clock.period_T
            t0 = rng.uniform(0, T)
            phi0 = relative_state(u, t0).state.amplitudes
            for t in rng.uniform(0, T, 100):
                worst = max(worst, verify_schrodinger(u, t0, t))
                direct = expm(-1j * u.system_H.matrix * (t - t0)) @ phi0
                worst = max(worst, np.linalg.norm(relative_state(u, t).state.amplitudes - direct))
    detail(request, f"max residual {worst:.2e}, {clock.elapsed:.2f}s")
    assert worst <= 1e-10
    assert clock.elapsed < 5.0


@acceptance("criterion 3")
def test_wootters_agreement(request):
    with Timer() as clock:
        vals = [wootters_agreement(two_s) for two_s in range(1, 101)]
    gap = abs(vals[-1] - np.sqrt(3) / 2)
    detail(request, f"s=1/2 {vals[0]!r}, s=50 {vals[-1]:.5f}, {clock.elapsed:.2f}s")
    assert abs(vals[0] - 1.0) <= 1e-12
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert gap <= 0.01
    assert clock.elapsed < 10.0


@acceptance("criterion 4")
def test_two_time_propagators(request):
    rng = np.random.default_rng(404)
    T = 2 * np.pi
    worst = 0.0
    with Timer() as clock:
        for _ in range(50):
            d_S = int(rng.integers(1, 5))
            d_C = int(rng.integers(d_S + 1, 9))
            clock_spec = ClockSpectrum.equally_spaced(d_C, T, E0=-(d_C - 1))
            labels = np.sort(rng.choice(d_C, size=d_S, replace=False))
            H = lattice_hamiltonian(rng, labels, T)
            u = build_universe(H, random_unit(rng, d_S), clock=clock_spec)
            B1 = unitary_group.rvs(d_S, random_state=rng) if d_S > 1 else np.eye(1)
            B2 = unitary_group.rvs(d_S, random_state=rng) if d_S > 1 else np.eye(1)
            m1, m2 = sorted(int(v) for v in rng.integers(0, d_C, size=2))
            a, b = (int(v) for v in rng.integers(0, d_S, size=2))
            q = TwoTimeQuery(m1 * T / d_C, m2 * T / d_C, B1, a, b, B2)
            want = abs(np.vdot(q.b, expm(-1j * H.matrix * (q.t2 - q.t1)) @ q.a)) ** 2
            worst = max(worst, abs(gppt_two_time(u, q) - want), abs(glm_two_time(u, q) - want))

        # frame + system two-time probability against a brute-force joint propagator
        L = 2 * np.pi
        g = symmetric_grid(3, L)
        c = random_unit(rng, 3)
        su = build_spacetime_universe(g, g, c, FreeParticle(3.0, 1.0))
        H = np.kron(su.frame_hamiltonian().matrix, np.eye(3)) + np.kron(np.eye(3), su.system_hamiltonian().matrix)
        pR, pS = g.values, g.values
        sector = np.zeros(9)
        for k in range(3):
            sector[(2 - k) * 3 + k] = 1.0
        for _ in range(10):
            t, dt = rng.uniform(0, 4), rng.uniform(0.1, 4)
            x, y, xp, yp = rng.uniform(0, L, 4)
            ket = sector * np.kron(np.exp(-1j * pR * x), np.exp(-1j * pS * y)) / 3
            bra = np.kron(np.exp(-1j * pR * xp), np.exp(-1j * pS * yp)) / 3
            want = abs(np.vdot(bra, sector * (expm(-1j * H * dt) @ ket))) ** 2
            worst = max(worst, abs(spacetime_two_time(su, t, x, y, t + dt, xp, yp) - want))
    detail(request, f"max deviation {worst:.2e}, {clock.elapsed:.2f}s")
    assert worst <= 1e-10
    assert clock.elapsed < 5.0


@acceptance("criterion 5")
def test_temporal_trace_is_partial_trace(request):
    worst = 0.0
    with Timer() as clock:
        for seed in range(20):
            design = canonical_shell([0, 1, 3], 0.8, 60 + 7 * seed, 0.5)
            s = sample_shell_state(design.system_H, design.env, design.shell, seed)
            rho = partial_trace(s.global_state.projector(), 1).matrix
            worst = max(worst, float(np.max(np.abs(temporal_trace(s).matrix - rho))))
    detail(request, f"max entry gap {worst:.2e}, {clock.elapsed:.2f}s")
    assert worst <= 1e-12
    assert clock.elapsed < 5.0


@acceptance("criterion 6")
def test_canonical_typicality(request):
    beta = 1.0
    medians = {}
    with Timer() as clock:
        for total in (512, 1024):
            design = canonical_shell([0, 1, 2], beta, total, 0.5)
            dists = [
                reduced_vs_canonical(sample_shell_state(design.system_H, design.env, design.shell, seed), beta).trace_dist
                for seed in range(50)
            ]
            medians[total] = float(np.median(dists))
    detail(request, f"median 512: {medians[512]:.4f}, 1024: {medians[1024]:.4f}, {clock.elapsed:.2f}s")
    assert medians[512] <= 0.1
    assert medians[1024] < medians[512]
    assert clock.elapsed < 30.0


@acceptance("criterion 7")
def test_oscillator_toy(request):
    m, omega = 1.3, 1.0
    worst_exact = worst_first = 0.0
    with Timer() as clock:
        for seed in range(5):
            design = canonical_shell([0, 1], 1.0, 200, 0.5, gap=omega)
            s = sample_shell_state(design.system_H, design.env, design.shell, seed)
            X = position_operator(m, omega)
            for t in np.linspace(0, 5, 26):
                direct = X.expectation(relative_dynamics(s, t).state).real
                worst_exact = max(worst_exact, abs(oscillator_x_expectation(s, m, omega, t) - direct))
            delta = s.shell.delta
            for t in np.linspace(0, 0.01 / delta, 21):
                full = oscillator_x_expectation(s, m, omega, t)
                first = oscillator_x_first_order(s, m, omega, t)
                worst_first = max(worst_first, abs(first - full) / abs(full))
    detail(request, f"matrix element gap {worst_exact:.1e}, first-order rel {worst_first:.1e}, {clock.elapsed:.2f}s")
    assert worst_exact <= 1e-12
    assert worst_first <= 1e-3
    assert clock.elapsed < 2.0


@acceptance("criterion 8")
def test_spacetime_toy(request):
    L, M, m = 2 * np.pi, 3.0, 1.0
    c = np.array([0.5, 0.5, np.sqrt(0.5)])
    with Timer() as clock:
        g = symmetric_grid(3, L)
        su = build_spacetime_universe(g, g, c, FreeParticle(M, m))
        eps = (2 * np.pi / L) ** 2 * (1 / (2 * M) + 1 / (2 * m))
        T = 2 * np.pi / eps
        ts = np.arange(64) * T / 64
        seps = np.arange(64) * L / 64
        P = joint_probability_table(su, ts, -seps, [0.0], True, D_S=3, D_R=64)[:, :, 0]
        ys = np.arange(3) * L / 3
        norm = joint_probability_table(su, ts, -seps, ys, True, D_S=3, D_R=64).sum(axis=2)
    k = 2 * np.pi / L
    tt, ss = ts[:, None], seps[None, :]
    printed = (
        1 / 3
        + 2 / 3 * c[0] * c[1] * np.cos(eps * tt + k * ss)
        + 2 / 3 * c[1] * c[2] * np.cos(eps * tt - k * ss)
        + 2 / 3 * c[0] * c[2] * (1 - 2 * np.sin(k * ss) ** 2)
    )
    gap = float(np.max(np.abs(P - printed)))
    ngap = float(np.max(np.abs(norm - 1)))
    detail(request, f"closed-form gap {gap:.1e}, normalization gap {ngap:.1e}, {clock.elapsed:.3f}s")
    assert gap <= 1e-12
    assert ngap <= 1e-10
    assert clock.elapsed < 2.0


@acceptance("criterion 9")
def test_gravitational_dilation(request):
    with Timer() as clock:
        far = [tick_ratio(ClockPairConfig.from_depth(u)).tick_ratio - (1 - u) for u in (1e-9, 1e-4, 0.1, 0.3)]
        pair_gap = 0.0
        for GM, x, h in [(1e-4, 1.0, 1e-3), (0.2, 2.0, 3.0), (3.0, 10.0, 0.5)]:
            cfg = ClockPairConfig(2, 1.0, GM, x, h, 1.0)
            want = (1 - GM / x) / (1 - GM / (x + h))
            pair_gap = max(pair_gap, abs(tick_ratio(cfg).tick_ratio - want))
        rel = [
            ClockPairConfig.from_depth(u, potential_model="relativistic").factor_B - np.sqrt(1 - 2 * u)
            for u in (1e-6, 1e-3, 0.2, 0.375)
        ]
        depths = np.logspace(-6, -2, 81)
        series = max(
            abs(ClockPairConfig.from_depth(u, potential_model="relativistic").factor_B - ClockPairConfig.from_depth(u).factor_B)
            / u**2
            for u in depths
        )
        rs = redshift(ClockPairConfig(2, 1.0, 1e-6, 1.0, 1e-3, 1.0))
        rs_rel = abs(rs.exact - rs.first_order) / abs(rs.first_order)
    detail(request, f"redshift rel {rs_rel:.3e}, series ratio {series:.3f}, {clock.elapsed:.3f}s")
    assert max(abs(v) for v in far) <= 1e-12
    assert pair_gap <= 1e-15
    assert max(abs(v) for v in rel) <= 1e-15
    assert series <= 1.0
    assert rs_rel <= 1e-3
    assert clock.elapsed < 1.0


def _stats(u, d, l, m):
    return clock_conditional_stats(ClockPairConfig.from_depth(u, d=d), DiscreteQuery(l, m))


def _rel(a, b):
    return abs(a - b) / abs(b)


@acceptance("criterion 10a")
def test_appendix_stats(request):
    u = 1e-3
    worst = 0.0
    with Timer() as clock:
        Tp = 1.0 / (1 - u)
        # two levels
        for m in range(2):
            for l in range(2 if m else 1):
                worst = max(worst, _rel(_stats(u, 2, l, m).prob, 0.5 * (1 + np.cos(np.pi * (l - m * (1 - u))))))
            worst = max(worst, _rel(_stats(u, 2, m, m).prob, 1 - m**2 * np.pi**2 / 4 * u**2))
            if m:
                worst = max(worst, _rel(_stats(u, 2, 0, m).mean_theta, Tp / 4 * (1 - np.cos(m * np.pi * (1 - u)))))
        worst = max(worst, _rel(_stats(u, 2, 0, 1).mean_theta, Tp / 2 * (1 - np.pi**2 / 4 * u**2)))
        # three levels
        for m in range(3):
            z = m * (1 - u)
            for l in range(3 if m else 1):
                x = 2 * np.pi * (l - z) / 3
                want = (3 + 4 * np.cos(x) + 2 * np.cos(2 * x)) / 9
                worst = max(worst, _rel(_stats(u, 3, l, m).prob, want))
            worst = max(worst, _rel(_stats(u, 3, m, m).prob, 1 - 8 * np.pi**2 * m**2 / 27 * u**2))
            a, b = 2 * np.pi * z / 3, 4 * np.pi * z / 3
            mean = Tp / 27 * (9 - 6 * np.cos(a) - 2 * np.sqrt(3) * np.sin(a) - 3 * np.cos(b) + np.sqrt(3) * np.sin(b))
            if m:
                worst = max(worst, _rel(_stats(u, 3, 0, m).mean_theta, mean))
        # with A at its first reading, B never sits anywhere but its first
        zeros = max(_stats(u, d, 1, 0).prob + _stats(u, d, d - 1, 0).prob + _stats(u, d, 0, 0).mean_theta for d in (2, 3))
        theta1 = Tp / 3
        worst = max(
            worst,
            _rel(_stats(u, 3, 0, 1).mean_theta, theta1 * (1 - 10 * np.sqrt(3) / 27 * (2 * np.pi / 3 * u) ** 3)),
        )
    detail(request, f"max relative gap {worst:.1e}, {clock.elapsed:.3f}s")
    assert worst <= 1e-6
    assert zeros <= 1e-15
    assert clock.elapsed < 1.0


@acceptance("criterion 10b")
@pytest.mark.xfail(strict=True, reason="printed second-order coefficient for the three-level mean at tau_2 is off")
def test_appendix_three_level_tau2_series(request):
    u = 1e-3
    Tp = 1.0 / (1 - u)
    theta2 = 2 * Tp / 3
    printed = theta2 * (1 - 5 / 36 * (4 * np.pi / 3 * u) ** 2)
    got = _stats(u, 3, 0, 2).mean_theta
    gap = _rel(got, printed)
    detail(request, f"relative gap {gap:.1e} against the printed series")
    assert gap <= 1e-6


@acceptance("criterion 11")
def test_interaction_kernel(request):
    lam = 1e-4
    worst = quad = 0.0
    with Timer() as clock:
        clock_spec = ClockSpectrum.equally_spaced(4, 2 * np.pi, E0=-3.0)
        u = gravitational_universe(clock_spec, [0, 1, 2], np.array([0.6, 0.48, 0.64]), lam)
        H = u.system_H.matrix
        for t in np.linspace(0, 2 * np.pi, 9, endpoint=False):
            rhs = interaction_rhs(u, t, grid_N=2048)
            phi = interacting_relative_state(u, t)[0]
            worst = max(worst, float(np.max(np.abs(rhs.value.amplitudes - (H + lam * H @ H) @ phi))))
            quad = max(quad, rhs.quadrature_error)
    detail(request, f"correction gap {worst:.1e}, quadrature error {quad:.1e}, {clock.elapsed:.2f}s")
    assert quad <= 1e-6
    assert worst <= 1e-6
    assert clock.elapsed < 5.0
