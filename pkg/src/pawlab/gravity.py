"""Pairs of Pegg clocks at different heights in a static gravitational potential.

A clock at depth u = GM/(r c^2) runs with its Hamiltonian scaled by a factor
1 - u (Newtonian) or sqrt(1 - 2u) (relativistic). Factors are handled through
their deficits 1 - factor, which stay accurate at tiny depths.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import inf, isfinite, sqrt

import numpy as np

from .errors import ConstraintError
from .hilbert import StateVector

MODELS = ("newtonian", "relativistic")


def _deficit(model: str, u: float) -> float:
    if model == "newtonian":
        if u >= 1:
            raise ConstraintError(f"depth {u} stops a Newtonian clock")
        return u
    if model == "relativistic":
        if 2 * u >= 1:
            raise ConstraintError(f"depth {u} is at or inside the horizon")
        return 2 * u / (1 + sqrt(1 - 2 * u))
    raise ValueError(f"unknown potential model {model!r}; use one of {MODELS}")


def dilation_factor(model: str, GM: float, x: float, c: float) -> float:
    """Rate of a clock at radius x relative to one infinitely far away."""
    if not x > 0:
        raise ValueError("radius must be positive")
    if x == inf:
        return 1.0
    return 1.0 - _deficit(model, GM / (x * c * c))


@dataclass(frozen=True)
class ClockPairConfig:
    """Clock B at radius x, clock A a height h above it (h = inf puts A far away)."""

    d: int
    T: float
    GM: float
    x: float
    h: float = inf
    c: float = 1.0
    potential_model: str = "newtonian"

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("clocks need at least two levels")
        if not (self.T > 0 and self.x > 0 and self.c > 0 and self.h >= 0 and self.GM >= 0):
            raise ValueError("T, x, c must be positive and h, GM non-negative")
        if self.potential_model not in MODELS:
            raise ValueError(f"unknown potential model {self.potential_model!r}")
        _deficit(self.potential_model, self.depth)

    @classmethod
    def from_depth(
        cls, depth: float, h_over_x: float = inf, *, d: int = 2, T: float = 1.0, potential_model: str = "newtonian"
    ) -> "ClockPairConfig":
        """Dimensionless set-up with x = c = 1 and GM = depth."""
        return cls(d, T, depth, 1.0, h_over_x, 1.0, potential_model)

    @property
    def depth(self) -> float:
        return self.GM / (self.x * self.c**2)

    @property
    def depth_A(self) -> float:
        return 0.0 if self.h == inf else self.GM / ((self.x + self.h) * self.c**2)

    @property
    def deficit_B(self) -> float:
        return _deficit(self.potential_model, self.depth)

    @property
    def deficit_A(self) -> float:
        return _deficit(self.potential_model, self.depth_A)

    @property
    def factor_A(self) -> float:
        return 1.0 - self.deficit_A

    @property
    def factor_B(self) -> float:
        return 1.0 - self.deficit_B

    def deficit_gap(self) -> float:
        """deficit_B - deficit_A, evaluated without cancellation where possible."""
        if self.h == inf:
            return self.deficit_B
        if self.potential_model == "newtonian":
            return self.GM * self.h / (self.x * (self.x + self.h) * self.c**2)
        return self.deficit_B - self.deficit_A

    def rate_ratio(self) -> float:
        """factor_B / factor_A."""
        return 1.0 - self.ratio_deficit()

    def ratio_deficit(self) -> float:
        return self.deficit_gap() / self.factor_A


@dataclass(frozen=True)
class DilationReport:
    factor_A: float
    factor_B: float
    tick_ratio: float
    first_order: float
    first_order_small_h: float
    regime: str = "exact"


def evolve_clock_pair(cfg: ClockPairConfig, t: float, rest_energy: float = 0.0) -> tuple[StateVector, StateVector]:
    """Both clocks started in their first time state, evolved for reference time t.

    Each level k picks up the phase 2 pi k t factor / T. ``rest_energy`` adds
    the static-mass term, which only contributes a global phase per clock.
    """
    k = np.arange(cfg.d)

    def state(factor: float) -> StateVector:
        cycles = np.mod(k * ((t / cfg.T) * factor), 1.0)
        phase = 2 * np.pi * cycles + rest_energy * factor * t
        return StateVector(np.exp(-1j * phase) / np.sqrt(cfg.d))

    return state(cfg.factor_A), state(cfg.factor_B)


def tick_index(state: StateVector) -> float:
    """Fractional number of time states a flat clock state has advanced, modulo d."""
    a = state.amplitudes
    d = a.size
    step = -np.angle(a[1] / a[0]) / (2 * np.pi)
    return float(np.mod(step * d, d))


def tick_ratio(cfg: ClockPairConfig) -> DilationReport:
    """Ticks of B per tick of A, with the first-order and small-height forms."""
    if cfg.h == inf:
        first = 1.0 - cfg.depth
        small = first
    else:
        first = 1.0 - cfg.GM * cfg.h / (cfg.x * (cfg.x + cfg.h) * cfg.c**2)
        a = cfg.GM / cfg.x**2
        small = 1.0 - a * cfg.h / cfg.c**2
    return DilationReport(cfg.factor_A, cfg.factor_B, cfg.rate_ratio(), first, small)


@dataclass(frozen=True)
class RedshiftReport:
    exact: float
    first_order: float


def redshift(cfg: ClockPairConfig) -> RedshiftReport:
    """Fractional frequency shift of B's level spacings as received at A, in units of 1/T."""
    if not isfinite(cfg.h):
        raise ValueError("redshift needs a finite separation")
    a = cfg.GM / cfg.x**2
    return RedshiftReport(-cfg.deficit_gap(), -a * cfg.h / cfg.c**2)


@dataclass(frozen=True)
class DiscreteQuery:
    """B reads its l-th time value while A reads its m-th."""

    l: int
    m: int


@dataclass(frozen=True)
class ContinuousQuery:
    """B at fraction g of its period while A is at fraction f of its own."""

    g: float
    f: float


@dataclass(frozen=True)
class ConditionalStats:
    prob: float
    mean_theta: float


def _fejer(x: np.ndarray, d: int) -> np.ndarray:
    # |sum_n exp(-2 pi i n x)|^2 / d^2 for x measured in units of one lattice step
    n = np.arange(d)
    return np.abs(np.exp(-2j * np.pi * np.outer(x, n)) .sum(axis=1)) ** 2 / d**2


def clock_conditional_stats(cfg: ClockPairConfig, query: DiscreteQuery | ContinuousQuery) -> ConditionalStats:
    """Probability of B's reading given A's reading, and B's mean reading.

    Discrete: P(theta_l | tau_m) over l = 0..d-1. Continuous: a density in
    theta over one period of B, with the mean in closed form.
    """
    d = cfg.d
    lag = cfg.ratio_deficit()  # 1 - f_B/f_A
    T_B = cfg.T / cfg.factor_B
    if isinstance(query, DiscreteQuery):
        if not (0 <= query.l < d and 0 <= query.m < d):
            raise ValueError("indices must lie in 0..d-1")
        l = np.arange(d)
        # l - m f_B/f_A, written to keep the small lag exact
        x = (l - query.m + query.m * lag) / d
        P = _fejer(x, d)
        mean = float(T_B / d * np.sum(l * P))
        return ConditionalStats(float(P[query.l]), mean)
    if isinstance(query, ContinuousQuery):
        shift = query.f * (1 - lag)
        dens = float(_fejer(np.array([query.g - shift]), d)[0] * d / T_B)
        n = np.arange(d)
        diff = n[:, None] - n[None, :]
        off = diff != 0
        terms = np.exp(2j * np.pi * shift * diff[off]) / diff[off]
        mean = T_B / 2 + (1j * T_B / (2 * np.pi * d) * np.sum(terms)).real
        return ConditionalStats(dens, float(mean))
    raise TypeError("query must be a DiscreteQuery or a ContinuousQuery")
