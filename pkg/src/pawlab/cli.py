"""Command-line experiment runner.

    pawlab run <experiment> [--config FILE] [--seed N] [--out PATH]
               [--format csv|json] [key=value ...]

Each experiment turns a flat set of parameters into one table. Output is
deterministic for a fixed configuration and seed, and carries the resolved
configuration and library version in its header.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from math import inf, pi, sqrt
from typing import Callable

import numpy as np
from scipy.stats import unitary_group

from . import __version__
from .clockwork import ClockSpectrum, build_spectrum, complement_family, identity_defect
from .errors import NumericContractError, PawlabError
from .gravity import ClockPairConfig, DiscreteQuery, clock_conditional_stats, redshift, tick_ratio
from .hilbert import Operator
from .multitime import TwoTimeQuery, glm_two_time, gppt_two_time, propagator_probability
from .paw import build_universe, verify_schrodinger, wootters_agreement
from .spacetime import FreeParticle, build_spacetime_universe, joint_probability_table, symmetric_grid
from .typicality import (
    canonical_shell,
    oscillator_x_expectation,
    oscillator_x_first_order,
    position_operator,
    reduced_vs_canonical,
    relative_dynamics,
    sample_shell_state,
)

EXIT_OK, EXIT_CONFIG, EXIT_UNKNOWN, EXIT_CONTRACT, EXIT_IO = 0, 2, 3, 4, 5


class ConfigError(PawlabError):
    pass


@dataclass
class Table:
    columns: list[str]
    units: list[str]
    rows: list[list] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class Experiment:
    name: str
    defaults: dict
    run: Callable[[dict, int], Table]
    summary: str


# -- parameter parsing ----------------------------------------------------------


def _parse_list(text: str) -> list[str]:
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        text = text[1:-1]
    return [p.strip() for p in text.split(",") if p.strip()]


def _coerce(key: str, raw, default):
    if not isinstance(raw, str):
        return raw
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            items = _parse_list(raw)
            if default and isinstance(default[0], str):
                return items
            if default and isinstance(default[0], int):
                return [int(v) for v in items]
            return [float(v) for v in items]
    except ValueError:
        raise ConfigError(f"parameter {key}={raw!r} is not a valid {type(default).__name__}") from None
    return raw.strip()


def resolve_params(exp: Experiment, overrides: dict) -> dict:
    unknown = sorted(set(overrides) - set(exp.defaults))
    if unknown:
        raise ConfigError(f"unknown parameter(s) for {exp.name}: {', '.join(unknown)}")
    params = dict(exp.defaults)
    for k, v in overrides.items():
        params[k] = _coerce(k, v, exp.defaults[k])
    return params


def read_config(path: str, experiment: str) -> dict:
    """Flat ``key = value`` lines, optionally followed by sections named after experiments.

    Keys in a section override top-level keys for that experiment only.
    """
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        parser.read_string("[__top__]\n" + text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    for section in parser.sections():
        if section != "__top__" and section not in REGISTRY:
            raise ConfigError(f"config section [{section}] names no experiment")
    values = dict(parser["__top__"])
    if parser.has_section(experiment):
        values.update(parser[experiment])
    return values


def thread_cap() -> int:
    raw = os.environ.get("PAWLAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"PAWLAB_THREADS={raw!r} is not an integer") from None
    if n < 1:
        raise ConfigError("PAWLAB_THREADS must be at least 1")
    return n


# -- experiments ----------------------------------------------------------------


def _clock_identity(p: dict, seed: int) -> Table:
    ratios = [Fraction(r) for r in p["ratios"]]
    spec = build_spectrum(0.0, ratios)
    if p["d"] and p["d"] != spec.d:
        raise ConfigError(f"d={p['d']} but the ratios give {spec.d} levels")
    D = p["D"] or spec.r_max + 1
    try:
        fam = complement_family(spec, D)
    except PawlabError as exc:
        raise ConfigError(str(exc)) from None
    defect = identity_defect(fam)
    t = Table(
        ["d", "D", "r_max", "weight", "defect"],
        ["levels", "states", "label", "dimensionless", "dimensionless"],
        [[spec.d, D, spec.r_max, fam.weight, defect]],
    )
    if defect > 1e-12:
        t.violations.append(f"identity defect {defect:.3e} above 1e-12")
    return t


def _random_lattice_system(rng, d_S: int, r_max: int, T: float) -> Operator:
    labels = np.sort(rng.choice(r_max + 1, size=d_S, replace=False))
    V = unitary_group.rvs(d_S, random_state=rng) if d_S > 1 else np.eye(1)
    E = labels * (2 * pi / T)
    return Operator((V * E) @ V.conj().T)


def _random_coeffs(rng, n: int) -> np.ndarray:
    c = rng.normal(size=n) + 1j * rng.normal(size=n)
    return c / np.linalg.norm(c)


def _paw_evolve(p: dict, seed: int) -> Table:
    rng = np.random.default_rng(seed)
    if p["d_S"] < 1 or p["r_max"] < p["d_S"] - 1:
        raise ConfigError("need d_S >= 1 and r_max >= d_S - 1")
    T = p["T"]
    H = _random_lattice_system(rng, p["d_S"], p["r_max"], T)
    u = build_universe(H, _random_coeffs(rng, p["d_S"]), T=T)
    t = Table(["t", "residual"], ["s", "dimensionless"])
    for k in range(p["n_times"]):
        tk = T * k / p["n_times"]
        t.rows.append([tk, verify_schrodinger(u, 0.0, tk)])
    worst = max((r[1] for r in t.rows), default=0.0)
    if worst > 1e-10:
        t.violations.append(f"evolution residual {worst:.3e} above 1e-10")
    return t


def _wootters(p: dict, seed: int) -> Table:
    n = int(round(2 * p["s_max"]))
    if n < 1:
        raise ConfigError("s_max must be at least 1/2")
    t = Table(["s", "agreement", "lower_bound"], ["hbar", "probability", "probability"])
    for two_s in range(1, n + 1):
        t.rows.append([two_s / 2, wootters_agreement(two_s), sqrt(3) / 2])
    agree = [r[1] for r in t.rows]
    if abs(agree[0] - 1) > 1e-12:
        t.violations.append("spin-1/2 agreement is not 1")
    if any(b > a + 1e-12 for a, b in zip(agree, agree[1:])):
        t.violations.append("agreement is not monotone in s")
    return t


def _two_time(p: dict, seed: int) -> Table:
    rng = np.random.default_rng(seed)
    d_S, d_C = p["d_S"], p["d_C"]
    if d_C <= d_S:
        raise ConfigError("d_C must exceed d_S")
    T = 2 * pi
    clock = ClockSpectrum.equally_spaced(d_C, T, E0=-(d_C - 1))
    H = _random_lattice_system(rng, d_S, d_C - 1, T)
    u = build_universe(H, _random_coeffs(rng, d_S), clock=clock)
    basis = unitary_group.rvs(d_S, random_state=rng)
    t = Table(
        ["t1", "t2", "first", "second", "propagator", "gppt", "glm"],
        ["s", "s", "index", "index", "probability", "probability", "probability"],
    )
    for _ in range(p["n_queries"]):
        m1, m2 = sorted(rng.integers(0, d_C, size=2).tolist())
        a, b = (int(v) for v in rng.integers(0, d_S, size=2))
        q = TwoTimeQuery(m1 * T / d_C, m2 * T / d_C, basis, a, b)
        row = [q.t1, q.t2, a, b, propagator_probability(u, q), gppt_two_time(u, q), glm_two_time(u, q)]
        t.rows.append(row)
        if max(abs(row[5] - row[4]), abs(row[6] - row[4])) > 1e-10:
            t.violations.append(f"query {len(t.rows)} departs from the propagator")
    return t


def _typicality(p: dict, seed: int) -> Table:
    if p["mode"] == "canonical":
        return _typicality_canonical(p, seed)
    if p["mode"] == "oscillator":
        return _typicality_oscillator(p, seed)
    raise ConfigError("mode must be canonical or oscillator")


def _typicality_canonical(p: dict, seed: int) -> Table:
    levels, beta = p["levels"], p["beta"]
    t = Table(["total", "median_trace_distance", "max_trace_distance"], ["levels", "dimensionless", "dimensionless"])
    workers = thread_cap()
    for total in p["sizes"]:
        design = canonical_shell(levels, beta, total, p["delta"])

        def one(s: int) -> float:
            sample = sample_shell_state(design.system_H, design.env, design.shell, seed + s)
            return reduced_vs_canonical(sample, beta).trace_dist

        # results come back in seed order whatever the thread count
        with ThreadPoolExecutor(max_workers=workers) as pool:
            dists = list(pool.map(one, range(p["samples"])))
        t.rows.append([total, float(np.median(dists)), float(np.max(dists))])
    return t


def _typicality_oscillator(p: dict, seed: int) -> Table:
    m, omega = p["mass"], 1.0
    design = canonical_shell([0, 1], p["beta"], p["sizes"][0], p["delta"], gap=omega)
    sample = sample_shell_state(design.system_H, design.env, design.shell, seed)
    X = position_operator(m, omega)
    t = Table(["t", "x_matrix_element", "x_double_sum", "x_first_order"], ["s", "m", "m", "m"])
    for k in range(p["n_times"]):
        tk = p["t_max"] * k / max(p["n_times"] - 1, 1)
        phi = relative_dynamics(sample, tk).state
        direct = X.expectation(phi).real
        full = oscillator_x_expectation(sample, m, omega, tk)
        t.rows.append([tk, direct, full, oscillator_x_first_order(sample, m, omega, tk)])
        if abs(direct - full) > 1e-12:
            t.violations.append(f"double sum departs from the matrix element at t={tk!r}")
    return t


def _spacetime_toy(p: dict, seed: int) -> Table:
    L = p["L"]
    c = np.asarray(p["coeffs"], dtype=float)
    if c.size != 3:
        raise ConfigError("the toy needs three coefficients")
    c = c / np.linalg.norm(c)
    grid = symmetric_grid(3, L)
    su = build_spacetime_universe(grid, grid, c, FreeParticle(p["M"], p["m"]))
    T = su.clock.period_T
    nt, nx = p["n_t"], p["n_x"]
    ts = np.arange(nt) * (T / nt)
    xs = np.arange(nx) * (L / nx)
    table = joint_probability_table(su, ts, -xs, [0.0], discrete=True, D_S=3, D_R=nx)[:, :, 0]
    t = Table(["t", "separation", "probability"], ["s", "m", "probability"])
    for i in range(nt):
        for j in range(nx):
            t.rows.append([float(ts[i]), float(xs[j]), float(table[i, j])])
    return t


def _gravity(p: dict, seed: int) -> Table:
    if p["mode"] == "far":
        h = inf
    elif p["mode"] == "pair":
        h = p["h_over_x"]
    else:
        raise ConfigError("mode must be far or pair")
    try:
        cfg = ClockPairConfig.from_depth(p["depth"], h, d=p["d"], potential_model=p["model"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rep = tick_ratio(cfg)
    t = Table(["quantity", "index", "value", "reference"], ["name", "index", "dimensionless", "dimensionless"])
    t.rows.append(["factor_A", -1, rep.factor_A, rep.factor_A])
    t.rows.append(["factor_B", -1, rep.factor_B, rep.factor_B])
    t.rows.append(["tick_ratio", -1, rep.tick_ratio, rep.first_order])
    if h != inf:
        rs = redshift(cfg)
        t.rows.append(["redshift", -1, rs.exact, rs.first_order])
    for m in range(cfg.d):
        s = clock_conditional_stats(cfg, DiscreteQuery(m, m))
        t.rows.append(["p_same_reading", m, s.prob, 1.0])
        t.rows.append(["mean_reading", m, s.mean_theta, m * cfg.T / cfg.d])
    return t


REGISTRY: dict[str, Experiment] = {
    e.name: e
    for e in (
        Experiment("clock-identity", {"d": 0, "ratios": ["1/1", "3/1"], "D": 0}, _clock_identity,
                   "identity defect of a complement family"),
        Experiment("paw-evolve", {"d_S": 3, "r_max": 6, "T": 2 * pi, "n_times": 100}, _paw_evolve,
                   "residual of the emergent evolution over one period"),
        Experiment("wootters-spins", {"s_max": 10.0}, _wootters, "two-spin agreement against spin"),
        Experiment("two-time", {"d_S": 2, "d_C": 6, "n_queries": 20}, _two_time,
                   "two-time probabilities against the propagator"),
        Experiment(
            "typicality",
            {"mode": "canonical", "levels": [0, 1, 2], "beta": 1.0, "delta": 0.5,
             "sizes": [128, 256, 512, 1024], "samples": 50, "mass": 1.0, "t_max": 0.01, "n_times": 11},
            _typicality,
            "distance to the canonical state, or the oscillator position trace",
        ),
        Experiment("spacetime-toy", {"L": 2 * pi, "M": 3.0, "m": 1.0, "coeffs": [1.0, 1.0, 1.0], "n_t": 64, "n_x": 64},
                   _spacetime_toy, "relative position probability over time and separation"),
        Experiment("gravity", {"depth": 0.25, "mode": "far", "h_over_x": 1e-3, "d": 2, "model": "newtonian"},
                   _gravity, "clock pair dilation, redshift and reading statistics"),
    )
}


# -- output -----------------------------------------------------------------------


def render(exp: Experiment, params: dict, seed: int, fmt: str, table: Table) -> str:
    meta = {"pawlab_version": __version__, "experiment": exp.name, "seed": seed, "params": params}
    if fmt == "json":
        doc = dict(meta, columns=table.columns, units=table.units, rows=table.rows)
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"
    buf = io.StringIO()
    buf.write(f"# pawlab {__version__}\n")
    buf.write(f"# config: {json.dumps({'experiment': exp.name, 'seed': seed, 'params': params}, sort_keys=True)}\n")
    buf.write(f"# units: {','.join(table.units)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    w.writerows([repr(v) if isinstance(v, float) else v for v in row] for row in table.rows)
    return buf.getvalue()


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pawlab", description="Run a named simulation and write a table.")
    ap.add_argument("command", choices=("run",))
    ap.add_argument("experiment", help=", ".join(REGISTRY))
    ap.add_argument("params", nargs="*", metavar="key=value")
    ap.add_argument("--config", help="key = value file; [experiment] sections override top-level keys")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="output path (default: standard output)")
    ap.add_argument("--format", choices=("csv", "json"))
    return ap


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_intermixed_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK

    exp = REGISTRY.get(args.experiment)
    if exp is None:
        print(f"unknown experiment {args.experiment!r}; choose from {', '.join(REGISTRY)}", file=sys.stderr)
        return EXIT_UNKNOWN

    try:
        given = read_config(args.config, exp.name) if args.config else {}
        for item in args.params:
            key, sep, value = item.partition("=")
            if not sep or not key:
                raise ConfigError(f"expected key=value, got {item!r}")
            given[key.strip()] = value
        seed = int(given.pop("seed", 0)) if args.seed is None else args.seed
        fmt = given.pop("format", "csv") if args.format is None else args.format
        out = given.pop("out", None) if args.out is None else args.out
        if fmt not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, not {fmt!r}")
        params = resolve_params(exp, given)
        thread_cap()
        table = exp.run(params, seed)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericContractError as exc:
        print(f"numeric contract violated: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except PawlabError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    text = render(exp, params, seed, fmt, table)
    try:
        if out is None:
            sys.stdout.write(text)
        else:
            with open(out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO

    if table.violations:
        for v in table.violations:
            print(f"numeric contract violated: {v}", file=sys.stderr)
        return EXIT_CONTRACT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
