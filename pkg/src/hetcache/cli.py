"""Command-line front end.

    hetcache analyze   CONFIG  [--scheme 1|2|both] [--policy P ...] [--out FILE]
    hetcache simulate  CONFIG  [--seed S] [--realizations R] [--workers W] [--validate]
    hetcache optimize  CONFIG  --scheme 1|2
    hetcache baselines CONFIG
    hetcache sweep     SWEEP   --out DIR

All commands write CSV (to stdout unless --out is given). Exit codes: 0 ok,
2 configuration error, 3 operating-region violation, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import CachingDistribution, Popularity, stp_scheme1, stp_scheme2
from .config import DomainError, NetworkConfig, TierParams, dbm_to_watt, density_from_radius
from .mcsim import SCHEMES, SimParams, simulate_values, summarize
from .optimizer import InfeasibleError, RegionError, optimize_scheme1, optimize_scheme2
from .policies import BASELINES, baseline_distribution, zipf
from .quadrature import QuadratureError, QuadratureSpec

EXIT_OK, EXIT_CONFIG, EXIT_REGION, EXIT_NUMERIC = 0, 2, 3, 4
POLICIES = ("given", "optimal") + BASELINES
SWEEP_VARIABLES = ("tau", "K", "M", "gamma")


class ConfigError(Exception):
    pass


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Experiment:
    network: NetworkConfig
    rates_mbps: tuple
    popularity: Popularity
    gamma: float
    cache_size: int
    coop_sizes: tuple
    caching: object          # tuple of floats or a policy name
    quad: QuadratureSpec
    sim: SimParams
    raw: dict

    def with_rate(self, mbps):
        return self.network.with_rate(mbps * 1e6)

    def distribution(self, policy, K=None, scheme=None):
        a, M = self.popularity, self.cache_size
        if policy == "given":
            if isinstance(self.caching, str):
                return self.distribution(self.caching, K, scheme)
            T = np.zeros(a.N)
            T[: len(self.caching)] = self.caching
            return CachingDistribution(T, M)
        if policy in BASELINES:
            return baseline_distribution(policy, a, M)
        raise ConfigError(f"policy {policy!r} has no fixed caching distribution")


def _get(d, path, kind=None, default=...):
    cur = d
    for key in path.split("."):
        if not isinstance(cur, dict) or key not in cur:
            if default is not ...:
                return default
            raise ConfigError(f"missing required field '{path}'")
        cur = cur[key]
    if kind is not None and (not isinstance(cur, kind) or isinstance(cur, bool)):
        raise ConfigError(f"field '{path}' has the wrong type ({type(cur).__name__})")
    return cur


def _density(d, path):
    v = _get(d, path, (int, float, dict))
    if isinstance(v, dict):
        r = _get(d, path + ".one_over_pi_r_squared", (int, float))
        if r <= 0:
            raise ConfigError(f"field '{path}.one_over_pi_r_squared' must be positive")
        return density_from_radius(float(r))
    return float(v)


def _tier(d, name):
    try:
        return TierParams(
            density=_density(d, f"{name}.density"),
            power=dbm_to_watt(float(_get(d, f"{name}.power_dbm", (int, float)))),
            pathloss_exponent=float(_get(d, f"{name}.pathloss_exponent", (int, float))),
            bandwidth=float(_get(d, f"{name}.bandwidth_mhz", (int, float))) * 1e6,
        )
    except DomainError as e:
        raise ConfigError(f"{name}: {e}") from None


def _as_list(v, path, kind):
    vals = v if isinstance(v, list) else [v]
    if not vals or any(not isinstance(x, kind) or isinstance(x, bool) for x in vals):
        raise ConfigError(f"field '{path}' must be a {kind.__name__ if isinstance(kind, type) else 'number'} or a non-empty list of them")
    return vals


def build_experiment(raw: dict) -> Experiment:
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be an object")
    sbs, mbs = _tier(raw, "sbs"), _tier(raw, "mbs")
    rates = tuple(float(r) for r in _as_list(_get(raw, "target_rate_mbps"), "target_rate_mbps", (int, float)))
    if any(r <= 0 for r in rates):
        raise ConfigError("field 'target_rate_mbps' must be positive")
    try:
        net = NetworkConfig(sbs, mbs, rates[0] * 1e6)
    except DomainError as e:
        raise ConfigError(str(e)) from None
    N = _get(raw, "popularity.N", int)
    gamma = float(_get(raw, "popularity.zipf_exponent", (int, float)))
    M = _get(raw, "cache_size", int)
    Ks = tuple(_as_list(_get(raw, "coop_size", default=[1]), "coop_size", int))
    caching = _get(raw, "caching", default="MPC")
    if isinstance(caching, list):
        if any(not isinstance(x, (int, float)) or isinstance(x, bool) for x in caching):
            raise ConfigError("field 'caching' must hold numbers")
        if len(caching) > N:
            raise ConfigError(f"field 'caching' has {len(caching)} entries but N={N}")
        caching = tuple(float(x) for x in caching)
    elif isinstance(caching, str):
        if caching not in BASELINES + ("optimal",):
            raise ConfigError(f"field 'caching' names unknown policy {caching!r}")
    else:
        raise ConfigError("field 'caching' must be a list or a policy name")
    q = _get(raw, "quadrature", dict, default={})
    s = _get(raw, "simulation", dict, default={})
    known_q = {f.name for f in fields(QuadratureSpec)}
    for k in q:
        if k not in known_q:
            raise ConfigError(f"unknown field 'quadrature.{k}'")
    for k in s:
        if k not in ("window_side", "realizations", "seed", "workers"):
            raise ConfigError(f"unknown field 'simulation.{k}'")
    try:
        a = zipf(N, gamma)
        if not 1 <= M <= N:
            raise ConfigError(f"field 'cache_size' must lie in 1..N={N}, got {M}")
        for K in Ks:
            if not 1 <= K <= 8:
                raise ConfigError(f"field 'coop_size' entries must lie in 1..8, got {K}")
        quad = QuadratureSpec(**q)
        sim = SimParams(window_side=float(s.get("window_side", 1e4)),
                        realizations=s.get("realizations", 10_000),
                        master_seed=s.get("seed", 0), workers=s.get("workers", 1))
    except (DomainError, TypeError) as e:
        raise ConfigError(str(e)) from None
    exp = Experiment(net, rates, a, gamma, M, Ks, caching, quad, sim, raw)
    if isinstance(caching, tuple):
        try:
            exp.distribution("given")
        except DomainError as e:
            raise ConfigError(f"field 'caching': {e}") from None
    return exp


def load_config(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None


def resolved(exp: Experiment) -> dict:
    """Fully resolved settings; execution-only knobs (workers) are left out."""
    n = exp.network
    tier = lambda t: {"density_per_m2": t.density, "power_w": t.power,
                      "pathloss_exponent": t.pathloss_exponent, "bandwidth_hz": t.bandwidth}
    sim = {"window_side": exp.sim.window_side, "realizations": exp.sim.realizations,
           "seed": exp.sim.master_seed}
    return {
        "sbs": tier(n.sbs), "mbs": tier(n.mbs),
        "target_rate_mbps": list(exp.rates_mbps),
        "popularity": {"N": exp.popularity.N, "zipf_exponent": exp.gamma},
        "cache_size": exp.cache_size, "coop_size": list(exp.coop_sizes),
        "caching": list(exp.caching) if isinstance(exp.caching, tuple) else exp.caching,
        "quadrature": asdict(exp.quad), "simulation": sim,
    }


# --------------------------------------------------------------------------
# CSV


def fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.9g}"
    return str(x)


def write_csv(stream, header, rows, meta: dict):
    for key, value in meta.items():
        stream.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])


def _emit(args, header, rows, meta):
    buf = io.StringIO()
    write_csv(buf, header, rows, meta)
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


# --------------------------------------------------------------------------
# commands


def _schemes(choice):
    return {"1": ("scheme1",), "2": ("scheme2",), "both": SCHEMES}[choice]


def _stp(cfg, K, T, a, scheme, quad):
    f = stp_scheme1 if scheme == "scheme1" else stp_scheme2
    return f(cfg, K, T, a, quad)


def _solve(cfg, exp, a, M, K, scheme):
    if scheme == "scheme1":
        s = optimize_scheme1(cfg, a, M, K, exp.quad)
        return s.T_star, s.psi_star, {"solver_path": s.solver_path, "N_s_star": s.N_s_star,
                                      "nu_star": None, "converged": s.converged,
                                      "checks_ok": not s.lemma1_violations()}
    s = optimize_scheme2(cfg, a, M, K, exp.quad)
    return s.T_star, s.psi_star, {"solver_path": s.solver_path, "N_s_star": None,
                                  "nu_star": s.nu_star, "converged": s.converged,
                                  "checks_ok": True}


def cmd_analyze(args, exp):
    policies = args.policy or ["given"]
    rows = []
    for tau in exp.rates_mbps:
        cfg = exp.with_rate(tau)
        for K in exp.coop_sizes:
            for scheme in _schemes(args.scheme):
                for pol in policies:
                    if pol == "optimal" or (pol == "given" and exp.caching == "optimal"):
                        _, psi, _ = _solve(cfg, exp, exp.popularity, exp.cache_size, K, scheme)
                    else:
                        psi = _stp(cfg, K, exp.distribution(pol), exp.popularity, scheme, exp.quad)
                    rows.append([tau, K, scheme, pol, psi])
    _emit(args, ["tau_mbps", "K", "scheme", "policy", "psi"], rows, {"config": resolved(exp)})
    return EXIT_OK


def cmd_baselines(args, exp):
    args.policy = list(BASELINES)
    return cmd_analyze(args, exp)


def cmd_simulate(args, exp):
    sim = exp.sim
    over = {}
    if args.seed is not None:
        over["master_seed"] = args.seed
    if args.realizations is not None:
        over["realizations"] = args.realizations
    if args.workers is not None:
        over["workers"] = args.workers
    try:
        sim = SimParams(**{**asdict(sim), **over})
    except DomainError as e:
        raise ConfigError(str(e)) from None
    exp = replace(exp, sim=sim)
    if exp.caching == "optimal":
        raise ConfigError("simulate needs a fixed caching distribution, not 'optimal'")
    T = exp.distribution("given")
    a = exp.popularity
    values, under = simulate_values(exp.network, T, a, exp.coop_sizes, sim,
                                    [r * 1e6 for r in exp.rates_mbps])
    mean, se = summarize(values)
    header = ["tau_mbps", "K", "scheme", "estimate", "stderr"]
    if args.validate:
        header += ["analytic", "abs_diff", "tolerance", "pass"]
    rows, all_ok = [], True
    for j, tau in enumerate(exp.rates_mbps):
        cfg = exp.with_rate(tau)
        for i, K in enumerate(exp.coop_sizes):
            for s, scheme in enumerate(SCHEMES):
                row = [tau, K, scheme, mean[j, i, s], se[j, i, s]]
                if args.validate:
                    an = _stp(cfg, K, T, a, scheme, exp.quad)
                    tol = max(0.01, 3 * se[j, i, s])
                    ok = abs(an - mean[j, i, s]) <= tol
                    all_ok &= bool(ok)
                    row += [an, abs(an - mean[j, i, s]), tol, ok]
                rows.append(row)
    _emit(args, header, rows, {"config": resolved(exp), "under_populated": under})
    return EXIT_OK if all_ok else EXIT_NUMERIC


def cmd_optimize(args, exp):
    scheme = {"1": "scheme1", "2": "scheme2"}[args.scheme]
    a, M = exp.popularity, exp.cache_size
    rows = []
    for tau in exp.rates_mbps:
        cfg = exp.with_rate(tau)
        for K in exp.coop_sizes:
            T, psi, info = _solve(cfg, exp, a, M, K, scheme)
            for n, (an, tn) in enumerate(zip(a.probabilities, T.probs), start=1):
                rows.append([tau, K, scheme, info["solver_path"], psi, info["N_s_star"],
                             info["nu_star"], info["converged"], info["checks_ok"], n, an, tn])
    header = ["tau_mbps", "K", "scheme", "solver_path", "psi_star", "N_s_star", "nu_star",
              "converged", "checks_ok", "file", "popularity", "T_star"]
    _emit(args, header, rows, {"config": resolved(exp)})
    return EXIT_OK


# sweeps ------------------------------------------------------------------


def _point(job):
    raw, variable, value, schemes, policies = job
    raw = json.loads(json.dumps(raw))
    if variable == "tau":
        raw["target_rate_mbps"] = value
    elif variable == "K":
        raw["coop_size"] = int(value)
    elif variable == "M":
        raw["cache_size"] = int(value)
    else:
        raw.setdefault("popularity", {})["zipf_exponent"] = value
    exp = build_experiment(raw)
    cfg = exp.network
    rows = []
    for K in exp.coop_sizes:
        for scheme in schemes:
            for pol in policies:
                diag = {"solver_path": None, "N_s_star": None, "nu_star": None}
                if pol == "optimal":
                    _, psi, diag = _solve(cfg, exp, exp.popularity, exp.cache_size, K, scheme)
                else:
                    psi = _stp(cfg, K, exp.distribution(pol), exp.popularity, scheme, exp.quad)
                rows.append([variable, value, K, scheme, pol, psi, None,
                             diag["solver_path"], diag["N_s_star"], diag["nu_star"]])
    return rows


def _sweep_jobs(spec, base_dir):
    base = spec.get("base")
    if isinstance(base, str):
        base = load_config(Path(base_dir) / base)
    if not isinstance(base, dict):
        raise ConfigError("sweep needs a 'base' configuration object or path")
    variable = spec.get("variable")
    if variable not in SWEEP_VARIABLES:
        raise ConfigError(f"sweep 'variable' must be one of {SWEEP_VARIABLES}")
    grid = spec.get("grid")
    if not isinstance(grid, list) or not grid:
        raise ConfigError("sweep 'grid' must be a non-empty list")
    if any(not isinstance(g, (int, float)) or isinstance(g, bool) for g in grid):
        raise ConfigError("sweep 'grid' must hold numbers")
    if list(grid) != sorted(grid):
        raise ConfigError("sweep 'grid' must be sorted ascending")
    schemes = spec.get("schemes", list(SCHEMES))
    policies = spec.get("policies", ["optimal", *BASELINES])
    if not schemes or any(s not in SCHEMES for s in schemes):
        raise ConfigError(f"sweep 'schemes' must be a non-empty subset of {SCHEMES}")
    if not policies or any(p not in ("optimal",) + BASELINES for p in policies):
        raise ConfigError("sweep 'policies' must be a non-empty subset of optimal, MPC, UC, IIDC")
    build_experiment(base)
    return base, [(base, variable, g, schemes, policies) for g in grid]


def cmd_sweep(args, _exp):
    spec = load_config(args.spec)
    sweeps = spec.get("sweeps", [spec]) if isinstance(spec, dict) else None
    if not isinstance(sweeps, list):
        raise ConfigError("sweep file must be an object or hold a 'sweeps' list")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = ["variable", "value", "K", "scheme", "policy", "psi", "stderr",
              "solver_path", "N_s_star", "nu_star"]
    for idx, sw in enumerate(sweeps):
        if not isinstance(sw, dict):
            raise ConfigError("each sweep must be an object")
        base, jobs = _sweep_jobs(sw, Path(args.spec).parent)
        if args.workers > 1:
            with ProcessPoolExecutor(max_workers=args.workers) as ex:
                parts = list(ex.map(_point, jobs))
        else:
            parts = [_point(j) for j in jobs]
        rows = [r for p in parts for r in p]
        name = sw.get("name", f"sweep{idx + 1}")
        meta = {"config": resolved(build_experiment(base)), "sweep": {
            "variable": sw["variable"], "grid": sw["grid"], "schemes": jobs[0][3],
            "policies": jobs[0][4]}}
        with open(out / f"{name}.csv", "w", encoding="utf-8", newline="\n") as f:
            write_csv(f, header, rows, meta)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="hetcache", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="JSON experiment configuration")
        sp.add_argument("--out", help="write CSV here instead of stdout")

    sp = sub.add_parser("analyze", help="analytic STP per (rate, K, scheme, policy)")
    common(sp)
    sp.add_argument("--scheme", choices=("1", "2", "both"), default="both")
    sp.add_argument("--policy", action="append", choices=POLICIES)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("baselines", help="analytic STP of MPC, UC and IIDC")
    common(sp)
    sp.add_argument("--scheme", choices=("1", "2", "both"), default="both")
    sp.set_defaults(func=cmd_baselines)

    sp = sub.add_parser("simulate", help="Monte Carlo STP estimate")
    common(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--realizations", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--validate", action="store_true",
                    help="compare with the analytic value; exit 4 if any point misses")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("optimize", help="optimal caching distribution")
    common(sp)
    sp.add_argument("--scheme", choices=("1", "2"), required=True)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("sweep", help="figure-style parameter sweeps, one CSV each")
    sp.add_argument("spec", help="JSON sweep specification")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        exp = None if args.command == "sweep" else build_experiment(load_config(args.config))
        return args.func(args, exp)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except RegionError as e:
        print(f"operating-region violation: {e} (SBS STP {e.sbs_value:.6g} vs psi_m {e.psi_m:.6g})",
              file=sys.stderr)
        return EXIT_REGION
    except (QuadratureError, InfeasibleError, ArithmeticError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except DomainError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
