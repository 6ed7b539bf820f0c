"""Command-line pipeline: scenario files, subcommands, artifact emission.

Scenarios are JSON documents naming one member of each model family
(source measure, cost, congestion, kernel, potential) plus resolutions and
solver parameters.  Validation failures carry a JSON-pointer-style path.
Exit codes: 0 success, 1 validation error, 2 numerical failure (diagnostics
are still written).  All floats are emitted with 17 significant digits so
reruns are bit-identical on one platform.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .dynamics import JkoParams, jko_flow
from .energy import CongestionSpec, EnergyModel, InteractionKernel, PotentialSpec
from .measures import (
    DiscreteDensity,
    Grid,
    Interval,
    density_from_values,
    gaussian_truncated_density,
    two_bumps_density,
    uniform_density,
)
from .solver import Scenario, SolverParams, minimize_quantile
from .transport import CostSpec
from .verify import (
    displacement_convexity_probe,
    equilibrium_residual,
    monge_ampere_residual_1d,
    purity_check,
    transport_derivative_check,
)
from .welfare import cost_of_anarchy

__all__ = ["ScenarioError", "load_scenario", "run", "main"]

_CHECK_NAMES = ("eq", "purity", "ma", "dc", "deriv")


class ScenarioError(ValueError):
    """Validation failure with a JSON-pointer-style location."""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer
        super().__init__(f"{pointer}: {message}")


def _require(condition: bool, pointer: str, message: str) -> None:
    if not condition:
        raise ScenarioError(pointer, message)


def _get_section(raw: dict, key: str, pointer: str, default: Optional[dict] = None) -> dict:
    obj = raw.get(key, default)
    _require(obj is not None, pointer, "required section is missing")
    _require(isinstance(obj, dict), pointer, "must be a JSON object")
    return obj


def _number(obj: dict, key: str, pointer: str, default=None) -> float:
    val = obj.get(key, default)
    _require(val is not None, f"{pointer}/{key}", "required number is missing")
    _require(isinstance(val, (int, float)) and not isinstance(val, bool),
             f"{pointer}/{key}", "must be a number")
    return float(val)


def _integer(obj: dict, key: str, pointer: str, default=None) -> int:
    val = obj.get(key, default)
    _require(val is not None, f"{pointer}/{key}", "required integer is missing")
    _require(isinstance(val, int) and not isinstance(val, bool),
             f"{pointer}/{key}", "must be an integer")
    return int(val)


def _check_keys(obj: dict, allowed: set, pointer: str) -> None:
    unknown = sorted(set(obj) - allowed)
    _require(not unknown, f"{pointer}/{unknown[0]}" if unknown else pointer,
             "unknown field")


def _load_density_file(path: Path, grid: Grid, pointer: str) -> DiscreteDensity:
    _require(path.exists(), pointer, f"file not found: {path}")
    try:
        table = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=0)
    except ValueError:
        table = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=1)
    values = table[:, -1]
    _require(values.size == grid.n, pointer,
             f"expected {grid.n} rows (one per grid cell), got {values.size}")
    _require(bool(np.all(np.isfinite(values)) and np.all(values >= 0)), pointer,
             "density values must be finite and non-negative")
    _require(float(values.sum()) > 0.0, pointer, "density must carry positive mass")
    return density_from_values(grid, values)


def _build_mu(raw: dict, grid: Grid, base_dir: Path) -> DiscreteDensity:
    obj = _get_section(raw, "mu", "/mu")
    kind = obj.get("kind")
    if kind == "uniform":
        _check_keys(obj, {"kind"}, "/mu")
        return uniform_density(grid)
    if kind == "gaussian_truncated":
        _check_keys(obj, {"kind", "mean", "sigma"}, "/mu")
        mean = _number(obj, "mean", "/mu")
        sigma = _number(obj, "sigma", "/mu")
        _require(sigma > 0, "/mu/sigma", "must be > 0")
        mu = gaussian_truncated_density(grid, mean, sigma)
        _require(bool(np.all(mu.values > 0)), "/mu/sigma",
                 "resulting density is not strictly positive on the grid "
                 "(truncated tail underflows); widen sigma or shrink the interval")
        return mu
    if kind == "table":
        _check_keys(obj, {"kind", "path"}, "/mu")
        path = obj.get("path")
        _require(isinstance(path, str), "/mu/path", "must be a file path string")
        mu = _load_density_file(base_dir / path, grid, "/mu/path")
        _require(bool(np.all(mu.values > 0)), "/mu/path",
                 "table density must be strictly positive on every cell "
                 "(the source measure must have full support on the interval)")
        return mu
    raise ScenarioError("/mu/kind", "must be one of: uniform, gaussian_truncated, table")


def _build_cost(raw: dict) -> CostSpec:
    obj = _get_section(raw, "cost", "/cost", default={"kind": "quadratic"})
    kind = obj.get("kind")
    if kind == "quadratic":
        _check_keys(obj, {"kind"}, "/cost")
        return CostSpec.quadratic()
    if kind == "convex_difference":
        _check_keys(obj, {"kind", "p"}, "/cost")
        p = _number(obj, "p", "/cost")
        _require(p > 1.0, "/cost/p", "must be > 1")
        return CostSpec.power(p)
    raise ScenarioError("/cost/kind", "must be one of: quadratic, convex_difference")


def _build_congestion(raw: dict) -> CongestionSpec:
    obj = _get_section(raw, "congestion", "/congestion")
    kind = obj.get("kind")
    if kind == "entropy":
        _check_keys(obj, {"kind", "convention"}, "/congestion")
        convention = obj.get("convention", "shifted")
        _require(convention in ("shifted", "plain"), "/congestion/convention",
                 "must be 'shifted' or 'plain'")
        return CongestionSpec.entropy(convention)
    if kind == "power":
        _check_keys(obj, {"kind", "alpha", "a"}, "/congestion")
        alpha = _number(obj, "alpha", "/congestion")
        a = _number(obj, "a", "/congestion", default=1.0)
        _require(alpha > 0, "/congestion/alpha", "must be > 0")
        _require(a > 0, "/congestion/a", "must be > 0")
        return CongestionSpec.power(alpha, a)
    raise ScenarioError("/congestion/kind", "must be one of: entropy, power")


def _build_kernel(raw: dict, interval: Interval) -> Optional[InteractionKernel]:
    obj = _get_section(raw, "kernel", "/kernel", default={"kind": "none"})
    kind = obj.get("kind")
    if kind == "none":
        _check_keys(obj, {"kind"}, "/kernel")
        return None
    builders = {
        "quadratic_distance": InteractionKernel.quadratic_distance,
        "cubic_distance": InteractionKernel.cubic_distance,
        "product": InteractionKernel.product,
    }
    if kind in builders:
        _check_keys(obj, {"kind", "kappa"}, "/kernel")
        kappa = _number(obj, "kappa", "/kernel")
        return builders[kind](kappa, probe_interval=(interval.lo, interval.hi))
    raise ScenarioError("/kernel/kind",
                        "must be one of: none, quadratic_distance, cubic_distance, product")


def _build_potential(raw: dict, interval: Interval) -> Optional[PotentialSpec]:
    obj = _get_section(raw, "potential", "/potential", default={"kind": "none"})
    kind = obj.get("kind")
    if kind == "none":
        _check_keys(obj, {"kind"}, "/potential")
        return None
    if kind == "poly":
        _check_keys(obj, {"kind", "coeffs", "declared_convex"}, "/potential")
        coeffs = obj.get("coeffs")
        _require(isinstance(coeffs, list) and len(coeffs) > 0
                 and all(isinstance(c, (int, float)) and not isinstance(c, bool)
                         for c in coeffs),
                 "/potential/coeffs", "must be a non-empty list of numbers")
        declared = obj.get("declared_convex", False)
        _require(isinstance(declared, bool), "/potential/declared_convex",
                 "must be a boolean")
        return PotentialSpec.poly(
            coeffs, declared_convex=declared, probe_interval=(interval.lo, interval.hi)
        )
    raise ScenarioError("/potential/kind", "must be one of: none, poly")


def _build_solver_params(raw: dict) -> SolverParams:
    obj = _get_section(raw, "solver", "/solver", default={})
    _check_keys(obj, {"max_iters", "grad_tol", "step0", "beta", "sigma",
                      "monotone_projection"}, "/solver")
    defaults = SolverParams()
    params = dict(
        max_iters=_integer(obj, "max_iters", "/solver", default=defaults.max_iters),
        grad_tol=_number(obj, "grad_tol", "/solver", default=defaults.grad_tol),
        step0=_number(obj, "step0", "/solver", default=defaults.step0),
        beta=_number(obj, "beta", "/solver", default=defaults.beta),
        sigma=_number(obj, "sigma", "/solver", default=defaults.sigma),
    )
    mono = obj.get("monotone_projection", defaults.monotone_projection)
    _require(isinstance(mono, bool), "/solver/monotone_projection", "must be a boolean")
    _require(params["max_iters"] >= 1, "/solver/max_iters", "must be >= 1")
    _require(params["grad_tol"] > 0, "/solver/grad_tol", "must be > 0")
    _require(params["step0"] > 0, "/solver/step0", "must be > 0")
    _require(0 < params["beta"] < 1, "/solver/beta", "must lie in (0, 1)")
    _require(0 < params["sigma"] < 1, "/solver/sigma", "must lie in (0, 1)")
    return SolverParams(monotone_projection=mono, **params)


class _Bundle:
    """A loaded scenario with its solver parameters and provenance."""

    def __init__(self, scenario: Scenario, params: SolverParams, seed: int,
                 raw: dict, scenario_hash: str, path: Path):
        self.scenario = scenario
        self.params = params
        self.seed = seed
        self.raw = raw
        self.scenario_hash = scenario_hash
        self.path = path

    def metadata(self) -> dict:
        return {
            "tool_version": __version__,
            "scenario_hash": self.scenario_hash,
            "congestion_kind": self.scenario.model.congestion.kind,
            "congestion_convention": self.scenario.model.congestion.convention,
            "support_mode": self.scenario.support_mode,
            "seed": self.seed,
        }


def _scenario_from_raw(raw: dict, base_dir: Path) -> tuple[Scenario, SolverParams, int]:
    _require(isinstance(raw, dict), "/", "scenario file must contain a JSON object")
    _check_keys(raw, {"interval", "grid_n", "quantile_m", "mu", "cost", "congestion",
                      "kernel", "potential", "support_mode", "solver", "seed"}, "")
    iv_obj = _get_section(raw, "interval", "/interval")
    _check_keys(iv_obj, {"lo", "hi"}, "/interval")
    lo = _number(iv_obj, "lo", "/interval")
    hi = _number(iv_obj, "hi", "/interval")
    _require(hi > lo, "/interval/hi", "must be > lo")
    interval = Interval(lo, hi)

    grid_n = _integer(raw, "grid_n", "")
    _require(grid_n >= 2, "/grid_n", "must be >= 2")
    grid = Grid(interval, grid_n)
    quantile_m = _integer(raw, "quantile_m", "", default=8 * grid_n)
    _require(quantile_m >= 2, "/quantile_m", "must be >= 2")

    support_mode = raw.get("support_mode", "free")
    _require(support_mode in ("free", "fixed_endpoints"), "/support_mode",
             "must be 'free' or 'fixed_endpoints'")
    seed = raw.get("seed", 0)
    _require(isinstance(seed, int) and not isinstance(seed, bool), "/seed",
             "must be an integer")

    mu = _build_mu(raw, grid, base_dir)
    cost = _build_cost(raw)
    model = EnergyModel(
        grid=grid,
        congestion=_build_congestion(raw),
        kernel=_build_kernel(raw, interval),
        potential=_build_potential(raw, interval),
    )
    scenario = Scenario(mu=mu, cost=cost, model=model, m=quantile_m,
                        support_mode=support_mode)
    return scenario, _build_solver_params(raw), seed


def _load_bundle(path_str: str) -> _Bundle:
    path = Path(path_str)
    if not path.exists():
        raise ScenarioError("/", f"scenario file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError("/", f"invalid JSON: {exc}") from exc
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    scenario_hash = hashlib.sha256(canonical.encode()).hexdigest()
    scenario, params, seed = _scenario_from_raw(raw, path.parent)
    return _Bundle(scenario, params, seed, raw, scenario_hash, path)


def load_scenario(path: str) -> Scenario:
    """Load and fully validate a scenario file (errors carry a field path)."""
    return _load_bundle(path).scenario


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def _write_csv(path: Path, header: str, columns) -> None:
    rows = zip(*columns)
    lines = [header]
    for row in rows:
        lines.append(",".join(str(c) if isinstance(c, (int, np.integer)) else _fmt(c)
                              for c in row))
    path.write_text("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n")


def _result_payload(result) -> dict:
    return {
        "J": result.J_value,
        "M": result.M,
        "residual_sup": result.residual_sup,
        "residual_eq": result.residual_eq,
        "iterations": result.iterations,
        "converged": result.converged,
        "projected_gradient": result.metadata["projected_gradient"],
        "stalled": result.metadata["stalled"],
        "m": result.metadata["m"],
        "n": result.metadata["n"],
    }


def _cmd_solve(bundle: _Bundle, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenario, params = bundle.scenario, bundle.params
    if args.max_iters is not None:
        params = replace(params, max_iters=args.max_iters)
    if args.tol is not None:
        params = replace(params, grad_tol=args.tol)
    if args.support is not None:
        mode = "fixed_endpoints" if args.support == "fixed" else "free"
        scenario = replace(scenario, support_mode=mode)
    diagnostics = {"command": "solve", **bundle.metadata()}
    try:
        result = minimize_quantile(scenario, params)
    except (RuntimeError, ValueError) as exc:
        diagnostics["error"] = str(exc)
        _write_json(out / "diagnostics.json", diagnostics)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    _write_csv(out / "equilibrium.csv", "node,nu",
               (scenario.grid.nodes, result.nu.values))
    _write_csv(out / "quantile.csv", "p,G",
               (result.G.probabilities, result.G.values))
    diagnostics.update(_result_payload(result))
    _write_json(out / "diagnostics.json", diagnostics)
    if not result.converged:
        print("solver did not converge; diagnostics written", file=sys.stderr)
        return 2
    return 0


def _initial_density(args, scenario: Scenario) -> DiscreteDensity:
    if args.init == "uniform":
        return uniform_density(scenario.grid)
    if args.init == "two_bumps":
        return two_bumps_density(scenario.grid)
    _require(args.init_file is not None, "/init",
             "--init file requires --init-file PATH")
    return _load_density_file(Path(args.init_file), scenario.grid, "/init-file")


def _cmd_jko(bundle: _Bundle, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenario = bundle.scenario
    nu0 = _initial_density(args, scenario)
    diagnostics = {"command": "jko", "tau": args.tau, "steps": args.steps,
                   "init": args.init, **bundle.metadata()}
    try:
        params = JkoParams(tau=args.tau, steps=args.steps, inner=bundle.params)
        trajectory = jko_flow(scenario, nu0, params)
    except (RuntimeError, ValueError) as exc:
        diagnostics["error"] = str(exc)
        _write_json(out / "diagnostics.json", diagnostics)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    ks = [p.k for p in trajectory.points]
    _write_csv(out / "trajectory.csv", "k,J,W2_step",
               (ks, [p.J_value for p in trajectory.points],
                [p.W2_step for p in trajectory.points]))
    for point in trajectory.points:
        _write_csv(out / f"density_{point.k:04d}.csv", "node,nu",
                   (scenario.grid.nodes, point.nu.values))
    diagnostics.update(trajectory.diagnostics)
    _write_json(out / "diagnostics.json", diagnostics)
    return 0


def _cmd_welfare(bundle: _Bundle, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"command": "welfare", **bundle.metadata()}
    try:
        report = cost_of_anarchy(bundle.scenario, bundle.params)
    except (RuntimeError, ValueError) as exc:
        payload["error"] = str(exc)
        _write_json(out / "welfare.json", payload)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    payload.update({
        "sc_equilibrium": report.sc_equilibrium,
        "sc_optimum": report.sc_optimum,
        "cost_of_anarchy": report.cost_of_anarchy,
        "stationarity_residual_paper": report.stationarity_residual_paper,
        "stationarity_residual_marginal": report.stationarity_residual_marginal,
        "warnings": list(report.warnings),
    })
    _write_json(out / "welfare.json", payload)
    _write_csv(out / "taxes.csv", "node,tax_paper,tax_marginal",
               (bundle.scenario.grid.nodes, report.tax_paper, report.tax_marginal))
    return 0


def _run_check(name: str, bundle: _Bundle, nu: DiscreteDensity) -> dict:
    scenario = bundle.scenario
    if name == "eq":
        rep = equilibrium_residual(scenario, nu)
        return {"residual_sup": rep.residual_sup, "residual_eq": rep.residual_eq,
                "M": rep.M, "epsilon": rep.epsilon}
    if name == "purity":
        rep = purity_check(scenario, nu)
        return {"pure": rep.pure, "lp_value": rep.lp_value,
                "monotone_value": rep.monotone_value, "cost_gap": rep.cost_gap,
                "crossings": rep.crossings, "atoms": rep.atoms}
    if name == "ma":
        return {"residual": monge_ampere_residual_1d(scenario, nu)}
    rng = np.random.default_rng(bundle.seed)
    if name == "dc":
        nu_a = density_from_values(scenario.grid, rng.uniform(0.2, 1.8, scenario.n))
        nu_b = density_from_values(scenario.grid, rng.uniform(0.2, 1.8, scenario.n))
        rep = displacement_convexity_probe(scenario, nu_a, nu_b)
        return {"max_violation": rep.max_violation,
                "midpoint_margin": rep.midpoint_margin,
                "J_a": rep.J_a, "J_b": rep.J_b}
    rho = density_from_values(scenario.grid, rng.uniform(0.2, 1.8, scenario.n))
    rep = transport_derivative_check(scenario.mu, nu, rho, scenario.cost,
                                     m=scenario.m)
    return {"eps": list(rep.eps), "quotients": list(rep.quotients),
            "predicted": rep.predicted, "errors": list(rep.errors)}


def _cmd_verify(bundle: _Bundle, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = [c.strip() for c in args.checks.split(",") if c.strip()]
    for name in names:
        _require(name in _CHECK_NAMES, "/checks",
                 f"unknown check {name!r}; choose from {', '.join(_CHECK_NAMES)}")
    payload = {"command": "verify", "checks": names, **bundle.metadata()}
    failed = False
    if args.density is not None:
        nu = _load_density_file(Path(args.density), bundle.scenario.grid, "/density")
        payload["density_source"] = "file"
    else:
        result = minimize_quantile(bundle.scenario, bundle.params)
        nu = result.nu
        payload["density_source"] = "solved"
        payload["solver"] = _result_payload(result)
        failed = failed or not result.converged
    results = {}
    for name in names:
        try:
            results[name] = _run_check(name, bundle, nu)
        except ValueError as exc:
            results[name] = {"status": "inapplicable", "detail": str(exc)}
        except RuntimeError as exc:
            results[name] = {"status": "failed", "detail": str(exc)}
            failed = True
    payload["results"] = results
    _write_json(out / "verify.json", payload)
    if failed:
        print("verification encountered a numerical failure; see verify.json",
              file=sys.stderr)
        return 2
    return 0


def _thread_count() -> int:
    raw = os.environ.get("CNOT_THREADS", "")
    if raw.strip():
        try:
            value = int(raw)
        except ValueError as exc:
            raise ScenarioError("/CNOT_THREADS", "must be a positive integer") from exc
        _require(value >= 1, "/CNOT_THREADS", "must be a positive integer")
        return value
    return min(4, os.cpu_count() or 1)


def _set_path(raw: dict, dotted: str, value: float) -> None:
    keys = dotted.split(".")
    obj = raw
    for key in keys[:-1]:
        _require(isinstance(obj, dict) and key in obj, "/param",
                 f"path segment {key!r} not present in the scenario")
        obj = obj[key]
    _require(isinstance(obj, dict), "/param", "path does not lead to an object field")
    obj[keys[-1]] = value


def _cmd_sweep(bundle: _Bundle, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    except ValueError:
        print("error: /values: must be comma-separated numbers", file=sys.stderr)
        return 1
    _require(len(values) > 0, "/values", "needs at least one value")
    leaf = args.param.split(".")[-1]
    runs = []
    for i, value in enumerate(values):
        raw = copy.deepcopy(bundle.raw)
        _set_path(raw, args.param, value)
        run_dir = out / f"run_{i:03d}_{leaf}_{value:g}"
        run_dir.mkdir(parents=True, exist_ok=True)
        scenario_path = run_dir / "scenario.json"
        _write_json(scenario_path, raw)
        runs.append((value, run_dir, scenario_path))

    def solve_one(entry):
        value, run_dir, scenario_path = entry
        sub = _load_bundle(str(scenario_path))
        ns = argparse.Namespace(out=str(run_dir), max_iters=None, tol=None, support=None)
        code = _cmd_solve(sub, ns)
        diag = json.loads((run_dir / "diagnostics.json").read_text())
        return value, run_dir.name, code, diag

    with ThreadPoolExecutor(max_workers=_thread_count()) as pool:
        outcomes = list(pool.map(solve_one, runs))

    lines = ["value,directory,exit_code,J,M,residual_sup,residual_eq,converged"]
    worst = 0
    for value, name, code, diag in outcomes:
        worst = max(worst, code)
        lines.append(",".join([
            _fmt(value), name, str(code),
            _fmt(diag.get("J", float("nan"))), _fmt(diag.get("M", float("nan"))),
            _fmt(diag.get("residual_sup", float("nan"))),
            _fmt(diag.get("residual_eq", float("nan"))),
            str(diag.get("converged", False)),
        ]))
    (out / "summary.csv").write_text("\n".join(lines) + "\n")
    return worst


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); route to exit code 1
        raise ScenarioError("/args", message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="cnot", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", default="out", help="output directory")

    p_solve = sub.add_parser("solve", help="compute the equilibrium")
    common(p_solve)
    p_solve.add_argument("--max-iters", type=int, default=None)
    p_solve.add_argument("--tol", type=float, default=None)
    p_solve.add_argument("--support", choices=("free", "fixed"), default=None)

    p_jko = sub.add_parser("jko", help="run the minimizing-movement flow")
    common(p_jko)
    p_jko.add_argument("--tau", type=float, default=0.1)
    p_jko.add_argument("--steps", type=int, default=10)
    p_jko.add_argument("--init", choices=("uniform", "two_bumps", "file"),
                       default="uniform")
    p_jko.add_argument("--init-file", default=None)

    p_welfare = sub.add_parser("welfare", help="social cost, taxes, cost of anarchy")
    common(p_welfare)

    p_verify = sub.add_parser("verify", help="independent equilibrium checks")
    common(p_verify)
    p_verify.add_argument("--density", default=None,
                          help="density CSV to verify (defaults to solving first)")
    p_verify.add_argument("--checks", default="eq,purity,dc,deriv",
                          help=f"comma-separated subset of {','.join(_CHECK_NAMES)}")

    p_sweep = sub.add_parser("sweep", help="solve across one parameter's values")
    common(p_sweep)
    p_sweep.add_argument("--param", required=True,
                         help="dotted path into the scenario, e.g. kernel.kappa")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated numbers")
    return parser


_COMMANDS = {
    "solve": _cmd_solve,
    "jko": _cmd_jko,
    "welfare": _cmd_welfare,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise ScenarioError("/args", "a command is required "
                                "(solve, jko, welfare, verify, sweep)")
        bundle = _load_bundle(args.scenario)
        return _COMMANDS[args.command](bundle, args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run(command: str, args: list) -> int:
    """Programmatic entry point: dispatch one command with its argument list."""
    return main([command] + list(args))


if __name__ == "__main__":
    sys.exit(main())
