"""Command line front end: ``distdrift <command> [options]``."""

import argparse
import json
import math
import os
import sys
import warnings
from pathlib import Path

from . import __version__
from .config import load_config, with_overrides
from .errors import ConfigError, DistDriftError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_NO_SOLUTION = 3
EXIT_MANY_SOLUTIONS = 4
EXIT_NO_CONVERGENCE = 5


class Run:
    """Resolved configuration plus output helpers shared by all commands."""

    def __init__(self, command, cfg, out):
        self.command = command
        self.cfg = cfg
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.digest = cfg.digest()

    def header(self):
        return [f"distdrift {__version__}", f"command: {self.command}",
                f"config_sha256: {self.digest}", f"seed: {self.cfg.seed}"]

    def provenance(self):
        return {"version": __version__, "command": self.command, "config_sha256": self.digest,
                "seed": self.cfg.seed}

    def write_json(self, name, payload):
        body = {"provenance": self.provenance(), **_clean(payload)}
        with open(self.out / name, "w") as fh:
            json.dump(body, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, name, columns, rows):
        with open(self.out / name, "w", newline="") as fh:
            for line in self.header():
                fh.write(f"# {line}\n")
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _clean(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


# ---------------------------------------------------------------------------
# building blocks

def _coefficients(cfg):
    from .coefficients import field_from_dict
    c = cfg.coefficients
    return field_from_dict({"sigma": c.sigma.as_dict(), "beta": c.beta.as_dict(), "R": c.R,
                            "grid_step": c.grid_step})


def _problem(cfg):
    from .semilinear import Boundary, Hints, Initial, catalog_problem
    p = cfg.problem
    if p.initial is not None:
        data = Initial(p.initial.anchor, p.initial.x0, p.initial.x1)
    else:
        b = p.boundary
        data = Boundary(b.A, b.B) if b is not None else Boundary(0.0, 0.0)
    hints = Hints(**p.hints.model_dump()) if p.hints is not None else None
    try:
        return catalog_problem(p.F.id, p.F.params, p.interval, data, hints)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"field problem.F: {exc}") from None


def _sim_config(cfg, dt=None, substeps=1):
    from .forward import SimConfig
    s = cfg.sim
    try:
        return SimConfig(dt or s.dt, s.paths, cfg.seed, s.tmax, tuple(s.interval), substeps)
    except ValueError as exc:
        raise ConfigError(f"field sim: {exc}") from None


def _solve(run, scale, prob):
    """Run the configured solver; returns ``(solution or None, meta, exit code)``."""
    import numpy as np
    from .linear import solve_linear_bvp
    from .semilinear import (ManyRoots, NoRoot, check_uniqueness_conditions, estimate_constants,
                             solve_bvp_picard, solve_bvp_shooting, solve_semilinear_ivp)
    from .errors import ContractionNotGuaranteed, NoConvergence
    p = run.cfg.problem
    method = p.method
    meta = {"method": method}
    conditions = None
    if method != "ivp":
        unit = tuple(prob.interval) == (0.0, 1.0)
        conditions = check_uniqueness_conditions(prob, scale if unit else None).to_dict()
    if method == "auto":
        routes = []
        if conditions["route_c"]:
            routes.append("kernel-contraction")
        if conditions["route_a"]:
            routes.append("monotone-linear-growth")
        if conditions["route_b"]:
            routes.append("bounded-lipschitz")
        method = "picard" if conditions["route_c"] else "shooting"
        meta.update(method=method, routed_by="auto", justification=routes or ["none"])
    try:
        if method == "linear-bvp":
            est = estimate_constants(prob.F, prob.interval)
            if est["k_y"] > 0 or est["k_z"] > 0:
                raise ConfigError("field problem.F: linear-bvp needs F independent of u and u'")
            if tuple(prob.interval) != (0.0, 1.0):
                raise ConfigError("field problem.interval: linear-bvp works on [0, 1]")
            sol = solve_linear_bvp(scale, lambda x: prob.F(x, 0.0 * x, 0.0 * x),
                                   prob.data.A, prob.data.B)
        elif method == "ivp":
            sol = solve_semilinear_ivp(scale, prob)
        elif method == "picard":
            sol = solve_bvp_picard(scale, prob, force=p.force)
        else:
            res = solve_bvp_shooting(scale, prob, root_tol=p.root_tol, max_slope=p.max_slope)
            if res.phi_samples is not None:
                meta["phi_scan"] = {"x1": res.phi_samples[:, 0], "phi": res.phi_samples[:, 1]}
            if isinstance(res, NoRoot):
                meta["outcome"] = "no-root"
                return None, meta, conditions, EXIT_NO_SOLUTION
            if isinstance(res, ManyRoots):
                meta.update(outcome="many-roots", roots=res.x1)
                return None, meta, conditions, EXIT_MANY_SOLUTIONS
            sol = res.u
            meta["x1"] = res.x1
    except ContractionNotGuaranteed as exc:
        meta.update(outcome="contraction-not-guaranteed", message=str(exc), k=exc.k,
                    threshold=exc.threshold)
        return None, meta, conditions, EXIT_NO_CONVERGENCE
    except NoConvergence as exc:
        meta.update(outcome="no-convergence", message=str(exc), residual=exc.residual)
        return None, meta, conditions, EXIT_NO_CONVERGENCE
    meta["outcome"] = "solution"
    meta.update({k: v for k, v in sol.info.items() if k in
                 ("iterations", "residual", "lambda", "lipschitz", "kernel_bound")})
    meta["sup_u"] = float(np.max(np.abs(sol.u)))
    return sol, meta, conditions, EXIT_OK


# ---------------------------------------------------------------------------
# commands

def cmd_scale(run):
    from .coefficients import build_scale, check_wellposedness
    scale = build_scale(_coefficients(run.cfg))
    run.write_csv("sigma.csv", ["x", "Sigma", "h", "h_prime", "v"],
                  zip(scale.grid.tolist(), scale.Sigma.tolist(), scale.h.tolist(),
                      scale.h_prime.tolist(), scale.v.tolist()))
    run.write_json("wellposedness.json", check_wellposedness(scale).to_dict())
    return EXIT_OK


def cmd_kernel(run):
    from .coefficients import build_scale
    from .linear import kernel_bound, kernel_table
    scale = build_scale(_coefficients(run.cfg))
    run.write_csv("kernel.csv", ["x", "y", "K", "dK_dx"], kernel_table(scale).tolist())
    run.write_json("kernel.json", {"kernel_bound": kernel_bound(scale)})
    return EXIT_OK


def cmd_solve(run):
    from .coefficients import build_scale
    scale = build_scale(_coefficients(run.cfg))
    prob = _problem(run.cfg)
    sol, meta, conditions, code = _solve(run, scale, prob)
    if sol is not None:
        sol.to_csv(run.out / "solution.csv", run.header())
    run.write_json("conditions.json", conditions or {"note": "not evaluated for initial data"})
    run.write_json("solver.json", meta)
    return code


def cmd_simulate(run):
    from .coefficients import build_scale
    from .forward import simulate_paths, write_paths_csv, write_summary_csv
    scale = build_scale(_coefficients(run.cfg))
    ens = simulate_paths(scale, run.cfg.sim.x0, _sim_config(run.cfg))
    write_summary_csv(ens, run.out / "paths_summary.csv", run.header())
    if run.cfg.sim.dump_paths:
        write_paths_csv(ens, run.out / "paths.csv", run.header())
    return EXIT_OK


def cmd_exit_time(run):
    from .coefficients import build_scale
    from .errors import OutOfRange, Unsupported
    from .forward import (compare_exit_to_gamma, estimate_exp_moment, exit_stats,
                          exp_moment_exit_closed_form, simulate_paths)
    from .linear import gamma_function
    coeffs = _coefficients(run.cfg)
    scale = build_scale(coeffs)
    s = run.cfg.sim
    fine_cfg = _sim_config(run.cfg)
    fine = simulate_paths(scale, s.x0, fine_cfg)
    coarse = None
    if run.cfg.exit.richardson:
        coarse = simulate_paths(scale, s.x0, fine_cfg.coarsened(s.coarse_factor))
    report = {"exit": exit_stats(fine).to_dict()}
    if coarse is not None:
        report["exit_coarse"] = exit_stats(coarse).to_dict()
    if tuple(s.interval) == (0.0, 1.0):
        report["gamma_comparison"] = compare_exit_to_gamma(fine, gamma_function(scale), s.x0,
                                                           coarse).to_dict()
    else:
        report["gamma_comparison"] = None
    table = []
    lo, hi = s.interval
    for g in run.cfg.exit.gammas:
        try:
            exact = exp_moment_exit_closed_form(g, lo, hi, s.x0, coeffs)
        except (Unsupported, OutOfRange):
            exact = None
        horizons = run.cfg.exit.horizons or [fine.t_max]
        for H in horizons:
            row = estimate_exp_moment(fine, g, min(H, fine.t_max)).to_dict()
            row["closed_form"] = exact
            table.append(row)
    report["exp_moments"] = table
    run.write_json("exit_report.json", report)
    return EXIT_OK


def _levels(dts):
    base = min(dts)
    out = []
    for dt in dts:
        m = round(dt / base)
        out.append((base * m, m) if abs(dt - base * m) <= 1e-12 * dt else (dt, 1))
    return out


def _verify_triple(run, scale, coeffs, u, F, gammas, dt_levels):
    from .bsde import (build_triple_from_pde, bsde_residual, generator_from_F,
                       norm_class_estimate)
    from .forward import simulate_paths
    v = run.cfg.verify
    gen = generator_from_F(F, coeffs)
    rows = []
    rms0 = []
    norms = []
    triple = None
    levels = _levels(dt_levels)
    for i, (dt, m) in enumerate(levels):
        ens = simulate_paths(scale, run.cfg.sim.x0, _sim_config(run.cfg, dt, m))
        triple = build_triple_from_pde(u, ens)
        rep = bsde_residual(triple, gen, checkpoints=v.checkpoints)
        rms0.append(rep.rms[0])
        for c, t in enumerate(rep.checkpoints):
            rows.append([dt, t, rep.rms[c], rep.mean[c], rep.max_abs[c], rep.n_paths,
                         rep.censored_fraction])
        if i == int(min(range(len(levels)), key=lambda j: levels[j][0])):
            norms = [norm_class_estimate(triple, g, horizons=v.horizons).to_dict() for g in gammas]
            invariants = triple.check_invariants()
    order = sorted(range(len(levels)), key=lambda j: -levels[j][0])
    decay = all(rms0[order[k + 1]] < rms0[order[k]] for k in range(len(order) - 1))
    run.write_csv("residuals.csv", ["dt", "checkpoint", "rms", "mean", "max_abs", "n_paths",
                                    "censored_fraction"], rows)
    return norms, decay, invariants, rms0


def cmd_verify(run):
    from .coefficients import build_scale
    coeffs = _coefficients(run.cfg)
    scale = build_scale(coeffs)
    prob = _problem(run.cfg)
    sol, meta, conditions, code = _solve(run, scale, prob)
    run.write_json("solver.json", meta)
    if sol is None:
        return code
    sol.to_csv(run.out / "solution.csv", run.header())
    norms, decay, inv, rms0 = _verify_triple(run, scale, coeffs, sol, prob.F, run.cfg.verify.gammas,
                                             run.cfg.verify.dt_levels)
    run.write_json("norm_class.json", {"norm_class": norms, "residual_rms_t0": rms0,
                                       "dt_levels": run.cfg.verify.dt_levels,
                                       "residual_decreases_with_dt": decay, "invariants": inv})
    return EXIT_OK


def cmd_r60_demo(run):
    import numpy as np
    from .coefficients import CoefficientField, Const, build_scale
    from .linear import GridFunction
    from .semilinear import Boundary, Hints, ManyRoots, SemilinearProblem, shooting_solution, solve_bvp_shooting
    d = run.cfg.demo
    # u'' = -pi^2 u: sigma = sqrt(2), beta = 0
    shoot_scale = build_scale(CoefficientField(Const(math.sqrt(2.0)), Const(0.0)))
    k = math.pi ** 2
    prob = SemilinearProblem(lambda x, y, z: -k * y, (0.0, 1.0), Boundary(0.0, 0.0),
                             Hints(k, 0.0, -k), "linear-y")
    res = solve_bvp_shooting(shoot_scale, prob)
    report = {"shooting_outcome": type(res).__name__}
    if isinstance(res, ManyRoots):
        roots = np.asarray(res.x1)
        pick = roots[np.linspace(0, roots.size - 1, d.n_samples).round().astype(int)]
        errs = []
        for x1 in pick:
            u = shooting_solution(shoot_scale, prob, float(x1))
            errs.append(float(np.max(np.abs(u.u - x1 / math.pi * np.sin(math.pi * u.grid)))))
        report.update(n_roots=int(roots.size), sampled_x1=pick, sup_error_vs_eta_sin=errs)
    # Brownian paths: L = u''/2, so eta sin(pi x) solves L u = -(pi^2/2) u
    coeffs = CoefficientField(Const(1.0), Const(0.0))
    scale = build_scale(coeffs)
    g = scale.grid[scale.restrict(0.0, 1.0)]
    u = GridFunction(g, d.eta * np.sin(math.pi * g), d.eta * math.pi * np.cos(math.pi * g))
    F = lambda x, y, z: -0.5 * k * y
    norms, decay, inv, rms0 = _verify_triple(run, scale, coeffs, u, F, [0.0, d.gamma],
                                             [run.cfg.sim.dt])
    report.update(eta=d.eta, gamma=d.gamma, residual_rms_t0=rms0, invariants=inv,
                  verdicts={str(n["gamma"]): n["verdict"] for n in norms})
    run.write_json("norm_class.json", {"norm_class": norms})
    run.write_json("r60.json", report)
    return EXIT_OK


COMMANDS = {
    "scale": cmd_scale,
    "kernel": cmd_kernel,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "exit-time": cmd_exit_time,
    "verify": cmd_verify,
    "r60-demo": cmd_r60_demo,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads for simulation")
    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--dt", type=float)
    sim.add_argument("--paths", type=int)
    sim.add_argument("--tmax", type=float)
    sim.add_argument("--x0", type=float)
    sim.add_argument("--interval", type=float, nargs=2, metavar=("LO", "HI"))
    parser = argparse.ArgumentParser(prog="distdrift", parents=[common],
                                     description="Semilinear problems with distributional drift.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("scale", parents=[common], help="tabulate Sigma, h, h', v")
    sub.add_parser("kernel", parents=[common], help="tabulate the Green kernel and its bound")
    sub.add_parser("solve", parents=[common], help="solve the configured problem")
    for name, text in (("simulate", "simulate paths"), ("exit-time", "exit-time statistics"),
                       ("r60-demo", "non-uniqueness demonstration")):
        sub.add_parser(name, parents=[common, sim], help=text)
    v = sub.add_parser("verify", parents=[common, sim], help="PDE -> paths -> BSDE residual")
    v.add_argument("--checkpoints", type=float, nargs="+")
    return parser


def _set_threads(n):
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    if "numba" not in sys.modules:
        current = int(os.environ.get("NUMBA_NUM_THREADS", "0") or 0)
        os.environ["NUMBA_NUM_THREADS"] = str(max(n, current, os.cpu_count() or 1))
    import numba
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv=None):
    args = build_parser().parse_args(argv)
    warnings.filterwarnings("ignore", message=".*TBB.*")
    try:
        _set_threads(args.threads)
        cfg = load_config(args.config)
        overrides = {"seed": args.seed}
        for flag in ("dt", "paths", "tmax", "x0", "interval"):
            overrides[f"sim.{flag}"] = getattr(args, flag, None)
        overrides["verify.checkpoints"] = getattr(args, "checkpoints", None)
        cfg = with_overrides(cfg, **overrides)
        run = Run(args.command, cfg, args.out)
        return COMMANDS[args.command](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DistDriftError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
