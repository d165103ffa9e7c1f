"""Command-line entry point: ``radialns {solve,verify,sweep,compare} --config PATH``.

Exit codes: 0 success, 1 input error, 2 non-convergence, 3 failed hard check.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    RESIDUAL_THRESHOLD,
    FitError,
    check_kernel_lemma,
    check_theorem_bounds,
    default_window,
    fit_decay_exponent,
    residual_report,
    sweep,
)
from .fixedpoint import (
    IterationState,
    StationarySolution,
    grid_for,
    impermeable_stationary,
    reconstruct_physical,
    impermeable_solution,
    solve_stationary,
)
from .functionals import H_functional
from .grid import GridError
from .io import (
    ConfigError,
    RunManifest,
    RunSpec,
    parse_config,
    profile_fields,
    read_profile,
    write_convergence_log,
    write_profile,
    write_report,
    write_table,
)
from .model import FlowRegime, classify_regime, derive_constants
from .oracle import compare_solutions, solve_bvp

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2
EXIT_CHECK_FAILED = 3

# fixed-point vs boundary-value discrepancy accepted in the X_{n-2} norm
ORACLE_TOL = 1e-6
ALPHA_RTOL = 1e-8

log = logging.getLogger("radialns")


class _Timer:
    def __init__(self):
        self.phases: dict = {}

    def __call__(self, name):
        timer = self

        class _Phase:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.phases[name] = time.perf_counter() - self.t0

        return _Phase()


def _solve(spec: RunSpec) -> StationarySolution:
    p = spec.parameters
    g = grid_for(p, spec.control)
    if classify_regime(p) is FlowRegime.IMPERMEABLE:
        return impermeable_stationary(p, g)
    return solve_stationary(p, spec.control, g)


def _profile_of(sol: StationarySolution):
    if sol.method == "closed-form":
        return impermeable_solution(sol.params, sol.grid)
    return reconstruct_physical(sol)


def _convergence_summary(sol: StationarySolution) -> dict:
    ratios = sol.contraction_ratios
    return {
        "method": sol.method,
        "status": sol.status,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "final_increment": sol.final_increment,
        "max_ratio": float(np.max(ratios)) if len(ratios) else 0.0,
        "alpha": sol.alpha,
        "epsilon": sol.epsilon,
    }


def cmd_solve(spec: RunSpec, out: Path) -> int:
    timer = _Timer()
    manifest = RunManifest(__version__, "solve", spec.echo())
    with timer("solve"):
        sol = _solve(spec)
    with timer("write"):
        prof = _profile_of(sol)
        files = [write_profile(prof, out / "profile.dat"), write_convergence_log(sol, out / "convergence.log")]
    manifest.convergence = _convergence_summary(sol)
    if sol.smallness is not None:
        manifest.bounds = {"within_proven_regime": sol.smallness.within_proven_regime}
    for f in files:
        manifest.add_file(f)
    manifest.timings = timer.phases
    manifest.write(out / "manifest.json")
    log.info("solve: %s after %d iterations, increment %.3g", sol.status, sol.iterations, sol.final_increment)
    return EXIT_OK if sol.converged else EXIT_NOT_CONVERGED


def _solution_from_profile(prof, spec: RunSpec) -> StationarySolution:
    """Wrap file columns as a solution; alpha follows from the boundary temperature."""
    p = spec.parameters
    eps = prof.mass_flux
    H = H_functional(prof.eta, prof.zeta, prof.chi, p, eps)
    alpha = p.kappa * (p.n - 2) * (p.chi_minus - H.values[0])
    state = IterationState(prof.eta, prof.chi, prof.zeta, alpha, eps)
    return StationarySolution(state, True, 0, 0.0, np.empty(0), p, method="profile", status="loaded")


def cmd_verify(spec: RunSpec, out: Path, profile_path: Path | None) -> int:
    p = spec.parameters
    path = Path(profile_path or spec.profile_path or out / "profile.dat")
    timer = _Timer()
    manifest = RunManifest(__version__, "verify", spec.echo())
    regime = classify_regime(p)
    g = grid_for(p, spec.control)
    table = read_profile(path)
    if regime is FlowRegime.INFLOW:
        eps = p.u_minus / p.v_minus
    elif regime is FlowRegime.OUTFLOW:
        eps = p.u_minus / (p.v_plus + table["eta"][0])
    else:
        eps = 0.0
    prof = profile_fields(table, g, p, eps)

    rec: dict = {"profile": str(path), "regime": regime.value}
    hard: dict = {}

    with timer("residual"):
        res = residual_report(prof, p, RESIDUAL_THRESHOLD)
    for name in res.sup:
        rec[f"residual.{name}.sup"] = res.sup[name]
        rec[f"residual.{name}.rms"] = res.rms[name]
        rec[f"residual.{name}.relative"] = res.relative[name]
    rec["residual.threshold"] = res.threshold
    hard["residual"] = res.passed

    with timer("decay"):
        window = spec.fit_window or default_window(g)
        for name, f in (("eta", prof.eta), ("chi", prof.chi), ("u", prof.u)):
            try:
                fit = fit_decay_exponent(f, window)
            except FitError as exc:
                rec[f"decay.{name}.exponent"] = float("nan")
                rec[f"decay.{name}.error"] = str(exc)
                continue
            rec[f"decay.{name}.exponent"] = fit.exponent
            rec[f"decay.{name}.r_squared"] = fit.r_squared
            rec[f"decay.{name}.window"] = fit.window

    with timer("bounds"):
        d = derive_constants(p)
        if regime is FlowRegime.IMPERMEABLE:
            rec["bounds.lemma31.holds"] = "n/a"
            rec["bounds.lemma31.hypothesis"] = False
        else:
            lem = check_kernel_lemma(p, d, g)
            if lem.name == "lemma31":
                rec["bounds.lemma31.holds"] = lem.holds
                rec["bounds.lemma31.hypothesis"] = lem.hypothesis
                rec["bounds.lemma31.worst"] = lem.worst_margin
                rec["bounds.lemma31.C0"] = lem.empirical_constant
                if lem.hypothesis:
                    hard["lemma31"] = lem.holds
            else:
                rec["bounds.lemma31.holds"] = "n/a"
                rec["bounds.lemma31.hypothesis"] = False
                rec["bounds.lemma41.C0"] = lem.empirical_constant
        sol = _solution_from_profile(prof, spec)
        tb = check_theorem_bounds(sol, prof, p)
        rec["bounds.theorem11.C"] = tb.empirical_constant
        for k, v in tb.details.items():
            rec[f"bounds.theorem11.{k}"] = v

    with timer("oracle"):
        if regime is FlowRegime.IMPERMEABLE:
            rec["oracle.applicable"] = False
        else:
            bvp = solve_bvp(p, g, init=sol)
            rec["oracle.applicable"] = True
            rec["oracle.status"] = bvp.status
            if bvp.converged:
                cmp = compare_solutions(sol, bvp)
                rec["oracle.eta_weighted"] = cmp.eta_weighted
                rec["oracle.chi_weighted"] = cmp.chi_weighted
                rec["oracle.worst_radius"] = cmp.worst_radius
                rec["oracle.alpha_relative"] = cmp.alpha_relative
                hard["oracle"] = cmp.weighted_max <= ORACLE_TOL
            else:
                hard["oracle"] = False

    for k, v in hard.items():
        rec[f"check.{k}.passed"] = v
    ok = all(hard.values())
    rec["verdict"] = "pass" if ok else "fail"
    report = write_report(rec, out / "report.txt")
    manifest.add_file(report)
    manifest.bounds = {k: v for k, v in rec.items() if k.startswith(("bounds.", "check."))}
    manifest.timings = timer.phases
    manifest.write(out / "verify_manifest.json")
    failed = [k for k, v in hard.items() if not v]
    log.info("verify: %s%s", rec["verdict"], f" ({', '.join(failed)})" if failed else "")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_sweep(spec: RunSpec, out: Path) -> int:
    if not spec.sweep_axis or not spec.sweep_values:
        raise ConfigError("sweep needs an axis and at least one value", "sweep")
    timer = _Timer()
    manifest = RunManifest(__version__, "sweep", spec.echo())
    with timer("sweep"):
        table = sweep(spec.sweep_axis, spec.sweep_values, spec.parameters, spec.control, spec.fit_window,
                      spec.delta, spec.workers)
    path = write_table(table.rows, table.columns, out / "sweep.tsv")
    manifest.add_file(path)
    manifest.convergence = {
        "rows": [{"value": r[table.axis], "converged": bool(r.get("converged")), "status": r.get("status")}
                 for r in table.rows]
    }
    if "layer_amplitude" in table.columns:
        amp = table.column("layer_amplitude")
        order = np.argsort(table.column(table.axis))
        steps = np.diff(amp[order])
        manifest.bounds["layer_amplitude_trend"] = (
            "increasing" if np.all(steps > 0) else "decreasing" if np.all(steps < 0) else "mixed"
        )
    manifest.timings = timer.phases
    manifest.write(out / "manifest.json")
    ok = sum(bool(r.get("converged")) for r in table.rows)
    log.info("sweep %s: %d of %d rows converged", table.axis, ok, len(table.rows))
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_compare(spec: RunSpec, out: Path) -> int:
    p = spec.parameters
    if classify_regime(p) is FlowRegime.IMPERMEABLE:
        raise ConfigError("the boundary-value oracle does not apply to u_minus = 0", "parameters.u_minus")
    timer = _Timer()
    manifest = RunManifest(__version__, "compare", spec.echo())
    g = grid_for(p, spec.control)
    with timer("fixed_point"):
        a = solve_stationary(p, spec.control, g)
    with timer("bvp"):
        b = solve_bvp(p, g)
    rec: dict = {"fixed_point.status": a.status, "bvp.status": b.status}
    code = EXIT_OK
    if a.converged and b.converged:
        cmp = compare_solutions(a, b)
        rec.update({
            "weight": cmp.weight,
            "eta_weighted": cmp.eta_weighted,
            "chi_weighted": cmp.chi_weighted,
            "eta_sup": cmp.eta_sup,
            "chi_sup": cmp.chi_sup,
            "worst_radius": cmp.worst_radius,
            "alpha.fixed_point": cmp.alpha_a,
            "alpha.bvp": cmp.alpha_b,
            "alpha.relative": cmp.alpha_relative,
        })
        agree = cmp.weighted_max <= ORACLE_TOL and cmp.alpha_relative <= ALPHA_RTOL
        rec["verdict"] = "pass" if agree else "fail"
        code = EXIT_OK if agree else EXIT_CHECK_FAILED
    else:
        rec["verdict"] = "not converged"
        code = EXIT_NOT_CONVERGED
    path = write_report(rec, out / "compare.txt")
    manifest.add_file(path)
    manifest.convergence = {"fixed_point": _convergence_summary(a), "bvp": _convergence_summary(b)}
    manifest.timings = timer.phases
    manifest.write(out / "manifest.json")
    log.info("compare: %s", rec["verdict"])
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radialns", description="Radial stationary compressible flow solver")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("solve", "solve by fixed-point iteration and write the profile"),
        ("verify", "check a written profile: residuals, decay, bounds, oracle"),
        ("sweep", "solve over a parameter axis and tabulate diagnostics"),
        ("compare", "solve by fixed point and by Newton and compare"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=Path("."))
        sp.add_argument("--quiet", action="store_true")
        if name == "verify":
            sp.add_argument("--profile", type=Path, default=None, help="profile file (default OUT/profile.dat)")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors are input errors; --help and --version exit 0
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s",
                        stream=sys.stderr, force=True)
    try:
        spec = parse_config(args.config)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "solve":
            return cmd_solve(spec, args.out)
        if args.command == "verify":
            return cmd_verify(spec, args.out, args.profile)
        if args.command == "sweep":
            return cmd_sweep(spec, args.out)
        return cmd_compare(spec, args.out)
    except (ConfigError, GridError, ValueError, OSError) as exc:
        log.error("error: %s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
