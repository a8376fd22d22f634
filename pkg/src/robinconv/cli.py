"""Robin p-Laplacian problems with convection, from the command line.

Subcommands: ``eigen``, ``solve-aux``, ``continue``, ``check-f``, ``picone``.
Exit status is 0 on success, 1 on solver or hypothesis failure, 2 on usage
or configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .assembly import AuxiliaryProblem, ProblemSpec, element_gradient, lp_norm
from .config import RunConfig, load_config
from .eigen import EigenOptions, EigenPair, principal_eigenpair, rayleigh_quotient
from .errors import (
    CollapseDetectedError,
    ConfigError,
    HypothesisViolatedError,
    InvalidArgumentError,
    RobinConvError,
)
from .io import (
    FieldFileError,
    RunLog,
    RunLogRecord,
    exclusive_output_dir,
    read_field_csv,
    resolve_output_dir,
    write_field_csv,
    write_trace_csv,
)
from .mesh import build_interval_mesh, build_rectangle_mesh
from .picone import collapse_test, picone_density
from .reaction import (
    ExampleReactionParams,
    check_all,
    default_grid,
    example_reaction,
    linear_reaction,
    zero_reaction,
)
from .solver import (
    CollapseOptions,
    continuation_run,
    estimate_eta_M,
    solve_auxiliary,
)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
_FAILED_VERDICTS = {"NOT-CONVERGED"}


# ------------------------------------------------------------- builders

def build_mesh(cfg: RunConfig):
    m = cfg.mesh
    if m.kind == "interval":
        return build_interval_mesh(m.a, m.b, m.n)
    return build_rectangle_mesh(m.lx, m.ly, m.nx, m.ny)


def build_problem(cfg: RunConfig, mesh=None) -> ProblemSpec:
    mesh = build_mesh(cfg) if mesh is None else mesh
    beta = cfg.problem.beta
    if isinstance(beta, Path):
        beta = read_field_csv(beta, mesh)
    return ProblemSpec(cfg.problem.p, mesh, beta, cfg.problem.delta)


def build_reaction(cfg: RunConfig):
    rx, p = cfg.reaction, cfg.problem.p
    if rx.name == "example":
        return example_reaction(ExampleReactionParams(rx.eta, rx.theta, rx.q, rx.tau, rx.r, p))
    if rx.name == "linear":
        return linear_reaction(rx.coefficient, p)
    return zero_reaction(p)


def _eigen_options(cfg):
    return EigenOptions(tol=cfg.eigen.tol, max_iter=cfg.eigen.max_iter)


# ------------------------------------------------------------- commands

def cmd_eigen(cfg, out, log, args):
    problem = build_problem(cfg)
    pair = principal_eigenpair(problem, _eigen_options(cfg))
    print(f"lambda1 = {pair.lambda1:.15g}")
    print(f"residual = {pair.residual_norm:.3e}")
    print(f"iterations = {pair.iterations}")
    if cfg.output.field:
        write_field_csv(out / "eigenfunction.csv", problem.mesh, pair.u1)
    log.write(RunLogRecord("eigen", residual=pair.residual_norm, min_u=float(pair.u1.min()),
                           max_u=float(pair.u1.max()),
                           message=f"lambda1={pair.lambda1:.17g} iterations={pair.iterations}"))
    return "CONVERGED" if pair.converged else "NOT-CONVERGED"


def cmd_solve_aux(cfg, out, log, args):
    problem = build_problem(cfg)
    reaction = build_reaction(cfg)
    eps = cfg.schedule.start if args.epsilon is None else args.epsilon
    aux = AuxiliaryProblem(problem, reaction, eps, np.ones(problem.mesh.n_nodes))
    sol = solve_auxiliary(aux, opts=cfg.solver)
    print(f"epsilon = {eps:.15g}")
    print(f"residual = {sol.residual_norm:.3e}")
    print(f"min_u = {sol.min_value:.15g}")
    print(f"max_u = {sol.max_value:.15g}")
    print(f"picard = {sol.picard_iters} newton = {sol.newton_iters_total}")
    if cfg.output.field:
        write_field_csv(out / "solution.csv", problem.mesh, sol.u)
    log.write(RunLogRecord("solve-aux", epsilon=eps, residual=sol.residual_norm,
                           min_u=sol.min_value, max_u=sol.max_value))
    return "SOLVED"


def _log_trace(log, records):
    for r in records:
        log.write(RunLogRecord("continue", epsilon=r.epsilon, residual=r.residual,
                               min_u=r.min_u, max_u=r.max_u, picone_integral=r.picone_integral,
                               message=f"step={r.step} flag={r.collapse_flag}"))


def cmd_continue(cfg, out, log, args):
    problem = build_problem(cfg)
    reaction = build_reaction(cfg)
    eigen = principal_eigenpair(problem, _eigen_options(cfg))
    collapse = CollapseOptions(M=cfg.check.M)
    try:
        trace = continuation_run(problem, reaction, schedule=cfg.schedule, opts=cfg.solver,
                                 eigen=eigen, collapse=collapse)
    except CollapseDetectedError as exc:
        if exc.trace is not None:
            if cfg.output.trace:
                write_trace_csv(out / "trace.csv", exc.trace.records)
            _log_trace(log, exc.trace.records)
        raise
    if cfg.output.trace:
        write_trace_csv(out / "trace.csv", trace.records)
    if cfg.output.field:
        write_field_csv(out / "final.csv", problem.mesh, trace.final.u)
    _log_trace(log, trace.records)
    rep = trace.report
    print(f"steps = {len(trace.records)}")
    print(f"final_residual = {trace.final_residual:.3e}")
    print(f"min_u = {trace.final.min_value:.15g}")
    print(f"max_u = {trace.final.max_value:.15g}")
    print(rep.summary())
    return trace.verdict


def cmd_check_f(cfg, out, log, args):
    problem = build_problem(cfg)
    reaction = build_reaction(cfg)
    pair = principal_eigenpair(problem, _eigen_options(cfg))
    M = args.M if args.M is not None else (cfg.check.M if cfg.check.M is not None else 10.0)
    reports = check_all(reaction, pair.lambda1, default_grid(problem.mesh), M=M)
    print(f"lambda1 = {pair.lambda1:.15g}")
    ok = True
    for rep in reports:
        print(rep.summary())
        log.write(RunLogRecord("check-f", verdict="pass" if rep.passed else "fail",
                               message=rep.summary()))
        ok = ok and rep.passed
    if reaction.params is not None:
        p = reaction.params
        ordered = p.theta < pair.lambda1 < p.eta
        print(f"theta < lambda1 < eta: {'pass' if ordered else 'fail'}")
        ok = ok and ordered
    mesh = problem.mesh
    with (out / "hypotheses.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        coords = ["x", "y"][:mesh.dim]
        w.writerow(["node_id", *coords, "growth", "limsup_inf", "liminf_zero"])
        for i in range(mesh.n_nodes):
            w.writerow([i, *(format(c, ".17g") for c in mesh.nodes[i]),
                        *(format(float(r.sampled_bound[i]), ".17g") for r in reports)])
    if not ok:
        raise HypothesisViolatedError("hypothesis check failed")
    return "PASS"


def cmd_picone(cfg, out, log, args):
    problem = build_problem(cfg)
    reaction = build_reaction(cfg)
    mesh = problem.mesh
    u = read_field_csv(args.field, mesh)
    if args.eigen is not None:
        u1 = read_field_csv(args.eigen, mesh)
        u1 = u1 / lp_norm(mesh, u1, problem.p)
        pair = EigenPair(rayleigh_quotient(problem, u1), u1, float("nan"), 0)
    else:
        pair = principal_eigenpair(problem, _eigen_options(cfg))
    dens = picone_density(problem, pair.u1, u)
    if args.M is not None:
        M = args.M
    elif cfg.check.M is not None:
        M = cfg.check.M
    else:
        g = element_gradient(mesh, u)
        M = float(np.max(np.abs(u)) + np.sqrt(np.max(np.sum(g * g, axis=1))))
    eta_M = estimate_eta_M(problem, reaction, pair.lambda1, M)
    rep = collapse_test(problem, pair, u, eta_M)
    print(f"lambda1 = {pair.lambda1:.15g}")
    print(rep.summary())
    with (out / "picone_density.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["element_id", "density"])
        for k, d in enumerate(dens):
            w.writerow([k, format(float(d), ".17g")])
    log.write(RunLogRecord("picone", picone_integral=rep.integral, max_u=rep.max_u,
                           message=f"xi_star={rep.xi_star:.17g}"))
    return rep.collapse_flag


COMMANDS = {
    "eigen": (cmd_eigen, "principal eigenpair of the Robin p-Laplacian"),
    "solve-aux": (cmd_solve_aux, "solve the perturbed problem at one epsilon"),
    "continue": (cmd_continue, "epsilon continuation with the non-collapse test"),
    "check-f": (cmd_check_f, "audit the reaction hypotheses on a sample grid"),
    "picone": (cmd_picone, "Picone density and collapse test for a field"),
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robinconv", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="run configuration file")
        sp.add_argument("--output-dir", help="override output.directory")
        if name == "solve-aux":
            sp.add_argument("--epsilon", type=float, help="default: schedule.start")
        if name in ("check-f", "picone"):
            sp.add_argument("--M", type=float, help="gradient bound for the near-zero check")
        if name == "picone":
            sp.add_argument("--field", required=True, help="field CSV of a positive iterate")
            sp.add_argument("--eigen", help="eigenfunction CSV (default: computed)")
    return parser


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        out_dir = resolve_output_dir(cfg.output.directory, args.output_dir)
        with exclusive_output_dir(out_dir) as out:
            return _run(args, cfg, out)
    except (ConfigError, FieldFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _run(args, cfg, out) -> int:
    handler = COMMANDS[args.command][0]
    with RunLog(out / "run.log") as log:
        log.write(RunLogRecord("start", message=f"command={args.command} config={args.config}"))
        try:
            verdict = handler(cfg, out, log, args)
        except (ConfigError, FieldFileError, InvalidArgumentError) as exc:
            log.write(RunLogRecord("done", verdict="USAGE-ERROR", message=str(exc)))
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except RobinConvError as exc:
            name = type(exc).__name__
            log.write(RunLogRecord("done", verdict=f"FAILED:{name}", message=str(exc)))
            print(f"{name}: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        log.write(RunLogRecord("done", verdict=verdict, message=f"command={args.command}"))
        return EXIT_FAILURE if verdict in _FAILED_VERDICTS else EXIT_OK


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
