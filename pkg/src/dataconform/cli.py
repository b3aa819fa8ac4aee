"""Command-line front end: identification, single designs, Monte Carlo
campaigns, and figure-data export from TOML configs.

Exit codes: 0 success, 2 persistent-excitation or data-quality violation,
3 config/parse error, 4 solver failure, 5 infeasible design.  The
DATACONFORM_SEED environment variable overrides the config seed; the
--seed flag overrides both.
"""

import argparse
import csv
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .config import FIGURE_KINDS, parse_config
from .errors import (
    ConfigError,
    DataConformError,
    DegenerateDataError,
    IllConditionedError,
    NumericalError,
    PeViolationError,
)
from .lmi_builder import activity_report, build_from_data, build_standard, recover_design
from .sdp_solver import (
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
    SolveOptions,
    solve_sdp,
)
from .simulator import run_campaign, run_showcase
from .sysid import TrajectoryData, check_pe, empirical_moments, least_squares_id

EXIT_OK = 0
EXIT_PE = 2
EXIT_PARSE = 3
EXIT_SOLVER = 4
EXIT_INFEASIBLE = 5


def _resolve_config(name):
    """A path on disk, or the name of a bundled config (table1, fig2.toml, ...)."""
    path = Path(name)
    if path.exists():
        return path
    candidate = name if name.endswith(".toml") else name + ".toml"
    bundled = resources.files("dataconform").joinpath("configs", candidate)
    if bundled.is_file():
        return bundled
    raise ConfigError(f"config {name!r} not found on disk or among bundled configs")


def _seed_override(args):
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("DATACONFORM_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"DATACONFORM_SEED must be an integer, got {env!r}") from None
    return None


def _json_ready(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, dict):
        return {k: _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    return value


def cmd_identify(args):
    try:
        data = TrajectoryData.from_csv(args.data_csv)
    except (OSError, ValueError) as exc:
        print(f"error: cannot parse trajectory CSV: {exc}", file=sys.stderr)
        return EXIT_PARSE
    satisfied, rank = check_pe(data)
    if not satisfied:
        print(
            f"error: persistent excitation violated (rank {rank} < {data.r_x + data.r_u})",
            file=sys.stderr,
        )
        return EXIT_PE
    try:
        model = least_squares_id(data)
        moments = empirical_moments(data)
    except (PeViolationError, DegenerateDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PE
    doc = {
        "A_hat": model.A,
        "B_hat": model.B,
        "W_hat": model.W,
        "pe_rank": rank,
        "moments": {
            "mu_data": moments.mu_data,
            "sigma_data": moments.sigma_data,
            "h_data": moments.h_data,
            "m_data": moments.m_data,
            "gamma_data": moments.gamma_data,
        },
    }
    _write_json(args.out, doc)
    print(f"identified model written to {args.out}")
    return EXIT_OK


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_ready(doc), fh, indent=2)
        fh.write("\n")


def cmd_design(args):
    try:
        config = parse_config(_resolve_config(args.config))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if len(config.designs) != 1:
        print("error: design command needs exactly one [[design]] entry", file=sys.stderr)
        return EXIT_PARSE
    request = config.designs[0]
    solver_tol = args.solver_tol if args.solver_tol is not None else config.solver_tol

    try:
        if request.formulation == "standard":
            problem = build_standard(config.plant.linear_part, config.weights)
        else:
            if args.data is None:
                print("error: data-driven formulations need --data", file=sys.stderr)
                return EXIT_PARSE
            try:
                data = TrajectoryData.from_csv(args.data)
            except (OSError, ValueError) as exc:
                print(f"error: cannot parse trajectory CSV: {exc}", file=sys.stderr)
                return EXIT_PARSE
            problem = build_from_data(
                data,
                config.weights,
                request.formulation,
                epsilon=request.epsilon,
                gamma_prime=request.gamma_prime,
                gamma=request.gamma,
            )
    except (PeViolationError, DegenerateDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PE

    solution = solve_sdp(problem, SolveOptions(tol=solver_tol))
    if solution.status == STATUS_INFEASIBLE:
        print(f"error: design infeasible: {solution.message}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if solution.status != STATUS_OPTIMAL:
        print(f"error: solver failed ({solution.status}): {solution.message}", file=sys.stderr)
        return EXIT_SOLVER
    try:
        result = recover_design(problem, solution)
    except (IllConditionedError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    spec = problem.metadata["spec"]
    doc = {
        "formulation": request.formulation,
        "label": request.label,
        "K": result.K,
        "Sigma_star": result.Sigma_star,
        "L_star": result.L_star,
        "objective": result.objective,
        "solver_status": result.solver_status,
        "lyapunov_active": result.lyapunov_active,
        "dual_upsilon": result.dual_upsilon,
        "activity": activity_report(spec, result),
        "model": {"A": spec.model.A, "B": spec.model.B, "W": spec.model.W},
        "warnings": result.warnings,
    }
    _write_json(args.out, doc)
    print(f"design written to {args.out}")
    return EXIT_OK


def _print_campaign_table(report):
    labels = [d.label for d in report.designs]
    widths = [max(len(lbl), 8) for lbl in labels]
    print(f"Percentages of stable simulations (out of {report.repetitions} simulations)")
    print(" | ".join(lbl.center(w) for lbl, w in zip(labels, widths)))
    print("-+-".join("-" * w for w in widths))
    print(
        " | ".join(
            f"{d.percent_stable:.1f}%".center(w) for d, w in zip(report.designs, widths)
        )
    )


def _write_report_csv(report, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "label",
                "formulation",
                "percent_stable",
                "n_stable",
                "n_evaluated",
                "n_designed_failures",
                "mean_frobenius_gap",
                "mean_F",
                "activity_rate",
            ]
        )
        for d in report.designs:
            writer.writerow(
                [
                    d.label,
                    d.formulation,
                    f"{d.percent_stable:.6g}",
                    d.n_stable,
                    d.n_evaluated,
                    d.n_designed_failures,
                    f"{d.mean_frobenius_gap:.6g}",
                    f"{d.mean_F:.6g}",
                    f"{d.activity_rate:.6g}",
                ]
            )


def cmd_campaign(args):
    try:
        config = parse_config(_resolve_config(args.config))
        if not config.designs:
            raise ConfigError("campaign needs at least one [[design]] entry")
        campaign = config.campaign_config(
            repetitions=args.reps,
            seed=_seed_override(args),
            jobs=args.jobs,
            solver_tol=args.solver_tol,
        )
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE

    report = run_campaign(campaign)

    outdir = Path(args.out if args.out is not None else config.output.directory)
    outdir.mkdir(parents=True, exist_ok=True)
    report.to_json(outdir / "report.json")
    _write_report_csv(report, outdir / "report.csv")
    if config.output.figures:
        from . import figures

        figures.render_stability_bars(report, outdir / "stability.png")
    if config.output.trajectories:
        _dump_trajectories(campaign, outdir / "trajectories")
    _print_campaign_table(report)
    print(f"report written to {outdir}")

    worst = max(d.n_designed_failures for d in report.designs)
    if worst > 0.5 * report.repetitions:
        print("error: systematic solver failure (>50% of repetitions)", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _dump_trajectories(campaign, outdir):
    outdir.mkdir(parents=True, exist_ok=True)
    phase1, outcomes = run_showcase(campaign, rep=0)
    phase1.to_csv(outdir / "phase1.csv")
    for request, result, phase2 in outcomes:
        if phase2 is not None:
            phase2.to_csv(outdir / f"{request.label}_phase2.csv")


def _write_x1_series_csv(path, traj, start=0):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "x1"])
        for k in range(traj.N + 1):
            writer.writerow([start + k, f"{traj.X[0, k]:.17g}"])


def cmd_figure_data(args):
    try:
        config = parse_config(_resolve_config(args.config))
        if not config.designs:
            raise ConfigError("figure-data needs at least one [[design]] entry")
        if config.figure_kind is None:
            raise ConfigError(
                f"figure-data needs a [figure] table with kind in {FIGURE_KINDS}"
            )
        campaign = config.campaign_config(
            repetitions=1,
            seed=_seed_override(args),
            jobs=1,
            solver_tol=args.solver_tol,
        )
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE

    phase1, outcomes = run_showcase(campaign, rep=0)
    failed = [request.label for request, result, _ in outcomes if result is None]
    if failed:
        print(f"error: solver failed for design(s) {failed}", file=sys.stderr)
        return EXIT_SOLVER

    outdir = Path(args.out if args.out is not None else config.output.directory)
    outdir.mkdir(parents=True, exist_ok=True)
    panels = [(request.label, phase2) for request, _, phase2 in outcomes]

    if config.figure_kind == "state_scatter":
        for label, phase2 in panels:
            phase1.to_csv(outdir / f"{label}_phase1.csv")
            phase2.to_csv(outdir / f"{label}_phase2.csv")
    else:
        _write_x1_series_csv(outdir / "experiment.csv", phase1)
        for label, phase2 in panels:
            _write_x1_series_csv(outdir / f"{label}.csv", phase2, start=phase1.N + 1)

    if config.output.figures:
        from . import figures

        if config.figure_kind == "state_scatter":
            figures.render_state_scatter(phase1, panels, outdir / "figure.png")
        else:
            figures.render_x1_series(phase1, panels, outdir / "figure.png")
    print(f"figure data written to {outdir}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dataconform",
        description="Data-conforming LQR design toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_id = sub.add_parser("identify", help="least-squares model from a trajectory CSV")
    p_id.add_argument("data_csv", help="trajectory CSV (k,x1..,u1.. rows)")
    p_id.add_argument("--out", default="identified.json", help="output JSON path")
    p_id.set_defaults(func=cmd_identify)

    p_design = sub.add_parser("design", help="solve one controller design")
    p_design.add_argument("--config", required=True, help="TOML config with one [[design]]")
    p_design.add_argument("--data", help="trajectory CSV for data-driven formulations")
    p_design.add_argument("--out", default="design.json", help="output JSON path")
    p_design.add_argument("--solver-tol", type=float, default=None)
    p_design.set_defaults(func=cmd_design)

    p_camp = sub.add_parser("campaign", help="run a Monte Carlo stability campaign")
    p_camp.add_argument("--config", required=True, help="TOML config or bundled name")
    p_camp.add_argument("--out", default=None, help="output directory")
    p_camp.add_argument("--reps", type=int, default=None, help="override repetitions")
    p_camp.add_argument("--seed", type=int, default=None, help="override master seed")
    p_camp.add_argument("--jobs", type=int, default=None, help="parallel repetitions")
    p_camp.add_argument("--solver-tol", type=float, default=None)
    p_camp.set_defaults(func=cmd_campaign)

    p_fig = sub.add_parser("figure-data", help="export per-panel figure CSVs and plots")
    p_fig.add_argument("--config", required=True, help="TOML config or bundled name")
    p_fig.add_argument("--out", default=None, help="output directory")
    p_fig.add_argument("--seed", type=int, default=None, help="override master seed")
    p_fig.add_argument("--solver-tol", type=float, default=None)
    p_fig.set_defaults(func=cmd_figure_data)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DataConformError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
