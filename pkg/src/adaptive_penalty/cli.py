"""Command line front end.

    adaptive-penalty solve --case test1 --method ep --n 40
    adaptive-penalty convergence --case test1 --method ep --levels 10,20,40
    adaptive-penalty nse --case test4 --t-final 2 --retry
    adaptive-penalty mesh export --case test4 --out channel.mesh
    adaptive-penalty mesh import channel.mesh

Exit codes: 0 success, 1 numerical failure, 2 usage or input error.
Settings are resolved as case defaults < ``--config`` file < flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .cases import CASE_NAMES, CaseSpec, get_case
from .diagnostics import convergence_rates, discrete_dual_norm, error_norms, stability_check
from .fem import FieldEvaluationError
from .mesh import MeshError, export_mesh, import_mesh
from .output import vertex_velocity, write_csv, write_summary, write_vtk
from .solvers import (
    AdaptiveConfig,
    TimeConfig,
    compute_loc_tol,
    element_div_estimator,
    penalty_pivot_ratio,
    pp_effective_state,
    recover_pressure,
    run_nse_ep,
    solve_constant_penalty,
    solve_coupled_stokes,
    solve_ep_stokes,
    solve_pp_stokes,
)
from .system import SolverError

log = logging.getLogger("adaptive_penalty")

OUTPUT_ENV = "ADAPTIVE_PENALTY_OUTPUT_DIR"
METHODS = ("coupled", "ep", "pp", "constant")

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    pass


# --- configuration -------------------------------------------------------------

# key -> parser for values read from a config file
_CONFIG_KEYS = {
    "case": str,
    "method": str,
    "n": int,
    "refine": int,
    "tol": float,
    "lower_eps": float,
    "upper_eps": float,
    "max_iter": int,
    "degree": int,
    "eps": float,
    "dt": float,
    "t_final": float,
    "retry": lambda s: _parse_bool(s),
    "levels": lambda s: _parse_list(s, int),
    "snapshots": lambda s: _parse_list(s, float),
    "mesh": str,
}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _parse_list(text: str, kind):
    try:
        return [kind(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"cannot parse list {text!r}") from None


def read_config_file(path: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment; dashes in keys are allowed."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return values


@dataclass
class Settings:
    case: CaseSpec
    method: str | None
    n: int
    refine: int
    tol: float
    lower_eps: float
    upper_eps: float
    max_iter: int
    degree: int
    eps: float | None
    dt: float | None
    t_final: float | None
    retry: bool
    levels: list[int]
    snapshots: list[float]
    mesh: str | None
    extra: dict = field(default_factory=dict)

    def adaptive(self) -> AdaptiveConfig:
        return AdaptiveConfig(self.tol, self.lower_eps, self.upper_eps, self.max_iter)

    def header(self) -> dict:
        return {
            "case": self.case.name,
            "nu": self.case.nu,
            "method": self.method,
            "mesh": self.mesh or (f"n={self.n}" if self.case.mesh_kind == "rectangle" else f"refine={self.refine}"),
            "degree": self.degree,
            "tol": self.tol,
            "lower_eps": self.lower_eps,
            "upper_eps": self.upper_eps,
            "max_iter": self.max_iter,
            "eps": self.eps,
            "dt": self.dt,
            "t_final": self.t_final,
            "retry": self.retry,
            "levels": ",".join(map(str, self.levels)),
            "snapshots": ",".join(map(str, self.snapshots)),
            **self.extra,
        }


def resolve_settings(args: argparse.Namespace) -> Settings:
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    cli_values = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    if cli_values.get("retry") is False:
        cli_values["retry"] = None  # store_true default: not given
    merged = {**file_values, **{k: v for k, v in cli_values.items() if v is not None}}
    if "case" not in merged:
        raise UsageError("--case is required")
    try:
        case = get_case(merged["case"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if getattr(args, "full_scale", False):
        # full-length cylinder run: P3 velocity, T = 8, finer mesh
        merged.setdefault("degree", 3)
        merged.setdefault("t_final", 8.0)
        merged.setdefault("refine", 1)
    method = merged.get("method")
    if method is not None and method not in METHODS:
        raise UsageError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    settings = Settings(
        case=case,
        method=method,
        n=merged.get("n", case.n),
        refine=merged.get("refine", case.refine),
        tol=merged.get("tol", case.tol),
        lower_eps=merged.get("lower_eps", case.lower_eps),
        upper_eps=merged.get("upper_eps", case.upper_eps),
        max_iter=merged.get("max_iter", case.max_iter),
        degree=merged.get("degree", case.degree),
        eps=merged.get("eps", case.constant_eps if method == "constant" else None),
        dt=merged.get("dt", case.dt),
        t_final=merged.get("t_final", case.t_final),
        retry=bool(merged.get("retry", False)),
        levels=merged.get("levels", [10, 20, 40]),
        snapshots=merged.get("snapshots", []),
        mesh=merged.get("mesh"),
    )
    if method == "constant" and (settings.eps is None or not settings.eps > 0):
        raise UsageError("--method constant needs a positive --eps")
    if settings.n < 1 or settings.refine < 0:
        raise UsageError("--n must be >= 1 and --refine >= 0")
    if settings.degree not in (1, 2, 3):
        raise UsageError(f"--degree must be 1, 2 or 3, got {settings.degree}")
    try:
        settings.adaptive()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return settings


def make_mesh(settings: Settings, n: int | None = None):
    if settings.mesh:
        try:
            return import_mesh(Path(settings.mesh).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read mesh file {settings.mesh}: {exc}") from None
    return settings.case.make_mesh(n=n if n is not None else settings.n, refine=settings.refine)


def output_dir(args, command: str, case: str) -> Path:
    if getattr(args, "out", None):
        base = Path(args.out)
    elif os.environ.get(OUTPUT_ENV):
        base = Path(os.environ[OUTPUT_ENV]) / f"{command}-{case}"
    else:
        base = Path("output") / f"{command}-{case}"
    base.mkdir(parents=True, exist_ok=True)
    return base


class Run:
    """Collects emitted files and writes the manifest at the end."""

    def __init__(self, out: Path, argv, settings: Settings | None):
        self.out = out
        self.argv = list(argv)
        self.settings = settings
        self.files: list[str] = []
        self.summary: dict = {}
        self.started = datetime.now(timezone.utc)
        self.t0 = time.perf_counter()

    def add(self, path: Path) -> Path:
        self.files.append(Path(path).name)
        return path

    def finish(self, status: str, error: str | None = None) -> Path:
        manifest = {
            "command_line": self.argv,
            "config": self.settings.header() if self.settings else {},
            "versions": {
                "adaptive_penalty": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "started": self.started.isoformat(),
            "finished": datetime.now(timezone.utc).isoformat(),
            "wall_time_s": time.perf_counter() - self.t0,
            "status": status,
            "error": error,
            "files": self.files + ["manifest.json"],
            "summary": {k: _jsonable(v) for k, v in self.summary.items()},
        }
        path = self.out / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2) + "\n")
        return path


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def print_header(settings: Settings, command: str, stream=None):
    stream = stream or sys.stdout
    print(f"# adaptive-penalty {__version__} {command}", file=stream)
    print(f"# {settings.case.description}", file=stream)
    for k, v in settings.header().items():
        print(f"#   {k} = {v}", file=stream)
    for note in settings.case.notes:
        print(f"# note: {note}", file=stream)


# --- solve ---------------------------------------------------------------------------


def _steady_problem(settings: Settings):
    case = settings.case
    if case.transient:
        raise UsageError(f"case {case.name} is time dependent; use the 'nse' command")
    return case.steady_force(), case.steady_boundary()


def run_steady(settings: Settings, mesh, method: str):
    """Solve once; returns (u, state-or-None, report, extra-dict)."""
    f, bc = _steady_problem(settings)
    nu = settings.case.nu
    config = settings.adaptive()
    extra = {}
    if method == "ep":
        u, state, report = solve_ep_stokes(mesh, nu, f, bc, config, settings.degree)
    elif method == "pp":
        u, report = solve_pp_stokes(mesh, nu, f, bc, config, settings.degree)
        state = pp_effective_state(u, config)
    elif method == "constant":
        u, state, report = solve_constant_penalty(mesh, nu, f, bc, settings.eps, settings.degree, tol=settings.tol)
    elif method == "coupled":
        degree = max(settings.degree, 2)
        u, p, report = solve_coupled_stokes(mesh, nu, f, bc, degree)
        report.tol = settings.tol
        loc_tol = compute_loc_tol(mesh, settings.tol)
        est = element_div_estimator(u)
        state = None
        extra["pressure_vertices"] = p.coefficients[: mesh.n_vertices]
        extra["loc_tol"] = loc_tol
        extra["est"] = est
        report.local_satisfaction = float(np.mean(est <= loc_tol))
    else:
        raise UsageError(f"unknown method {method!r}")
    return u, state, report, extra


def _solution_summary(settings, mesh, method, u, state, report, extra, dual=None) -> dict:
    case = settings.case
    f, _ = _steady_problem(settings)
    summary = {
        "case": case.name,
        "method": method,
        "degree": u.space.degree,
        "n_elements": mesh.n_triangles,
        "n_velocity_dofs": u.space.n_dofs,
        "nu": case.nu,
        "tol": settings.tol,
        "lower_eps": settings.lower_eps,
        "iterations": report.iterations,
        "converged": report.converged,
        "div_l2_sq": report.div_l2_sq,
        "global_target_met": bool(report.div_l2_sq <= 0.5 * settings.tol**2),
        "div_below_tol": bool(report.div_l2_sq <= settings.tol),
        "local_satisfaction": report.local_satisfaction,
        "eps_min": report.eps_min,
        "eps_max": report.eps_max,
        "eps_mean": report.eps_mean,
    }
    if state is not None:
        summary["loc_tol_min"] = float(state.loc_tol.min())
        summary["loc_tol_max"] = float(state.loc_tol.max())
    if case.exact is not None:
        for k, v in error_norms(u, case.exact).as_dict().items():
            summary[k] = v
    if method in ("ep", "pp") and state is not None:
        if dual is None:
            dual = discrete_dual_norm(f, u.space)
        summary["dual_norm_f"] = dual
        for check in stability_check(u, case.nu, f, state.loc_tol, method, dual_norm=dual):
            summary[f"{check.name}_lhs"] = check.lhs
            summary[f"{check.name}_rhs"] = check.rhs
            summary[f"{check.name}_pass"] = check.passed
    if method in ("ep", "constant") and state is not None:
        _, bc = _steady_problem(settings)
        summary["pivot_ratio"] = penalty_pivot_ratio(mesh, case.nu, f, bc, state.eps, u.space.degree)
    return summary


def cmd_solve(args, argv) -> int:
    settings = resolve_settings(args)
    if settings.method is None:
        raise UsageError("--method is required")
    out = output_dir(args, "solve", settings.case.name)
    run = Run(out, argv, settings)
    print_header(settings, "solve")
    try:
        mesh = make_mesh(settings)
        u, state, report, extra = run_steady(settings, mesh, settings.method)
        summary = _solution_summary(settings, mesh, settings.method, u, state, report, extra)
    except (SolverError, FieldEvaluationError) as exc:
        log.error("%s", exc)
        run.finish("failed", str(exc))
        return EXIT_NUMERICAL
    run.summary = summary
    areas = mesh.areas
    if state is not None:
        est, loc_tol, eps = state.est, state.loc_tol, state.eps
    else:
        est, loc_tol, eps = extra["est"], extra["loc_tol"], np.full(mesh.n_triangles, np.nan)
    rows = zip(range(mesh.n_triangles), areas, est, est / areas, eps, loc_tol, est <= loc_tol)
    run.add(write_csv(out / "elements.csv", ["element", "area", "est", "est_density", "eps", "loc_tol", "satisfied"], rows))
    cells = {"eps": eps, "est_density": est / areas, "est": est}
    points = {}
    if state is not None and settings.method != "pp":
        cells["pressure"] = recover_pressure(u, state)
    if "pressure_vertices" in extra:
        points["pressure"] = extra["pressure_vertices"]
    run.add(write_vtk(out / "fields.vtk", mesh, point_vectors={"velocity": vertex_velocity(u)}, point_scalars=points, cell_scalars=cells))
    run.add(write_summary(out / "summary.csv", summary))
    run.finish("ok")
    for k in ("iterations", "div_l2_sq", "eps_mean", "local_satisfaction", "l2_velocity", "h1_semi_velocity"):
        if k in summary:
            print(f"{k:>20s}  {summary[k]}")
    print(f"outputs written to {out}")
    return EXIT_OK


# --- convergence ----------------------------------------------------------------------


def cmd_convergence(args, argv) -> int:
    settings = resolve_settings(args)
    if settings.method is None:
        raise UsageError("--method is required")
    case = settings.case
    if case.exact is None:
        raise UsageError(f"case {case.name} has no exact solution; convergence needs one")
    if case.mesh_kind != "rectangle" or settings.mesh:
        raise UsageError("convergence studies run on the structured square meshes (sized by --levels)")
    levels = settings.levels
    if len(levels) < 2 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise UsageError("--levels needs at least two strictly increasing mesh sizes")
    out = output_dir(args, "convergence", case.name)
    run = Run(out, argv, settings)
    print_header(settings, "convergence")
    rows = []
    try:
        for n in levels:
            mesh = make_mesh(settings, n)
            u, state, report, extra = run_steady(settings, mesh, settings.method)
            err = error_norms(u, case.exact)
            rows.append([n, 1.0 / n, err.l2_velocity, err.h1_semi_velocity, err.l4_div_squared, report.div_l2_sq, report.iterations])
    except (SolverError, FieldEvaluationError) as exc:
        log.error("%s", exc)
        run.finish("failed", str(exc))
        return EXIT_NUMERICAL
    h = [r[1] for r in rows]
    rates = {k: [None] + convergence_rates(h, [r[i] for r in rows]) for k, i in (("l2", 2), ("h1", 3), ("l4", 4))}
    table = []
    for i, r in enumerate(rows):
        table.append([r[0], r[1], r[2], rates["l2"][i], r[3], rates["h1"][i], r[4], rates["l4"][i], r[5], r[6]])
    header = ["n", "h", "l2_velocity", "l2_rate", "h1_semi_velocity", "h1_rate", "l4_div_squared", "l4_rate", "div_l2_sq", "iterations"]
    run.add(write_csv(out / "convergence.csv", header, table))
    run.summary = {f"{k}_rate_last": rates[k][-1] for k in rates}
    run.finish("ok")
    print(f"{'n':>5} {'L2 error':>12} {'rate':>8} {'H1 error':>12} {'rate':>8} {'L4 div^2':>12} {'rate':>8} {'|div u|^2':>12}")
    for r in table:
        rt = lambda v: f"{v:8.4f}" if v is not None else f"{'-':>8}"  # noqa: E731
        print(f"{r[0]:5d} {r[2]:12.5e} {rt(r[3])} {r[4]:12.5e} {rt(r[5])} {r[6]:12.5e} {rt(r[7])} {r[8]:12.5e}")
    print(f"outputs written to {out}")
    return EXIT_OK


# --- nse ---------------------------------------------------------------------------------


def cmd_nse(args, argv) -> int:
    settings = resolve_settings(args)
    case = settings.case
    if not case.transient:
        raise UsageError(f"case {case.name} is steady; use the 'solve' command")
    if settings.dt is None or settings.t_final is None:
        raise UsageError("--dt and --t-final are required")
    try:
        time_config = TimeConfig(settings.dt, settings.t_final, settings.retry)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = output_dir(args, "nse", case.name)
    run = Run(out, argv, settings)
    print_header(settings, "nse")
    mesh = make_mesh(settings)
    u0 = case.exact.velocity if case.exact is not None else None
    every = max(1, time_config.n_steps // 20)

    def progress(step):
        k = int(round(step.t / time_config.dt))
        if k % every == 0:
            log.info("t=%.4f |div u|^2=%.3e inner=%d", step.t, step.div_l2_sq, step.inner_iterations)

    try:
        result = run_nse_ep(
            mesh, case.nu, case.force, case.boundary, time_config, settings.adaptive(),
            degree=settings.degree, u0=u0, snapshot_times=settings.snapshots, callback=progress,
        )
    except FieldEvaluationError as exc:
        log.error("%s", exc)
        run.finish("failed", str(exc))
        return EXIT_NUMERICAL
    hist = result.history
    rows = [(h.t, h.div_l2_sq, h.eps_min, h.eps_max, h.inner_iterations, h.local_satisfaction) for h in hist]
    run.add(write_csv(out / "divu_history.csv", ["t", "div_l2_sq", "eps_min", "eps_max", "inner_iterations", "local_satisfaction"], rows))
    for ts, field_ in sorted(result.snapshots.items()):
        vel = vertex_velocity(field_)
        name = f"snapshot_t{ts:g}.vtk"
        run.add(write_vtk(out / name, mesh, point_vectors={"velocity": vel}, point_scalars={"speed": np.hypot(vel[:, 0], vel[:, 1])}))
    u = result.velocity
    state = result.state
    vel = vertex_velocity(u)
    run.add(write_vtk(
        out / "fields.vtk", mesh,
        point_vectors={"velocity": vel},
        point_scalars={"speed": np.hypot(vel[:, 0], vel[:, 1])},
        cell_scalars={"eps_next": state.eps, "est_density": state.est / mesh.areas},
    ))
    divs = np.array([h.div_l2_sq for h in hist]) if hist else np.array([np.nan])
    summary = {
        "case": case.name,
        "degree": settings.degree,
        "n_elements": mesh.n_triangles,
        "n_velocity_dofs": u.space.n_dofs,
        "dt": settings.dt,
        "t_final": settings.t_final,
        "retry": settings.retry,
        "steps_completed": len(hist),
        "steps_requested": time_config.n_steps,
        "final_t": hist[-1].t if hist else 0.0,
        "final_div_l2_sq": float(divs[-1]),
        "max_div_l2_sq": float(np.max(divs)),
        "all_below_tol_sq": bool(np.all(divs <= settings.tol**2)),
        "mean_inner_iterations": float(np.mean([h.inner_iterations for h in hist])) if hist else float("nan"),
        "failed": result.failed or "",
    }
    if case.exact is not None and hist:
        err = error_norms(u, case.exact, t=hist[-1].t)
        summary.update({f"{k}_final": v for k, v in err.as_dict().items()})
    run.summary = summary
    run.add(write_summary(out / "summary.csv", summary))
    if result.failed:
        log.error("run stopped: %s", result.failed)
        run.finish("failed", result.failed)
        return EXIT_NUMERICAL
    run.finish("ok")
    for k in ("steps_completed", "final_div_l2_sq", "max_div_l2_sq", "mean_inner_iterations", "l2_velocity_final"):
        if k in summary:
            print(f"{k:>22s}  {summary[k]}")
    print(f"outputs written to {out}")
    return EXIT_OK


# --- mesh --------------------------------------------------------------------------------


def cmd_mesh(args, argv) -> int:
    if args.mesh_command == "export":
        settings = resolve_settings(args)
        mesh = settings.case.make_mesh(n=settings.n, refine=settings.refine)
        text = export_mesh(mesh)
        if args.out:
            Path(args.out).write_text(text)
            print(f"wrote {mesh.n_vertices} vertices, {mesh.n_triangles} triangles to {args.out}")
        else:
            sys.stdout.write(text)
        return EXIT_OK
    try:
        text = Path(args.file).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {args.file}: {exc}") from None
    mesh = import_mesh(text)
    stats = mesh.stats()
    print(f"vertices      {mesh.n_vertices}")
    print(f"triangles     {stats.n_elements}")
    print(f"domain area   {mesh.domain_area!r}")
    print(f"edge length   {stats.min_edge!r} .. {stats.max_edge!r}")
    print(f"element area  {stats.min_area!r} .. {stats.max_area!r}")
    markers = sorted(set(mesh.boundary_markers.tolist()) - {0})
    print(f"markers       {' '.join(map(str, markers))}")
    return EXIT_OK


# --- parser ------------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, method=True, time=False):
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    p.add_argument("--case", choices=CASE_NAMES)
    if method:
        p.add_argument("--method", choices=METHODS)
    p.add_argument("--n", type=int, help="mesh points per side of the square cases")
    p.add_argument("--refine", type=int, help="refinement level of the unstructured meshes")
    p.add_argument("--tol", type=float, help="global divergence tolerance TOL")
    p.add_argument("--lower-eps", dest="lower_eps", type=float)
    p.add_argument("--upper-eps", dest="upper_eps", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--degree", type=int, help="velocity polynomial degree (1-3)")
    p.add_argument("--eps", type=float, help="penalty parameter for --method constant")
    p.add_argument("--mesh", help="read the mesh from a mesh2d file")
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV}/<command>-<case> or ./output/...)")
    if time:
        p.add_argument("--dt", type=float)
        p.add_argument("--t-final", dest="t_final", type=float)
        p.add_argument("--retry", action="store_true", help="repeat each step with updated eps")
        p.add_argument("--snapshots", type=lambda s: _parse_list(s, float), help="comma separated snapshot times")
        p.add_argument("--full-scale", dest="full_scale", action="store_true", help="P3, T=8, refine=1 defaults")
    else:
        p.set_defaults(dt=None, t_final=None, retry=False, snapshots=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptive-penalty", description="Adaptive elementwise penalty solvers for Stokes and Navier-Stokes.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a steady case with one method")
    _add_common(p)
    p.set_defaults(func=cmd_solve, levels=None)

    p = sub.add_parser("convergence", help="error and rate table over mesh levels")
    _add_common(p)
    p.add_argument("--levels", type=lambda s: _parse_list(s, int), help="comma separated n values")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("nse", help="adaptive penalty Navier-Stokes time stepping")
    _add_common(p, method=False, time=True)
    p.set_defaults(func=cmd_nse, levels=None, method=None)

    p = sub.add_parser("mesh", help="export or inspect meshes")
    msub = p.add_subparsers(dest="mesh_command", required=True)
    e = msub.add_parser("export", help="write a case mesh in mesh2d format")
    e.add_argument("--case", choices=CASE_NAMES, required=True)
    e.add_argument("--n", type=int)
    e.add_argument("--refine", type=int)
    e.add_argument("--out", help="file to write (default: stdout)")
    e.set_defaults(func=cmd_mesh, config=None)
    i = msub.add_parser("import", help="validate a mesh2d file and print its statistics")
    i.add_argument("file")
    i.set_defaults(func=cmd_mesh)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args, argv)
    except (UsageError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, FieldEvaluationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
