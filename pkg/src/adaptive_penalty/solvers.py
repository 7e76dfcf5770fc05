"""Coupled Stokes reference, elementwise/pointwise adaptive penalty solvers and
the adaptive penalty Navier-Stokes time stepper."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import (
    DiscreteField,
    FunctionSpace,
    build_space,
    default_exactness,
    divergence_at_quadrature,
    interpolate,
    quadrature_rule,
)
from .mesh import Mesh
from .system import (
    PenaltyState,
    SolverError,
    SparseSystem,
    apply_dirichlet,
    assemble_convection_temam,
    assemble_diffusion,
    assemble_divdiv_pointwise,
    assemble_divdiv_weighted,
    assemble_load,
    assemble_mass,
    assemble_mixed_divergence,
    constrain,
    dirichlet_values,
    pivot_ratio,
    solve_linear,
)

log = logging.getLogger(__name__)


class ConvergenceError(SolverError):
    """Nonlinear iteration failed; ``info`` holds the increment history."""


@dataclass
class AdaptiveConfig:
    tol: float
    lower_eps: float
    upper_eps: float = 1.0
    max_iter: int = 10
    initial_eps: float = 1.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if not 0 < self.lower_eps <= self.upper_eps:
            raise ValueError(
                f"need 0 < lower_eps <= upper_eps, got {self.lower_eps}, {self.upper_eps}"
            )
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter}")
        if not self.lower_eps <= self.initial_eps <= self.upper_eps:
            raise ValueError("initial_eps must lie in [lower_eps, upper_eps]")


@dataclass
class TimeConfig:
    dt: float
    t_final: float
    retry: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_final >= self.dt:
            raise ValueError(f"t_final must be >= dt, got {self.t_final} < {self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass
class SolveReport:
    method: str
    iterations: int = 0
    div_history: list[float] = field(default_factory=list)
    eps_min: float = float("nan")
    eps_max: float = float("nan")
    eps_mean: float = float("nan")
    local_satisfaction: float = float("nan")
    div_l2_sq: float = float("nan")
    tol: float = float("nan")
    converged: bool = True
    increments: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    eps_history: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def global_target_met(self) -> bool:
        """``||div u||^2 <= TOL^2 / 2``, the target the local tolerances add up to."""
        return bool(self.div_l2_sq <= 0.5 * self.tol**2)

    def summary(self) -> dict:
        return {
            "method": self.method,
            "iterations": self.iterations,
            "div_l2_sq": self.div_l2_sq,
            "eps_min": self.eps_min,
            "eps_max": self.eps_max,
            "eps_mean": self.eps_mean,
            "local_satisfaction": self.local_satisfaction,
            "global_target_met": self.global_target_met,
            "div_below_tol": bool(self.div_l2_sq <= self.tol) if self.tol == self.tol else False,
            "converged": self.converged,
            "wall_time": self.wall_time,
        }

    def _record_state(self, state: PenaltyState):
        self.eps_min = float(state.eps.min())
        self.eps_max = float(state.eps.max())
        self.eps_mean = float(state.eps.mean())
        self.local_satisfaction = float(np.mean(state.est <= state.loc_tol))
        self.div_l2_sq = float(state.est.sum())


# --- adaptivity primitives ----------------------------------------------------


def compute_loc_tol(mesh: Mesh, tol: float) -> np.ndarray:
    """Per-element share ``tol^2 |T| / (2 |Omega|)`` of the global tolerance."""
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    return 0.5 * tol**2 / mesh.domain_area * mesh.areas


def element_div_estimator(u: DiscreteField, exactness=None) -> np.ndarray:
    """``est_T = int_T |div u|^2`` for every element."""
    if u.space.components != 2:
        raise ValueError("divergence estimator needs a vector field")
    rule = quadrature_rule(exactness or default_exactness(u.space.degree))
    d = divergence_at_quadrature(u, rule)
    return np.sum(u.space.quadrature_weights(rule) * d**2, axis=1)


def update_epsilon(state: PenaltyState, config: AdaptiveConfig | None = None, mode: str = "stokes") -> PenaltyState:
    """Scale ``eps_T`` by ``LocTol_T / est_T``.

    ``stokes`` mode only touches elements with ``est_T > LocTol_T`` (so eps
    never grows); ``transient`` mode updates every element and clamps to
    ``[lower_eps, upper_eps]``. Elements with ``est_T == 0`` keep their value.
    """
    lower = config.lower_eps if config else state.lower_eps
    upper = config.upper_eps if config else state.upper_eps
    new = state.copy()
    new.lower_eps, new.upper_eps = lower, upper
    if mode == "stokes":
        mask = state.est > state.loc_tol
    elif mode == "transient":
        mask = state.est > 0
    else:
        raise ValueError(f"unknown update mode {mode!r}")
    r = state.loc_tol[mask] / state.est[mask]
    eps = np.maximum(lower, r * state.eps[mask])
    if mode == "transient":
        eps = np.minimum(eps, upper)
    new.eps[mask] = eps
    return new


def recover_pressure(u: DiscreteField, state: PenaltyState) -> np.ndarray:
    """Elementwise (P0) pressure ``-eps_T^{-1} div u`` with zero mean."""
    rule = quadrature_rule(default_exactness(u.space.degree))
    w = u.space.quadrature_weights(rule)
    area = u.space.mesh.areas
    mean_div = np.sum(w * divergence_at_quadrature(u, rule), axis=1) / area
    p = -mean_div / state.eps
    return p - np.dot(p, area) / area.sum()


# --- steady solvers --------------------------------------------------------


class _PenaltyStokes:
    """Cached operators for repeated penalty solves on one velocity space."""

    def __init__(self, mesh, nu, f, bc, degree):
        self.space = build_space(mesh, degree, 2)
        self.nu = nu
        self.A = assemble_diffusion(self.space, nu)
        self.F = assemble_load(self.space, f)
        self.bc_values = dirichlet_values(self.space, bc)

    def solve(self, eps) -> DiscreteField:
        K = self.A + assemble_divdiv_weighted(self.space, eps)
        system = constrain(SparseSystem(K, self.F.copy()), self.bc_values)
        return DiscreteField(self.space, solve_linear(system))


def solve_ep_stokes(mesh: Mesh, nu: float, f, bc: dict, config: AdaptiveConfig, degree: int = 2):
    """Elementwise adaptive penalty for Stokes (frozen-eps relinearization).

    Solve with the current eps, estimate ``int_T |div u|^2``, shrink eps on
    elements above their local tolerance, and repeat until every element
    satisfies its tolerance or ``max_iter`` solves have been made.
    """
    t0 = time.perf_counter()
    problem = _PenaltyStokes(mesh, nu, f, bc, degree)
    loc_tol = compute_loc_tol(mesh, config.tol)
    state = PenaltyState(
        np.full(mesh.n_triangles, float(config.initial_eps)),
        loc_tol,
        np.zeros(mesh.n_triangles),
        config.lower_eps,
        config.upper_eps,
    )
    report = SolveReport("ep", tol=config.tol)
    while True:
        report.eps_history.append(state.eps.copy())
        u = problem.solve(state.eps)
        report.iterations += 1
        state.est = element_div_estimator(u)
        report.div_history.append(float(state.est.sum()))
        if not np.any(state.est > state.loc_tol) or report.iterations >= config.max_iter:
            break
        state = update_epsilon(state, config, "stokes")
    report.converged = not np.any(state.est > state.loc_tol)
    report._record_state(state)
    report.wall_time = time.perf_counter() - t0
    return u, state, report


def solve_constant_penalty(mesh: Mesh, nu: float, f, bc: dict, eps: float, degree: int = 2, tol: float = float("nan")):
    """Classical penalty method with one eps on every element."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    t0 = time.perf_counter()
    problem = _PenaltyStokes(mesh, nu, f, bc, degree)
    eps_arr = np.full(mesh.n_triangles, float(eps))
    u = problem.solve(eps_arr)
    loc_tol = compute_loc_tol(mesh, tol) if tol > 0 else np.full(mesh.n_triangles, np.nan)
    state = PenaltyState(eps_arr, loc_tol, element_div_estimator(u), float(eps), float(eps))
    report = SolveReport("constant", iterations=1, tol=tol)
    report.div_history.append(float(state.est.sum()))
    report._record_state(state)
    report.wall_time = time.perf_counter() - t0
    return u, state, report


def _pp_energy_terms(space, u, rule, weights_el):
    d = divergence_at_quadrature(u, rule)
    wq = space.quadrature_weights(rule) * weights_el[:, None]
    return d, wq


def continuation_tolerances(tol: float, factor: float = 10.0) -> list[float]:
    """Tolerance ladder ``1, 1/factor, ...`` ending exactly at ``tol``."""
    ladder = []
    t = 1.0
    while t > tol * (1 + 1e-9):
        ladder.append(t)
        t /= factor
    ladder.append(tol)
    return ladder


def solve_pp_stokes(
    mesh: Mesh,
    nu: float,
    f,
    bc: dict,
    config: AdaptiveConfig,
    degree: int = 2,
    iteration: str = "newton",
    max_iter: int = 50,
    increment_tol: float = 1e-10,
):
    """Pointwise adaptive penalty: the nonlinear grad-div term
    ``sum_T LocTol_T^{-1} (|div u|^2 div u, div v)_T``.

    Starting from the eps = 1 penalty solution, the problem is solved for a
    decreasing ladder of tolerances ``1, 0.1, ..., TOL`` (each stage warm
    started from the previous one). Without the ladder the cubic weights at
    the initial guess are ~``1/LocTol`` and the first Newton systems are
    numerically singular.

    ``iteration="newton"`` minimizes the convex energy with backtracking;
    ``"picard"`` freezes ``|div u_k|^2`` in the weight. Each stage stops once
    the increment max-norm is below ``increment_tol * max(1, |u|_inf)`` and
    fails after ``max_iter`` iterations.
    """
    if iteration not in ("newton", "picard"):
        raise ValueError(f"unknown iteration {iteration!r}")
    t0 = time.perf_counter()
    problem = _PenaltyStokes(mesh, nu, f, bc, degree)
    space = problem.space
    rule = quadrature_rule(min(4 * degree, 8))
    u = problem.solve(np.full(mesh.n_triangles, float(config.initial_eps)))
    report = SolveReport("pp", tol=config.tol)
    free = np.ones(space.n_dofs, dtype=bool)
    free[list(problem.bc_values)] = False
    zero_bc = dict.fromkeys(problem.bc_values, 0.0)
    # a divergence-free initial solve already satisfies the nonlinear equations
    ladder = [] if not np.any(element_div_estimator(u)) else continuation_tolerances(config.tol)
    if not ladder:
        report.iterations = 1

    for stage_tol in ladder:
        inv_loc = 1.0 / compute_loc_tol(mesh, stage_tol)

        def energy(coef):
            v = DiscreteField(space, coef)
            d, wq = _pp_energy_terms(space, v, rule, inv_loc)
            return 0.5 * coef @ (problem.A @ coef) + 0.25 * np.sum(wq * d**4) - problem.F @ coef

        for k in range(1, max_iter + 1):
            d, wq = _pp_energy_terms(space, u, rule, inv_loc)
            if iteration == "picard":
                with np.errstate(over="ignore", invalid="ignore"):
                    weights = inv_loc[:, None] * d**2
                if not np.all(np.isfinite(weights)):
                    raise ConvergenceError(
                        f"picard iteration diverged at step {k} (tol {stage_tol:g})",
                        info=report.increments,
                    )
                K = problem.A + assemble_divdiv_pointwise(space, weights, rule.exactness)
                system = constrain(SparseSystem(K, problem.F.copy()), problem.bc_values)
                try:
                    new = solve_linear(system)
                except SolverError as exc:
                    raise ConvergenceError(
                        f"picard iteration broke down at step {k} (tol {stage_tol:g}): {exc}",
                        info=report.increments,
                    ) from exc
                step = new - u.coefficients
            else:
                N = assemble_divdiv_pointwise(space, inv_loc[:, None] * d**2, rule.exactness)
                residual = problem.A @ u.coefficients + N @ u.coefficients - problem.F
                J = problem.A + 3.0 * N
                step = solve_linear(constrain(SparseSystem(J, -residual), zero_bc))
                e0 = energy(u.coefficients)
                slope = residual[free] @ step[free]
                alpha = 1.0
                while alpha > 1e-8 and energy(u.coefficients + alpha * step) > e0 + 1e-4 * alpha * slope:
                    alpha *= 0.5
                step = alpha * step
            u = DiscreteField(space, u.coefficients + step)
            inc = float(np.max(np.abs(step)))
            report.increments.append(inc)
            report.iterations += 1
            if inc <= increment_tol * max(1.0, float(np.max(np.abs(u.coefficients)))):
                break
        else:
            raise ConvergenceError(
                f"pointwise penalty {iteration} iteration did not converge in {max_iter} "
                f"steps at tolerance {stage_tol:g}",
                info=report.increments,
            )
    report._record_state(pp_effective_state(u, config))
    report.div_history.append(report.div_l2_sq)
    report.wall_time = time.perf_counter() - t0
    return u, report


def pp_effective_state(u: DiscreteField, config: AdaptiveConfig) -> PenaltyState:
    """Element view of a pointwise penalty solution: the effective eps
    ``LocTol_T / mean_T |div u|^2`` (``upper_eps`` where ``div u = 0``)."""
    mesh = u.space.mesh
    loc_tol = compute_loc_tol(mesh, config.tol)
    est = element_div_estimator(u)
    eps_eff = np.full(mesh.n_triangles, float(config.upper_eps))
    pos = est > 0
    eps_eff[pos] = loc_tol[pos] * mesh.areas[pos] / est[pos]
    return PenaltyState(eps_eff, loc_tol, est, config.lower_eps, config.upper_eps)


def penalty_pivot_ratio(mesh: Mesh, nu: float, f, bc: dict, eps, degree: int = 2) -> float:
    """LU pivot ratio of the constrained penalty matrix for the given eps."""
    problem = _PenaltyStokes(mesh, nu, f, bc, degree)
    K = problem.A + assemble_divdiv_weighted(problem.space, eps)
    return pivot_ratio(constrain(SparseSystem(K, problem.F.copy()), problem.bc_values))


def solve_coupled_stokes(mesh: Mesh, nu: float, f, bc: dict, degree: int = 2):
    """Taylor-Hood P_k/P_{k-1} mixed solve, zero-mean pressure enforced by a
    scalar Lagrange multiplier."""
    if degree < 2:
        raise ValueError("Taylor-Hood needs velocity degree >= 2")
    t0 = time.perf_counter()
    V = build_space(mesh, degree, 2)
    Q = build_space(mesh, degree - 1, 1)
    A = assemble_diffusion(V, nu)
    B = assemble_mixed_divergence(V, Q)
    rule = quadrature_rule(default_exactness(degree))
    vals, _ = Q.tabulate(rule)
    local = np.einsum("eq,ql->el", Q.quadrature_weights(rule), vals)
    mvec = np.bincount(Q.dof_map.ravel(), weights=local.ravel(), minlength=Q.n_dofs)
    K = sp.bmat(
        [
            [A, -B, None],
            [-B.T, None, sp.csr_matrix(mvec[:, None])],
            [None, sp.csr_matrix(mvec[None, :]), None],
        ],
        format="csr",
    )
    nv, nq = V.n_dofs, Q.n_dofs
    rhs = np.concatenate([assemble_load(V, f), np.zeros(nq + 1)])
    system = constrain(SparseSystem(K, rhs), dirichlet_values(V, bc))
    x = solve_linear(system)
    u = DiscreteField(V, x[:nv])
    p = DiscreteField(Q, x[nv : nv + nq])
    est = element_div_estimator(u)
    report = SolveReport("coupled", iterations=1)
    report.div_l2_sq = float(est.sum())
    report.div_history.append(report.div_l2_sq)
    report.wall_time = time.perf_counter() - t0
    return u, p, report


# --- Navier-Stokes ---------------------------------------------------------


@dataclass
class StepReport:
    t: float
    div_l2_sq: float
    eps_min: float
    eps_max: float
    inner_iterations: int
    local_satisfaction: float


class NSEStepper:
    """Semi-implicit backward Euler with Temam convection and elementwise
    adaptive grad-div penalty."""

    def __init__(self, space: FunctionSpace, nu: float, f, bc: dict, dt: float):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.space, self.nu, self.f, self.bc, self.dt = space, nu, f, bc, dt
        self.M = assemble_mass(space)
        self.A = assemble_diffusion(space, nu)
        self.base = self.M / dt + self.A

    def solve(self, u_prev: DiscreteField, eps, t_new: float) -> DiscreteField:
        C = assemble_convection_temam(self.space, u_prev)
        K = self.base + C + assemble_divdiv_weighted(self.space, eps)
        rhs = self.M @ u_prev.coefficients / self.dt + assemble_load(self.space, self.f, t=t_new)
        system = apply_dirichlet(SparseSystem(K, rhs), self.space, self.bc, t=t_new)
        try:
            return DiscreteField(self.space, solve_linear(system))
        except SolverError as exc:
            raise SolverError(f"t={t_new:.6g}: {exc}", info=exc.info) from exc


def step_nse_ep(stepper: NSEStepper, u_prev: DiscreteField, state: PenaltyState, t_new: float, config: AdaptiveConfig, retry: bool = False):
    """Advance one step. Without retry: one solve, then update eps for the
    next step. With retry: re-solve until every element meets its tolerance
    or ``max_iter`` solves have been made, shrinking eps only on violating
    elements (the unguarded ratio update oscillates when ``est ~ eps^2``).
    The accepted iterate's estimator then sets eps for the next step."""
    u = stepper.solve(u_prev, state.eps, t_new)
    state = state.copy()
    state.est = element_div_estimator(u)
    inner = 1
    while retry and inner < config.max_iter and np.any(state.est > state.loc_tol):
        state = update_epsilon(state, config, "stokes")
        u = stepper.solve(u_prev, state.eps, t_new)
        state.est = element_div_estimator(u)
        inner += 1
    step = StepReport(
        t=t_new,
        div_l2_sq=float(state.est.sum()),
        eps_min=float(state.eps.min()),
        eps_max=float(state.eps.max()),
        inner_iterations=inner,
        local_satisfaction=float(np.mean(state.est <= state.loc_tol)),
    )
    next_state = update_epsilon(state, config, "transient")
    return u, next_state, step


@dataclass
class NSERun:
    velocity: DiscreteField
    state: PenaltyState
    history: list[StepReport]
    snapshots: dict[float, DiscreteField]
    failed: str | None = None


def run_nse_ep(
    mesh: Mesh,
    nu: float,
    f,
    bc: dict,
    time_config: TimeConfig,
    config: AdaptiveConfig,
    degree: int = 2,
    u0=None,
    snapshot_times=(),
    callback=None,
) -> NSERun:
    """Time loop for the adaptive penalty Navier-Stokes scheme.

    A failing step stops the run; the history up to the failure is kept and
    the error message is stored in ``NSERun.failed``.
    """
    space = build_space(mesh, degree, 2)
    stepper = NSEStepper(space, nu, f, bc, time_config.dt)
    if u0 is None:
        u = DiscreteField(space, np.zeros(space.n_dofs))
    elif isinstance(u0, DiscreteField):
        u = u0
    else:
        u = interpolate(lambda x, y: u0(x, y, 0.0), space)
    state = PenaltyState(
        np.full(mesh.n_triangles, float(config.initial_eps)),
        compute_loc_tol(mesh, config.tol),
        element_div_estimator(u),
        config.lower_eps,
        config.upper_eps,
    )
    history: list[StepReport] = []
    snapshots: dict[float, DiscreteField] = {}
    wanted = sorted(snapshot_times)
    failed = None
    for n in range(1, time_config.n_steps + 1):
        t_new = n * time_config.dt
        try:
            u, state_next, step = step_nse_ep(stepper, u, state, t_new, config, time_config.retry)
        except SolverError as exc:
            failed = str(exc)
            log.error("step %d failed: %s", n, exc)
            break
        history.append(step)
        for ts in wanted:
            if ts not in snapshots and abs(t_new - ts) <= 0.5 * time_config.dt:
                snapshots[ts] = u.copy()
        if callback is not None:
            callback(step)
        # the estimator of the accepted solution is what the next update used
        state = state_next
    return NSERun(u, state, history, snapshots, failed)
