"""Error norms, convergence rates, the discrete dual norm, stability-bound
checks and the monotonicity/Lipschitz inequalities of the cubic div term."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fem import (
    DiscreteField,
    FunctionSpace,
    collapsed_rule,
    divergence_at_quadrature,
    evaluate_function,
    field_at_quadrature,
)
from .system import (
    SparseSystem,
    assemble_diffusion,
    assemble_load,
    constrain,
    solve_linear,
)

# constants of the monotonicity and local Lipschitz inequalities for t -> t^3
MONOTONICITY_CONSTANT = 0.25
LIPSCHITZ_CONSTANT = 3.0

BOUND_SLACK = 1e-8


@dataclass
class ErrorReport:
    l2_velocity: float
    h1_semi_velocity: float
    l4_div_squared: float
    l2_div_squared: float
    est: np.ndarray  # int_T |div u_h|^2
    est_density: np.ndarray  # est / |T|

    def as_dict(self) -> dict:
        return {
            "l2_velocity": self.l2_velocity,
            "h1_semi_velocity": self.h1_semi_velocity,
            "l4_div_squared": self.l4_div_squared,
            "l2_div_squared": self.l2_div_squared,
        }


def _error_rule(degree: int):
    return collapsed_rule(2 * degree + 6)


def _grad_norm_sq(u: DiscreteField) -> float:
    rule = collapsed_rule(2 * u.space.degree)
    _, du = field_at_quadrature(u, rule)
    w = u.space.quadrature_weights(rule)
    return float(np.sum(w[:, :, None, None] * du**2))


def error_norms(u_h: DiscreteField, exact, t=None) -> ErrorReport:
    """Errors of ``u_h`` against an :class:`~adaptive_penalty.cases.ExactSolution`.

    The divergence errors use ``div u = 0`` for the exact field, so they are
    norms of ``div u_h`` alone.
    """
    space = u_h.space
    rule = _error_rule(space.degree)
    xq = space.quadrature_points(rule)
    w = space.quadrature_weights(rule)
    x, y = xq[..., 0], xq[..., 1]
    uq, duq = field_at_quadrature(u_h, rule)
    ue = evaluate_function(exact.velocity, x, y, 2, t)  # (2, ne, nq)
    g = exact.velocity_grad(x, y) if t is None else exact.velocity_grad(x, y, t)
    ge = np.stack([np.stack([np.broadcast_to(g[i][j], x.shape) for j in range(2)], -1) for i in range(2)], -2)
    l2 = np.sum(w * np.sum((uq - np.moveaxis(ue, 0, -1)) ** 2, axis=-1))
    h1 = np.sum(w * np.sum((duq - ge) ** 2, axis=(-2, -1)))
    div_exact = ge[..., 0, 0] + ge[..., 1, 1]
    d = divergence_at_quadrature(u_h, rule)
    e = div_exact - d
    l4 = np.sqrt(np.sum(w * e**4))
    est = np.sum(w * d**2, axis=1)
    return ErrorReport(
        l2_velocity=float(np.sqrt(l2)),
        h1_semi_velocity=float(np.sqrt(h1)),
        l4_div_squared=float(l4),
        l2_div_squared=float(est.sum()),
        est=est,
        est_density=est / space.mesh.areas,
    )


def convergence_rates(h, errors) -> list[float | None]:
    """``log(e_i / e_{i+1}) / log(h_i / h_{i+1})``; ``None`` where a level has zero error."""
    h = [float(v) for v in h]
    errors = [float(v) for v in errors]
    if len(h) != len(errors) or len(h) < 2:
        raise ValueError("need at least two levels with matching h and errors")
    if any(b >= a for a, b in zip(h, h[1:])):
        raise ValueError("h must be strictly decreasing")
    rates = []
    for (h0, e0), (h1, e1) in zip(zip(h, errors), zip(h[1:], errors[1:])):
        if e0 <= 0 or e1 <= 0 or not (math.isfinite(e0) and math.isfinite(e1)):
            rates.append(None)
        else:
            rates.append(math.log(e0 / e1) / math.log(h0 / h1))
    return rates


def discrete_dual_norm(f, vel_space: FunctionSpace, t=None, return_riesz: bool = False):
    """``||f||_{-1,h}``: solve ``(grad w, grad v) = (f, v)`` over the zero-trace
    velocity space and return ``||grad w||`` (the exact discrete supremum)."""
    A = assemble_diffusion(vel_space, 1.0)
    F = assemble_load(vel_space, f, t=t)
    bc = dict.fromkeys(vel_space.all_boundary_dofs().tolist(), 0.0)
    if not np.any(F):
        w = np.zeros(vel_space.n_dofs)
    else:
        w = solve_linear(constrain(SparseSystem(A, F), bc))
    value = float(np.sqrt(max(w @ (A @ w), 0.0)))
    if return_riesz:
        return value, DiscreteField(vel_space, w)
    return value


# --- stability bounds ----------------------------------------------------------


@dataclass
class BoundCheck:
    name: str
    lhs: float
    rhs: float

    @property
    def passed(self) -> bool:
        return bound_holds(self.lhs, self.rhs)

    def as_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "passed": self.passed}


def bound_holds(lhs: float, rhs: float, slack: float = BOUND_SLACK) -> bool:
    return bool(lhs <= rhs * (1.0 + slack))


def stability_check(u: DiscreteField, nu: float, f, loc_tol, kind: str = "ep", dual_norm: float | None = None) -> list[BoundCheck]:
    """Energy bound and the divergence bound derived from it.

    ``kind="ep"`` (elementwise penalty)::

        nu/2 |grad u|^2 + sum_T LocTol_T^{-1} (int_T |div u|^2)^2 <= |f|_{-1,h}^2 / (2 nu)
        (int |div u|^2)^2 <= N max|T| / (4 nu |Omega|) TOL^2 |f|_{-1,h}^2

    ``kind="pp"`` (pointwise penalty) replaces ``(int_T |div u|^2)^2`` by
    ``int_T |div u|^4`` and drops the factor ``N``. ``TOL^2`` is recovered as
    ``2 sum LocTol_T``. The dual norm is the discrete one.
    """
    if kind not in ("ep", "pp"):
        raise ValueError(f"unknown kind {kind!r}")
    space = u.space
    mesh = space.mesh
    loc_tol = np.asarray(loc_tol, dtype=float)
    if dual_norm is None:
        dual_norm = discrete_dual_norm(f, space)
    tol_sq = 2.0 * float(loc_tol.sum())
    energy = 0.5 * nu * _grad_norm_sq(u)
    rhs_energy = dual_norm**2 / (2.0 * nu)
    if kind == "ep":
        rule = collapsed_rule(2 * space.degree)
        est = np.sum(space.quadrature_weights(rule) * divergence_at_quadrature(u, rule) ** 2, axis=1)
        penalty = float(np.sum(est**2 / loc_tol))
        div_lhs = float(est.sum()) ** 2
        div_rhs = mesh.n_triangles * mesh.areas.max() / (4 * nu * mesh.domain_area) * tol_sq * dual_norm**2
        names = ("ep_energy", "ep_divergence")
    else:
        rule = collapsed_rule(4 * space.degree)
        q4 = np.sum(space.quadrature_weights(rule) * divergence_at_quadrature(u, rule) ** 4, axis=1)
        penalty = float(np.sum(q4 / loc_tol))
        div_lhs = float(q4.sum())
        div_rhs = mesh.areas.max() / (4 * nu * mesh.domain_area) * tol_sq * dual_norm**2
        names = ("pp_energy", "pp_divergence")
    return [
        BoundCheck(names[0], energy + penalty, rhs_energy),
        BoundCheck(names[1], div_lhs, float(div_rhs)),
    ]


# --- monotonicity / Lipschitz -----------------------------------------------------


@dataclass
class InequalityCheck:
    monotone: bool
    lipschitz: bool
    worst_monotone_margin: float  # min over elements of lhs - C1 * rhs (should be >= 0)
    worst_lipschitz_margin: float  # min over elements of C2 * bound - lhs

    @property
    def passed(self) -> bool:
        return self.monotone and self.lipschitz


def monotonicity_lipschitz_check(u: DiscreteField, w: DiscreteField, v: DiscreteField, slack: float = 1e-12) -> InequalityCheck:
    """Per element, with ``a = div u``, ``b = div w``, ``c = div v``::

        (a^3 - b^3, a - b)_T >= 1/4 |a - b|_{L4(T)}^4
        (a^3 - b^3, c)_T     <= 3 r^2 |a - b|_{L4(T)} |c|_{L4(T)},  r = max(|a|_{L4(T)}, |b|_{L4(T)})

    ``slack`` is relative to the size of the terms on each element.
    """
    space = u.space
    if w.space is not space or v.space is not space:
        raise ValueError("fields must share one function space")
    rule = collapsed_rule(4 * space.degree)
    wq = space.quadrature_weights(rule)
    a = divergence_at_quadrature(u, rule)
    b = divergence_at_quadrature(w, rule)
    c = divergence_at_quadrature(v, rule)
    cube = a**3 - b**3
    mono_lhs = np.sum(wq * cube * (a - b), axis=1)
    diff4 = np.sum(wq * (a - b) ** 4, axis=1)
    mono_margin = mono_lhs - MONOTONICITY_CONSTANT * diff4
    mono_scale = np.abs(mono_lhs) + diff4
    l4 = lambda z: np.sum(wq * z**4, axis=1) ** 0.25  # noqa: E731
    r = np.maximum(l4(a), l4(b))
    lip_lhs = np.sum(wq * cube * c, axis=1)
    lip_rhs = LIPSCHITZ_CONSTANT * r**2 * diff4**0.25 * l4(c)
    lip_margin = lip_rhs - lip_lhs
    lip_scale = np.abs(lip_lhs) + lip_rhs
    tiny = np.finfo(float).tiny
    return InequalityCheck(
        monotone=bool(np.all(mono_margin >= -slack * mono_scale - tiny)),
        lipschitz=bool(np.all(lip_margin >= -slack * lip_scale - tiny)),
        worst_monotone_margin=float(mono_margin.min()),
        worst_lipschitz_margin=float(lip_margin.min()),
    )


def scalar_constant_scan(limit: float = 2.0, n: int = 401) -> tuple[float, float]:
    """Brute-force the sharp scalar constants on ``[-limit, limit]^2``.

    Returns ``(c1, c2)`` with ``c1 = min (a^3-b^3)(a-b) / (a-b)^4`` over
    ``a != b`` and ``c2 = max |a^3-b^3| / (max(|a|,|b|)^2 |a-b|)``.
    """
    g = np.linspace(-limit, limit, n)
    a, b = np.meshgrid(g, g, indexing="ij")
    d = a - b
    mask = np.abs(d) > 1e-9
    a, b, d = a[mask], b[mask], d[mask]
    c1 = np.min((a**3 - b**3) * d / d**4)
    c2 = np.max(np.abs(a**3 - b**3) / (np.maximum(np.abs(a), np.abs(b)) ** 2 * np.abs(d)))
    return float(c1), float(c2)
