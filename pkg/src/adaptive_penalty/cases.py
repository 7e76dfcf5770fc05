"""Benchmark registry: domains, forcings, boundary data and default parameters.

All analytic callables take ``(x, y, t=0.0)`` and broadcast over arrays.
Vector-valued functions return a pair ``(u_x, u_y)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .mesh import (
    CHANNEL_HEIGHT,
    Mesh,
    generate_channel_cylinder_mesh,
    generate_offset_annulus_mesh,
    generate_rectangle_mesh,
)


@dataclass(frozen=True)
class ExactSolution:
    velocity: Callable
    velocity_grad: Callable  # returns ((du/dx, du/dy), (dv/dx, dv/dy))
    pressure: Callable
    velocity_laplacian: Callable | None = None
    velocity_dt: Callable | None = None


@dataclass(frozen=True)
class CaseSpec:
    name: str
    description: str
    nu: float
    force: Callable
    boundary: dict[int, Callable]
    mesh_kind: str  # "rectangle" (sized by n) or "refine" (sized by refine level)
    exact: ExactSolution | None = None
    transient: bool = False
    tol: float = 1e-5
    lower_eps: float = 1e-8
    upper_eps: float = 1.0
    max_iter: int = 10
    degree: int = 2
    n: int = 40
    refine: int = 0
    dt: float | None = None
    t_final: float | None = None
    constant_eps: float | None = None
    notes: tuple[str, ...] = field(default=())

    def make_mesh(self, n: int | None = None, refine: int | None = None) -> Mesh:
        if self.mesh_kind == "rectangle":
            n = self.n if n is None else n
            return generate_rectangle_mesh(n, n, (0.0, 1.0, 0.0, 1.0))
        if self.name == "test2":
            return generate_offset_annulus_mesh(self.refine if refine is None else refine)
        return generate_channel_cylinder_mesh(self.refine if refine is None else refine)

    def with_overrides(self, **kw) -> "CaseSpec":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def steady_force(self):
        return lambda x, y: self.force(x, y, 0.0)

    def steady_boundary(self):
        return {m: (lambda g: lambda x, y: g(x, y, 0.0))(g) for m, g in self.boundary.items()}


def _zero(x, y, t=0.0):
    return (0.0 * x, 0.0 * y)


# --- test 1: polynomial Stokes solution on the unit square ---------------------


def _t1_u(x, y, t=0.0):
    return (20 * x * y**3, 5 * x**4 - 5 * y**4)


def _t1_grad(x, y, t=0.0):
    return ((20 * y**3, 60 * x * y**2), (20 * x**3, -20 * y**3))


def _t1_p(x, y, t=0.0):
    return 60 * x**2 * y - 20 * y**3 - 5


def _t1_lap(x, y, t=0.0):
    return (120 * x * y, 60 * x**2 - 60 * y**2)


def _test1(nu=0.01) -> CaseSpec:
    def force(x, y, t=0.0):
        return (120 * x * y * (1 - nu), (60 * x**2 - 60 * y**2) * (1 - nu))

    return CaseSpec(
        name="test1",
        description="Stokes, u=(20xy^3, 5x^4-5y^4), p=60x^2y-20y^3-5 on (0,1)^2, Re=100",
        nu=nu,
        force=force,
        boundary={1: _t1_u},
        mesh_kind="rectangle",
        exact=ExactSolution(_t1_u, _t1_grad, _t1_p, _t1_lap),
        tol=1e-5,
        lower_eps=1e-8,
        degree=2,
        n=40,
    )


# --- test 2: offset cylinders ----------------------------------------------------


def _t2_force(x, y, t=0.0):
    s = 1 - x**2 - y**2
    return (-4 * y * s, 4 * x * s)


def _test2() -> CaseSpec:
    return CaseSpec(
        name="test2",
        description="Stokes flow between offset cylinders, rotational forcing, Re=100",
        nu=0.01,
        force=_t2_force,
        boundary={1: _zero, 2: _zero},
        mesh_kind="refine",
        tol=1e-6,
        lower_eps=1e-10,
        degree=2,
    )


# --- test 3: constant vs elementwise penalty ---------------------------------------


def _t3_force(x, y, t=0.0):
    return (np.sin(x + y), np.cos(x + y))


def _test3() -> CaseSpec:
    return CaseSpec(
        name="test3",
        description="Stokes on (0,1)^2, f=(sin(x+y), cos(x+y)), Re=1, P1 elements",
        nu=1.0,
        force=_t3_force,
        boundary={1: _zero},
        mesh_kind="rectangle",
        tol=1e-6,
        lower_eps=1e-10,
        degree=1,
        n=40,
        constant_eps=1e-8,
        notes=("boundary conditions are not stated for this test; no-slip is assumed",),
    )


# --- test 4: channel flow around a cylinder --------------------------------------


def inflow_profile(x, y, t=0.0):
    """Parabolic inflow/outflow ``0.41^-2 sin(pi t / 8) (6 y (0.41 - y), 0)``."""
    H = CHANNEL_HEIGHT
    s = np.sin(np.pi * t / 8.0)
    return (s * 6.0 * y * (H - y) / H**2 + 0.0 * x, 0.0 * x + 0.0 * y)


def _test4() -> CaseSpec:
    return CaseSpec(
        name="test4",
        description="Navier-Stokes flow around a cylinder, nu=1e-3, f=0",
        nu=1e-3,
        force=_zero,
        boundary={1: _zero, 2: inflow_profile, 3: inflow_profile, 4: _zero},
        mesh_kind="refine",
        transient=True,
        tol=1e-5,
        lower_eps=1e-10,
        degree=2,
        refine=0,
        dt=0.005,
        t_final=8.0,
        notes=("initial condition: steady Stokes solution at t=0, which is zero",),
    )


# --- manufactured Navier-Stokes solution ------------------------------------------


def manufactured_nse_case(amplitude=np.cos, amplitude_dt=None, nu: float = 1.0) -> CaseSpec:
    """``u = a(t) (20xy^3, 5x^4-5y^4)``, ``p = a(t) (60x^2y - 20y^3 - 5)`` with the
    forcing that makes them solve the Navier-Stokes equations exactly."""
    if amplitude_dt is None:
        if amplitude is np.cos:
            amplitude_dt = lambda t: -np.sin(t)  # noqa: E731
        else:
            raise ValueError("amplitude_dt is required for a custom amplitude")
    a, da = amplitude, amplitude_dt

    def u(x, y, t=0.0):
        ux, uy = _t1_u(x, y)
        return (a(t) * ux, a(t) * uy)

    def grad(x, y, t=0.0):
        (a11, a12), (a21, a22) = _t1_grad(x, y)
        return ((a(t) * a11, a(t) * a12), (a(t) * a21, a(t) * a22))

    def p(x, y, t=0.0):
        return a(t) * _t1_p(x, y)

    def u_t(x, y, t=0.0):
        ux, uy = _t1_u(x, y)
        return (da(t) * ux, da(t) * uy)

    def force(x, y, t=0.0):
        at = a(t)
        # (U . grad) U for the spatial profile, multiplied by a(t)^2
        conv_x = 100 * x * y**6 + 300 * x**5 * y**2
        conv_y = 300 * x**4 * y**3 + 100 * y**7
        lap_x, lap_y = _t1_lap(x, y)
        ux, uy = _t1_u(x, y)
        px, py = 120 * x * y, 60 * x**2 - 60 * y**2
        return (
            da(t) * ux + at**2 * conv_x + at * (px - nu * lap_x),
            da(t) * uy + at**2 * conv_y + at * (py - nu * lap_y),
        )

    return CaseSpec(
        name="manufactured",
        description="manufactured Navier-Stokes solution a(t)*(test1 fields)",
        nu=nu,
        force=force,
        boundary={1: u},
        mesh_kind="rectangle",
        exact=ExactSolution(u, grad, p, lambda x, y, t=0.0: tuple(a(t) * c for c in _t1_lap(x, y)), u_t),
        transient=True,
        tol=1e-6,
        lower_eps=1e-10,
        degree=3,
        n=8,
        dt=0.01,
        t_final=1.0,
    )


_REGISTRY = {"test1": _test1, "test2": _test2, "test3": _test3, "test4": _test4, "manufactured": manufactured_nse_case}
CASE_NAMES = tuple(_REGISTRY)


def get_case(name: str) -> CaseSpec:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(f"unknown case {name!r}; known cases: {', '.join(CASE_NAMES)}") from None
