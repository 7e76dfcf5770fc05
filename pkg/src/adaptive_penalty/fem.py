"""Lagrange P1-P3 spaces on triangles, quadrature and field evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from math import ceil

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

from .mesh import Mesh


class FieldEvaluationError(ValueError):
    """An analytic function returned a non-finite value."""


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Rule on the reference triangle; weights sum to 1, so integrals over an
    element are ``area * sum(w * f)``."""

    points: np.ndarray  # barycentric, (nq, 3)
    weights: np.ndarray
    exactness: int

    @property
    def ref_points(self) -> np.ndarray:
        return self.points[:, 1:]


def quadrature_rule(exactness: int) -> QuadratureRule:
    """Collapsed (Duffy) Gauss rule exact for total degree <= ``exactness``."""
    if int(exactness) != exactness or not 1 <= exactness <= 8:
        raise ValueError(f"quadrature exactness must be in [1, 8], got {exactness}")
    return collapsed_rule(int(exactness))


@lru_cache(maxsize=None)
def collapsed_rule(exactness: int) -> QuadratureRule:
    """Same construction as :func:`quadrature_rule` without the upper limit;
    used where a high-order reference integral is needed (error norms of P3)."""
    if exactness < 1:
        raise ValueError(f"quadrature exactness must be >= 1, got {exactness}")
    if exactness == 1:
        pts = np.array([[1 / 3, 1 / 3, 1 / 3]])
        return QuadratureRule(pts, np.array([1.0]), 1)
    n = ceil((exactness + 1) / 2)
    # Gauss-Jacobi (alpha=1) absorbs the collapse factor (1 - eta).
    eta, w_eta = roots_jacobi(n, 1.0, 0.0)
    xi, w_xi = leggauss(n)
    y = (1 + eta) / 2
    x_ref = (1 + xi) / 2
    X = np.outer(1 - y, x_ref)
    Y = np.repeat(y[:, None], n, axis=1)
    W = np.outer(w_eta, w_xi)
    W = W / W.sum()
    x, y = X.ravel(), Y.ravel()
    pts = np.column_stack([1 - x - y, x, y])
    return QuadratureRule(pts, W.ravel(), int(exactness))


def default_exactness(degree: int) -> int:
    return min(2 * degree + 1, 8)


# --- reference element ------------------------------------------------------


def _monomial_exponents(k):
    return [(a, d - a) for d in range(k + 1) for a in range(d, -1, -1)]


def reference_nodes(k: int) -> np.ndarray:
    """Barycentric Lagrange nodes: vertices, then k-1 nodes per edge on
    (0,1), (1,2), (2,0) starting next to the first vertex, then interior."""
    nodes = [np.eye(3)[i] for i in range(3)]
    for a, b in ((0, 1), (1, 2), (2, 0)):
        for s in range(1, k):
            lam = np.zeros(3)
            lam[a], lam[b] = (k - s) / k, s / k
            nodes.append(lam)
    for i in range(1, k):
        for j in range(1, k - i):
            nodes.append(np.array([k - i - j, i, j]) / k)
    return np.array(nodes)


@lru_cache(maxsize=None)
def _basis_coefficients(k):
    exps = _monomial_exponents(k)
    pts = reference_nodes(k)[:, 1:]
    V = np.array([[x**a * y**b for a, b in exps] for x, y in pts])
    return np.linalg.inv(V)


def reference_basis(k: int, ref_points) -> tuple[np.ndarray, np.ndarray]:
    """Values (nq, nloc) and reference gradients (nq, nloc, 2) of the P_k basis."""
    ref_points = np.atleast_2d(np.asarray(ref_points, dtype=float))
    x, y = ref_points[:, 0], ref_points[:, 1]
    exps = _monomial_exponents(k)
    C = _basis_coefficients(k)
    M = np.column_stack([x**a * y**b for a, b in exps])
    Mx = np.column_stack([a * x ** max(a - 1, 0) * y**b if a else 0 * x for a, b in exps])
    My = np.column_stack([b * x**a * y ** max(b - 1, 0) if b else 0 * x for a, b in exps])
    values = M @ C
    grads = np.stack([Mx @ C, My @ C], axis=2)
    return values, grads


# --- function spaces --------------------------------------------------------


class FunctionSpace:
    """Continuous Lagrange space of scalar or 2-vector fields.

    Node numbering: vertices, then edge nodes, then interior nodes. Vector
    dofs are interleaved per node: ``dof = components * node + c``.
    """

    def __init__(self, mesh: Mesh, degree: int, components: int):
        self.mesh = mesh
        self.degree = int(degree)
        self.components = int(components)
        k = self.degree
        nv, ne, nt = mesh.n_vertices, len(mesh.edges), mesh.n_triangles
        n_edge_nodes = k - 1
        n_int = (k - 1) * (k - 2) // 2
        cols = [mesh.triangles]
        if n_edge_nodes:
            tri = mesh.triangles
            for le, (a, b) in enumerate(((0, 1), (1, 2), (2, 0))):
                e = mesh.triangle_edges[:, le]
                forward = tri[:, a] < tri[:, b]
                base = nv + n_edge_nodes * e
                for s in range(n_edge_nodes):
                    cols.append((base + np.where(forward, s, n_edge_nodes - 1 - s))[:, None])
        if n_int:
            base = nv + n_edge_nodes * ne
            cols.append(base + n_int * np.arange(nt)[:, None] + np.arange(n_int))
        self.cell_nodes = np.hstack(cols).astype(np.int64)
        self.n_nodes = nv + n_edge_nodes * ne + n_int * nt
        coords = np.empty((self.n_nodes, 2))
        bary = reference_nodes(k)
        phys = np.einsum("lk,ekd->eld", bary, mesh.vertices[mesh.triangles])
        coords[self.cell_nodes.ravel()] = phys.reshape(-1, 2)
        self.node_coords = coords
        c = self.components
        self.dof_map = (c * self.cell_nodes[:, :, None] + np.arange(c)).reshape(nt, -1)
        self.n_dofs = c * self.n_nodes

        # boundary nodes per marker: vertices carry their own marker, edge
        # nodes inherit the marker of their boundary edge
        node_marker = np.zeros(self.n_nodes, dtype=np.int64)
        node_marker[:nv] = mesh.boundary_markers
        bmask = mesh.boundary_edge_mask
        node_marker[:nv][np.setdiff1d(np.arange(nv), np.unique(mesh.edges[bmask]))] = 0
        if n_edge_nodes:
            em = mesh.edge_markers()
            for s in range(n_edge_nodes):
                node_marker[nv + n_edge_nodes * np.arange(ne) + s] = em
        self.node_markers = node_marker

    @property
    def nloc(self) -> int:
        return self.cell_nodes.shape[1]

    @cached_property
    def boundary_nodes(self) -> dict[int, np.ndarray]:
        return {
            int(m): np.nonzero(self.node_markers == m)[0]
            for m in np.unique(self.node_markers)
            if m != 0
        }

    @cached_property
    def boundary_dofs(self) -> dict[int, np.ndarray]:
        c = self.components
        return {
            m: (c * nodes[:, None] + np.arange(c)).ravel()
            for m, nodes in self.boundary_nodes.items()
        }

    def all_boundary_dofs(self) -> np.ndarray:
        if not self.boundary_dofs:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(list(self.boundary_dofs.values())))

    def tabulate(self, rule: QuadratureRule):
        """Cached basis values (nq, nloc) and physical gradients (ne, nq, nloc, 2)."""
        key = ("tab", rule.exactness)
        cache = self.__dict__.setdefault("_tab", {})
        if key not in cache:
            values, ref_grads = reference_basis(self.degree, rule.ref_points)
            grads = np.einsum("eij,qlj->eqli", self.mesh.inverse_jacobians_t, ref_grads)
            cache[key] = (values, grads)
        return cache[key]

    def quadrature_points(self, rule: QuadratureRule) -> np.ndarray:
        """Physical quadrature points (ne, nq, 2)."""
        return np.einsum("qk,ekd->eqd", rule.points, self.mesh.vertices[self.mesh.triangles])

    def quadrature_weights(self, rule: QuadratureRule) -> np.ndarray:
        """Physical weights (ne, nq)."""
        return self.mesh.areas[:, None] * rule.weights[None, :]


def build_space(mesh: Mesh, degree: int, components: int = 1) -> FunctionSpace:
    if degree not in (1, 2, 3):
        raise ValueError(f"degree must be 1, 2 or 3, got {degree}")
    if components not in (1, 2):
        raise ValueError(f"components must be 1 or 2, got {components}")
    return FunctionSpace(mesh, degree, components)


@dataclass(eq=False)
class DiscreteField:
    space: FunctionSpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.space.n_dofs,):
            raise ValueError(
                f"expected {self.space.n_dofs} coefficients, got {self.coefficients.shape}"
            )

    def nodal(self) -> np.ndarray:
        """Coefficients reshaped to (n_nodes, components)."""
        return self.coefficients.reshape(-1, self.space.components)

    def copy(self) -> "DiscreteField":
        return DiscreteField(self.space, self.coefficients.copy())


def evaluate_function(f, x, y, components: int, t=None) -> np.ndarray:
    """Evaluate an analytic ``f(x, y[, t])`` as an array of shape (components, *x.shape)."""
    val = f(x, y) if t is None else f(x, y, t)
    val = np.asarray(val, dtype=float)
    shape = np.shape(x)
    if components == 1:
        return np.broadcast_to(val, shape)[None].copy()
    return np.stack([np.broadcast_to(val[c], shape) for c in range(components)])


def interpolate(f, space: FunctionSpace, t=None) -> DiscreteField:
    """Nodal interpolant of ``f(x, y)``; vector functions return a pair."""
    x, y = space.node_coords[:, 0], space.node_coords[:, 1]
    vals = evaluate_function(f, x, y, space.components, t)
    bad = ~np.isfinite(vals)
    if bad.any():
        node = int(np.nonzero(bad.any(axis=0))[0][0])
        raise FieldEvaluationError(
            f"non-finite value at node {node} ({x[node]:.6g}, {y[node]:.6g})"
        )
    return DiscreteField(space, vals.T.ravel())


def evaluate_field(field: DiscreteField, triangle: int, bary) -> tuple[np.ndarray, np.ndarray]:
    """Value (components,) and gradient (components, 2) at a barycentric point."""
    bary = np.asarray(bary, dtype=float)
    if np.any(bary < -1e-14) or abs(bary.sum() - 1.0) > 1e-12:
        raise ValueError(f"invalid barycentric coordinates {bary}")
    space = field.space
    values, ref_grads = reference_basis(space.degree, bary[None, 1:])
    invJT = space.mesh.inverse_jacobians_t[triangle]
    grads = ref_grads[0] @ invJT.T
    coef = field.nodal()[space.cell_nodes[triangle]]  # (nloc, comps)
    return values[0] @ coef, coef.T @ grads


def field_at_quadrature(field: DiscreteField, rule: QuadratureRule):
    """Values (ne, nq, comps) and gradients (ne, nq, comps, 2) on every element."""
    space = field.space
    values, grads = space.tabulate(rule)
    coef = field.nodal()[space.cell_nodes]  # (ne, nloc, comps)
    u = np.einsum("ql,elc->eqc", values, coef)
    du = np.einsum("eqli,elc->eqci", grads, coef)
    return u, du


def divergence_at_quadrature(field: DiscreteField, rule: QuadratureRule) -> np.ndarray:
    if field.space.components != 2:
        raise ValueError("divergence needs a vector field")
    space = field.space
    _, grads = space.tabulate(rule)
    coef = field.nodal()[space.cell_nodes]
    return np.einsum("eqli,eli->eq", grads, coef)
