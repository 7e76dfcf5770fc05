"""Sparse assembly of the weak-form operators, Dirichlet elimination and solves."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import (
    DiscreteField,
    FieldEvaluationError,
    FunctionSpace,
    default_exactness,
    evaluate_function,
    field_at_quadrature,
    quadrature_rule,
)


class SolverError(RuntimeError):
    """Linear solve failed; ``info`` carries the pivot or residual history."""

    def __init__(self, message, info=None):
        super().__init__(message)
        self.info = info


class InvalidStateError(ValueError):
    pass


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    constrained_dofs: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        n, m = self.matrix.shape
        if n != m or n != len(self.rhs):
            raise ValueError(f"system shape mismatch: matrix {self.matrix.shape}, rhs {len(self.rhs)}")


@dataclass
class PenaltyState:
    """Per-element penalty parameters and divergence estimators."""

    eps: np.ndarray
    loc_tol: np.ndarray
    est: np.ndarray
    lower_eps: float
    upper_eps: float = 1.0

    def copy(self) -> "PenaltyState":
        return PenaltyState(
            self.eps.copy(), self.loc_tol.copy(), self.est.copy(), self.lower_eps, self.upper_eps
        )


# --- element-level kernels ---------------------------------------------------


def _scatter(space_r: FunctionSpace, space_c: FunctionSpace, blocks: np.ndarray) -> sp.csr_matrix:
    rows = np.broadcast_to(space_r.dof_map[:, :, None], blocks.shape)
    cols = np.broadcast_to(space_c.dof_map[:, None, :], blocks.shape)
    mat = sp.coo_matrix(
        (blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(space_r.n_dofs, space_c.n_dofs)
    ).tocsr()
    mat.sum_duplicates()
    return mat


def _expand_components(block: np.ndarray, components: int) -> np.ndarray:
    """Scalar element blocks (ne, l, l) -> component-diagonal (ne, cl, cl)."""
    if components == 1:
        return block
    ne, nl, _ = block.shape
    out = np.zeros((ne, nl, components, nl, components))
    for c in range(components):
        out[:, :, c, :, c] = block
    return out.reshape(ne, nl * components, nl * components)


def _rule(space, exactness=None):
    return quadrature_rule(exactness or default_exactness(space.degree))


def _cache(space):
    return space.__dict__.setdefault("_element_cache", {})


def stiffness_blocks(space: FunctionSpace, exactness=None) -> np.ndarray:
    rule = _rule(space, exactness)
    key = ("stiff", rule.exactness)
    cache = _cache(space)
    if key not in cache:
        _, grads = space.tabulate(rule)
        w = space.quadrature_weights(rule)
        scalar = np.einsum("eq,eqai,eqbi->eab", w, grads, grads)
        cache[key] = _expand_components(scalar, space.components)
    return cache[key]


def divdiv_blocks(space: FunctionSpace, exactness=None) -> np.ndarray:
    """Unweighted element matrices of (div u, div v)."""
    rule = _rule(space, exactness)
    key = ("divdiv", rule.exactness)
    cache = _cache(space)
    if key not in cache:
        cache[key] = np.einsum("eq,eqa,eqb->eab", space.quadrature_weights(rule), *(2 * [_div_basis(space, rule)]))
    return cache[key]


def _div_basis(space, rule):
    """Divergence of each interleaved vector basis function (ne, nq, 2*nloc)."""
    if space.components != 2:
        raise ValueError("divergence needs a vector space")
    _, grads = space.tabulate(rule)
    ne, nq, nl, _ = grads.shape
    return grads.reshape(ne, nq, nl * 2)


def mass_blocks(space: FunctionSpace, exactness=None) -> np.ndarray:
    rule = _rule(space, exactness)
    key = ("mass", rule.exactness)
    cache = _cache(space)
    if key not in cache:
        values, _ = space.tabulate(rule)
        scalar = np.einsum("eq,qa,qb->eab", space.quadrature_weights(rule), values, values)
        cache[key] = _expand_components(scalar, space.components)
    return cache[key]


# --- global operators ------------------------------------------------------


def assemble_diffusion(space: FunctionSpace, nu: float, exactness=None) -> sp.csr_matrix:
    """``nu * (grad u, grad v)``, componentwise for vector spaces."""
    if not nu > 0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    return _scatter(space, space, nu * stiffness_blocks(space, exactness))


def assemble_mass(space: FunctionSpace, exactness=None) -> sp.csr_matrix:
    return _scatter(space, space, mass_blocks(space, exactness))


def element_weights(state_or_eps) -> np.ndarray:
    eps = state_or_eps.eps if isinstance(state_or_eps, PenaltyState) else np.asarray(state_or_eps, float)
    if np.any(~(eps > 0)):
        bad = int(np.nonzero(~(eps > 0))[0][0])
        raise InvalidStateError(f"penalty parameter on element {bad} is {eps[bad]}, must be > 0")
    return 1.0 / eps


def assemble_divdiv_weighted(space: FunctionSpace, state_or_eps, exactness=None) -> sp.csr_matrix:
    """``sum_T eps_T^{-1} (div u, div v)_T``."""
    w = element_weights(state_or_eps)
    if w.shape != (space.mesh.n_triangles,):
        raise ValueError("one penalty value per element required")
    return _scatter(space, space, divdiv_blocks(space, exactness) * w[:, None, None])


def assemble_divdiv_pointwise(space: FunctionSpace, weights_q: np.ndarray, exactness: int) -> sp.csr_matrix:
    """``sum_T (w(x) div u, div v)_T`` with ``w`` given at quadrature points."""
    rule = quadrature_rule(exactness)
    d = _div_basis(space, rule)
    wq = space.quadrature_weights(rule) * weights_q
    return _scatter(space, space, np.einsum("eq,eqa,eqb->eab", wq, d, d))


def assemble_mixed_divergence(vel_space: FunctionSpace, pres_space: FunctionSpace, exactness=None) -> sp.csr_matrix:
    """Rectangular block ``B`` (n_vel x n_pres) with ``v . (B p) = (p, div v)``."""
    if vel_space.mesh is not pres_space.mesh:
        raise ValueError("velocity and pressure spaces live on different meshes")
    if pres_space.components != 1:
        raise ValueError("pressure space must be scalar")
    rule = _rule(vel_space, exactness)
    d = _div_basis(vel_space, rule)
    q, _ = pres_space.tabulate(rule)
    blocks = np.einsum("eq,eqa,qb->eab", vel_space.quadrature_weights(rule), d, q)
    return _scatter(vel_space, pres_space, blocks)


def assemble_convection_temam(space: FunctionSpace, advecting: DiscreteField, exactness=None) -> sp.csr_matrix:
    """``(w . grad u, v) + 1/2 ((div w) u, v)`` for the advecting field ``w``."""
    if advecting.space is not space:
        raise ValueError("advecting field must live on the velocity space")
    if space.components != 2:
        raise ValueError("convection needs a vector space")
    k = space.degree
    rule = quadrature_rule(exactness or min(max(2 * k + 1, 3 * k - 1), 8))
    values, grads = space.tabulate(rule)
    w, dw = field_at_quadrature(advecting, rule)
    divw = dw[..., 0, 0] + dw[..., 1, 1]
    wq = space.quadrature_weights(rule)
    adv = np.einsum("eqi,eqbi->eqb", w, grads)  # w . grad(phi_b)
    scalar = np.einsum("eq,qa,eqb->eab", wq, values, adv)
    scalar += 0.5 * np.einsum("eq,eq,qa,qb->eab", wq, divw, values, values)
    return _scatter(space, space, _expand_components(scalar, 2))


def assemble_load(space: FunctionSpace, f, t=None, exactness=None) -> np.ndarray:
    """``(f, phi_i)`` for an analytic ``f(x, y[, t])`` or a :class:`DiscreteField`."""
    rule = quadrature_rule(exactness or min(2 * space.degree + 3, 8))
    values, _ = space.tabulate(rule)
    if isinstance(f, DiscreteField):
        fq, _ = field_at_quadrature(f, rule)
        fq = np.moveaxis(fq, 2, 0)
    else:
        x = space.quadrature_points(rule)
        fq = evaluate_function(f, x[..., 0], x[..., 1], space.components, t)
        bad = ~np.isfinite(fq)
        if bad.any():
            e, q = np.argwhere(bad.any(axis=0))[0]
            raise FieldEvaluationError(f"non-finite forcing at element {e}, point {x[e, q]}")
    wq = space.quadrature_weights(rule)
    local = np.einsum("eq,ceq,ql->elc", wq, fq, values).reshape(space.mesh.n_triangles, -1)
    return np.bincount(space.dof_map.ravel(), weights=local.ravel(), minlength=space.n_dofs)


# --- boundary conditions and solves ------------------------------------------


def dirichlet_values(space: FunctionSpace, data: dict, t=None) -> dict[int, float]:
    """Map ``marker -> f(x, y[, t])`` (or a constant) to ``{dof: value}``."""
    out: dict[int, float] = {}
    c = space.components
    for marker in sorted(data):
        if marker not in space.boundary_nodes:
            raise ValueError(
                f"unknown boundary marker {marker}; mesh has {sorted(space.boundary_nodes)}"
            )
        nodes = space.boundary_nodes[marker]
        g = data[marker]
        x, y = space.node_coords[nodes, 0], space.node_coords[nodes, 1]
        if callable(g):
            vals = evaluate_function(g, x, y, c, t)
        else:
            g = np.asarray(g, dtype=float)
            if g.size not in (1, c):
                raise ValueError(f"boundary value for marker {marker} needs 1 or {c} components")
            vals = np.broadcast_to(g.reshape(-1, 1), (c, len(nodes)))
        dofs = c * nodes[:, None] + np.arange(c)
        out.update(zip(dofs.ravel().tolist(), vals.T.ravel().tolist()))
    return out


def apply_dirichlet(system: SparseSystem, space: FunctionSpace, data: dict, t=None) -> SparseSystem:
    """Symmetric elimination: constrained rows and columns become identity,
    the lifted boundary values move to the right-hand side."""
    constrained = dict(system.constrained_dofs)
    constrained.update(dirichlet_values(space, data, t))
    return constrain(SparseSystem(system.matrix, system.rhs, {}), constrained)


def constrain(system: SparseSystem, values: dict[int, float]) -> SparseSystem:
    n = system.matrix.shape[0]
    dofs = np.fromiter(values.keys(), dtype=np.int64, count=len(values))
    vals = np.fromiter(values.values(), dtype=float, count=len(values))
    g = np.zeros(n)
    g[dofs] = vals
    fixed = np.zeros(n, dtype=bool)
    fixed[dofs] = True
    A = system.matrix.tocsr()
    rhs = system.rhs - A @ g
    keep = sp.diags((~fixed).astype(float))
    A = (keep @ A @ keep + sp.diags(fixed.astype(float))).tocsr()
    A.eliminate_zeros()
    rhs[fixed] = g[fixed]
    return SparseSystem(A, rhs, dict(zip(dofs.tolist(), vals.tolist())))


def solve_linear(system: SparseSystem, refine_steps: int = 3) -> np.ndarray:
    """Sparse LU (SuperLU, partial pivoting) with iterative refinement.

    Falls back to ILU-preconditioned GMRES if the factorization is singular.
    """
    A = system.matrix.tocsc()
    b = np.asarray(system.rhs, dtype=float)
    norm_a = spla.norm(A, np.inf) if A.nnz else 0.0

    def ok(x):
        r = np.linalg.norm(b - A @ x, np.inf)
        return r <= 1e-10 * (norm_a * np.linalg.norm(x, np.inf) + np.linalg.norm(b, np.inf)), r

    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        history = []
        try:
            ilu = spla.spilu(A, drop_tol=1e-6)
            M = spla.LinearOperator(A.shape, ilu.solve)
            x, info = spla.gmres(A, b, M=M, rtol=1e-12, maxiter=500, callback=history.append, callback_type="pr_norm")
        except RuntimeError:
            x, info = None, -1
        if x is not None and info == 0 and ok(x)[0]:
            return x
        raise SolverError(f"sparse LU failed ({exc}); GMRES fallback did not converge", info=history) from exc
    x = lu.solve(b)
    for _ in range(refine_steps):
        good, _ = ok(x)
        if good:
            break
        x = x + lu.solve(b - A @ x)
    good, r = ok(x)
    if not np.all(np.isfinite(x)) or not good:
        raise SolverError(f"linear solve residual {r:.3e} exceeds tolerance", info=[r])
    return x


def pivot_ratio(system: SparseSystem) -> float:
    """Ratio of extreme |U_ii| from the LU factors; a cheap conditioning proxy."""
    lu = spla.splu(system.matrix.tocsc())
    d = np.abs(lu.U.diagonal())
    return float(d.max() / d.min())
