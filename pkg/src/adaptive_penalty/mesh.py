"""Triangulations of the benchmark domains and the ASCII mesh file format."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import Delaunay, cKDTree


class MeshError(ValueError):
    """Raised for malformed mesh input or a violated mesh invariant."""


@dataclass(frozen=True)
class MeshStats:
    min_edge: float
    max_edge: float
    min_area: float
    max_area: float
    n_elements: int


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with vertex-based boundary markers.

    ``boundary_markers[i] == 0`` marks an interior vertex; markers >= 1 name
    boundary pieces. Triangles are stored counterclockwise.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_markers: np.ndarray
    domain_area: float

    def __post_init__(self):
        for name in ("vertices", "triangles", "boundary_markers"):
            getattr(self, name).flags.writeable = False

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        a = np.abs(self.signed_areas)
        a.flags.writeable = False
        return a

    @cached_property
    def jacobians(self) -> np.ndarray:
        """Affine map Jacobians ``J[e] = [v1 - v0, v2 - v0]`` (columns)."""
        p = self.vertices[self.triangles]
        return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)

    @cached_property
    def inverse_jacobians_t(self) -> np.ndarray:
        return np.transpose(np.linalg.inv(self.jacobians), (0, 2, 1))

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs."""
        return self._edge_data[0]

    @cached_property
    def triangle_edges(self) -> np.ndarray:
        """Per triangle, global edge ids of local edges (0,1), (1,2), (2,0)."""
        return self._edge_data[1]

    @cached_property
    def _edge_data(self):
        t = self.triangles
        local = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        local = np.sort(local, axis=1)
        edges, inverse = np.unique(local, axis=0, return_inverse=True)
        tri_edges = inverse.reshape(3, -1).T.copy()
        return edges, tri_edges

    @cached_property
    def boundary_edge_mask(self) -> np.ndarray:
        counts = np.bincount(self.triangle_edges.ravel(), minlength=len(self.edges))
        return counts == 1

    @property
    def boundary_edges(self) -> np.ndarray:
        return self.edges[self.boundary_edge_mask]

    def edge_markers(self) -> np.ndarray:
        """Marker per edge: 0 for interior edges, else the larger vertex marker.

        Corners are marked with the wall piece, so an edge leaving a corner
        picks up the marker of the adjacent piece.
        """
        m = self.boundary_markers[self.edges].max(axis=1)
        return np.where(self.boundary_edge_mask, m, 0)

    def stats(self) -> MeshStats:
        lengths = np.linalg.norm(
            self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]], axis=1
        )
        return MeshStats(
            min_edge=float(lengths.min()),
            max_edge=float(lengths.max()),
            min_area=float(self.areas.min()),
            max_area=float(self.areas.max()),
            n_elements=self.n_triangles,
        )

    def validate(self) -> None:
        """Check every mesh invariant, raising :class:`MeshError` on the first failure."""
        nv = self.n_vertices
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= nv):
            bad = int(np.nonzero((self.triangles < 0) | (self.triangles >= nv))[0][0])
            raise MeshError(f"triangle {bad} references a vertex index outside [0, {nv})")
        inverted = np.nonzero(self.signed_areas <= 0)[0]
        if inverted.size:
            raise MeshError(
                f"triangle {int(inverted[0])} is not counterclockwise (signed area "
                f"{self.signed_areas[inverted[0]]:.3e})"
            )
        used = np.zeros(nv, dtype=bool)
        used[self.triangles.ravel()] = True
        if not used.all():
            raise MeshError(f"vertex {int(np.nonzero(~used)[0][0])} belongs to no triangle")
        bverts = np.unique(self.boundary_edges)
        unmarked = bverts[self.boundary_markers[bverts] == 0]
        if unmarked.size:
            raise MeshError(f"boundary vertex {int(unmarked[0])} has marker 0")
        min_edge = self.stats().min_edge
        pairs = cKDTree(self.vertices).query_pairs(1e-12 * min_edge)
        if pairs:
            i, j = sorted(pairs)[0]
            raise MeshError(f"vertices {i} and {j} coincide")


def _make_mesh(vertices, triangles, markers, domain_area=None) -> Mesh:
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    markers = np.ascontiguousarray(markers, dtype=np.int64)
    if domain_area is None:
        p = vertices[triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        domain_area = float(np.sum(0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])))
    mesh = Mesh(vertices, triangles, markers, float(domain_area))
    mesh.validate()
    return mesh


def generate_rectangle_mesh(nx: int, ny: int, rect=(0.0, 1.0, 0.0, 1.0)) -> Mesh:
    """Structured mesh of ``rect = (x0, x1, y0, y1)``, each cell cut along its
    (i, j)-(i+1, j+1) diagonal. All boundary vertices get marker 1."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"nx and ny must be positive integers, got {nx}, {ny}")
    x0, x1, y0, y1 = map(float, rect)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate rectangle {rect}")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
    on_bnd = (ii == 0) | (ii == nx) | (jj == 0) | (jj == ny)
    markers = on_bnd.ravel().astype(np.int64)
    return _make_mesh(vertices, triangles, markers, (x1 - x0) * (y1 - y0))


# --- unstructured graded meshes -------------------------------------------


def _circle_points(center, radius, n, phase=0.0):
    theta = phase + 2.0 * np.pi * np.arange(n) / n
    return np.column_stack(
        [center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta)]
    )


def _polygon_area(pts) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segment_points(a, b, size_fn, include_end=False):
    """Points from a to b (a included) spaced by the local target size."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    length = np.linalg.norm(b - a)
    s = np.linspace(0.0, 1.0, 401)
    pts = a + s[:, None] * (b - a)
    density = 1.0 / size_fn(pts)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(s))])
    cum *= length
    n = max(1, int(np.ceil(cum[-1] - 1e-9)))
    targets = np.linspace(0.0, cum[-1], n + 1)
    t = np.interp(targets, cum, s)
    if not include_end:
        t = t[:-1]
    return a + t[:, None] * (b - a)


def _distmesh(fixed, sdf, size_fn, bbox, h0, seed=0, n_iter=200):
    """Force-based point smoothing with fixed boundary points (DistMesh-style).

    Interior points relax toward edge lengths proportional to ``size_fn``;
    points drifting too close to the boundary are dropped at the end, so
    every boundary edge joins two fixed points.
    """
    rng = np.random.default_rng(seed)
    x0, x1, y0, y1 = bbox
    xs = np.arange(x0, x1 + h0, h0)
    ys = np.arange(y0, y1 + h0, h0 * np.sqrt(3) / 2)
    X, Y = np.meshgrid(xs, ys)
    X[1::2] += h0 / 2
    p = np.column_stack([X.ravel(), Y.ravel()])
    p = p[sdf(p) < -0.5 * size_fn(p)]
    r0 = 1.0 / size_fn(p) ** 2
    p = p[rng.random(len(p)) < r0 / r0.max()]
    if len(fixed):
        d, _ = cKDTree(fixed).query(p)
        p = p[d > 0.75 * size_fn(p)]
    nfix = len(fixed)
    p = np.vstack([fixed, p])

    deps = 1e-8 * h0
    old = np.full_like(p, np.inf)
    tri = None
    for _ in range(n_iter):
        if tri is None or np.max(np.linalg.norm(p - old, axis=1)) > 0.1 * h0:
            old = p.copy()
            tri = Delaunay(p).simplices
            cent = p[tri].mean(axis=1)
            tri = tri[sdf(cent) < -1e-3 * h0]
            bars = np.unique(np.sort(np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1), axis=0)
        vec = p[bars[:, 0]] - p[bars[:, 1]]
        length = np.linalg.norm(vec, axis=1)
        hbars = size_fn(0.5 * (p[bars[:, 0]] + p[bars[:, 1]]))
        l0 = hbars * 1.2 * np.sqrt(np.sum(length**2) / np.sum(hbars**2))
        force = np.maximum(l0 - length, 0.0)
        fvec = (force / length)[:, None] * vec
        ftot = np.zeros_like(p)
        np.add.at(ftot, bars[:, 0], fvec)
        np.add.at(ftot, bars[:, 1], -fvec)
        ftot[:nfix] = 0.0
        move = 0.2 * ftot
        p = p + move
        d = sdf(p)
        out = d > 0
        if np.any(out):
            q = p[out]
            gx = (sdf(q + [deps, 0]) - d[out]) / deps
            gy = (sdf(q + [0, deps]) - d[out]) / deps
            p[out] = q - (d[out] / (gx**2 + gy**2))[:, None] * np.column_stack([gx, gy])
        if np.max(np.linalg.norm(move[nfix:], axis=1), initial=0.0) < 1e-3 * h0:
            break

    interior = p[nfix:]
    keep = sdf(interior) < -0.4 * size_fn(interior)
    p = np.vstack([p[:nfix], interior[keep]])
    tri = Delaunay(p).simplices
    cent = p[tri].mean(axis=1)
    tri = tri[sdf(cent) < -1e-3 * h0]
    e1 = p[tri[:, 1]] - p[tri[:, 0]]
    e2 = p[tri[:, 2]] - p[tri[:, 0]]
    cw = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    tri[cw] = tri[cw][:, [0, 2, 1]]
    return p, tri


def _finish(points, tris, nfix, fixed_markers, area) -> Mesh:
    markers = np.zeros(len(points), dtype=np.int64)
    markers[:nfix] = fixed_markers
    used = np.unique(tris)
    remap = np.full(len(points), -1)
    remap[used] = np.arange(len(used))
    mesh = _make_mesh(points[used], remap[tris], markers[used], area)
    total = float(mesh.areas.sum())
    if abs(total - area) > 1e-10 * area:
        raise MeshError(f"triangulation covers area {total}, expected {area}")
    return mesh


CHANNEL_LENGTH = 2.2
CHANNEL_HEIGHT = 0.41
CYLINDER_CENTER = (0.2, 0.2)
CYLINDER_RADIUS = 0.05


def generate_channel_cylinder_mesh(refine: int = 0) -> Mesh:
    """Channel [0, 2.2] x [0, 0.41] minus a polygonal cylinder of radius 0.05.

    Markers: 1 walls (corners included), 2 inflow x=0, 3 outflow x=2.2,
    4 cylinder. The cylinder has ``32 * 2**refine`` sides and the element
    size grows linearly away from it.
    """
    if int(refine) != refine or refine < 0:
        raise ValueError(f"refine must be a nonnegative integer, got {refine}")
    scale = 2.0 ** -int(refine)
    n_cyl = 32 * 2 ** int(refine)
    c = np.array(CYLINDER_CENTER)
    h_cyl = 2 * np.pi * CYLINDER_RADIUS / n_cyl
    h_max = 0.1 * scale
    L, H = CHANNEL_LENGTH, CHANNEL_HEIGHT

    def size_fn(p):
        dist = np.linalg.norm(np.atleast_2d(p) - c, axis=1) - CYLINDER_RADIUS
        return np.minimum(h_max, h_cyl + 0.3 * np.maximum(dist, 0.0))

    def sdf(p):
        p = np.atleast_2d(p)
        d_rect = -np.minimum.reduce([p[:, 0], L - p[:, 0], p[:, 1], H - p[:, 1]])
        d_cyl = CYLINDER_RADIUS - np.linalg.norm(p - c, axis=1)
        return np.maximum(d_rect, d_cyl)

    corners = [(0.0, 0.0), (L, 0.0), (L, H), (0.0, H)]
    bottom = _segment_points(corners[0], corners[1], size_fn)
    right = _segment_points(corners[1], corners[2], size_fn)
    top = _segment_points(corners[2], corners[3], size_fn)
    left = _segment_points(corners[3], corners[0], size_fn)
    right_m = np.full(len(right), 3)
    right_m[0] = 1
    left_m = np.full(len(left), 2)
    left_m[0] = 1
    outer = np.vstack([bottom, right, top, left])
    outer_m = np.concatenate([np.ones(len(bottom)), right_m, np.ones(len(top)), left_m])
    cyl = _circle_points(c, CYLINDER_RADIUS, n_cyl)
    fixed = np.vstack([outer, cyl])
    fixed_m = np.concatenate([outer_m, np.full(n_cyl, 4)])
    area = _polygon_area(outer) - _polygon_area(cyl)
    pts, tris = _distmesh(fixed, sdf, size_fn, (0.0, L, 0.0, H), h_cyl, seed=int(refine))
    return _finish(pts, tris, len(fixed), fixed_m, area)


ANNULUS_OUTER_RADIUS = 1.0
ANNULUS_INNER_RADIUS = 0.1
ANNULUS_INNER_CENTER = (0.5, 0.0)


def generate_offset_annulus_mesh(refine: int = 0) -> Mesh:
    """Unit disk minus the disk of radius 0.1 centered at (0.5, 0).

    ``60 * 2**refine`` outer and ``30 * 2**refine`` inner boundary points;
    markers 1 outer, 2 inner. Elements are graded toward the inner circle.
    """
    if int(refine) != refine or refine < 0:
        raise ValueError(f"refine must be a nonnegative integer, got {refine}")
    k = 2 ** int(refine)
    n_out, n_in = 60 * k, 30 * k
    c = np.array(ANNULUS_INNER_CENTER)
    r1, r2 = ANNULUS_OUTER_RADIUS, ANNULUS_INNER_RADIUS
    h_in = 2 * np.pi * r2 / n_in
    h_out = 2 * np.pi * r1 / n_out

    def size_fn(p):
        dist = np.linalg.norm(np.atleast_2d(p) - c, axis=1) - r2
        return np.minimum(h_out, h_in + 0.3 * np.maximum(dist, 0.0))

    def sdf(p):
        p = np.atleast_2d(p)
        return np.maximum(np.linalg.norm(p, axis=1) - r1, r2 - np.linalg.norm(p - c, axis=1))

    outer = _circle_points((0.0, 0.0), r1, n_out)
    inner = _circle_points(c, r2, n_in)
    fixed = np.vstack([outer, inner])
    fixed_m = np.concatenate([np.ones(n_out), np.full(n_in, 2)])
    area = _polygon_area(outer) - _polygon_area(inner)
    pts, tris = _distmesh(fixed, sdf, size_fn, (-r1, r1, -r1, r1), h_in, seed=int(refine))
    return _finish(pts, tris, len(fixed), fixed_m, area)


# --- ASCII mesh file --------------------------------------------------------


def export_mesh(mesh: Mesh) -> str:
    lines = [f"mesh2d {mesh.n_vertices} {mesh.n_triangles}"]
    lines += [f"{x!r} {y!r} {int(m)}" for (x, y), m in zip(mesh.vertices.tolist(), mesh.boundary_markers)]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    return "\n".join(lines) + "\n"


def import_mesh(text: str) -> Mesh:
    """Parse the ``mesh2d`` format; errors carry 1-based line numbers."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if s and not s.startswith("#"):
            rows.append((lineno, s.split()))
    if not rows or rows[0][1][0] != "mesh2d" or len(rows[0][1]) != 3:
        ln = rows[0][0] if rows else 1
        raise MeshError(f"line {ln}: expected header 'mesh2d <n_vertices> <n_triangles>'")
    try:
        nv, nt = int(rows[0][1][1]), int(rows[0][1][2])
    except ValueError:
        raise MeshError(f"line {rows[0][0]}: vertex/triangle counts must be integers") from None
    body = rows[1:]
    if len(body) != nv + nt:
        raise MeshError(f"expected {nv + nt} data lines after header, found {len(body)}")
    vertices = np.empty((nv, 2))
    markers = np.empty(nv, dtype=np.int64)
    triangles = np.empty((nt, 3), dtype=np.int64)
    for k, (ln, tok) in enumerate(body[:nv]):
        if len(tok) != 3:
            raise MeshError(f"line {ln}: vertex line needs 'x y marker'")
        try:
            vertices[k] = float(tok[0]), float(tok[1])
            markers[k] = int(tok[2])
        except ValueError:
            raise MeshError(f"line {ln}: cannot parse vertex {tok}") from None
        if not np.all(np.isfinite(vertices[k])) or markers[k] < 0:
            raise MeshError(f"line {ln}: invalid vertex {tok}")
    for k, (ln, tok) in enumerate(body[nv:]):
        if len(tok) != 3:
            raise MeshError(f"line {ln}: triangle line needs 'i j k'")
        try:
            triangles[k] = [int(t) for t in tok]
        except ValueError:
            raise MeshError(f"line {ln}: cannot parse triangle {tok}") from None
        if triangles[k].min() < 0 or triangles[k].max() >= nv:
            raise MeshError(f"line {ln}: triangle {k} references a vertex outside [0, {nv})")
    return _make_mesh(vertices, triangles, markers)
