"""Structured tetrahedral meshes of the unit cube, the centerline mesh and
the lateral tube surface, plus exact segment/mesh intersection.

All 3D meshes are tensor grids of cubes, each cube split into six tetrahedra
sharing the diagonal from its min corner to its max corner (Kuhn split).
Point location therefore needs no search tree: the cube follows from
``floor``, and the tetrahedron from the ordering of the local coordinates.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

BARY_TOL = 1e-12

# Permutations of the axes; tetrahedron ``p`` of a cube holds the points whose
# local coordinates satisfy x[perm[0]] >= x[perm[1]] >= x[perm[2]].
KUHN_PERMS = list(itertools.permutations(range(3)))
_PERM_INDEX = {perm: k for k, perm in enumerate(KUHN_PERMS)}


class MeshError(ValueError):
    pass


class OutOfDomainError(MeshError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh3D:
    """Kuhn-split tensor mesh of the unit cube.

    Vertex ``(i, j, k)`` has index ``i + (nx+1)*(j + (ny+1)*k)``; the six
    tetrahedra of cube ``c`` are ``6*c .. 6*c+5`` in ``KUHN_PERMS`` order.
    """

    vertices: np.ndarray
    tets: np.ndarray
    cells_per_side: tuple[int, int, int]
    level: int = 0

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.tets)

    @property
    def h(self) -> float:
        """Global mesh parameter, the reciprocal of the finest grid count."""
        return 1.0 / max(self.cells_per_side)

    @cached_property
    def volumes(self) -> np.ndarray:
        return signed_volumes(self.vertices, self.tets)

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        x = self.vertices
        on = np.any((np.abs(x) < 1e-14) | (np.abs(x - 1.0) < 1e-14), axis=1)
        return np.flatnonzero(on)

    @cached_property
    def faces(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique triangles and their incident tets (``-1`` on the boundary)."""
        return face_adjacency(self.tets)

    @property
    def is_kuhn_grid(self) -> bool:
        """Whether the tets follow the structured six-per-cube numbering."""
        nx, ny, nz = self.cells_per_side
        return self.num_cells == 6 * nx * ny * nz and self.num_vertices == (nx + 1) * (ny + 1) * (nz + 1)

    def vertex_index(self, i, j, k):
        nx, ny, _ = self.cells_per_side
        return i + (nx + 1) * (j + (ny + 1) * k)

    def candidate_cells(self, point: np.ndarray) -> np.ndarray:
        """All tets of the (up to eight) cubes whose closure holds ``point``."""
        n = np.array(self.cells_per_side)
        g = np.asarray(point, dtype=float) * n
        ranges = []
        for d in range(3):
            lo = int(np.floor(g[d] - 1e-12))
            hi = int(np.floor(g[d] + 1e-12))
            ranges.append(sorted({min(max(c, 0), n[d] - 1) for c in (lo, hi)}))
        cells = []
        for i in ranges[0]:
            for j in ranges[1]:
                for k in ranges[2]:
                    c = i + n[0] * (j + n[1] * k)
                    cells.extend(range(6 * c, 6 * c + 6))
        return np.array(cells, dtype=np.int64)

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Containing tet and barycentric coordinates for each point.

        Barycentric coordinates are ordered like ``tets[cell]``. Points on
        shared faces resolve to one of the incident tets; P1 values do not
        depend on the choice.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if np.any(pts < -1e-12) or np.any(pts > 1 + 1e-12):
            raise OutOfDomainError("point outside the unit cube")
        n = np.array(self.cells_per_side)
        g = pts * n
        idx = np.clip(np.floor(g).astype(np.int64), 0, n - 1)
        local = g - idx
        cube = idx[:, 0] + n[0] * (idx[:, 1] + n[1] * idx[:, 2])
        order = np.argsort(-local, axis=1, kind="stable")
        perm_code = order[:, 0] * 9 + order[:, 1] * 3 + order[:, 2]
        lookup = np.full(27, -1, dtype=np.int64)
        for p, k in _PERM_INDEX.items():
            lookup[p[0] * 9 + p[1] * 3 + p[2]] = k
        cells = 6 * cube + lookup[perm_code]
        bary = self.barycentric(cells, pts)
        if np.any(bary < -1e-9):
            raise MeshError("point location failed")
        return cells, bary

    def barycentric(self, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
        v = self.vertices[self.tets[cells]]
        T = np.transpose(v[:, 1:] - v[:, :1], (0, 2, 1))
        lam = np.linalg.solve(T, (points - v[:, 0])[..., None])[..., 0]
        return np.column_stack([1.0 - lam.sum(axis=1), lam])

    def export_text(self) -> str:
        """Plain-text dump: header, coordinates, 0-based tet indices."""
        lines = [f"vertices {self.num_vertices} tets {self.num_cells}"]
        lines += [" ".join(repr(float(c)) for c in row) for row in self.vertices]
        lines += [" ".join(str(int(c)) for c in row) for row in self.tets]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class Mesh1D:
    """Uniform partition of the centerline, parametrized by arclength."""

    vertices: np.ndarray
    line: "Line"

    @property
    def segments(self) -> np.ndarray:
        n = len(self.vertices)
        return np.column_stack([np.arange(n - 1), np.arange(1, n)])

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.vertices) - 1

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.vertices) * self.line.length

    @property
    def resolution(self) -> float:
        return float(np.max(self.lengths))

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.array([0, len(self.vertices) - 1])

    def points(self, s: np.ndarray) -> np.ndarray:
        return self.line.point(s)


@dataclass(frozen=True, eq=False)
class SurfaceMesh2D:
    """Triangulated lateral surface built from faces of a conforming Mesh3D."""

    vertices: np.ndarray
    triangles: np.ndarray
    parent_vertex: np.ndarray
    parent_face: np.ndarray

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.triangles)

    @cached_property
    def areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        z = self.vertices[:, 2]
        return np.flatnonzero((np.abs(z) < 1e-14) | (np.abs(z - 1.0) < 1e-14))


@dataclass(frozen=True)
class Line:
    """Straight segment ``start + s*(end-start)``, ``s`` in [0, 1]."""

    start: tuple[float, float, float] = (0.5, 0.5, 0.0)
    end: tuple[float, float, float] = (0.5, 0.5, 1.0)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.subtract(self.end, self.start)))

    def point(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        a, b = np.asarray(self.start), np.asarray(self.end)
        return a + s[..., None] * (b - a)


@dataclass(frozen=True)
class CrossSectionGeometry:
    """Cross-section of the virtual tube around the centerline.

    ``boundary_param(s, t)`` walks the section boundary once for ``t`` in
    [0, 1); ``sides(s)`` returns the straight boundary pieces as (start, end)
    pairs, used by the ring quadrature.
    """

    area: Callable[[np.ndarray], np.ndarray]
    perimeter: Callable[[np.ndarray], np.ndarray]
    boundary_param: Callable[[np.ndarray, np.ndarray], np.ndarray]
    sides: Callable[[float], list[tuple[np.ndarray, np.ndarray]]]


def square_tube(line: Line = Line(), half_width: float = 0.25) -> CrossSectionGeometry:
    """Square cross-section of side ``2*half_width`` centred on a vertical line."""
    a = half_width
    cx, cy = line.start[0], line.start[1]
    corners = np.array([[cx - a, cy - a], [cx + a, cy - a], [cx + a, cy + a], [cx - a, cy + a]])

    def area(s):
        return np.full(np.shape(s), (2 * a) ** 2)

    def perimeter(s):
        return np.full(np.shape(s), 8 * a)

    def boundary_param(s, t):
        s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float) % 1.0)
        side = np.minimum((4 * t).astype(int), 3)
        frac = 4 * t - side
        p0, p1 = corners[side], corners[(side + 1) % 4]
        xy = p0 + frac[..., None] * (p1 - p0)
        z = line.point(s)[..., 2]
        return np.concatenate([xy, z[..., None]], axis=-1)

    def sides(s):
        z = float(line.point(np.array(s))[2])
        return [
            (np.append(corners[i], z), np.append(corners[(i + 1) % 4], z)) for i in range(4)
        ]

    return CrossSectionGeometry(area, perimeter, boundary_param, sides)


@dataclass(frozen=True, eq=False)
class LineIntersection:
    """Decomposition of a segment against a tet mesh.

    ``segments`` rows are (cell, s_start, s_end) in the segment's own
    parameter. ``g_h`` lists every cell whose closure meets the segment,
    including point contacts. ``internal_faces`` rows are (a, b, area) with
    ``a, b`` positions in ``g_h``.
    """

    cells: np.ndarray
    s_start: np.ndarray
    s_end: np.ndarray
    g_h: np.ndarray
    internal_faces: np.ndarray = field(repr=False)

    @property
    def total_length(self) -> float:
        return float(np.sum(self.s_end - self.s_start))


def signed_volumes(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    v = vertices[tets]
    return np.einsum(
        "ij,ij->i", v[:, 1] - v[:, 0], np.cross(v[:, 2] - v[:, 0], v[:, 3] - v[:, 0])
    ) / 6.0


def face_adjacency(tets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    local = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
    all_faces = np.sort(tets[:, local].reshape(-1, 3), axis=1)
    owner = np.repeat(np.arange(len(tets)), 4)
    faces, inverse = np.unique(all_faces, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    adj = np.full((len(faces), 2), -1, dtype=np.int64)
    order = np.argsort(inverse, kind="stable")
    inv_sorted = inverse[order]
    first = np.r_[True, inv_sorted[1:] != inv_sorted[:-1]]
    adj[inv_sorted[first], 0] = owner[order][first]
    second = ~first
    adj[inv_sorted[second], 1] = owner[order][second]
    return faces, adj


def kuhn_box_mesh(nx: int, ny: int, nz: int, level: int = 0) -> Mesh3D:
    """Unit cube as an ``nx*ny*nz`` grid, six positively oriented tets per cube."""
    gx, gy, gz = (np.linspace(0.0, 1.0, n + 1) for n in (nx, ny, nz))
    Z, Y, X = np.meshgrid(gz, gy, gx, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    base = (i + (nx + 1) * (j + (ny + 1) * k)).ravel()
    step = np.array([1, nx + 1, (nx + 1) * (ny + 1)])
    tets = np.empty((len(base), 6, 4), dtype=np.int64)
    for p, perm in enumerate(KUHN_PERMS):
        a = base + step[perm[0]]
        b = a + step[perm[1]]
        tets[:, p] = np.column_stack([base, a, b, base + step.sum()])
    tets = tets.reshape(-1, 4)
    vol = signed_volumes(vertices, tets)
    flip = vol < 0
    tets[flip, 2], tets[flip, 3] = tets[flip, 3].copy(), tets[flip, 2].copy()
    return Mesh3D(vertices, tets, (nx, ny, nz), level)


def _check_level(level: int) -> None:
    if not isinstance(level, (int, np.integer)) or level < 1:
        raise MeshError(f"refinement level must be a positive integer, got {level!r}")


def build_conforming_mesh(level: int, line: Line = Line(), half_width: float = 0.25):
    """Meshes fitted to both the centerline and the tube surface.

    Returns ``(mesh3d, mesh1d, surface)``; ``n = 4 * 2**(level-1)`` cubes per
    side so the planes x, y in {1/4, 3/4} and the line x = y = 1/2 are grid
    planes/lines.
    """
    _check_level(level)
    n = 4 * 2 ** (level - 1)
    mesh = kuhn_box_mesh(n, n, n, level)
    mesh1d = Mesh1D(np.linspace(0.0, 1.0, n + 1), line)
    surface = extract_tube_surface(mesh, line, half_width)
    return mesh, mesh1d, surface


def build_nonconforming_mesh(level: int, line: Line = Line()):
    """Odd cube count across, so no tet edge lies on the line x = y = 1/2.

    ``n_xy = 4*2**(level-1) + 1`` and ``n_z = n_xy - 1``; the line mesh has
    three segments per vertical cube layer.
    """
    _check_level(level)
    nxy = 4 * 2 ** (level - 1) + 1
    nz = nxy - 1
    mesh = kuhn_box_mesh(nxy, nxy, nz, level)
    mesh1d = Mesh1D(np.linspace(0.0, 1.0, 3 * nz + 1), line)
    return mesh, mesh1d


def extract_tube_surface(mesh: Mesh3D, line: Line, half_width: float) -> SurfaceMesh2D:
    """Collect tet faces lying on the four tube walls."""
    cx, cy = line.start[0], line.start[1]
    lo_x, hi_x = cx - half_width, cx + half_width
    lo_y, hi_y = cy - half_width, cy + half_width
    x = mesh.vertices
    tol = 1e-12
    in_x = (x[:, 0] > lo_x - tol) & (x[:, 0] < hi_x + tol)
    in_y = (x[:, 1] > lo_y - tol) & (x[:, 1] < hi_y + tol)
    on_wall = (
        ((np.abs(x[:, 0] - lo_x) < tol) | (np.abs(x[:, 0] - hi_x) < tol)) & in_y
    ) | (((np.abs(x[:, 1] - lo_y) < tol) | (np.abs(x[:, 1] - hi_y) < tol)) & in_x)

    local = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
    cand = np.flatnonzero(on_wall[mesh.tets].sum(axis=1) >= 3)
    tri = np.sort(mesh.tets[cand][:, local].reshape(-1, 3), axis=1)
    tri = tri[on_wall[tri].all(axis=1)]
    # all three vertices on the walls but spanning two walls (a corner) is not a wall face
    pts = x[tri]
    planar = np.zeros(len(tri), dtype=bool)
    for d, values in ((0, (lo_x, hi_x)), (1, (lo_y, hi_y))):
        for val in values:
            planar |= np.all(np.abs(pts[:, :, d] - val) < tol, axis=1)
    tri = np.unique(tri[planar], axis=0)
    if len(tri) == 0:
        raise MeshError("mesh is not conforming to the tube surface")

    parent_vertex = np.unique(tri)
    renum = np.full(mesh.num_vertices, -1, dtype=np.int64)
    renum[parent_vertex] = np.arange(len(parent_vertex))
    # face ids are only resolved for meshes where the global face table is cheap
    if mesh.num_cells <= 200_000:
        parent_face = _match_rows(mesh.faces[0], tri)
    else:
        parent_face = np.full(len(tri), -1, dtype=np.int64)
    return SurfaceMesh2D(x[parent_vertex], renum[tri], parent_vertex, parent_face)


def _match_rows(table: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Index in the lexicographically sorted ``table`` of each of ``rows``."""
    base = int(max(table.max(), rows.max())) + 1
    key_t = (table[:, 0] * base + table[:, 1]) * base + table[:, 2]
    key_r = (rows[:, 0] * base + rows[:, 1]) * base + rows[:, 2]
    pos = np.searchsorted(key_t, key_r)
    if np.any(key_t[np.minimum(pos, len(key_t) - 1)] != key_r):
        raise MeshError("surface triangle is not a mesh face")
    return pos


def _segment_breakpoints(mesh: Mesh3D, p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    """Parameters in [0, 1] where the segment crosses a plane of the Kuhn arrangement."""
    n = np.array(mesh.cells_per_side, dtype=float)
    g0, g1 = p0 * n, p1 * n
    d = g1 - g0
    ts = [np.array([0.0, 1.0])]
    for ax in range(3):
        if abs(d[ax]) > 1e-14:
            lo, hi = sorted((g0[ax], g1[ax]))
            planes = np.arange(np.ceil(lo - 1e-12), np.floor(hi + 1e-12) + 1)
            ts.append((planes - g0[ax]) / d[ax])
    t = np.unique(np.clip(np.concatenate(ts), 0.0, 1.0))
    # diagonal planes inside each cube piece
    extra = []
    mid = 0.5 * (t[:-1] + t[1:])
    cube = np.floor(g0 + mid[:, None] * d)
    la = g0 + t[:-1, None] * d - cube
    lb = g0 + t[1:, None] * d - cube
    for a, b in ((0, 1), (0, 2), (1, 2)):
        fa = la[:, a] - la[:, b]
        fb = lb[:, a] - lb[:, b]
        cross = (fa * fb < 0) & (np.abs(fa - fb) > 1e-14)
        r = fa[cross] / (fa[cross] - fb[cross])
        extra.append(t[:-1][cross] + r * (t[1:][cross] - t[:-1][cross]))
    t = np.unique(np.concatenate([t] + extra))
    keep = np.r_[True, np.diff(t) > 1e-13]
    return t[keep]


def _containing_cells(mesh: Mesh3D, point: np.ndarray, tol: float = BARY_TOL) -> np.ndarray:
    cand = mesh.candidate_cells(point)
    bary = mesh.barycentric(cand, np.repeat(point[None], len(cand), axis=0))
    return cand[np.all(bary >= -tol, axis=1)]


def segment_pieces(mesh: Mesh3D, p0, p1) -> tuple[np.ndarray, np.ndarray]:
    """Breakpoints and one owning cell per piece of the segment ``p0 -> p1``.

    Within each piece the segment stays in a single closed tet, so any P1
    function restricted to the piece is affine.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    t = _segment_breakpoints(mesh, p0, p1)
    mids = p0 + (0.5 * (t[:-1] + t[1:]))[:, None] * (p1 - p0)
    cells, _ = mesh.locate(mids)
    return t, cells


def locate_line_elements(mesh: Mesh3D, line: Line = Line()) -> LineIntersection:
    """Exact decomposition of the line against ``mesh``.

    A piece lying on a face shared by two tets goes to the tet with the
    smaller index. ``g_h`` holds every tet whose closure meets the line.
    """
    p0 = np.asarray(line.start, dtype=float)
    p1 = np.asarray(line.end, dtype=float)
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    if np.any(np.minimum(p0, p1) < lo - 1e-14) or np.any(np.maximum(p0, p1) > hi + 1e-14):
        raise OutOfDomainError("line leaves the mesh bounding box")
    if not mesh.is_kuhn_grid:
        return _locate_generic(mesh, p0, p1)
    t = _segment_breakpoints(mesh, p0, p1)
    cells = []
    touching = set()
    for a, b in zip(t[:-1], t[1:]):
        owners = _containing_cells(mesh, p0 + 0.5 * (a + b) * (p1 - p0))
        if len(owners) == 0:
            raise MeshError(f"line piece ({a}, {b}) not assigned to any element")
        cells.append(int(owners.min()))
        touching.update(owners.tolist())
    for a in t:
        touching.update(_containing_cells(mesh, p0 + a * (p1 - p0)).tolist())
    g_h = np.array(sorted(touching), dtype=np.int64)
    internal = _patch_internal_faces(mesh, g_h)
    return LineIntersection(np.array(cells), t[:-1].copy(), t[1:].copy(), g_h, internal)


def _tet_intervals(mesh: Mesh3D, p0: np.ndarray, p1: np.ndarray, tol: float = BARY_TOL):
    """Parameter interval ``[lo, hi]`` of the segment inside each closed tet (``lo > hi`` if empty)."""
    cells = np.arange(mesh.num_cells)
    b0 = mesh.barycentric(cells, np.repeat(p0[None], len(cells), axis=0))
    b1 = mesh.barycentric(cells, np.repeat(p1[None], len(cells), axis=0))
    d = b1 - b0
    lo = np.zeros(len(cells))
    hi = np.ones(len(cells))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (-tol - b0) / d
    inc, dec = d > 1e-15, d < -1e-15
    lo = np.maximum(lo, np.where(inc, t, -np.inf).max(axis=1))
    hi = np.minimum(hi, np.where(dec, t, np.inf).min(axis=1))
    flat_out = (np.abs(d) <= 1e-15) & (b0 < -tol)
    hi[flat_out.any(axis=1)] = -1.0
    return lo, hi


def _locate_generic(mesh: Mesh3D, p0: np.ndarray, p1: np.ndarray) -> LineIntersection:
    """Brute-force decomposition for meshes that are not Kuhn grids."""
    lo, hi = _tet_intervals(mesh, p0, p1)
    hit = lo <= hi
    t = np.unique(np.clip(np.concatenate([[0.0, 1.0], lo[hit], hi[hit]]), 0.0, 1.0))
    # interval ends carry the barycentric tolerance, so merge close breakpoints
    t = t[np.r_[True, np.diff(t) > 1e-9]]
    t[-1] = 1.0
    cells = []
    for a, b in zip(t[:-1], t[1:]):
        m = 0.5 * (a + b)
        owners = np.flatnonzero(hit & (lo <= m) & (hi >= m))
        if len(owners) == 0:
            raise MeshError(f"line piece ({a}, {b}) not assigned to any element")
        cells.append(int(owners.min()))
    g_h = np.flatnonzero(hit)
    internal = _patch_internal_faces(mesh, g_h)
    return LineIntersection(np.array(cells), t[:-1].copy(), t[1:].copy(), g_h, internal)


def _patch_internal_faces(mesh: Mesh3D, patch: np.ndarray) -> np.ndarray:
    faces, adj = face_adjacency(mesh.tets[patch])
    inner = np.all(adj >= 0, axis=1)
    v = mesh.vertices[faces[inner]]
    area = 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)
    return np.column_stack([adj[inner].astype(float), area])


def evaluate_point(mesh: Mesh3D, coefficients: np.ndarray, point) -> float:
    """Value of the P1 interpolant with nodal ``coefficients`` at ``point``."""
    pts = np.atleast_2d(np.asarray(point, dtype=float))
    cells, bary = mesh.locate(pts)
    vals = np.einsum("ij,ij->i", bary, np.asarray(coefficients)[mesh.tets[cells]])
    return float(vals[0]) if np.ndim(point) == 1 else vals


def tube_surface_mesh(n_axial: int, n_around: int, line: Line = Line(), half_width: float = 0.25):
    """Structured triangulation of the square tube surface, periodic around the ring.

    Independent of any volume mesh (``parent_vertex`` is -1); ``n_around``
    must be a multiple of 4 so the corners are vertices.
    """
    if n_around % 4 or n_axial < 1:
        raise MeshError("n_around must be a positive multiple of 4 and n_axial >= 1")
    geom = square_tube(line, half_width)
    s = np.linspace(0.0, 1.0, n_axial + 1)
    t = np.arange(n_around) / n_around
    S, T = np.meshgrid(s, t, indexing="ij")
    verts = geom.boundary_param(S.ravel(), T.ravel())
    idx = np.arange(len(verts)).reshape(n_axial + 1, n_around)
    a = idx[:-1]
    b = np.roll(idx[:-1], -1, axis=1)
    c = idx[1:]
    d = np.roll(idx[1:], -1, axis=1)
    tris = np.concatenate([np.stack([a, b, d], -1).reshape(-1, 3), np.stack([a, d, c], -1).reshape(-1, 3)])
    neg = -np.ones(len(verts), dtype=np.int64)
    return SurfaceMesh2D(verts, tris, neg, -np.ones(len(tris), dtype=np.int64))
