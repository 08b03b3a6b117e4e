"""P1 and P0 finite element spaces with weighted mass/stiffness/load assembly.

Works on the three simplicial meshes of :mod:`mixdim.mesh`: tets in 3D,
surface triangles embedded in 3D and segments of the centerline. Weights are
either constants or functions evaluated at quadrature points; functions of a
line take the arclength ``s``, all others take 3D points.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.io
import scipy.sparse as sp

from .mesh import Mesh1D, Mesh3D, SurfaceMesh2D

AnyMesh = Union[Mesh3D, SurfaceMesh2D, Mesh1D]


# Reference rules as (barycentric points, weights summing to 1).
def _tet_rule():
    a1, a2, b = 0.0927352503108912, 0.3108859192633006, 0.4544962958743504
    w1, w2, w3 = 0.01224884051939366, 0.01878132095300264, 0.007091003462846911
    pts, wts = [], []
    for a, w in ((a1, w1), (a2, w2)):
        for i in range(4):
            p = np.full(4, a)
            p[i] = 1 - 3 * a
            pts.append(p)
            wts.append(w)
    for i in range(4):
        for j in range(i + 1, 4):
            p = np.full(4, 0.5 - b)
            p[i] = p[j] = b
            pts.append(p)
            wts.append(w3)
    return np.array(pts), 6 * np.array(wts)


def _tri_rule():
    a, wa = 0.445948490915965, 0.223381589678011
    b, wb = 0.091576213509771, 0.109951743655322
    pts = [[1 - 2 * a, a, a], [a, 1 - 2 * a, a], [a, a, 1 - 2 * a],
           [1 - 2 * b, b, b], [b, 1 - 2 * b, b], [b, b, 1 - 2 * b]]
    return np.array(pts), np.array([wa] * 3 + [wb] * 3)


def _line_rule(n: int = 3):
    x, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (x + 1)
    return np.column_stack([1 - t, t]), 0.5 * w


TET_RULE = _tet_rule()
TRI_RULE = _tri_rule()
LINE_RULE = _line_rule(3)


@dataclass(frozen=True)
class WeightSpec:
    """Positive scalar weight, constant or pointwise."""

    value: Union[float, Callable[[np.ndarray], np.ndarray]] = 1.0

    @property
    def is_constant(self) -> bool:
        return not callable(self.value)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if callable(self.value):
            return np.asarray(self.value(x), dtype=float)
        return np.full(np.shape(x)[:1] if np.ndim(x) > 1 else np.shape(x), float(self.value))


ONE = WeightSpec(1.0)


@dataclass(eq=False)
class FunctionSpace:
    """P1 on a whole mesh or P0 on a subset of its cells.

    ``dirichlet_dofs`` are eliminated symmetrically by :func:`apply_dirichlet`;
    they stay in ``dim``.
    """

    mesh: AnyMesh
    family: str = "P1"
    cells: np.ndarray | None = None
    dirichlet_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        if self.family not in ("P1", "P0"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "P0" and self.cells is None:
            self.cells = np.arange(self.mesh.num_cells)
        self.dirichlet_dofs = np.asarray(self.dirichlet_dofs, dtype=np.int64)
        if len(self.dirichlet_dofs) and (
            self.dirichlet_dofs.min() < 0 or self.dirichlet_dofs.max() >= self.dim
        ):
            raise ValueError("dirichlet dofs out of range")

    @property
    def dim(self) -> int:
        if self.family == "P1":
            return self.mesh.num_vertices
        return len(self.cells)

    @property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.dim, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return np.flatnonzero(mask)

    def dof_coordinates(self) -> np.ndarray:
        return node_coordinates(self.mesh)

    def interpolate(self, f: Callable) -> np.ndarray:
        if self.family != "P1":
            raise ValueError("nodal interpolation needs a P1 space")
        return np.asarray(f(self.dof_coordinates()), dtype=float)


def with_boundary(space_mesh: AnyMesh) -> FunctionSpace:
    """P1 space with the mesh boundary vertices marked as Dirichlet."""
    return FunctionSpace(space_mesh, "P1", dirichlet_dofs=space_mesh.boundary_vertices)


def node_coordinates(mesh: AnyMesh) -> np.ndarray:
    """Evaluation coordinates: 3D points, or arclength for a line mesh."""
    if isinstance(mesh, Mesh1D):
        return mesh.vertices
    return mesh.vertices


def _cells(mesh: AnyMesh) -> np.ndarray:
    if isinstance(mesh, Mesh3D):
        return mesh.tets
    if isinstance(mesh, SurfaceMesh2D):
        return mesh.triangles
    return mesh.segments


def _geometry(mesh: AnyMesh):
    """Cell measures and P1 basis gradients (cells x nodes x 3 or x1)."""
    cells = _cells(mesh)
    if isinstance(mesh, Mesh1D):
        h = mesh.lengths
        grads = np.stack([-1.0 / h, 1.0 / h], axis=1)[..., None]
        return h, grads
    x = mesh.vertices[cells]
    E = x[:, 1:] - x[:, :1]
    if isinstance(mesh, Mesh3D):
        meas = np.abs(np.linalg.det(E)) / 6.0
        ginv = np.transpose(np.linalg.inv(E), (0, 2, 1))
    else:
        G = E @ np.transpose(E, (0, 2, 1))
        meas = 0.5 * np.sqrt(np.linalg.det(G))
        ginv = np.linalg.solve(G, E)
    grads_rest = ginv
    grads = np.concatenate([-grads_rest.sum(axis=1, keepdims=True), grads_rest], axis=1)
    return meas, grads


def _rule(mesh: AnyMesh):
    if isinstance(mesh, Mesh3D):
        return TET_RULE
    if isinstance(mesh, SurfaceMesh2D):
        return TRI_RULE
    return LINE_RULE


def quadrature_points(mesh: AnyMesh, rule=None):
    """Physical quadrature points (cells x q x dim) and weights (cells x q)."""
    bary, w = rule if rule is not None else _rule(mesh)
    meas, _ = _geometry(mesh)
    nodes = node_coordinates(mesh)[_cells(mesh)]
    pts = np.einsum("qk,ck...->cq...", bary, nodes)
    return pts, meas[:, None] * w[None, :]


def _weights_at(w: WeightSpec, mesh: AnyMesh, rule=None):
    pts, qw = quadrature_points(mesh, rule)
    if w.is_constant:
        return qw * float(w.value)
    shape = pts.shape[:2]
    flat = pts.reshape(-1) if pts.ndim == 2 else pts.reshape(-1, pts.shape[-1])
    return qw * w(flat).reshape(shape)


def _scatter(cells: np.ndarray, local: np.ndarray, n: int) -> sp.csr_matrix:
    k = cells.shape[1]
    rows = np.repeat(cells, k, axis=1).ravel()
    cols = np.tile(cells, (1, k)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def assemble_stiffness(space: FunctionSpace, w: WeightSpec = ONE) -> sp.csr_matrix:
    """Weighted P1 stiffness matrix ``int w grad(u).grad(v)``."""
    if space.family != "P1":
        raise ValueError("stiffness needs a P1 space")
    mesh = space.mesh
    _, grads = _geometry(mesh)
    wK = _weights_at(w, mesh).sum(axis=1)
    local = np.einsum("c,cid,cjd->cij", wK, grads, grads)
    return _scatter(_cells(mesh), local, space.dim)


def assemble_mass(space: FunctionSpace, w: WeightSpec = ONE) -> sp.csr_matrix:
    """Weighted mass matrix; P0 spaces give the diagonal of weighted cell measures."""
    mesh = space.mesh
    bary, _ = _rule(mesh)
    wq = _weights_at(w, mesh)
    if space.family == "P0":
        return sp.diags(wq.sum(axis=1)[space.cells]).tocsr()
    local = np.einsum("cq,qi,qj->cij", wq, bary, bary)
    return _scatter(_cells(mesh), local, space.dim)


def assemble_h1(space: FunctionSpace, w: WeightSpec = ONE, mode: str = "full-H1"):
    """Weighted H1 form: stiffness plus mass for ``full-H1``, stiffness only otherwise."""
    K = assemble_stiffness(space, w)
    if mode == "full-H1":
        return (K + assemble_mass(space, w)).tocsr()
    if mode == "stiffness-only":
        return K
    raise ValueError(f"unknown bilinear form mode {mode!r}")


def assemble_load(space: FunctionSpace, f: Callable, w: WeightSpec = ONE) -> np.ndarray:
    """Vector of ``int w f phi_i`` with the degree >= 4 element rules."""
    mesh = space.mesh
    bary, _ = _rule(mesh)
    pts, _ = quadrature_points(mesh)
    wq = _weights_at(w, mesh)
    flat = pts.reshape(-1) if pts.ndim == 2 else pts.reshape(-1, pts.shape[-1])
    fq = np.asarray(f(flat), dtype=float).reshape(wq.shape)
    if space.family == "P0":
        return (wq * fq).sum(axis=1)[space.cells]
    local = np.einsum("cq,qi->ci", wq * fq, bary)
    return np.bincount(_cells(mesh).ravel(), local.ravel(), minlength=space.dim)


def apply_dirichlet(A: sp.spmatrix, b: np.ndarray, dofs: np.ndarray, values: np.ndarray):
    """Symmetric elimination keeping the matrix size.

    Constrained rows and columns become identity rows, their couplings are
    moved to the right-hand side, and the constrained entries of ``b`` carry
    ``values``.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    dofs = np.asarray(dofs, dtype=np.int64)
    g = np.zeros(n)
    g[dofs] = values
    b = np.asarray(b, dtype=float) - A @ g
    keep = np.ones(n)
    keep[dofs] = 0.0
    D = sp.diags(keep)
    eye = sp.diags(1.0 - keep)
    A = (D @ A @ D + eye).tocsr()
    A.eliminate_zeros()
    b[dofs] = values
    return A, b


def export_matrix_market(A: sp.spmatrix, comment: str = "") -> str:
    buf = io.BytesIO()
    scipy.io.mmwrite(buf, sp.coo_matrix(A), comment=comment, symmetry="general")
    return buf.getvalue().decode()
