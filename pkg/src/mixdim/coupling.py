"""Cross-dimensional coupling blocks.

``B_u`` couples the 3D field, ``B_w`` the 1D field; both are stored with a
positive sign and the formulation subtracts ``B_w`` (see
:mod:`mixdim.system`). Rows are multiplier DOFs.

The average trace of a 3D P1 function over the ring ``dD(s)`` is integrated
by splitting each straight side of the ring at every plane of the Kuhn
arrangement, so the integrand is affine on each piece and a Gauss rule is
exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import (
    CrossSectionGeometry,
    LineIntersection,
    Mesh1D,
    Mesh3D,
    MeshError,
    OutOfDomainError,
    SurfaceMesh2D,
    segment_pieces,
)
from .spaces import TRI_RULE, FunctionSpace, assemble_mass, quadrature_points


@dataclass(frozen=True)
class CouplingBlock:
    matrix: sp.csr_matrix
    field: str  # "3d" or "1d"
    sign: int = 1


def _line_param(mesh1d: Mesh1D, pts: np.ndarray) -> np.ndarray:
    a = np.asarray(mesh1d.line.start, dtype=float)
    d = np.asarray(mesh1d.line.end, dtype=float) - a
    return (pts - a) @ d / (d @ d)


def hat_values(mesh1d: Mesh1D, s: np.ndarray) -> sp.csr_matrix:
    """Sparse (len(s) x num_vertices) matrix of 1D P1 basis values at ``s``."""
    s = np.asarray(s, dtype=float)
    v = mesh1d.vertices
    seg = np.clip(np.searchsorted(v, s, side="right") - 1, 0, len(v) - 2)
    t = (s - v[seg]) / (v[seg + 1] - v[seg])
    rows = np.repeat(np.arange(len(s)), 2)
    cols = np.column_stack([seg, seg + 1]).ravel()
    vals = np.column_stack([1 - t, t]).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(s), len(v)))


def p1_values(mesh: Mesh3D, points: np.ndarray) -> sp.csr_matrix:
    """Sparse (len(points) x num_vertices) matrix of 3D P1 basis values."""
    cells, bary = mesh.locate(points)
    rows = np.repeat(np.arange(len(points)), 4)
    return sp.csr_matrix(
        (bary.ravel(), (rows, mesh.tets[cells].ravel())), shape=(len(points), mesh.num_vertices)
    )


def assemble_trace_coupling_2d(V3: FunctionSpace, V1: FunctionSpace, Q: FunctionSpace):
    """Coupling on the tube surface.

    ``B_u[i, j] = int_Gamma phi_j psi_i`` and
    ``B_w[i, k] = int_Gamma (E chi_k) psi_i`` where ``E`` extends a line
    function constantly around each ring.
    """
    surf = Q.mesh
    if not isinstance(surf, SurfaceMesh2D) or not isinstance(V3.mesh, Mesh3D):
        raise MeshError("surface coupling needs a surface mesh built from the 3D mesh")
    M = assemble_mass(Q).tocoo()
    B_u = sp.csr_matrix(
        (M.data, (M.row, surf.parent_vertex[M.col])), shape=(Q.dim, V3.dim)
    )

    bary, _ = TRI_RULE
    pts, qw = quadrature_points(surf)
    chi = hat_values(V1.mesh, _line_param(V1.mesh, pts.reshape(-1, 3)))
    psi_rows = np.repeat(surf.triangles, bary.shape[0], axis=0)
    psi_vals = np.tile(bary, (surf.num_cells, 1)) * qw.reshape(-1, 1)
    nq = pts.shape[0] * pts.shape[1]
    Psi = sp.csr_matrix(
        (psi_vals.ravel(), (np.repeat(np.arange(nq), 3), psi_rows.ravel())), shape=(nq, Q.dim)
    )
    B_w = (Psi.T @ chi).tocsr()
    return CouplingBlock(B_u.tocsr(), "3d"), CouplingBlock(B_w, "1d", -1)


def ring_quadrature(mesh: Mesh3D, geom: CrossSectionGeometry, s: float, n_q: int = 4):
    """Points and weights integrating P1 functions exactly over ``dD(s)``."""
    x, w = np.polynomial.legendre.leggauss(n_q)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    pts, wts = [], []
    for p0, p1 in geom.sides(s):
        if np.any(np.minimum(p0, p1) < -1e-12) or np.any(np.maximum(p0, p1) > 1 + 1e-12):
            raise OutOfDomainError(f"cross-section boundary at s={s} leaves the domain")
        t, _ = segment_pieces(mesh, p0, p1)
        a, b = t[:-1], t[1:]
        tq = (a[:, None] + (b - a)[:, None] * x[None, :]).ravel()
        side_len = np.linalg.norm(p1 - p0)
        pts.append(p0 + tq[:, None] * (p1 - p0))
        wts.append(((b - a)[:, None] * w[None, :]).ravel() * side_len)
    return np.concatenate(pts), np.concatenate(wts)


def average_trace_matrix(mesh: Mesh3D, geom: CrossSectionGeometry, s_values, n_q: int = 4):
    """Sparse (len(s) x num_vertices): row q holds ``avg over dD(s_q)`` of each basis function."""
    rows, pts, wts = [], [], []
    for q, s in enumerate(np.asarray(s_values, dtype=float)):
        p, w = ring_quadrature(mesh, geom, s, n_q)
        rows.append(np.full(len(p), q))
        pts.append(p)
        wts.append(w / w.sum())
    rows = np.concatenate(rows)
    P = p1_values(mesh, np.concatenate(pts)).tocoo()
    weights = np.concatenate(wts)
    return sp.csr_matrix(
        (P.data * weights[P.row], (rows[P.row], P.col)), shape=(len(s_values), mesh.num_vertices)
    )


def line_subintervals(mesh1d: Mesh1D, intersection: LineIntersection | None = None):
    """Breakpoints of the line: 1D vertices merged with element crossings."""
    t = [mesh1d.vertices]
    if intersection is not None:
        t += [intersection.s_start, intersection.s_end]
    t = np.unique(np.concatenate(t))
    return t[np.r_[True, np.diff(t) > 1e-13]]


def _line_rule(breaks: np.ndarray, n: int, length: float):
    x, w = np.polynomial.legendre.leggauss(n)
    a, b = breaks[:-1], breaks[1:]
    s = (a[:, None] + (b - a)[:, None] * 0.5 * (x + 1)).ravel()
    ws = ((b - a)[:, None] * 0.5 * w).ravel() * length
    return s, ws


def multiplier_values(Q: FunctionSpace, s: np.ndarray, intersection: LineIntersection | None):
    """Sparse (len(s) x Q.dim) values of multiplier basis functions on the line."""
    if Q.family == "P1":
        if not isinstance(Q.mesh, Mesh1D):
            raise MeshError("P1 multipliers must live on the line mesh")
        return hat_values(Q.mesh, s)
    if intersection is None:
        raise MeshError("P0 multipliers need the line/mesh intersection")
    piece = np.clip(np.searchsorted(intersection.s_start, s, side="right") - 1, 0,
                    len(intersection.cells) - 1)
    pos = np.searchsorted(Q.cells, intersection.cells[piece])
    if np.any(Q.cells[np.minimum(pos, len(Q.cells) - 1)] != intersection.cells[piece]):
        raise MeshError("line piece owner missing from the multiplier cells")
    return sp.csr_matrix((np.ones(len(s)), (np.arange(len(s)), pos)), shape=(len(s), Q.dim))


def assemble_average_coupling_1d(
    V3: FunctionSpace,
    V1: FunctionSpace,
    Q: FunctionSpace,
    geom: CrossSectionGeometry,
    intersection: LineIntersection | None = None,
    n_q: int = 4,
    line_points: int = 2,
):
    """Coupling through the ring-averaged trace on the line.

    ``B_u[i, j] = int |dD| avg(phi_j) mu_i ds`` and
    ``B_w[i, k] = int |dD| chi_k mu_i ds``.
    """
    mesh1d = V1.mesh
    breaks = line_subintervals(mesh1d, intersection)
    s, ws = _line_rule(breaks, line_points, mesh1d.line.length)
    ws = ws * geom.perimeter(s)
    Mu = multiplier_values(Q, s, intersection)
    WMu = sp.diags(ws) @ Mu
    T = average_trace_matrix(V3.mesh, geom, s, n_q)
    B_u = (WMu.T @ T).tocsr()
    B_w = (WMu.T @ hat_values(mesh1d, s)).tocsr()
    return CouplingBlock(B_u, "3d"), CouplingBlock(B_w, "1d", -1)


def assemble_stabilization(Q: FunctionSpace, intersection: LineIntersection, h: float,
                           per_element: bool = True):
    """Jump penalty ``h |F| [lam][mu]`` over faces interior to the G_h patch.

    With ``per_element`` the penalty is summed over element boundaries, so
    every internal face enters once from each side (weight ``2 h |F|``);
    otherwise each face counts once.
    """
    faces = intersection.internal_faces
    a = faces[:, 0].astype(np.int64)
    b = faces[:, 1].astype(np.int64)
    val = (2.0 if per_element else 1.0) * h * faces[:, 2]
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    data = np.concatenate([val, val, -val, -val])
    return sp.csr_matrix((data, (rows, cols)), shape=(Q.dim, Q.dim))


def patch_measure(geom: CrossSectionGeometry, a: np.ndarray, b: np.ndarray, length: float = 1.0):
    """``int_a^b |dD(s)| ds`` per interval, 5-point Gauss."""
    x, w = np.polynomial.legendre.leggauss(5)
    s = a[:, None] + (b - a)[:, None] * 0.5 * (x + 1)
    return (geom.perimeter(s) * w).sum(axis=1) * 0.5 * (b - a) * length


def project_piH(values, pieces: tuple[np.ndarray, np.ndarray], patches, geom, length: float = 1.0):
    """Perimeter-weighted mean of a piecewise-constant line function per patch.

    ``values[k]`` is the value on line piece ``k`` with bounds
    ``pieces[0][k], pieces[1][k]``; ``patches`` lists consecutive piece
    indices and must partition all pieces in order.
    """
    a, b = (np.asarray(p, dtype=float) for p in pieces)
    flat = np.concatenate([np.asarray(p, dtype=np.int64) for p in patches])
    if not np.array_equal(flat, np.arange(len(a))):
        raise ValueError("patches must partition the line pieces in order")
    m = patch_measure(geom, a, b, length)
    out = np.empty(len(a))
    vals = np.asarray(values, dtype=float)
    for p in patches:
        out[p] = np.sum(m[p] * vals[p]) / np.sum(m[p])
    return out
