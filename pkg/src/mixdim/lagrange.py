"""Higher-order Lagrange elements used for error measurement.

Basis functions are built from barycentric coordinates with Silvester's
product formula, so one code path covers segments, triangles and tets of any
degree. Continuous spaces number nodes by (rounded) physical coordinates,
which is adequate for the modest meshes the error norms live on.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh1D, Mesh3D, SurfaceMesh2D
from .spaces import LINE_RULE, TET_RULE, TRI_RULE, AnyMesh, WeightSpec, _cells, _geometry, node_coordinates


@lru_cache(maxsize=None)
def lattice(nverts: int, k: int) -> np.ndarray:
    """Multi-indices ``alpha`` with ``sum(alpha) == k``; vertices first, then edges, then interior."""
    idx = [a for a in itertools.product(range(k + 1), repeat=nverts) if sum(a) == k]
    return np.array(sorted(idx, key=lambda a: (sum(1 for c in a if c > 0), tuple(-c for c in a))))


def basis(bary: np.ndarray, k: int):
    """Values (q x n) and derivatives w.r.t. each barycentric (q x n x nverts)."""
    nverts = bary.shape[1]
    alphas = lattice(nverts, k)
    q = bary.shape[0]
    vals = np.ones((q, len(alphas)))
    dvals = np.zeros((q, len(alphas), nverts))
    for a, alpha in enumerate(alphas):
        factors = []
        dfactors = []
        for i, ai in enumerate(alpha):
            f = np.ones(q)
            df = np.zeros(q)
            for m in range(ai):
                term = (k * bary[:, i] - m) / (m + 1)
                df = df * term + f * k / (m + 1)
                f = f * term
            factors.append(f)
            dfactors.append(df)
        factors = np.array(factors)
        vals[:, a] = np.prod(factors, axis=0)
        for i in range(nverts):
            others = np.prod(np.delete(factors, i, axis=0), axis=0)
            dvals[:, a, i] = dfactors[i] * others
    return vals, dvals


@lru_cache(maxsize=None)
def simplex_rule(nverts: int, degree: int):
    """Collapsed Gauss rule on the reference simplex (barycentric points, weights summing to 1)."""
    n = degree // 2 + 2
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    dim = nverts - 1
    pts, wts = [], []
    for combo in itertools.product(range(n), repeat=dim):
        u = [x[c] for c in combo]
        weight = np.prod([w[c] for c in combo])
        # Duffy map from the unit cube
        lam = []
        rest = 1.0
        for d in range(dim):
            weight *= rest
            lam.append(rest * u[d])
            rest *= 1 - u[d]
        lam.append(rest)
        pts.append(lam)
        wts.append(weight)
    wts = np.array(wts)
    return np.array(pts), wts / wts.sum()


def error_rule(nverts: int, degree: int):
    """Rule integrating squared P_k functions exactly, the cheap fixed rules when they suffice."""
    fixed = {2: (LINE_RULE, 5), 3: (TRI_RULE, 4), 4: (TET_RULE, 5)}[nverts]
    return fixed[0] if fixed[1] >= 2 * degree else simplex_rule(nverts, 2 * degree)


@dataclass(eq=False)
class LagrangeSpace:
    """Continuous (``dg=False``) or broken P_k space on a P1 simplicial mesh."""

    mesh: AnyMesh
    degree: int
    dg: bool = False

    def __post_init__(self):
        cells = _cells(self.mesh)
        self.nverts = cells.shape[1]
        self.alphas = lattice(self.nverts, self.degree)
        bary_nodes = self.alphas / self.degree
        coords = node_coordinates(self.mesh)[cells]
        if coords.ndim == 2:
            coords = coords[..., None]
        self.node_points = np.einsum("nk,ckd->cnd", bary_nodes, coords)
        ncell, nloc = self.node_points.shape[:2]
        if self.dg:
            self.cell_dofs = np.arange(ncell * nloc).reshape(ncell, nloc)
            self.points = self.node_points.reshape(ncell * nloc, -1)
        else:
            flat = self.node_points.reshape(ncell * nloc, -1)
            key = np.round(flat * 2 ** 30).astype(np.int64)
            uniq, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
            self.cell_dofs = inv.reshape(ncell, nloc)
            self.points = flat[first]
        self.dim = len(self.points)

    def coordinates(self) -> np.ndarray:
        p = self.points
        return p[:, 0] if p.shape[1] == 1 else p

    @property
    def boundary_dofs(self) -> np.ndarray:
        m = self.mesh
        if isinstance(m, Mesh1D):
            s = self.points[:, 0]
            return np.flatnonzero((np.abs(s) < 1e-12) | (np.abs(s - 1) < 1e-12))
        z = self.points[:, 2]
        if isinstance(m, SurfaceMesh2D):
            return np.flatnonzero((np.abs(z) < 1e-12) | (np.abs(z - 1) < 1e-12))
        x = self.points
        return np.flatnonzero(np.any((np.abs(x) < 1e-12) | (np.abs(x - 1) < 1e-12), axis=1))

    def interpolate(self, f) -> np.ndarray:
        return np.asarray(f(self.coordinates()), dtype=float)

    def from_p1(self, values: np.ndarray) -> np.ndarray:
        """Exact embedding of a P1 nodal vector (the P1 function is in P_k)."""
        bary_nodes = self.alphas / self.degree
        cells = _cells(self.mesh)
        local = values[cells] @ bary_nodes.T
        out = np.empty(self.dim)
        out[self.cell_dofs] = local
        return out

    def _local(self, w: WeightSpec):
        rule = simplex_rule(self.nverts, 2 * self.degree)
        phi, dphi = basis(rule[0], self.degree)
        meas, grads = _geometry(self.mesh)
        coords = node_coordinates(self.mesh)[_cells(self.mesh)]
        if coords.ndim == 2:
            coords = coords[..., None]
        qpts = np.einsum("qk,ckd->cqd", rule[0], coords)
        if w.is_constant:
            wq = np.full(qpts.shape[:2], float(w.value))
        else:
            arg = qpts[..., 0] if qpts.shape[-1] == 1 else qpts.reshape(-1, qpts.shape[-1])
            wq = w(arg.reshape(-1) if qpts.shape[-1] == 1 else arg).reshape(qpts.shape[:2])
        wq = wq * meas[:, None] * rule[1][None, :]
        return phi, dphi, grads, wq

    def assemble(self, w: WeightSpec = WeightSpec(1.0)):
        """Weighted mass and stiffness matrices."""
        phi, dphi, grads, wq = self._local(w)
        mass = np.einsum("cq,qa,qb->cab", wq, phi, phi)
        g = np.einsum("qai,cid->cqad", dphi, grads)
        stiff = np.einsum("cq,cqad,cqbd->cab", wq, g, g)
        return self._scatter(mass), self._scatter(stiff)

    def _scatter(self, local):
        cd = self.cell_dofs
        k = cd.shape[1]
        rows = np.repeat(cd, k, axis=1).ravel()
        cols = np.tile(cd, (1, k)).ravel()
        return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(self.dim, self.dim))


def broken_h1_norms(mesh: AnyMesh, exact, discrete_p1: np.ndarray, degree: int = 2, chunk: int = 100_000):
    """L2 and H1-seminorm of the broken P_k interpolant of ``exact - discrete``.

    Processes cells in chunks to bound memory on large 3D meshes.
    """
    cells = _cells(mesh)
    nverts = cells.shape[1]
    alphas = lattice(nverts, degree)
    bary_nodes = alphas / degree
    rule = error_rule(nverts, degree)
    phi, dphi = basis(rule[0], degree)
    coords_all = node_coordinates(mesh)
    l2 = semi = 0.0
    if isinstance(mesh, Mesh1D):
        chunk = len(cells)
    for start in range(0, len(cells), chunk):
        c = cells[start:start + chunk]
        sub = _submesh(mesh, c)
        meas, grads = _geometry(sub)
        coords = coords_all[c]
        if coords.ndim == 2:
            coords = coords[..., None]
        nodes = np.einsum("nk,ckd->cnd", bary_nodes, coords)
        arg = nodes[..., 0].reshape(-1) if nodes.shape[-1] == 1 else nodes.reshape(-1, nodes.shape[-1])
        e = np.asarray(exact(arg), dtype=float).reshape(nodes.shape[:2])
        e -= discrete_p1[c] @ bary_nodes.T
        wq = meas[:, None] * rule[1][None, :]
        val = e @ phi.T
        l2 += float(np.sum(wq * val ** 2))
        d = np.einsum("ca,qai->cqi", e, dphi)
        g = np.einsum("cqi,cid->cqd", d, grads)
        semi += float(np.sum(wq * np.sum(g ** 2, axis=-1)))
    return np.sqrt(l2), np.sqrt(semi)


def _submesh(mesh: AnyMesh, cells: np.ndarray):
    if isinstance(mesh, Mesh3D):
        return Mesh3D(mesh.vertices, cells, mesh.cells_per_side, mesh.level)
    if isinstance(mesh, SurfaceMesh2D):
        return SurfaceMesh2D(mesh.vertices, cells, mesh.parent_vertex, mesh.parent_face)
    return mesh
