"""Block saddle-point systems for the three coupled formulations.

Unknown ordering is ``[u (3D), u_line (1D), lam (multiplier)]`` and the
monolithic operator is ``[[A, B^T], [B, -S]]`` with ``A`` block diagonal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import coupling
from .mesh import (
    CrossSectionGeometry,
    Line,
    LineIntersection,
    Mesh1D,
    Mesh3D,
    SurfaceMesh2D,
    build_conforming_mesh,
    build_nonconforming_mesh,
    locate_line_elements,
    square_tube,
)
from .spaces import (
    ONE,
    FunctionSpace,
    WeightSpec,
    apply_dirichlet,
    assemble_h1,
    assemble_load,
    export_matrix_market,
)

KINDS = ("coupled-2d", "coupled-1d", "stabilized")


def _zero(x):
    return np.zeros(len(x))


@dataclass(frozen=True)
class ProblemData:
    """Volume source, line source, coupling datum and boundary values.

    ``coupling_datum`` takes 3D surface points for the surface coupling and
    arclength for the line couplings.
    """

    f: Callable = _zero
    g_line: Callable = _zero
    coupling_datum: Callable = _zero
    u_b: Callable = _zero


@dataclass(frozen=True)
class FormulationSpec:
    kind: str
    level: int
    data: ProblemData = ProblemData()
    form: str = "stiffness-only"
    line: Line = Line()
    half_width: float = 0.25
    ring_points: int = 4
    line_points: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown formulation {self.kind!r}; expected one of {KINDS}")
        if self.form not in ("full-H1", "stiffness-only"):
            raise ValueError(f"unknown bilinear form {self.form!r}")

    @property
    def conforming(self) -> bool:
        return self.kind != "stabilized"


@dataclass(eq=False)
class BlockSaddleSystem:
    spec: FormulationSpec
    mesh3d: Mesh3D
    mesh1d: Mesh1D
    V3: FunctionSpace
    V1: FunctionSpace
    Q: FunctionSpace
    geom: CrossSectionGeometry
    A3: sp.csr_matrix
    A1: sp.csr_matrix
    B3: sp.csr_matrix
    B1: sp.csr_matrix
    S: sp.csr_matrix
    rhs3: np.ndarray
    rhs1: np.ndarray
    rhs_q: np.ndarray
    surface: SurfaceMesh2D | None = None
    intersection: LineIntersection | None = None
    _dirichlet: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    @property
    def sizes(self) -> tuple[int, int, int]:
        return self.V3.dim, self.V1.dim, self.Q.dim

    @property
    def offsets(self) -> np.ndarray:
        return np.cumsum([0, *self.sizes])

    @property
    def dim(self) -> int:
        return int(sum(self.sizes))

    @property
    def B(self) -> sp.csr_matrix:
        """Constraint block acting on ``[u, u_line]`` (line field enters with minus)."""
        return sp.hstack([self.B3, -self.B1]).tocsr()

    @property
    def A(self) -> sp.csr_matrix:
        return sp.block_diag([self.A3, self.A1]).tocsr()

    @property
    def rhs_primal(self) -> np.ndarray:
        return np.concatenate([self.rhs3, self.rhs1])

    @property
    def rhs_multiplier(self) -> np.ndarray:
        return self.rhs_q

    def dirichlet(self) -> tuple[np.ndarray, np.ndarray]:
        """Global constrained DOFs and their values."""
        if self._dirichlet is None:
            o = self.offsets
            x = self.V3.dof_coordinates()
            d3 = self.V3.dirichlet_dofs
            dofs = np.concatenate([d3, o[1] + self.V1.dirichlet_dofs, o[2] + self.Q.dirichlet_dofs])
            vals = np.zeros(len(dofs))
            vals[: len(d3)] = self.spec.data.u_b(x[d3])
            self._dirichlet = (dofs, vals)
        return self._dirichlet

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.dim, dtype=bool)
        mask[self.dirichlet()[0]] = False
        return np.flatnonzero(mask)

    def raw_matrix(self) -> sp.csr_matrix:
        B = self.B
        return sp.bmat([[self.A, B.T], [B, -self.S]]).tocsr()

    def raw_rhs(self) -> np.ndarray:
        return np.concatenate([self.rhs_primal, self.rhs_q])

    def matrix_and_rhs(self):
        """Full-size monolithic system with boundary values eliminated."""
        dofs, vals = self.dirichlet()
        return apply_dirichlet(self.raw_matrix(), self.raw_rhs(), dofs, vals)

    def lifting(self) -> np.ndarray:
        dofs, vals = self.dirichlet()
        g = np.zeros(self.dim)
        g[dofs] = vals
        return g

    def reduced(self):
        """Free-DOF operator and right-hand side ``(K_ff, b_f - K_fd g_d)``."""
        K = self.raw_matrix()
        g = self.lifting()
        free = self.free
        b = self.raw_rhs() - K @ g
        return K[free][:, free].tocsr(), b[free]

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        x = self.lifting()
        x[self.free] = x_free
        return x

    def split(self, x: np.ndarray):
        o = self.offsets
        return x[o[0]:o[1]], x[o[1]:o[2]], x[o[2]:o[3]]

    def export(self) -> tuple[str, str]:
        """Matrix Market text of the eliminated system and plain-text RHS."""
        K, b = self.matrix_and_rhs()
        comment = f"{self.spec.kind} level {self.spec.level} sizes {self.sizes}"
        return export_matrix_market(K, comment), "\n".join(repr(float(v)) for v in b) + "\n"


def assemble(spec: FormulationSpec) -> BlockSaddleSystem:
    """Build meshes, spaces, blocks and right-hand sides for ``spec``."""
    geom = square_tube(spec.line, spec.half_width)
    data = spec.data
    surface = intersection = None
    if spec.conforming:
        mesh3d, mesh1d, surface = build_conforming_mesh(spec.level, spec.line, spec.half_width)
    else:
        mesh3d, mesh1d = build_nonconforming_mesh(spec.level, spec.line)
        intersection = locate_line_elements(mesh3d, spec.line)

    V3 = FunctionSpace(mesh3d, "P1", dirichlet_dofs=mesh3d.boundary_vertices)
    V1 = FunctionSpace(mesh1d, "P1", dirichlet_dofs=mesh1d.boundary_vertices)
    area = WeightSpec(geom.area)
    A3 = assemble_h1(V3, ONE, spec.form)
    A1 = assemble_h1(V1, area, spec.form)
    rhs3 = assemble_load(V3, data.f, ONE)
    rhs1 = assemble_load(V1, data.g_line, area)

    if spec.kind == "coupled-2d":
        Q = FunctionSpace(surface, "P1", dirichlet_dofs=surface.boundary_vertices)
        bu, bw = coupling.assemble_trace_coupling_2d(V3, V1, Q)
        rhs_q = assemble_load(Q, data.coupling_datum, ONE)
        S = sp.csr_matrix((Q.dim, Q.dim))
    else:
        if spec.kind == "coupled-1d":
            Q = FunctionSpace(mesh1d, "P1", dirichlet_dofs=mesh1d.boundary_vertices)
        else:
            Q = FunctionSpace(mesh3d, "P0", cells=intersection.g_h)
        bu, bw = coupling.assemble_average_coupling_1d(
            V3, V1, Q, geom, intersection, spec.ring_points, spec.line_points
        )
        rhs_q = line_load(Q, mesh1d, geom, data.coupling_datum, intersection)
        if spec.kind == "stabilized":
            S = coupling.assemble_stabilization(Q, intersection, mesh3d.h)
        else:
            S = sp.csr_matrix((Q.dim, Q.dim))

    return BlockSaddleSystem(
        spec, mesh3d, mesh1d, V3, V1, Q, geom, A3, A1, bu.matrix, bw.matrix, S.tocsr(),
        rhs3, rhs1, rhs_q, surface, intersection,
    )


def line_load(Q, mesh1d, geom, datum, intersection=None, points: int = 4) -> np.ndarray:
    """``int |dD| q mu_i ds`` over the line for a line multiplier space."""
    breaks = coupling.line_subintervals(mesh1d, intersection)
    s, ws = coupling._line_rule(breaks, points, mesh1d.line.length)
    Mu = coupling.multiplier_values(Q, s, intersection)
    return Mu.T @ (ws * geom.perimeter(s) * datum(s))


def constraint_residual(system: BlockSaddleSystem, solution: np.ndarray) -> float:
    """``max |B u - d + S lam|`` over free multiplier DOFs (Dirichlet lifted)."""
    u3, u1, lam = system.split(np.asarray(solution, dtype=float))
    r = system.B3 @ u3 - system.B1 @ u1 - system.S @ lam - system.rhs_q
    mask = np.ones(system.Q.dim, dtype=bool)
    mask[system.Q.dirichlet_dofs] = False
    return float(np.max(np.abs(r[mask]))) if mask.any() else 0.0
