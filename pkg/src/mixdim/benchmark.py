"""Analytic benchmark, error norms, convergence/cost studies and table output.

The manufactured solution is ``u = sin(2 pi x) sin(2 pi y)`` in the cube,
``u_line = sin(pi z)`` on the centerline and zero multipliers. Its ring
averages vanish on the square tube of half-width 1/4, which is what makes
the coupling data below consistent.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
import traceback
from dataclasses import dataclass, field

import numpy as np

from . import fractional, solvers
from .lagrange import broken_h1_norms
from .mesh import build_conforming_mesh, build_nonconforming_mesh, locate_line_elements
from .spaces import assemble_mass
from .system import KINDS, BlockSaddleSystem, FormulationSpec, ProblemData, assemble

PI = np.pi
HMINUS_LIMIT = 30_000  # largest P3 multiplier space for the H^{-1/2} error


@dataclass(frozen=True)
class BenchmarkData:
    """Right-hand sides, boundary data and exact solutions."""

    @staticmethod
    def u(x):
        return np.sin(2 * PI * x[:, 0]) * np.sin(2 * PI * x[:, 1])

    @staticmethod
    def f(x):
        return 8 * PI ** 2 * BenchmarkData.u(x)

    @staticmethod
    def u_line(s):
        return np.sin(PI * np.asarray(s, dtype=float))

    @staticmethod
    def g_line(s):
        return PI ** 2 * np.sin(PI * np.asarray(s, dtype=float))

    @staticmethod
    def q_surface(x):
        return BenchmarkData.u(x) - np.sin(PI * x[:, 2])

    @staticmethod
    def q_line(s):
        return -np.sin(PI * np.asarray(s, dtype=float))

    @staticmethod
    def grad_u(x):
        a, b = 2 * PI * x[:, 0], 2 * PI * x[:, 1]
        return np.column_stack([2 * PI * np.cos(a) * np.sin(b), 2 * PI * np.sin(a) * np.cos(b),
                                np.zeros(len(x))])

    def problem_data(self, kind: str) -> ProblemData:
        datum = self.q_surface if kind == "coupled-2d" else self.q_line
        return ProblemData(f=self.f, g_line=self.g_line, coupling_datum=datum, u_b=self.u)


BENCHMARK = BenchmarkData()

COLUMNS = {
    "coupled-2d": ("H1(Omega)", "H1(Lambda)", "H-1/2(Gamma)", "L2(Gamma)"),
    "coupled-1d": ("H1(Omega)", "H1(Lambda)", "H-1/2(Lambda)", "L2(Lambda)"),
    "stabilized": ("H1(Omega)", "H1(Lambda)", "L2(G_h)"),
}


def h_inverse(kind: str, level: int) -> int:
    n = 4 * 2 ** (level - 1)
    return n if kind != "stabilized" else n + 1


def benchmark_spec(kind: str, level: int, form: str = "stiffness-only") -> FormulationSpec:
    return FormulationSpec(kind, level, BENCHMARK.problem_data(kind), form)


def multiplier_l2(system: BlockSaddleSystem, lam: np.ndarray) -> float:
    """L2 norm of the multiplier on its manifold (Gamma, Lambda, or Lambda through G_h cells)."""
    if system.Q.family == "P1":
        return float(np.sqrt(lam @ (assemble_mass(system.Q) @ lam)))
    I = system.intersection
    owner = np.searchsorted(system.Q.cells, I.cells)
    seg = np.bincount(owner, (I.s_end - I.s_start) * system.spec.line.length, minlength=system.Q.dim)
    return float(np.sqrt(seg @ lam ** 2))


def compute_errors(system: BlockSaddleSystem, solution: np.ndarray, data: BenchmarkData = BENCHMARK,
                   hminus_limit: int = HMINUS_LIMIT) -> dict:
    """Error record keyed by the table columns of the formulation.

    H1 errors use the broken P2 interpolant of exact minus discrete; the
    H^{-1/2} multiplier error uses the continuous P3 interpolant and the
    zero-trace spectral norm, and is ``None`` past ``hminus_limit``.
    """
    kind = system.spec.kind
    u3, u1, lam = system.split(np.asarray(solution, dtype=float))
    cols = COLUMNS[kind]
    out = {}
    l2, semi = broken_h1_norms(system.mesh3d, data.u, u3)
    out[cols[0]] = float(np.hypot(l2, semi))
    l2, semi = broken_h1_norms(system.mesh1d, data.u_line, u1)
    out[cols[1]] = float(np.hypot(l2, semi))
    if kind == "stabilized":
        out[cols[2]] = multiplier_l2(system, lam)
        return out
    n_p3 = 9 * system.Q.dim if kind == "coupled-2d" else 3 * system.Q.dim
    if n_p3 <= hminus_limit:
        out[cols[2]] = fractional.hminus_half_error(system.Q, lam, 3)
    else:
        out[cols[2]] = None
    out[cols[3]] = multiplier_l2(system, lam)
    return out


# ---------------------------------------------------------------- tables
def rate(e_prev, e_cur, h_prev, h_cur):
    if e_prev is None or e_cur is None or e_prev <= 0 or e_cur <= 0:
        return None
    return math.log(e_prev / e_cur) / math.log(h_prev / h_cur)


def fmt_sci(v) -> str:
    """Two significant digits in the table style, e.g. ``3.1E0`` or ``4.4E-2``."""
    if v is None:
        return "--"
    if v == 0:
        return "0.0E0"
    m, e = f"{v:.1E}".split("E")
    return f"{m}E{int(e)}"


def fmt_rate(r) -> str:
    return "--" if r is None else f"{r:.2f}"


@dataclass
class ConvergenceTable:
    formulation: str
    rows: list = field(default_factory=list)  # dicts: level, h_inv, errors, wall_time, error

    @property
    def columns(self):
        return COLUMNS[self.formulation]

    def rates(self):
        """Per-row dict of rates against the previous successful row."""
        out = []
        prev = None
        for row in self.rows:
            r = {}
            for c in self.columns:
                if prev is None or row.get("errors") is None:
                    r[c] = None
                else:
                    r[c] = rate(prev["errors"].get(c), row["errors"].get(c), 1 / prev["h_inv"], 1 / row["h_inv"])
            out.append(r)
            if row.get("errors") is not None:
                prev = row
        return out

    def value(self, level: int, column: str):
        for row in self.rows:
            if row["level"] == level and row.get("errors"):
                return row["errors"].get(column)
        return None

    @property
    def failed(self):
        return [r["level"] for r in self.rows if r.get("error")]


@dataclass
class CostTable:
    levels: list
    formulations: list
    cells: dict = field(default_factory=dict)  # (formulation, level) -> dict(iterations, time, kappa, error)

    def get(self, formulation, level):
        return self.cells.get((formulation, level), {})

    @property
    def failed(self):
        return sorted({lvl for (_, lvl), c in self.cells.items() if c.get("error")})


@dataclass
class DofTable:
    rows: list = field(default_factory=list)  # dicts: level, then per-formulation triples


def run_convergence(kind: str, levels, solver: str = "auto", rtol: float = 1e-10,
                    hminus_limit: int = HMINUS_LIMIT, on_level=None) -> ConvergenceTable:
    """Solve the benchmark on each level; failures are recorded and skipped."""
    table = ConvergenceTable(kind)
    for level in levels:
        row = {"level": level, "h_inv": h_inverse(kind, level), "errors": None}
        t = time.perf_counter()
        try:
            system = assemble(benchmark_spec(kind, level))
            x, _ = solvers.solve(system, solver, rtol)
            row["errors"] = compute_errors(system, x, hminus_limit=hminus_limit)
        except Exception as exc:  # keep the study going, the row records the failure
            row["error"] = f"{type(exc).__name__}: {exc}"
            row["traceback"] = traceback.format_exc()
        row["wall_time"] = time.perf_counter() - t
        table.rows.append(row)
        if on_level is not None:
            on_level(row)
    return table


def poisson_reference(level: int, rtol: float = 1e-8):
    """CG on the 3D Poisson benchmark preconditioned by the exact H1_0 Riesz map.

    The H1_0 inner product is the Dirichlet stiffness form, so CG stops at
    rounding level after one or two steps.
    """
    from .spaces import ONE, FunctionSpace, assemble_h1, assemble_load

    mesh, _, _ = build_conforming_mesh(level)
    V = FunctionSpace(mesh, "P1", dirichlet_dofs=mesh.boundary_vertices)
    A = assemble_h1(V, ONE, "stiffness-only")
    b = assemble_load(V, BENCHMARK.f)
    g = np.zeros(V.dim)
    g[V.dirichlet_dofs] = BENCHMARK.u(mesh.vertices[V.dirichlet_dofs])
    free = V.free_dofs
    rhs = (b - A @ g)[free]
    Af = A[free][:, free].tocsr()
    P = solvers.RieszBlock(Af)
    x, rep = solvers.cg(Af, rhs, P.solve, rtol, label="cg")
    return x, rep


def run_cost_study(levels, formulations=KINDS, rtol: float = 1e-8, kappa_limit: int = solvers.DIRECT_LIMIT,
                   precond: str = "auto", poisson: bool = True, on_cell=None) -> CostTable:
    """MinRes iterations, solve time (setup excluded) and kappa per formulation and level."""
    forms = list(formulations) + (["poisson"] if poisson else [])
    table = CostTable(list(levels), forms)
    for kind in forms:
        for level in levels:
            cell = {"iterations": None, "time": None, "kappa": None}
            try:
                if kind == "poisson":
                    _, rep = poisson_reference(level, rtol)
                else:
                    system = assemble(benchmark_spec(kind, level))
                    P = solvers.BlockPreconditioner(system, solvers.PreconditionerSpec(precond))
                    _, rep = solvers.minres(system, P, rtol)
                    if len(system.free) <= kappa_limit:
                        cell["kappa"] = solvers.estimate_condition(system, P).kappa
                cell["iterations"] = rep.iterations
                cell["time"] = rep.wall_time
                cell["converged"] = rep.converged
                if not rep.converged:
                    cell["error"] = "not converged"
            except Exception as exc:
                cell["error"] = f"{type(exc).__name__}: {exc}"
            table.cells[(kind, level)] = cell
            if on_cell is not None:
                on_cell(kind, level, cell)
    return table


# golden system sizes; level 5 and 6 are printed rounded in the reference table
GOLDEN_DOF = {
    1: ((125, 5, 40), (125, 5, 5), (180, 13, 24)),
    2: ((729, 9, 144), (729, 9, 9), (900, 25, 48)),
    3: ((4913, 17, 544), (4913, 17, 17), (5508, 49, 96)),
    4: ((35937, 33, 2112), (35937, 33, 33), (38148, 97, 192)),
    5: (("275K", 65, 8320), ("275K", 65, 65), ("283K", 193, 384)),
    6: (None, ("2.15M", 129, 129), ("2.18M", 385, 768)),
}


def abbreviate(n: int) -> str:
    if n >= 1_000_000:
        return f"{n / 1e6:.2f}M"
    if n >= 100_000:
        return f"{round(n / 1e3)}K"
    return str(n)


def dof_counts(level: int):
    """(3D, 1D, multiplier) sizes for the three formulations at ``level``."""
    m, l1, surf = build_conforming_mesh(level)
    conf = ((m.num_vertices, l1.num_vertices, surf.num_vertices),
            (m.num_vertices, l1.num_vertices, l1.num_vertices))
    mn, ln = build_nonconforming_mesh(level)
    gh = len(locate_line_elements(mn).g_h)
    return conf + ((mn.num_vertices, ln.num_vertices, gh),)


def matches_golden(level: int, counts) -> bool:
    gold = GOLDEN_DOF.get(level)
    if gold is None:
        return False
    for g, c in zip(gold, counts):
        if g is None:
            continue
        for gv, cv in zip(g, c):
            if isinstance(gv, str) and abbreviate(cv) != gv:
                return False
            if not isinstance(gv, str) and gv != cv:
                return False
    return True


def run_dof_table(levels) -> DofTable:
    t = DofTable()
    for level in levels:
        counts = dof_counts(level)
        t.rows.append({"level": level, "counts": counts, "match": matches_golden(level, counts)})
    return t


# ---------------------------------------------------------------- emit
def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _md(header, rows) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(str(c) for c in r) + " |" for r in rows]
    return "\n".join(lines) + "\n"


def _convergence_rows(table: ConvergenceTable, with_time: bool):
    rows = []
    for row, rts in zip(table.rows, table.rates()):
        cells = [row["h_inv"]]
        for c in table.columns:
            if row.get("errors") is None:
                cells.append("failed")
            else:
                cells.append(f"{fmt_sci(row['errors'].get(c))}({fmt_rate(rts[c])})")
        if with_time:
            cells.append(f"{row.get('wall_time', 0.0):.2f}")
        rows.append(cells)
    return rows


def emit_convergence(table: ConvergenceTable, fmt: str, with_time: bool = False) -> str:
    """CSV, JSON or Markdown; only the optional wall-time column is non-reproducible."""
    header = ["h^-1", *table.columns] + (["wall_time_s"] if with_time else [])
    if fmt == "csv":
        return _csv(header, _convergence_rows(table, with_time))
    if fmt in ("md", "markdown"):
        return _md(header, _convergence_rows(table, with_time))
    if fmt == "json":
        rows = []
        for row, rts in zip(table.rows, table.rates()):
            rec = {"level": row["level"], "h_inv": row["h_inv"], "errors": row.get("errors"), "rates": rts}
            if row.get("error"):
                rec["error"] = row["error"]
            if with_time:
                rec["wall_time"] = row.get("wall_time")
            rows.append(rec)
        doc = {"formulation": table.formulation, "columns": list(table.columns), "rows": rows,
               "non_reproducible": ["wall_time"] if with_time else []}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def emit_cost(table: CostTable, fmt: str, with_time: bool = True) -> str:
    header = ["level"]
    for f in table.formulations:
        header += [f"{f} #"] + ([f"{f} T[s]"] if with_time else []) + ([] if f == "poisson" else [f"{f} kappa"])
    rows = []
    for level in table.levels:
        r = [level]
        for f in table.formulations:
            c = table.get(f, level)
            r.append("--" if c.get("iterations") is None else c["iterations"])
            if with_time:
                r.append("--" if c.get("time") is None else f"{c['time']:.2f}")
            if f != "poisson":
                r.append("--" if c.get("kappa") is None else f"{c['kappa']:.2f}")
        rows.append(r)
    if fmt == "csv":
        return _csv(header, rows)
    if fmt in ("md", "markdown"):
        return _md(header, rows)
    if fmt == "json":
        cells = []
        for (f, level), c in sorted(table.cells.items(), key=lambda kv: (table.formulations.index(kv[0][0]), kv[0][1])):
            rec = {"formulation": f, "level": level, "iterations": c.get("iterations"), "kappa": c.get("kappa")}
            if with_time:
                rec["time"] = c.get("time")
            if c.get("error"):
                rec["error"] = c["error"]
            cells.append(rec)
        doc = {"levels": table.levels, "formulations": table.formulations, "cells": cells,
               "non_reproducible": ["time"] if with_time else []}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def emit_dof(table: DofTable, fmt: str) -> str:
    header = ["level",
              "coupled-2d 3D", "coupled-2d 1D", "coupled-2d Gamma",
              "coupled-1d 3D", "coupled-1d 1D", "coupled-1d Lambda",
              "stabilized 3D", "stabilized 1D", "stabilized G_h", "golden"]
    rows = []
    for row in table.rows:
        flat = [v for triple in row["counts"] for v in triple]
        rows.append([row["level"], *flat, "match" if row["match"] else "MISMATCH"])
    if fmt == "csv":
        return _csv(header, rows)
    if fmt in ("md", "markdown"):
        return _md(header, rows)
    if fmt == "json":
        return json.dumps({"header": header, "rows": rows}, indent=2) + "\n"
    raise ValueError(f"unknown format {fmt!r}")
