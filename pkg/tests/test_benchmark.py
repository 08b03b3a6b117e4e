import json
import math

import numpy as np
import pytest
import sympy

from mixdim import benchmark, solvers
from mixdim.benchmark import BENCHMARK, BenchmarkData, ConvergenceTable, CostTable, DofTable
from mixdim.coupling import average_trace_matrix
from mixdim.mesh import build_conforming_mesh, square_tube
from conftest import benchmark_system, direct_solution

X, Y, Z = sympy.symbols("x y z")
U = sympy.sin(2 * sympy.pi * X) * sympy.sin(2 * sympy.pi * Y)
ULINE = sympy.sin(sympy.pi * Z)


def test_symbolic_equations():
    f = -(sympy.diff(U, X, 2) + sympy.diff(U, Y, 2) + sympy.diff(U, Z, 2))
    assert sympy.simplify(f - 8 * sympy.pi ** 2 * U) == 0
    assert sympy.simplify(-sympy.diff(ULINE, Z, 2) - sympy.pi ** 2 * ULINE) == 0


def test_data_matches_symbolic_at_random_points():
    rng = np.random.default_rng(7)
    p = rng.random((1000, 3))
    fu = sympy.lambdify((X, Y, Z), U, "numpy")
    ff = sympy.lambdify((X, Y, Z), -(sympy.diff(U, X, 2) + sympy.diff(U, Y, 2)), "numpy")
    assert np.max(np.abs(BENCHMARK.u(p) - fu(*p.T))) <= 1e-10
    assert np.max(np.abs(BENCHMARK.f(p) - ff(*p.T))) <= 1e-10
    s = p[:, 2]
    g = sympy.lambdify(Z, -sympy.diff(ULINE, Z, 2), "numpy")
    assert np.max(np.abs(BENCHMARK.g_line(s) - g(s))) <= 1e-10
    grad = sympy.lambdify((X, Y, Z), [sympy.diff(U, v) for v in (X, Y, Z)], "numpy")
    G = np.column_stack([np.broadcast_to(c, s.shape) for c in grad(*p.T)])
    assert np.max(np.abs(BENCHMARK.grad_u(p) - G)) <= 1e-10


def gamma_points(n=1000, seed=0):
    g = square_tube()
    rng = np.random.default_rng(seed)
    s, t = rng.random(n), rng.random(n)
    return g.boundary_param(s, t), s, t


def test_surface_datum_and_flux():
    p, s, t = gamma_points()
    # trace minus extension of the exact line solution equals q on Gamma
    assert np.max(np.abs(BENCHMARK.u(p) - BENCHMARK.u_line(s) - BENCHMARK.q_surface(p))) <= 1e-12
    # outward normal of the square ring: +-x on x-walls, +-y on y-walls
    side = np.minimum((4 * t).astype(int), 3)
    n = np.array([[0, -1, 0], [1, 0, 0], [0, 1, 0], [-1, 0, 0]], dtype=float)[side]
    flux = np.einsum("ij,ij->i", BENCHMARK.grad_u(p), n)
    assert np.max(np.abs(flux)) <= 1e-10


def test_ring_average_of_exact_solution_vanishes():
    # consistency of the line datum: mean of u over each ring is zero
    from oracles import ring_average_sampled

    for z in (0.1, 0.5, 0.77):
        assert abs(ring_average_sampled(BENCHMARK.u, z)) < 1e-12
    assert np.allclose(BENCHMARK.q_line([0.2, 0.5]), -np.sin(np.pi * np.array([0.2, 0.5])))


class AffineData(BenchmarkData):
    @staticmethod
    def u(x):
        return 1.0 + x[:, 0] - 2 * x[:, 1] + 0.5 * x[:, 2]

    @staticmethod
    def u_line(s):
        return 0.3 - 1.2 * np.asarray(s, dtype=float)


@pytest.mark.parametrize("kind", ["coupled-2d", "coupled-1d", "stabilized"])
def test_exact_injection(kind):
    system = benchmark_system(kind, 1)
    x = np.zeros(system.dim)
    o = system.offsets
    x[o[0]:o[1]] = AffineData.u(system.mesh3d.vertices)
    x[o[1]:o[2]] = AffineData.u_line(system.mesh1d.vertices)
    errs = benchmark.compute_errors(system, x, AffineData())
    assert set(errs) == set(benchmark.COLUMNS[kind])
    assert all(v <= 1e-10 for v in errs.values())


def test_coupled1d_reference_values():
    s = benchmark_system("coupled-1d", 2)
    e = benchmark.compute_errors(s, direct_solution("coupled-1d", 2))
    ref = {"H1(Omega)": 1.7, "H1(Lambda)": 0.26, "H-1/2(Lambda)": 1.1e-2, "L2(Lambda)": 1.9e-2}
    for k, v in ref.items():
        assert abs(e[k] - v) <= 0.1 * v


def test_stabilized_reference_values():
    s = benchmark_system("stabilized", 2)
    e = benchmark.compute_errors(s, direct_solution("stabilized", 2))
    assert abs(e["H1(Omega)"] - 1.5) <= 0.05 * 1.5
    assert abs(e["H1(Lambda)"] - 9.4e-2) <= 0.10 * 9.4e-2


def test_multiplier_l2_definitions():
    s = benchmark_system("stabilized", 1)
    lam = np.ones(s.Q.dim)
    # unit multiplier: the L2 norm squared is the length of the line
    assert abs(benchmark.multiplier_l2(s, lam) - 1.0) < 1e-12
    s2 = benchmark_system("coupled-2d", 1)
    assert abs(benchmark.multiplier_l2(s2, np.ones(s2.Q.dim)) - math.sqrt(2.0)) < 1e-12


def test_hminus_guard_gives_none():
    s = benchmark_system("coupled-1d", 1)
    e = benchmark.compute_errors(s, direct_solution("coupled-1d", 1), hminus_limit=5)
    assert e["H-1/2(Lambda)"] is None and e["L2(Lambda)"] > 0


def test_rate_formula():
    e = [3.0, 1.6, 0.81]
    for a, b in zip(e, e[1:]):
        assert abs(benchmark.rate(a, b, 1 / 4, 1 / 8) - math.log2(a / b)) <= 1e-12
    assert abs(benchmark.rate(1.0, 0.5, 1 / 5, 1 / 9) - math.log(2) / math.log(9 / 5)) < 1e-14
    assert benchmark.rate(None, 1.0, 1, 2) is None and benchmark.rate(0.0, 1.0, 1, 2) is None


@pytest.mark.parametrize("v, s", [(3.07, "3.1E0"), (0.0442, "4.4E-2"), (1.7e-4, "1.7E-4"), (None, "--"),
                                  (12.3, "1.2E1"), (0.0, "0.0E0")])
def test_fmt_sci(v, s):
    assert benchmark.fmt_sci(v) == s


@pytest.fixture(scope="module")
def small_table():
    return benchmark.run_convergence("coupled-1d", [1, 2])


def test_markdown_row_layout(small_table):
    md = benchmark.emit_convergence(small_table, "md")
    lines = md.splitlines()
    assert lines[0] == "| h^-1 | H1(Omega) | H1(Lambda) | H-1/2(Lambda) | L2(Lambda) |"
    assert lines[2].startswith("| 4 | 3.1E0(--) | 5.3E-1(--) | 4.3E-2(--) | 7.8E-2(--) |")
    assert lines[3].startswith("| 8 | 1.7E0(0.87) | 2.6E-1(1.06)")


def test_emit_deterministic(small_table):
    for fmt in ("csv", "json", "md"):
        a = benchmark.emit_convergence(small_table, fmt)
        assert a == benchmark.emit_convergence(small_table, fmt)
    doc = json.loads(benchmark.emit_convergence(small_table, "json", with_time=True))
    assert doc["non_reproducible"] == ["wall_time"]
    with pytest.raises(ValueError):
        benchmark.emit_convergence(small_table, "xml")


def test_rates_use_previous_successful_row(small_table):
    r = small_table.rates()
    e = [row["errors"]["H1(Omega)"] for row in small_table.rows]
    assert r[0]["H1(Omega)"] is None
    assert abs(r[1]["H1(Omega)"] - math.log2(e[0] / e[1])) < 1e-12


def test_empty_tables_are_header_only():
    t = ConvergenceTable("stabilized")
    assert benchmark.emit_convergence(t, "csv") == "h^-1,H1(Omega),H1(Lambda),L2(G_h)\n"
    assert benchmark.emit_convergence(t, "md").count("\n") == 2
    assert json.loads(benchmark.emit_convergence(t, "json"))["rows"] == []
    assert benchmark.emit_cost(CostTable([], ["coupled-1d"]), "csv").count("\n") == 1
    assert benchmark.emit_dof(DofTable(), "csv").count("\n") == 1


def test_failures_are_recorded_and_study_continues(monkeypatch):
    real = solvers.solve

    def flaky(system, *a, **k):
        if system.spec.level == 2:
            raise solvers.SolverError("injected")
        return real(system, *a, **k)

    monkeypatch.setattr(solvers, "solve", flaky)
    t = benchmark.run_convergence("stabilized", [1, 2, 3])
    assert t.failed == [2]
    assert t.rows[2]["errors"] is not None
    rates = t.rates()
    # level 3 is compared against level 1, the last successful row
    e1, e3 = t.rows[0]["errors"]["H1(Omega)"], t.rows[2]["errors"]["H1(Omega)"]
    assert abs(rates[2]["H1(Omega)"] - math.log(e1 / e3) / math.log(17 / 5)) < 1e-12
    assert "failed" in benchmark.emit_convergence(t, "md")


def test_cost_table_marks_missing():
    t = CostTable([1, 2], ["coupled-1d", "poisson"])
    t.cells[("coupled-1d", 1)] = {"iterations": 9, "time": 0.01, "kappa": 3.0}
    t.cells[("coupled-1d", 2)] = {"iterations": None, "time": None, "kappa": None, "error": "boom"}
    t.cells[("poisson", 1)] = {"iterations": 1, "time": 0.0}
    md = benchmark.emit_cost(t, "md", with_time=False)
    assert "| 2 | -- | -- | -- |" in md
    assert t.failed == [2]
    assert json.loads(benchmark.emit_cost(t, "json"))["cells"][1]["error"] == "boom"


def test_cost_study_small():
    t = benchmark.run_cost_study([1, 2], ["coupled-1d", "stabilized"])
    for kind in ("coupled-1d", "stabilized", "poisson"):
        for level in (1, 2):
            c = t.get(kind, level)
            assert c["iterations"] is not None and c.get("error") is None
    assert t.get("poisson", 1)["iterations"] <= 3
    assert abs(t.get("coupled-1d", 1)["kappa"] - 3.04) <= 0.15 * 3.04
    assert t.get("stabilized", 1)["iterations"] < t.get("stabilized", 2)["iterations"]


@pytest.mark.parametrize("kind", ["coupled-1d", "coupled-2d"])
def test_multiplier_smallness_rates(kind):
    t = benchmark.run_convergence(kind, [1, 2, 3])
    rates = t.rates()
    for col in benchmark.COLUMNS[kind][2:]:
        assert all(r[col] >= 1.5 for r in rates[1:])


def test_stabilized_multiplier_decreases():
    t = benchmark.run_convergence("stabilized", [1, 2, 3])
    e = [r["errors"]["L2(G_h)"] for r in t.rows]
    assert e[0] > e[1] > e[2]
    assert all(r["L2(G_h)"] >= 1.3 for r in t.rates()[1:])


def test_dof_table():
    t = benchmark.run_dof_table([1, 2, 3, 4])
    assert all(r["match"] for r in t.rows)
    assert t.rows[0]["counts"] == ((125, 5, 40), (125, 5, 5), (180, 13, 24))
    assert "MISMATCH" not in benchmark.emit_dof(t, "md")


def test_golden_comparison_detects_mismatch():
    good = ((125, 5, 40), (125, 5, 5), (180, 13, 24))
    assert benchmark.matches_golden(1, good)
    assert not benchmark.matches_golden(1, ((125, 5, 40), (125, 5, 5), (180, 13, 16)))
    assert not benchmark.matches_golden(9, good)
    assert benchmark.matches_golden(5, ((274625, 65, 8320), (274625, 65, 65), (283140, 193, 384)))
    assert benchmark.abbreviate(274625) == "275K" and benchmark.abbreviate(2_146_689) == "2.15M"


def test_h_inverse():
    assert [benchmark.h_inverse("coupled-1d", l) for l in (1, 2, 3)] == [4, 8, 16]
    assert [benchmark.h_inverse("stabilized", l) for l in (1, 2, 3)] == [5, 9, 17]
