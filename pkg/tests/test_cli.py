import json

import pytest

from mixdim import benchmark, cli, solvers
from mixdim.cli import RunConfig, main, parse_args, parse_levels, resolve_threads


def test_parse_levels():
    assert parse_levels("1..3") == [1, 2, 3]
    assert parse_levels("4") == [4]
    for bad in ("0..2", "3..1", "a..b", "x"):
        with pytest.raises(Exception):
            parse_levels(bad)


@pytest.mark.parametrize("argv", [
    ["convergence", "--formulation", "coupled-1d", "--levels", "1..5", "--format", "csv,md"],
    ["cost", "--levels", "1..4", "--out", "reports/cost"],
    ["solve", "--formulation", "stabilized", "--level", "3", "--solver", "minres", "--dump-residuals"],
    ["dof-check", "--levels", "1..5"],
    ["export-system", "--formulation", "coupled-2d", "--level", "2"],
])
def test_documented_invocations_parse(argv):
    cfg = parse_args(argv)
    assert cfg.command == argv[0]
    assert RunConfig.from_json(cfg.to_json()) == cfg


def test_parsed_fields():
    cfg = parse_args(["convergence", "--formulation", "coupled-1d", "--levels", "1..5", "--format", "csv,markdown"])
    assert cfg.levels == [1, 2, 3, 4, 5] and cfg.formulations == ["coupled-1d"]
    assert cfg.formats == ["csv", "md"] and cfg.rtol == 1e-10
    cfg = parse_args(["cost", "--formulation", "stabilized", "--formulation", "stabilized"])
    assert cfg.formulations == ["stabilized"] and cfg.rtol == 1e-8 and cfg.with_time
    assert parse_args(["cost"]).formulations == list(cli.FORMULATIONS)


@pytest.mark.parametrize("argv", [
    ["convergence", "--formulation", "coupled-1d", "--levels", "0..2"],
    ["convergence", "--formulation", "coupled-1d", "--bogus"],
    ["convergence"],
    ["solve", "--formulation", "stabilized", "--level", "2", "--precond", "fractional"],
    ["solve", "--formulation", "coupled-1d", "--level", "2", "--precond", "l2-stab"],
    ["cost", "--formulation", "coupled-1d", "--precond", "l2-stab"],
    ["dof-check", "--format", "xml"],
    ["dof-check", "--threads", "0"],
])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as e:
        parse_args(argv)
    assert e.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_thread_precedence():
    cfg = parse_args(["dof-check"])
    assert resolve_threads(cfg, {}) is None
    assert resolve_threads(cfg, {cli.THREADS_ENV: "3"}) == 3
    assert resolve_threads(cfg, {cli.THREADS_ENV: "junk"}) is None
    cfg = parse_args(["dof-check", "--threads", "2"])
    assert resolve_threads(cfg, {cli.THREADS_ENV: "3"}) == 2


def test_dof_check_writes_tables(tmp_path, capsys):
    assert main(["dof-check", "--levels", "1..4", "--out", str(tmp_path), "--threads", "1"]) == 0
    csv = (tmp_path / "dof.csv").read_text()
    assert csv.count("\n") == 5 and (tmp_path / "dof.md").exists()
    assert "MISMATCH" not in capsys.readouterr().out


def test_solve_writes_record(tmp_path):
    rc = main(["solve", "--formulation", "coupled-2d", "--level", "2", "--solver", "direct",
               "--dump-eigenvalues", "--dump-matrices", "--out", str(tmp_path)])
    assert rc == 0
    rec = json.loads((tmp_path / "solve_coupled-2d_l2.json").read_text())
    assert rec["h_inv"] == 8 and rec["report"]["solver"] == "direct"
    assert abs(rec["errors"]["H1(Omega)"] - 1.7) <= 0.05 * 1.7
    assert (tmp_path / "eigenvalues_coupled-2d_l2.txt").read_text().strip()
    assert (tmp_path / "system_coupled-2d_l2.mtx").read_text().startswith("%%MatrixMarket")


def test_solve_minres_residual_dump(tmp_path):
    rc = main(["solve", "--formulation", "stabilized", "--level", "1", "--solver", "minres",
               "--dump-residuals", "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "residuals_stabilized_l1.csv").read_text().splitlines()
    assert len(lines) > 5


def test_export_system(tmp_path):
    assert main(["export-system", "--formulation", "coupled-1d", "--level", "1", "--out", str(tmp_path)]) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["mesh3d_coupled-1d_l1.txt", "rhs_coupled-1d_l1.txt", "system_coupled-1d_l1.mtx"]


def test_cost_writes_tables(tmp_path):
    rc = main(["cost", "--levels", "1..2", "--formulation", "coupled-1d", "--out", str(tmp_path)])
    assert rc == 0
    for fmt in ("csv", "json", "md"):
        assert (tmp_path / f"cost.{fmt}").exists()


def test_convergence_output_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    argv = ["convergence", "--formulation", "coupled-1d", "--levels", "1..2"]
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    for fmt in ("csv", "json", "md"):
        ta = (a / f"convergence_coupled-1d.{fmt}").read_bytes()
        assert ta == (b / f"convergence_coupled-1d.{fmt}").read_bytes()
        assert b"wall" not in ta


def test_partial_failure_exit_code(tmp_path, monkeypatch):
    real = solvers.solve

    def flaky(system, *a, **k):
        if system.spec.level == 2:
            raise solvers.SolverError("injected")
        return real(system, *a, **k)

    monkeypatch.setattr(solvers, "solve", flaky)
    rc = main(["convergence", "--formulation", "coupled-1d", "--levels", "1..2", "--out", str(tmp_path)])
    assert rc == 2
    assert "failed" in (tmp_path / "convergence_coupled-1d.md").read_text()


def test_total_failure_exit_code(tmp_path, monkeypatch):
    def broken(*a, **k):
        raise solvers.SolverError("injected")

    monkeypatch.setattr(solvers, "solve", broken)
    rc = main(["convergence", "--formulation", "coupled-1d", "--levels", "1..2", "--out", str(tmp_path)])
    assert rc == 1


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["dof-check", "--levels", "1", "--out", str(blocker)]) == 1


def test_entry_point_registered():
    from importlib.metadata import entry_points

    eps = [e for e in entry_points(group="console_scripts") if e.name == "mixdim"]
    assert eps and eps[0].value == "mixdim.cli:main"
