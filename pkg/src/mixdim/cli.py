"""Command-line entry point: ``mixdim <command> [options]``.

Exit codes: 0 on success, 2 when some levels failed but others completed
(partial results are written), 1 on I/O failure or when nothing completed,
and argparse's usage error code for invalid arguments.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

COMMANDS = ("convergence", "cost", "solve", "dof-check", "export-system")
FORMULATIONS = ("coupled-2d", "coupled-1d", "stabilized")
FORMATS = ("csv", "json", "md")
THREADS_ENV = "MIXDIM_THREADS"


@dataclass
class RunConfig:
    command: str
    formulations: list = field(default_factory=lambda: list(FORMULATIONS))
    levels: list = field(default_factory=lambda: [1, 2, 3])
    solver: str = "auto"
    precond: str = "auto"
    rtol: float | None = None
    out: str = "."
    formats: list = field(default_factory=lambda: list(FORMATS))
    threads: int | None = None
    with_time: bool = False
    dump_matrices: bool = False
    dump_eigenvalues: bool = False
    dump_residuals: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls(**json.loads(text))


def parse_levels(text: str) -> list:
    try:
        if ".." in text:
            a, b = (int(v) for v in text.split("..", 1))
        else:
            a = b = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid level range {text!r}; use N or A..B") from None
    if a < 1 or b < a:
        raise argparse.ArgumentTypeError(f"invalid level range {text!r}; levels start at 1 and A <= B")
    return list(range(a, b + 1))


def _formats(text: str) -> list:
    items = [t.strip() for t in text.split(",") if t.strip()]
    items = ["md" if t == "markdown" else t for t in items]
    bad = [t for t in items if t not in FORMATS]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"unknown format(s) {bad}; choose from {FORMATS}")
    return items


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("thread count must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mixdim", description="3D-1D coupled problems with Lagrange multipliers")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, levels=True, single=False):
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--threads", type=_positive_int, default=None,
                        help=f"BLAS thread count (overrides ${THREADS_ENV})")
        if levels:
            sp.add_argument("--levels", type=parse_levels, default=[1, 2, 3], help="level range A..B")
        if single:
            sp.add_argument("--level", type=parse_levels, required=True, help="refinement level")

    c = sub.add_parser("convergence", help="error table for one formulation")
    common(c)
    c.add_argument("--formulation", choices=FORMULATIONS, required=True)
    c.add_argument("--solver", choices=("auto", "direct", "minres"), default="auto")
    c.add_argument("--rtol", type=float, default=1e-10)
    c.add_argument("--format", dest="formats", type=_formats, default=list(FORMATS))
    c.add_argument("--with-time", action="store_true", help="add the (non-reproducible) wall-time column")

    k = sub.add_parser("cost", help="iterations, solve time and condition numbers")
    common(k)
    k.add_argument("--formulation", dest="formulations", action="append", choices=FORMULATIONS)
    k.add_argument("--precond", choices=("auto", "fractional", "l2-stab"), default="auto")
    k.add_argument("--rtol", type=float, default=1e-8)
    k.add_argument("--format", dest="formats", type=_formats, default=list(FORMATS))
    k.add_argument("--no-time", dest="with_time", action="store_false", help="drop the wall-time columns")
    k.add_argument("--dump-residuals", action="store_true")

    s = sub.add_parser("solve", help="single solve with its error record")
    common(s, levels=False, single=True)
    s.add_argument("--formulation", choices=FORMULATIONS, required=True)
    s.add_argument("--solver", choices=("auto", "direct", "minres"), default="auto")
    s.add_argument("--precond", choices=("auto", "fractional", "l2-stab"), default="auto")
    s.add_argument("--rtol", type=float, default=1e-10)
    s.add_argument("--dump-residuals", action="store_true")
    s.add_argument("--dump-eigenvalues", action="store_true", help="multiplier H1/L2 pencil eigenvalues")
    s.add_argument("--dump-matrices", action="store_true")

    d = sub.add_parser("dof-check", help="system sizes against the reference table")
    common(d)
    d.add_argument("--format", dest="formats", type=_formats, default=["csv", "md"])

    e = sub.add_parser("export-system", help="Matrix Market system, RHS and mesh text")
    common(e, levels=False, single=True)
    e.add_argument("--formulation", choices=FORMULATIONS, required=True)
    return p


def parse_args(argv=None) -> RunConfig:
    parser = build_parser()
    ns = parser.parse_args(argv)
    cfg = RunConfig(command=ns.command, out=ns.out, threads=ns.threads)
    if getattr(ns, "level", None) is not None:
        cfg.levels = ns.level
    elif getattr(ns, "levels", None) is not None:
        cfg.levels = ns.levels
    if getattr(ns, "formulation", None):
        cfg.formulations = [ns.formulation]
    elif getattr(ns, "formulations", None):
        cfg.formulations = list(dict.fromkeys(ns.formulations))
    for name in ("solver", "precond", "rtol", "formats", "with_time",
                 "dump_matrices", "dump_eigenvalues", "dump_residuals"):
        if hasattr(ns, name):
            setattr(cfg, name, getattr(ns, name))
    if cfg.command == "cost" and not getattr(ns, "formats", None):
        cfg.formats = list(FORMATS)
    # incompatible formulation/preconditioner pairs
    if cfg.precond == "fractional" and "stabilized" in cfg.formulations and cfg.command == "solve":
        parser.error("the fractional preconditioner needs a conforming formulation")
    if cfg.precond == "l2-stab" and any(f != "stabilized" for f in cfg.formulations) and cfg.command == "solve":
        parser.error("the l2-stab preconditioner needs the stabilized formulation")
    if cfg.command == "cost" and cfg.precond != "auto":
        bad = [f for f in cfg.formulations
               if (cfg.precond == "fractional") == (f == "stabilized")]
        if bad:
            parser.error(f"preconditioner {cfg.precond!r} does not apply to {bad}")
    return cfg


def resolve_threads(cfg: RunConfig, environ=None) -> int | None:
    environ = os.environ if environ is None else environ
    if cfg.threads is not None:
        return cfg.threads
    raw = environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            return None
    return None


def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    path.write_text(text)
    return path


def _run(cfg: RunConfig) -> int:
    from . import benchmark, fractional, solvers
    from .system import assemble

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    log = sys.stderr

    if cfg.command == "dof-check":
        table = benchmark.run_dof_table(cfg.levels)
        for fmt in cfg.formats:
            _write(out, f"dof.{fmt}", benchmark.emit_dof(table, fmt))
        ok = all(r["match"] for r in table.rows)
        print(benchmark.emit_dof(table, "md"), end="")
        return 0 if ok else 2

    if cfg.command == "convergence":
        kind = cfg.formulations[0]

        def progress(row):
            status = row.get("error") or "ok"
            print(f"{kind} level {row['level']}: {status} ({row['wall_time']:.1f}s)", file=log)

        table = benchmark.run_convergence(kind, cfg.levels, cfg.solver, cfg.rtol, on_level=progress)
        for fmt in cfg.formats:
            _write(out, f"convergence_{kind}.{fmt}", benchmark.emit_convergence(table, fmt, cfg.with_time))
        print(benchmark.emit_convergence(table, "md", cfg.with_time), end="")
        return _status(len(table.failed), len(table.rows))

    if cfg.command == "cost":
        def progress(kind, level, cell):
            print(f"{kind} level {level}: {cell.get('error') or cell.get('iterations')}", file=log)

        table = benchmark.run_cost_study(cfg.levels, cfg.formulations, cfg.rtol, precond=cfg.precond,
                                         on_cell=progress)
        for fmt in cfg.formats:
            _write(out, f"cost.{fmt}", benchmark.emit_cost(table, fmt, cfg.with_time))
        print(benchmark.emit_cost(table, "md", cfg.with_time), end="")
        failed = sum(1 for c in table.cells.values() if c.get("error"))
        return _status(failed, len(table.cells))

    kind, level = cfg.formulations[0], cfg.levels[0]
    system = assemble(benchmark.benchmark_spec(kind, level))
    stem = f"{kind}_l{level}"

    if cfg.command == "export-system":
        mtx, rhs = system.export()
        _write(out, f"system_{stem}.mtx", mtx)
        _write(out, f"rhs_{stem}.txt", rhs)
        _write(out, f"mesh3d_{stem}.txt", system.mesh3d.export_text())
        return 0

    # solve
    x, report = solvers.solve(system, cfg.solver, cfg.rtol, solvers.PreconditionerSpec(cfg.precond))
    errors = benchmark.compute_errors(system, x)
    record = {"formulation": kind, "level": level, "h_inv": benchmark.h_inverse(kind, level),
              "sizes": list(system.sizes), "errors": errors, "report": json.loads(report.to_json()),
              "non_reproducible": ["report.wall_time"]}
    _write(out, f"solve_{stem}.json", json.dumps(record, indent=2, sort_keys=True) + "\n")
    if cfg.dump_residuals:
        _write(out, f"residuals_{stem}.csv", report.history_csv())
    if cfg.dump_eigenvalues:
        op = fractional.build_spectral(system.Q, bc="zero-trace")
        _write(out, f"eigenvalues_{stem}.txt", op.dump_eigenvalues())
    if cfg.dump_matrices:
        mtx, rhs = system.export()
        _write(out, f"system_{stem}.mtx", mtx)
        _write(out, f"rhs_{stem}.txt", rhs)
    print(json.dumps(errors, sort_keys=True))
    return 0


def _status(failed: int, total: int) -> int:
    if failed == 0:
        return 0
    return 2 if failed < total else 1


def main(argv=None) -> int:
    cfg = parse_args(argv)
    threads = resolve_threads(cfg)
    try:
        if threads is not None:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=threads):
                return _run(cfg)
        return _run(cfg)
    except OSError as exc:
        print(f"mixdim: I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
