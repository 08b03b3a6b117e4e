"""Direct and Krylov solvers, block Riesz preconditioners, condition numbers.

Everything operates on the Dirichlet-reduced system returned by
:meth:`BlockSaddleSystem.reduced`, whose unknowns are the free DOFs in the
order ``[u (3D), u_line (1D), lam]``.
"""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fractional
from .spaces import ONE, WeightSpec, assemble_h1
from .system import BlockSaddleSystem

DIRECT_LIMIT = 60_000  # largest reduced system factorized monolithically
DENSE_KAPPA_LIMIT = 4_000
AMG_THRESHOLD = 50_000  # primal blocks above this use AMG-CG inner solves
PRECONDITIONERS = ("fractional", "l2-stab")


class SolverError(RuntimeError):
    pass


# ---------------------------------------------------------------- reports
@dataclass
class SolveReport:
    solver: str
    iterations: int
    wall_time: float
    converged: bool
    residual_history: list = field(default_factory=list)
    rtol: float | None = None
    formulation: str | None = None
    level: int | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "residual"])
        for k, r in enumerate(self.residual_history):
            w.writerow([k, repr(float(r))])
        return buf.getvalue()


@dataclass(frozen=True)
class ConditionEstimate:
    lambda_min: float
    lambda_max: float
    method: str

    @property
    def kappa(self) -> float:
        return self.lambda_max / self.lambda_min


# ---------------------------------------------------------------- blocks
class RieszBlock:
    """SPD block with ``solve`` by sparse LU or by AMG-preconditioned CG."""

    def __init__(self, matrix: sp.spmatrix, method: str = "auto", rtol: float = 1e-12):
        self.matrix = sp.csr_matrix(matrix)
        n = self.matrix.shape[0]
        if method == "auto":
            method = "amg" if n > AMG_THRESHOLD else "direct"
        self.method = method
        self.rtol = rtol
        if n == 0:
            self._lu = None
        elif method == "direct":
            self._lu = spla.splu(self.matrix.tocsc())
        elif method == "amg":
            import pyamg

            self._amg = pyamg.smoothed_aggregation_solver(self.matrix)
        else:
            raise ValueError(f"unknown block method {method!r}")

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def solve(self, r: np.ndarray) -> np.ndarray:
        if self.matrix.shape[0] == 0:
            return np.zeros(0)
        if self.method == "direct":
            return self._lu.solve(r)
        nr = np.linalg.norm(r)
        if nr == 0:
            return np.zeros_like(r)
        return self._amg.solve(r, tol=self.rtol, accel="cg", maxiter=500)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


class DenseBlock:
    """SPD dense block with a Cholesky solve."""

    def __init__(self, matrix: np.ndarray):
        self.matrix = np.asarray(matrix, dtype=float)
        self._cho = sla.cho_factor(self.matrix) if len(self.matrix) else None

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, x):
        return self.matrix @ x

    def solve(self, r):
        return sla.cho_solve(self._cho, r) if self._cho is not None else np.zeros(0)

    def dense(self):
        return self.matrix


class QuadratureBlock:
    """``H_{-1/2}`` on the zero-trace free DOFs by sinc quadrature.

    ``apply(x) = M Phi mu^{-1/2} Phi^T M x`` and
    ``solve(r) = Phi mu^{1/2} Phi^T r = M^{-1} A Phi mu^{-1/2} Phi^T r``.
    """

    def __init__(self, q: fractional.QuadratureFractional):
        self.q = q
        self._mlu = spla.splu(q.Mf)

    @property
    def shape(self):
        return self.q.Mf.shape

    def apply(self, x):
        return self.q.Mf @ self.q.apply(self.q.Mf @ x)

    def solve(self, r):
        return self._mlu.solve(self.q.Af @ self.q.apply(r))

    def dense(self):
        raise SolverError("quadrature block has no dense form")


@dataclass(frozen=True)
class PreconditionerSpec:
    """Block-diagonal Riesz preconditioner description.

    ``multiplier`` is ``"fractional"`` (H^{-1/2} on the multiplier manifold)
    or ``"l2-stab"`` (cell L2 plus the jump stabilization); ``"auto"`` picks
    the former for conforming and the latter for stabilized systems.
    """

    multiplier: str = "auto"
    primal_form: str = "full-H1"
    multiplier_weight: float = 1.0
    block_method: str = "auto"
    inner_rtol: float = 1e-12

    def resolve(self, system: BlockSaddleSystem) -> str:
        if self.multiplier == "auto":
            return "fractional" if system.spec.conforming else "l2-stab"
        if self.multiplier not in PRECONDITIONERS:
            raise ValueError(f"unknown multiplier preconditioner {self.multiplier!r}")
        return self.multiplier


class BlockPreconditioner:
    """``P = diag(P_3, P_1, P_q)`` on the free DOFs of a saddle system."""

    def __init__(self, system: BlockSaddleSystem, spec: PreconditionerSpec = PreconditionerSpec()):
        self.spec = spec
        self.kind = spec.resolve(system)
        f3, f1, fq = system.V3.free_dofs, system.V1.free_dofs, system.Q.free_dofs
        P3 = assemble_h1(system.V3, ONE, spec.primal_form)[f3][:, f3]
        P1 = assemble_h1(system.V1, WeightSpec(system.geom.area(0.0)), spec.primal_form)[f1][:, f1]
        blocks = [
            RieszBlock(P3, spec.block_method, spec.inner_rtol),
            RieszBlock(P1, "direct"),
        ]
        w = WeightSpec(spec.multiplier_weight)
        if self.kind == "fractional":
            blocks.append(_fractional_block(system, w, fq))
        else:
            if system.intersection is None:
                raise ValueError("l2-stab needs a stabilized (P0 multiplier) system")
            Pq = sp.diags(system.mesh3d.volumes[system.Q.cells]) + system.S
            blocks.append(RieszBlock(Pq[fq][:, fq], "direct"))
        self.blocks = blocks
        self.sizes = [b.shape[0] for b in blocks]
        self.offsets = np.cumsum([0, *self.sizes])

    @property
    def dim(self) -> int:
        return int(self.offsets[-1])

    def _map(self, x, method):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for b, lo, hi in zip(self.blocks, self.offsets[:-1], self.offsets[1:]):
            out[lo:hi] = getattr(b, method)(x[lo:hi])
        return out

    def solve(self, r: np.ndarray) -> np.ndarray:
        """``P^{-1} r``."""
        return self._map(r, "solve")

    def apply(self, x: np.ndarray) -> np.ndarray:
        """``P x``."""
        return self._map(x, "apply")

    def dense(self) -> np.ndarray:
        return sla.block_diag(*[b.dense() for b in self.blocks])

    def inverse_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator((self.dim, self.dim), matvec=self.solve, dtype=float)

    def operator(self) -> spla.LinearOperator:
        return spla.LinearOperator((self.dim, self.dim), matvec=self.apply, dtype=float)


def _fractional_block(system: BlockSaddleSystem, w: WeightSpec, fq: np.ndarray):
    try:
        op = fractional.build_spectral(system.Q, w, "zero-trace")
    except fractional.DimensionGuardError:
        q = fractional.quadrature_operator(system.Q, w, "zero-trace", keep_factors=True)
        if not np.array_equal(q.free, fq):
            raise SolverError("multiplier Dirichlet DOFs differ from the zero-trace boundary")
        return QuadratureBlock(q)
    H = op.block(-0.5).matrix()
    idx = np.searchsorted(op.free, fq)
    if not np.array_equal(op.free[idx], fq):
        raise SolverError("multiplier Dirichlet DOFs differ from the zero-trace boundary")
    return DenseBlock(H[np.ix_(idx, idx)])


# ---------------------------------------------------------------- solvers
def solve_direct(system: BlockSaddleSystem) -> np.ndarray:
    """Sparse LU of the reduced monolithic system; returns the full vector."""
    K, b = system.reduced()
    if K.shape[0] > DIRECT_LIMIT:
        raise SolverError(f"{K.shape[0]} unknowns exceed the direct-solver limit {DIRECT_LIMIT}")
    if not np.any(b):
        return system.expand(np.zeros_like(b))
    try:
        lu = spla.splu(K.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"singular system: {exc}") from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SolverError("singular system: non-finite solution")
    rel = np.linalg.norm(K @ x - b) / np.linalg.norm(b)
    if rel > 1e-9:
        raise SolverError(f"direct solve residual {rel:.2e} above 1e-9 (near-singular system)")
    return system.expand(x)


def minres_core(K, b, Pinv, rtol: float = 1e-8, maxit: int = 1000, x0=None):
    """Preconditioned MinRes (Paige-Saunders recurrences).

    ``Pinv(r)`` applies the SPD preconditioner inverse. The history holds the
    preconditioned residual norms ``||r||_{P^{-1}}``, starting with the
    initial one; convergence is ``history[-1] < rtol * history[0]``.
    """
    matvec = K.__matmul__ if not callable(K) else K
    n = len(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r1 = b - matvec(x)
    y = Pinv(r1)
    beta1 = float(r1 @ y)
    if beta1 < 0:
        raise SolverError("preconditioner is not positive definite")
    beta1 = np.sqrt(beta1)
    history = [beta1]
    if beta1 == 0:
        return x, history, True
    oldb, beta = 0.0, beta1
    r2 = r1.copy()
    dbar = epsln = 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    converged = False
    for _ in range(maxit):
        v = y / beta
        y = matvec(v)
        if oldb:
            y = y - (beta / oldb) * r1
        alfa = float(v @ y)
        y = y - (alfa / beta) * r2
        r1, r2 = r2, y
        y = Pinv(r2)
        oldb = beta
        beta2 = float(r2 @ y)
        if beta2 < 0:
            raise SolverError("preconditioner is not positive definite")
        beta = np.sqrt(beta2)
        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), np.finfo(float).tiny)
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar
        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        history.append(abs(phibar))
        if history[-1] < rtol * beta1:
            converged = True
            break
        if beta == 0:
            converged = True
            break
    return x, history, converged


def minres(system: BlockSaddleSystem, precond: PreconditionerSpec | BlockPreconditioner = PreconditionerSpec(),
           rtol: float = 1e-8, maxit: int = 2000):
    """Preconditioned MinRes on the reduced system; setup time is excluded."""
    K, b = system.reduced()
    P = precond if isinstance(precond, BlockPreconditioner) else BlockPreconditioner(system, precond)
    t = time.perf_counter()
    x, hist, ok = minres_core(K, b, P.solve, rtol, maxit)
    elapsed = time.perf_counter() - t
    report = SolveReport("minres", len(hist) - 1, elapsed, ok, [float(h) for h in hist], rtol,
                         system.spec.kind, system.spec.level)
    return system.expand(x), report


def cg_core(A, b, Minv=None, rtol: float = 1e-8, maxit: int = 1000):
    """Preconditioned CG; history is ``sqrt(r^T M^{-1} r)`` per iteration."""
    matvec = A.__matmul__ if not callable(A) else A
    Minv = Minv or (lambda r: r)
    x = np.zeros(len(b))
    r = np.array(b, dtype=float)
    z = Minv(r)
    rz = float(r @ z)
    history = [np.sqrt(max(rz, 0.0))]
    if rz == 0:
        return x, history, True
    p = z.copy()
    for _ in range(maxit):
        q = matvec(p)
        curv = float(p @ q)
        if curv <= 0:
            raise SolverError("negative curvature: operator is not positive definite")
        a = rz / curv
        x += a * p
        r -= a * q
        z = Minv(r)
        rz_new = float(r @ z)
        history.append(np.sqrt(max(rz_new, 0.0)))
        if history[-1] < rtol * history[0]:
            return x, history, True
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, history, False


def cg(A, b, Minv=None, rtol: float = 1e-8, maxit: int = 1000, label: str = "cg"):
    t = time.perf_counter()
    x, hist, ok = cg_core(A, b, Minv, rtol, maxit)
    return x, SolveReport(label, len(hist) - 1, time.perf_counter() - t, ok, [float(h) for h in hist], rtol)


def solve(system: BlockSaddleSystem, method: str = "auto", rtol: float = 1e-10,
          precond: PreconditionerSpec = PreconditionerSpec()):
    """Solution vector and report; ``auto`` uses LU when it fits, MinRes otherwise."""
    n = len(system.free)
    if method == "auto":
        method = "direct" if n <= DIRECT_LIMIT else "minres"
    if method == "direct":
        t = time.perf_counter()
        x = solve_direct(system)
        return x, SolveReport("direct", 1, time.perf_counter() - t, True, [], None,
                              system.spec.kind, system.spec.level)
    if method == "minres":
        x, rep = minres(system, precond, rtol)
        if not rep.converged:
            raise SolverError(f"MinRes did not reach rtol {rtol} in {rep.iterations} iterations")
        return x, rep
    raise ValueError(f"unknown solver {method!r}")


# ---------------------------------------------------------------- spectra
def estimate_condition(system: BlockSaddleSystem, precond: PreconditionerSpec | BlockPreconditioner = PreconditionerSpec(),
                       method: str = "auto", dense_limit: int = DENSE_KAPPA_LIMIT) -> ConditionEstimate:
    """Extreme ``|lambda|`` of ``K x = lambda P x`` on the free DOFs.

    The dense path solves the full symmetric-definite pencil; the iterative
    path runs ARPACK twice, in regular mode with ``P`` as the mass for the
    largest magnitude and in shift-invert mode about zero for the smallest.
    """
    K, _ = system.reduced()
    P = precond if isinstance(precond, BlockPreconditioner) else BlockPreconditioner(system, precond)
    return pencil_condition(K, P, method, dense_limit)


def pencil_condition(K, P, method: str = "auto", dense_limit: int = DENSE_KAPPA_LIMIT) -> ConditionEstimate:
    """Extreme ``|lambda|`` of ``K x = lambda P x``.

    ``P`` is a :class:`BlockPreconditioner` or an SPD sparse matrix.
    """
    if not isinstance(P, BlockPreconditioner):
        P = _MatrixPreconditioner(sp.csc_matrix(P))
    K = sp.csr_matrix(K)
    n = K.shape[0]
    if method == "auto":
        method = "dense" if n <= dense_limit else "iterative"
    if method == "dense":
        if n > dense_limit:
            raise SolverError(f"{n} unknowns exceed the dense eigenvalue limit {dense_limit}")
        ev = np.abs(sla.eigh(K.toarray(), P.dense(), eigvals_only=True))
        return ConditionEstimate(float(ev.min()), float(ev.max()), "dense")
    if method != "iterative":
        raise ValueError(f"unknown method {method!r}")
    Pop, Pinv = P.operator(), P.inverse_operator()
    lmax = spla.eigsh(K, k=1, M=Pop, Minv=Pinv, which="LM", tol=1e-8, return_eigenvectors=False)
    lu = spla.splu(K.tocsc())
    Kinv = spla.LinearOperator(K.shape, matvec=lu.solve, dtype=float)
    lmin = spla.eigsh(K, k=1, M=Pop, sigma=0.0, OPinv=Kinv, which="LM", tol=1e-8,
                      return_eigenvectors=False)
    return ConditionEstimate(float(np.abs(lmin).min()), float(np.abs(lmax).max()), "iterative")


class _MatrixPreconditioner:
    def __init__(self, P: sp.csc_matrix):
        self.P = P
        self.lu = spla.splu(P)

    def dense(self):
        return self.P.toarray()

    def operator(self):
        return spla.aslinearoperator(self.P)

    def inverse_operator(self):
        return spla.LinearOperator(self.P.shape, matvec=self.lu.solve, dtype=float)


def inf_sup_constant(system: BlockSaddleSystem, multiplier_norm: np.ndarray | None = None,
                     primal_form: str = "full-H1", include_stabilization: bool = False) -> float:
    """Smallest generalized singular value of ``B`` on the free DOFs.

    ``beta^2 = min eig(B X^{-1} B^T (+ S), N)`` with ``X`` the primal H1 Riesz
    matrix and ``N`` the multiplier norm matrix (default: the fractional
    H^{-1/2} block for conforming systems, cell L2 mass otherwise).
    """
    f3, f1, fq = system.V3.free_dofs, system.V1.free_dofs, system.Q.free_dofs
    X = sp.block_diag([
        assemble_h1(system.V3, ONE, primal_form)[f3][:, f3],
        assemble_h1(system.V1, WeightSpec(system.geom.area(0.0)), primal_form)[f1][:, f1],
    ]).tocsc()
    fp = np.concatenate([f3, system.V3.dim + f1])
    B = system.B[fq][:, fp].tocsc()
    lu = spla.splu(X)
    Y = lu.solve(B.T.toarray())
    Sb = B @ Y
    Sb = 0.5 * (Sb + Sb.T)
    if include_stabilization:
        Sb = Sb + system.S[fq][:, fq].toarray()
    if multiplier_norm is None:
        if system.spec.conforming:
            multiplier_norm = _fractional_block(system, ONE, fq).dense()
        else:
            multiplier_norm = np.diag(system.mesh3d.volumes[system.Q.cells][fq])
    ev = sla.eigh(Sb, multiplier_norm, eigvals_only=True)
    return float(np.sqrt(max(ev.min(), 0.0)))
