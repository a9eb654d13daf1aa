"""
Interior-point engine for unit-diagonal Hermitian semidefinite programs.

This module solves the lifted programs produced by the RIS optimizers:

    maximize    tr(C X)                       (MAXIMIZE_OBJECTIVE)
    maximize    s  s.t. tr(A_i X) - b_i >= s  (MAXIMIZE_SLACK, feasibility)
    subject to  diag(X) = 1, tr(A_i X) >= b_i, X Hermitian PSD

Programs are solved natively in complex arithmetic with a primal-dual
path-following method (HKM search direction, Mehrotra predictor-corrector).
The unit-diagonal structure makes the Schur complement a Hadamard product,
so one iteration costs a handful of dense O(n^3) factorizations.

Data is normalized on ingest (objective by its Frobenius norm, each inequality
row by max(||A_i||_F, |b_i|)), which keeps tolerances meaningful when channel
gains sit around 1e-19. Feasibility is decided by the sign of the optimal
slack; with early_exit the solve stops as soon as the sign is certified.

Usage:
    solver = InteriorPointSolver()
    solution = solver.solve(SdpProblem(objective=C))
    verdict = solver.check_feasibility(slack_problem)
"""

import io
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import linalg

from .config import (
    DEFAULT_LIMITS,
    SolveMode,
    SolverLimits,
    SolverStatus,
)

logger = logging.getLogger(__name__)

_HERMITIAN_RTOL = 1e-8
_TINY = 1e-300


class SolverError(Exception):
    """Raised for ill-formed programs; solver outcomes are statuses, not errors."""

    def __init__(self, *, detail: str, exit_code: int = 3) -> None:
        self.exit_code = exit_code
        self.detail = detail
        super().__init__(detail)


def _ingest(matrix, name: str) -> np.ndarray:
    arr = np.asarray(matrix)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise SolverError(detail=f"{name} must be square, got shape {arr.shape}")
    arr = arr.astype(np.complex128 if np.iscomplexobj(arr) else np.float64)
    if not np.all(np.isfinite(arr)):
        raise SolverError(detail=f"{name} has non-finite entries")
    scale = max(1.0, float(np.linalg.norm(arr)))
    if np.linalg.norm(arr - arr.conj().T) > _HERMITIAN_RTOL * scale:
        raise SolverError(detail=f"{name} is not Hermitian")
    return 0.5 * (arr + arr.conj().T)


def _herm(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def _inner(a: np.ndarray, b: np.ndarray) -> float:
    """Real inner product Re tr(A^H B)."""
    return float(np.real(np.vdot(a, b)))


@dataclass
class LinearConstraint:
    """Affine inequality tr(A X) >= b."""
    matrix: np.ndarray
    bound: float


@dataclass
class SdpProblem:
    """
    A lifted program over Hermitian PSD matrices of dimension n.

    diag_one=True imposes diag(X) = 1; diag_one=False imposes tr(X) = n instead.
    Matrices are symmetrized on ingest; non-finite or clearly non-Hermitian
    inputs are rejected.
    """
    objective: np.ndarray
    constraints: List[LinearConstraint] = field(default_factory=list)
    diag_one: bool = True
    mode: SolveMode = SolveMode.MAXIMIZE_OBJECTIVE

    def __post_init__(self) -> None:
        self.mode = SolveMode(self.mode)
        self.objective = _ingest(self.objective, "objective")
        n = self.objective.shape[0]
        if n < 1:
            raise SolverError(detail="problem dimension must be at least 1")
        ingested = []
        for i, con in enumerate(self.constraints):
            mat = _ingest(con.matrix, f"constraint[{i}]")
            if mat.shape[0] != n:
                raise SolverError(detail=f"constraint[{i}] has dimension {mat.shape[0]}, expected {n}")
            bound = float(np.real(con.bound))
            if not np.isfinite(bound):
                raise SolverError(detail=f"constraint[{i}] bound is not finite")
            ingested.append(LinearConstraint(matrix=mat, bound=bound))
        self.constraints = ingested
        if self.mode == SolveMode.MAXIMIZE_SLACK and not self.constraints:
            raise SolverError(detail="slack maximization needs at least one inequality")

    @property
    def n(self) -> int:
        return self.objective.shape[0]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.objective) or any(
            np.iscomplexobj(c.matrix) for c in self.constraints
        )


@dataclass
class SdpSolution:
    """Result of a solve together with its certification figures."""
    X: np.ndarray
    objective: float                # tr(C X) in original units, or the slack in feasibility mode
    gap: float                      # relative duality gap of the normalized program
    violation: float                # max equality / inequality violation
    min_eig: float                  # smallest eigenvalue of X
    iterations: int
    status: SolverStatus
    slack: Optional[float] = None   # feasibility mode only

    @property
    def certified(self) -> bool:
        return self.status in (SolverStatus.OPTIMAL, SolverStatus.FEASIBLE, SolverStatus.INFEASIBLE)


@dataclass
class FeasibilityResult:
    """Yes/no answer of a fixed-threshold problem plus the witness solve."""
    feasible: bool
    slack: float
    solution: SdpSolution


@dataclass
class _StandardForm:
    """
    min <C, X> + c_lin . x  s.t.  op(X) + B x = b,  X PSD, x >= 0

    Equality rows come first (diag or trace), then one row per inequality.
    x holds the inequality surpluses and, in slack mode, the shifted slack.
    """
    n: int
    dtype: type
    diag_eq: bool
    C: np.ndarray
    c_lin: np.ndarray
    A: List[np.ndarray]
    b: np.ndarray
    B: np.ndarray
    ineq_bounds: np.ndarray
    obj_scale: float
    slack_shift: float
    slack_mode: bool

    @property
    def n_eq(self) -> int:
        return self.n if self.diag_eq else 1

    @property
    def p(self) -> int:
        return self.n_eq + len(self.A)

    @property
    def q(self) -> int:
        return self.c_lin.shape[0]

    @classmethod
    def build(cls, problem: SdpProblem) -> "_StandardForm":
        n = problem.n
        dtype = np.complex128 if problem.is_complex else np.float64
        n_eq = n if problem.diag_one else 1
        m = len(problem.constraints)
        slack_mode = problem.mode == SolveMode.MAXIMIZE_SLACK

        A, bounds = [], []
        for con in problem.constraints:
            s = max(float(np.linalg.norm(con.matrix)), abs(con.bound), _TINY)
            A.append((con.matrix / s).astype(dtype))
            bounds.append(con.bound / s)
        bounds = np.array(bounds, dtype=float)

        if slack_mode:
            C = np.zeros((n, n), dtype=dtype)
            obj_scale = 1.0
            q = m + 1
            c_lin = np.zeros(q)
            c_lin[m] = -1.0
            # X = I is diag-feasible, so the optimal slack is at least this shift + 1
            shift = min(float(np.real(np.trace(a))) - bnd for a, bnd in zip(A, bounds)) - 1.0
        else:
            norm_c = float(np.linalg.norm(problem.objective))
            obj_scale = norm_c if norm_c > _TINY else 1.0
            C = (-problem.objective / obj_scale).astype(dtype)
            q = m
            c_lin = np.zeros(q)
            shift = 0.0

        p = n_eq + m
        b = np.empty(p)
        b[:n_eq] = 1.0 if problem.diag_one else float(n)
        b[n_eq:] = bounds + shift
        B = np.zeros((p, q))
        for i in range(m):
            B[n_eq + i, i] = -1.0
            if slack_mode:
                B[n_eq + i, m] = -1.0

        return cls(
            n=n, dtype=dtype, diag_eq=problem.diag_one, C=C, c_lin=c_lin, A=A,
            b=b, B=B, ineq_bounds=bounds, obj_scale=obj_scale,
            slack_shift=shift, slack_mode=slack_mode,
        )

    def op(self, W: np.ndarray) -> np.ndarray:
        """Constraint map on a (not necessarily Hermitian) matrix: Re tr(A_i W)."""
        out = np.empty(self.p)
        if self.diag_eq:
            out[: self.n] = np.real(np.diag(W))
        else:
            out[0] = np.real(np.trace(W))
        for i, a in enumerate(self.A):
            out[self.n_eq + i] = np.real(np.sum(a * W.T))
        return out

    def adj(self, y: np.ndarray) -> np.ndarray:
        if self.diag_eq:
            out = np.diag(y[: self.n]).astype(self.dtype)
        else:
            out = y[0] * np.eye(self.n, dtype=self.dtype)
        for i, a in enumerate(self.A):
            out = out + y[self.n_eq + i] * a
        return out

    def schur(self, X: np.ndarray, Zi: np.ndarray) -> np.ndarray:
        """M_ij = Re tr(A_i X A_j Z^{-1}) over all equality and inequality rows."""
        n_eq = self.n_eq
        M = np.zeros((self.p, self.p))
        if self.diag_eq:
            M[:n_eq, :n_eq] = np.real(X * Zi.T)
        else:
            M[0, 0] = np.real(np.sum(X * Zi.T))
        products = [X @ a @ Zi for a in self.A]
        for i, P in enumerate(products):
            col = n_eq + i
            cross = np.real(np.diag(P)) if self.diag_eq else np.real(np.trace(P))
            M[:n_eq, col] = cross
            M[col, :n_eq] = cross
            for j in range(i, len(self.A)):
                val = np.real(np.sum(self.A[j] * P.T))
                M[col, n_eq + j] = val
                M[n_eq + j, col] = val
        return M

    def slack_of(self, X: np.ndarray) -> float:
        """min_i (tr(A_i X) - b_i) in normalized units."""
        vals = [np.real(np.sum(a * X.T)) - bnd for a, bnd in zip(self.A, self.ineq_bounds)]
        return float(min(vals))


def _max_step(X: np.ndarray, dX: np.ndarray) -> float:
    """Largest alpha with X + alpha dX PSD (X positive definite)."""
    L = linalg.cholesky(X, lower=True)
    T1 = linalg.solve_triangular(L, dX, lower=True)
    S = linalg.solve_triangular(L, T1.conj().T, lower=True)
    lam = float(linalg.eigvalsh(_herm(S))[0])
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lin(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


class InteriorPointSolver:
    """
    Primal-dual path-following solver for the unit-diagonal program family.

    Usage:
        solver = InteriorPointSolver(limits=STRICT_LIMITS)
        solution = solver.solve(problem)
    """

    def __init__(self, limits: Optional[SolverLimits] = None):
        self.limits = limits or DEFAULT_LIMITS

    def solve(
        self,
        problem: SdpProblem,
        tol: Optional[float] = None,
        initial_scale: float = 1.0,
    ) -> SdpSolution:
        """
        Solve the program and return a certified solution.

        status=OPTIMAL means the relative duality gap and dual residual are below
        tol and the equality residual below eps_eq. In feasibility mode a
        converged negative slack (< -tol) is reported as INFEASIBLE.
        initial_scale multiplies the starting primal point (X = s I).
        """
        if initial_scale <= 0:
            raise SolverError(detail="initial_scale must be positive")
        tol = tol if tol is not None else self.limits.gap_tol
        if tol <= 0:
            raise SolverError(detail="tolerance must be positive")
        form = _StandardForm.build(problem)
        return self._path_following(problem, form, tol, initial_scale)

    def check_feasibility(self, problem: SdpProblem, tol: Optional[float] = None) -> FeasibilityResult:
        """Decide feasibility of a slack-mode program: feasible iff optimal slack >= -tol."""
        if problem.mode != SolveMode.MAXIMIZE_SLACK:
            raise SolverError(detail="check_feasibility needs a MAXIMIZE_SLACK problem")
        tol = tol if tol is not None else self.limits.gap_tol
        solution = self.solve(problem, tol=tol)
        slack = float(solution.slack)
        if solution.status == SolverStatus.INFEASIBLE:
            feasible = False
        elif solution.status in (SolverStatus.OPTIMAL, SolverStatus.FEASIBLE):
            feasible = slack >= -tol
        else:
            # uncertified: the current iterate is still a valid witness if its slack is non-negative
            feasible = slack >= -tol and solution.violation <= self.limits.eps_eq
            logger.warning(
                "feasibility solve ended with status=%s after %d iterations; treating as %s",
                solution.status.value, solution.iterations, "feasible" if feasible else "infeasible",
            )
        return FeasibilityResult(feasible=feasible, slack=slack, solution=solution)

    def _path_following(
        self,
        problem: SdpProblem,
        form: _StandardForm,
        tol: float,
        initial_scale: float,
    ) -> SdpSolution:
        lim = self.limits
        n, q = form.n, form.q
        eye = np.eye(n, dtype=form.dtype)

        X = initial_scale * eye
        xl = initial_scale * np.ones(q)
        zeta = 1.0 + float(np.linalg.norm(form.C)) + max(
            (float(np.linalg.norm(a)) for a in form.A), default=0.0
        )
        Z = zeta * eye
        zl = zeta * np.ones(q)
        y = np.zeros(form.p)
        nu = n + q
        c_norm = 1.0 + float(np.linalg.norm(form.C)) + float(np.linalg.norm(form.c_lin))

        status = SolverStatus.MAX_ITER
        iterations = 0
        gap_rel = np.inf
        certificate_bound: Optional[float] = None

        while True:
            rp = form.b - form.op(X) - form.B @ xl
            Rd = form.C - Z - form.adj(y)
            rdl = form.c_lin - zl - form.B.T @ y
            pobj = _inner(form.C, X) + float(form.c_lin @ xl)
            dobj = float(form.b @ y)
            compl = _inner(X, Z) + float(xl @ zl)
            pinf = float(np.max(np.abs(rp))) if rp.size else 0.0
            dinf = (float(np.linalg.norm(Rd)) + float(np.linalg.norm(rdl))) / c_norm
            gap_rel = max(compl, abs(pobj - dobj)) / (1.0 + abs(pobj))

            logger.debug(
                "iter=%d pobj=%.6e dobj=%.6e gap=%.2e pinf=%.2e dinf=%.2e",
                iterations, pobj, dobj, gap_rel, pinf, dinf,
            )

            if form.slack_mode and lim.early_exit:
                eq_res = float(np.max(np.abs(rp[: form.n_eq])))
                if eq_res <= lim.eps_eq and form.slack_of(X) >= 0.0:
                    status = SolverStatus.FEASIBLE
                    break
                upper = -dobj + form.slack_shift
                if dinf <= tol and upper < -tol:
                    status = SolverStatus.INFEASIBLE
                    certificate_bound = upper
                    break

            if pinf <= lim.eps_eq and dinf <= tol and gap_rel <= tol:
                status = SolverStatus.OPTIMAL
                break

            if iterations >= lim.max_iter:
                status = SolverStatus.MAX_ITER
                break

            try:
                X, xl, y, Z, zl = self._newton_step(form, X, xl, y, Z, zl, rp, Rd, rdl, nu)
            except (linalg.LinAlgError, ValueError) as exc:
                logger.warning("factorization broke down at iteration %d: %s", iterations, exc)
                status = SolverStatus.NUMERICAL_ERROR
                break
            iterations += 1

        return self._finalize(problem, form, X, status, iterations, gap_rel, tol, certificate_bound)

    def _newton_step(self, form, X, xl, y, Z, zl, rp, Rd, rdl, nu):
        frac = self.limits.step_fraction
        eye = np.eye(form.n, dtype=form.dtype)

        Zc = linalg.cho_factor(Z, lower=True)
        Zi = _herm(linalg.cho_solve(Zc, eye))
        D = xl / zl
        M = form.schur(X, Zi) + form.B @ (D[:, None] * form.B.T)
        Mc = linalg.cho_factor(M, lower=True)

        mu = (_inner(X, Z) + float(xl @ zl)) / nu
        XRdZi = X @ Rd @ Zi

        def direction(Kc, kc):
            rhs = rp - form.op(Kc) + form.op(XRdZi) - form.B @ kc + form.B @ (D * rdl)
            dy = linalg.cho_solve(Mc, rhs)
            dZ = _herm(Rd - form.adj(dy))
            dX = _herm(Kc - X @ dZ @ Zi)
            dz = rdl - form.B.T @ dy
            dx = kc - D * dz
            return dX, dx, dy, dZ, dz

        # predictor (affine scaling)
        dXa, dxa, _, dZa, dza = direction(-X, -xl)
        ap = min(1.0, _max_step(X, dXa), _max_step_lin(xl, dxa))
        ad = min(1.0, _max_step(Z, dZa), _max_step_lin(zl, dza))
        mu_aff = (_inner(X + ap * dXa, Z + ad * dZa) + float((xl + ap * dxa) @ (zl + ad * dza))) / nu
        sigma = float(np.clip((mu_aff / mu) ** 3, 0.0, 1.0)) if mu > 0 else 0.0

        # corrector
        Kc = sigma * mu * Zi - X - dXa @ dZa @ Zi
        kc = sigma * mu / zl - xl - dxa * dza / zl
        dX, dx, dy, dZ, dz = direction(Kc, kc)
        ap = min(1.0, frac * _max_step(X, dX), frac * _max_step_lin(xl, dx))
        ad = min(1.0, frac * _max_step(Z, dZ), frac * _max_step_lin(zl, dz))

        return (
            _herm(X + ap * dX),
            xl + ap * dx,
            y + ad * dy,
            _herm(Z + ad * dZ),
            zl + ad * dz,
        )

    def _finalize(self, problem, form, X, status, iterations, gap_rel, tol, certificate_bound):
        X = _herm(X)
        if problem.diag_one:
            violation = float(np.max(np.abs(np.real(np.diag(X)) - 1.0)))
        else:
            violation = abs(float(np.real(np.trace(X))) - problem.n)
        min_eig = float(linalg.eigvalsh(X)[0])
        trace = abs(float(np.real(np.trace(X))))
        if status in (SolverStatus.OPTIMAL, SolverStatus.FEASIBLE) and min_eig < -self.limits.eps_psd * max(trace, 1.0):
            logger.warning("solve n=%d: lambda_min(X)=%.2e breaks the PSD tolerance", form.n, min_eig)
            status = SolverStatus.NUMERICAL_ERROR

        slack = None
        if form.slack_mode:
            slack = certificate_bound if certificate_bound is not None else form.slack_of(X)
            objective = slack
            if status == SolverStatus.OPTIMAL and slack < -tol:
                status = SolverStatus.INFEASIBLE
        else:
            objective = float(np.real(np.sum(problem.objective * X.T)))
            for con in problem.constraints:
                value = float(np.real(np.sum(con.matrix * X.T)))
                scale = max(1.0, abs(con.bound))
                violation = max(violation, (con.bound - value) / scale)

        if status in (SolverStatus.MAX_ITER, SolverStatus.NUMERICAL_ERROR):
            logger.warning(
                "solve n=%d mode=%s ended with status=%s after %d iterations (gap=%.2e)",
                form.n, problem.mode.value, status.value, iterations, gap_rel,
            )

        return SdpSolution(
            X=X,
            objective=objective,
            gap=float(gap_rel),
            violation=violation,
            min_eig=min_eig,
            iterations=iterations,
            status=status,
            slack=slack,
        )


# =============================================================================
# REAL EMBEDDING (cross-check oracle)
# =============================================================================

def _embed(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    return np.block([[a.real, -a.imag], [a.imag, a.real]])


def to_real_embedding(problem: SdpProblem) -> SdpProblem:
    """
    Equivalent real symmetric program of dimension 2n.

    Uses tr(phi(A) phi(X)) = 2 Re tr(A X) with phi(A) = [[Re A, -Im A], [Im A, Re A]],
    so every data matrix is halved; diag(phi(X)) = 1 matches diag(X) = 1.
    """
    return SdpProblem(
        objective=0.5 * _embed(problem.objective),
        constraints=[
            LinearConstraint(matrix=0.5 * _embed(c.matrix), bound=c.bound)
            for c in problem.constraints
        ],
        diag_one=problem.diag_one,
        mode=problem.mode,
    )


def from_real_embedding(Y: np.ndarray) -> np.ndarray:
    """Recover the Hermitian matrix from a (symmetrized) real embedding."""
    n = Y.shape[0] // 2
    re = 0.5 * (Y[:n, :n] + Y[n:, n:])
    im = 0.5 * (Y[n:, :n] - Y[:n, n:])
    return _herm(re + 1j * im)


# =============================================================================
# PLAIN-TEXT DUMP / LOAD
# =============================================================================

_HEADER = "sdp-problem 1"


def _write_matrix(buf: io.StringIO, mat: np.ndarray) -> None:
    if np.iscomplexobj(mat):
        flat = np.empty((mat.shape[0], 2 * mat.shape[1]))
        flat[:, 0::2] = mat.real
        flat[:, 1::2] = mat.imag
    else:
        flat = mat
    np.savetxt(buf, flat, fmt="%.17g")


def dump_problem(problem: SdpProblem) -> str:
    """
    Serialize a program as text for offline cross-validation.

    Layout: header, `n`, `mode`, `diag_one`, `complex`, an `objective` block of
    n rows, then one `constraint <bound>` block per inequality. Complex rows
    interleave real and imaginary parts.
    """
    is_complex = problem.is_complex
    buf = io.StringIO()
    buf.write(f"{_HEADER}\n")
    buf.write(f"n {problem.n}\n")
    buf.write(f"mode {problem.mode.value}\n")
    buf.write(f"diag_one {int(problem.diag_one)}\n")
    buf.write(f"complex {int(is_complex)}\n")
    buf.write("objective\n")
    _write_matrix(buf, problem.objective.astype(np.complex128) if is_complex else problem.objective)
    for con in problem.constraints:
        buf.write(f"constraint {con.bound!r}\n")
        _write_matrix(buf, con.matrix.astype(np.complex128) if is_complex else con.matrix)
    buf.write("end\n")
    return buf.getvalue()


def load_problem(text: str) -> SdpProblem:
    """Parse the format written by dump_problem."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != _HEADER:
        raise SolverError(detail="not an sdp-problem dump", exit_code=2)
    try:
        n = int(lines[1].split()[1])
        mode = SolveMode(lines[2].split()[1])
        diag_one = bool(int(lines[3].split()[1]))
        is_complex = bool(int(lines[4].split()[1]))
    except (IndexError, ValueError) as exc:
        raise SolverError(detail=f"malformed dump header: {exc}", exit_code=2) from exc

    def read_block(start: int) -> np.ndarray:
        rows = np.array([[float(v) for v in ln.split()] for ln in lines[start:start + n]])
        if is_complex:
            return rows[:, 0::2] + 1j * rows[:, 1::2]
        return rows

    pos = 5
    if lines[pos] != "objective":
        raise SolverError(detail="dump is missing the objective block", exit_code=2)
    objective = read_block(pos + 1)
    pos += 1 + n
    constraints = []
    while lines[pos] != "end":
        tag, bound = lines[pos].split()
        if tag != "constraint":
            raise SolverError(detail=f"unexpected section {tag!r}", exit_code=2)
        constraints.append(LinearConstraint(matrix=read_block(pos + 1), bound=float(bound)))
        pos += 1 + n
    return SdpProblem(objective=objective, constraints=constraints, diag_one=diag_one, mode=mode)


# =============================================================================
# MODULE-LEVEL API
# =============================================================================

_default_solver = InteriorPointSolver()


def solve(problem: SdpProblem, tol: Optional[float] = None) -> SdpSolution:
    """Solve a lifted program with the default limits."""
    return _default_solver.solve(problem, tol=tol)


def check_feasibility(problem: SdpProblem, tol: Optional[float] = None) -> FeasibilityResult:
    """Decide a fixed-threshold feasibility program with the default limits."""
    return _default_solver.check_feasibility(problem, tol=tol)
