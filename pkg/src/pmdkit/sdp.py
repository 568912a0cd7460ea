"""Dense semidefinite programs over complex Hermitian PSD blocks.

A problem is stated in standard primal form::

    minimize / maximize   sum_k Re Tr[C_k X_k]
    subject to            sum_k Re Tr[F_ik X_k] = b_i,   X_k >= 0 (Hermitian PSD)

and its Lagrange dual (for ``minimize``)::

    maximize  b . y   subject to   C_k - sum_i y_i F_ik >= 0

(for ``maximize`` the dual is ``minimize b . y`` subject to
``sum_i y_i F_ik - C_k >= 0``).

Hermitian blocks are embedded as real symmetric blocks of twice the size only
inside :func:`solve`; everything outside this module stays complex. The
interior-point iterations run in :mod:`pmdkit._ipm`; the returned
:class:`SdpSolution` is re-checked against the tolerances here and by
:func:`check_certificate`, never taken on trust.
"""

from __future__ import annotations

import contextlib
import contextvars
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg

from . import _ipm
from .operators import hermitian_basis, hermitian_part, matrix_from_json, matrix_to_json, min_eigenvalue, to_coords

GAP_TOL = 1e-8
FEAS_TOL = 1e-8


class SdpError(ValueError):
    """Malformed problem (unknown block, wrong coefficient shape, empty problem)."""


class SdpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class Constraint:
    terms: dict[str, np.ndarray]
    rhs: float
    label: str


class SdpProblem:
    """Builder for a dense SDP over named Hermitian PSD blocks."""

    def __init__(self, sense: str = "minimize"):
        if sense not in ("minimize", "maximize"):
            raise SdpError(f"sense must be 'minimize' or 'maximize', got {sense!r}")
        self.sense = sense
        self.blocks: dict[str, int] = {}
        self.objective: dict[str, np.ndarray] = {}
        self.constraints: list[Constraint] = []

    def add_block(self, name: str, dim: int) -> str:
        if name in self.blocks:
            raise SdpError(f"duplicate block {name!r}")
        if int(dim) < 1:
            raise SdpError(f"block {name!r} must have positive dimension")
        self.blocks[name] = int(dim)
        return name

    def _coef(self, name: str, coef) -> np.ndarray:
        if name not in self.blocks:
            raise SdpError(f"unknown block {name!r}")
        d = self.blocks[name]
        arr = np.asarray(coef, dtype=complex)
        if arr.ndim == 0:
            arr = arr * np.eye(d)
        if arr.shape != (d, d):
            raise SdpError(f"coefficient for block {name!r} has shape {arr.shape}, expected {(d, d)}")
        # Re Tr[F X] only sees the Hermitian part of F
        return hermitian_part(arr)

    def set_objective(self, terms: dict) -> None:
        self.objective = {name: self._coef(name, c) for name, c in terms.items()}

    def add_constraint(self, terms: dict, rhs: float, label: str | None = None) -> None:
        coefs = {name: self._coef(name, c) for name, c in terms.items()}
        self.constraints.append(Constraint(coefs, float(rhs), label or f"c{len(self.constraints)}"))

    def add_matrix_equality(self, terms: dict, rhs, label: str, lifted: dict | None = None) -> None:
        """Impose ``sum_k c_k X_k + sum_l x_l B_l = rhs`` as ``dim**2`` real equalities.

        ``terms`` maps block names to real scalars ``c_k`` (blocks of the same
        dimension as ``rhs``); ``lifted`` maps 1x1 block names to Hermitian
        matrices ``B_l``.
        """
        rhs = hermitian_part(np.asarray(rhs, dtype=complex))
        d = rhs.shape[0]
        basis = hermitian_basis(d)
        lifted = lifted or {}
        for name, c in terms.items():
            if self.blocks.get(name) != d:
                raise SdpError(f"block {name!r} does not have dimension {d}")
            if np.iscomplexobj(c) and np.imag(c) != 0:
                raise SdpError("matrix-equality coefficients must be real")
        for name in lifted:
            if self.blocks.get(name) != 1:
                raise SdpError(f"lifted block {name!r} must be 1x1")
        lifted_coords = {name: to_coords(np.asarray(b, dtype=complex)) for name, b in lifted.items()}
        rhs_coords = to_coords(rhs)
        for j, e in enumerate(basis):
            row = {name: float(np.real(c)) * e for name, c in terms.items()}
            for name, cs in lifted_coords.items():
                if cs[j] != 0.0:
                    row[name] = np.array([[cs[j]]], dtype=complex)
            self.constraints.append(Constraint(row, float(rhs_coords[j]), f"{label}[{j}]"))

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def evaluate(self, terms: dict[str, np.ndarray], blocks: dict[str, np.ndarray]) -> float:
        return float(sum(np.einsum("ij,ji->", c, blocks[name]).real for name, c in terms.items()))

    # -- JSON dump / restore ------------------------------------------------

    def to_json(self) -> dict:
        return {
            "sense": self.sense,
            "blocks": [{"name": n, "dim": d} for n, d in self.blocks.items()],
            "objective": {n: matrix_to_json(c) for n, c in self.objective.items()},
            "constraints": [
                {"label": con.label, "rhs": con.rhs, "terms": {n: matrix_to_json(c) for n, c in con.terms.items()}}
                for con in self.constraints
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SdpProblem":
        prob = cls(obj.get("sense", "minimize"))
        for b in obj["blocks"]:
            prob.add_block(b["name"], b["dim"])
        prob.set_objective({n: matrix_from_json(c) for n, c in obj.get("objective", {}).items()})
        for con in obj.get("constraints", []):
            prob.add_constraint({n: matrix_from_json(c) for n, c in con["terms"].items()}, con["rhs"], con["label"])
        return prob

    def dumps(self) -> str:
        return json.dumps(self.to_json())


@dataclass
class SdpSolution:
    status: SdpStatus
    blocks: dict[str, np.ndarray] = field(default_factory=dict)
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    primal_value: float = float("nan")
    dual_value: float = float("nan")
    gap: float = float("nan")
    max_residual: float = float("nan")
    min_eigenvalue: float = float("nan")
    dual_min_eigenvalue: float = float("nan")
    ray: np.ndarray | None = None
    iterations: int = 0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status is SdpStatus.OPTIMAL

    def __getitem__(self, name: str) -> np.ndarray:
        return self.blocks[name]


class SdpFailure(RuntimeError):
    """Raised by callers that need an optimal solution and did not get one."""

    def __init__(self, solution: SdpSolution, context: str = ""):
        self.solution = solution
        msg = f"{context + ': ' if context else ''}SDP status {solution.status.value}"
        if solution.message:
            msg += f" ({solution.message})"
        super().__init__(msg)


@dataclass(frozen=True)
class SolverOptions:
    gap_tol: float = GAP_TOL
    feas_tol: float = FEAS_TOL
    max_iter: int = 200


_AUDIT: contextvars.ContextVar[list | None] = contextvars.ContextVar("pmdkit_sdp_audit", default=None)


@contextlib.contextmanager
def audit():
    """Record every ``(problem, solution)`` pair solved inside the block."""
    log: list = []
    token = _AUDIT.set(log)
    try:
        yield log
    finally:
        _AUDIT.reset(token)


# ---------------------------------------------------------------------------
# real embedding


def _embed(m: np.ndarray) -> np.ndarray:
    re, im = m.real, m.imag
    return np.block([[re, -im], [im, re]])


def _compress(z: np.ndarray) -> np.ndarray:
    d = z.shape[0] // 2
    z11, z12, z21, z22 = z[:d, :d], z[:d, d:], z[d:, :d], z[d:, d:]
    x = 0.5 * (z11 + z22) + 0.5j * (z21 - z12)
    return hermitian_part(x)


def _independent_rows(coords: np.ndarray, rhs: np.ndarray, feas_tol: float):
    """Indices of a maximal independent set of constraint rows, plus a Farkas ray if inconsistent."""
    m = coords.shape[0]
    if m == 0:
        return np.arange(0), None
    _, r, piv = scipy.linalg.qr(coords.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    scale = diag[0] if diag.size and diag[0] > 0 else 1.0
    rank = int(np.sum(diag > 1e-10 * scale * max(1, m)))
    keep = np.sort(piv[:rank])
    drop = np.setdiff1d(np.arange(m), keep)
    if drop.size:
        a_keep = coords[keep]
        t, *_ = np.linalg.lstsq(a_keep.T, coords[drop].T, rcond=None)
        mismatch = rhs[drop] - t.T @ rhs[keep]
        worst = int(np.argmax(np.abs(mismatch)))
        if abs(mismatch[worst]) > feas_tol * max(1.0, np.abs(rhs).max()):
            ray = np.zeros(m)
            ray[drop[worst]] = 1.0
            ray[keep] = -t[:, worst]
            ray /= ray @ rhs
            return keep, ray
    return keep, None


def _summarize(problem: SdpProblem, blocks, y, names, assembled) -> dict:
    """Objective, residual and eigenvalue summary via the assembled coefficient arrays."""
    coefs, rhs, cvec = assembled
    sign = 1.0 if problem.sense == "minimize" else -1.0
    pv = 0.0
    resid = -rhs.copy()
    dual_floor = np.inf
    for name in names:
        x = blocks[name]
        f = coefs[name]
        resid += np.einsum("kij,ji->k", f, x).real
        pv += np.einsum("ij,ji->", cvec[name], x).real
        slack = sign * (cvec[name] - np.einsum("k,kij->ij", y, f))
        dual_floor = min(dual_floor, min_eigenvalue(slack))
    dv = float(rhs @ y)
    floor = min(min_eigenvalue(blocks[n]) for n in names)
    return {
        "primal_value": float(pv),
        "dual_value": dv,
        "gap": abs(pv - dv) / max(1.0, abs(pv)),
        "max_residual": float(np.max(np.abs(resid))) if resid.size else 0.0,
        "min_eigenvalue": float(floor),
        "dual_min_eigenvalue": float(dual_floor),
    }


def _assemble(problem: SdpProblem):
    names = list(problem.blocks)
    m = problem.n_constraints
    coefs = {n: np.zeros((m, d, d), dtype=complex) for n, d in problem.blocks.items()}
    rhs = np.empty(m)
    for i, con in enumerate(problem.constraints):
        rhs[i] = con.rhs
        for name, c in con.terms.items():
            coefs[name][i] = c
    cvec = {n: problem.objective.get(n, np.zeros((d, d), dtype=complex)) for n, d in problem.blocks.items()}
    return names, (coefs, rhs, cvec)


def solve(problem: SdpProblem, opts: SolverOptions | None = None, **kwargs) -> SdpSolution:
    """Solve ``problem`` and return a solution with its duality-gap certificate.

    ``status == OPTIMAL`` is only reported when the relative gap, the equality
    residuals and both eigenvalue floors meet ``gap_tol`` / ``feas_tol``.
    """
    opts = opts or SolverOptions(**kwargs)
    if not problem.blocks:
        raise SdpError("structurally empty problem: no variable blocks")
    names, assembled = _assemble(problem)
    coefs, rhs, cvec = assembled
    m = problem.n_constraints
    sign = 1.0 if problem.sense == "minimize" else -1.0

    coords = np.zeros((m, sum(d * d for d in problem.blocks.values())))
    col = 0
    for name in names:
        d = problem.blocks[name]
        coords[:, col : col + d * d] = to_coords(coefs[name])
        col += d * d
    keep, ray = _independent_rows(coords, rhs, opts.feas_tol)
    if ray is not None:
        sol = SdpSolution(SdpStatus.INFEASIBLE, ray=ray, message="inconsistent linear equalities")
        _record(problem, sol)
        return sol

    if keep.size == 0:
        sol = _solve_unconstrained(problem, names, cvec, sign, m)
        _record(problem, sol)
        return sol

    # real embedding; Tr[emb(F) emb(X)] = 2 Re Tr[F X], hence the factor 1/2
    by_size: dict[int, list[str]] = {}
    for name in names:
        by_size.setdefault(2 * problem.blocks[name], []).append(name)
    row_scale = np.linalg.norm(coords[keep], axis=1)
    row_scale[row_scale == 0] = 1.0
    groups, order = [], []
    for n, members in by_size.items():
        a = np.stack([np.stack([_embed(f) for f in coefs[name][keep]]) for name in members]) * 0.5
        a /= row_scale[None, :, None, None]
        c = np.stack([_embed(sign * cvec[name]) for name in members]) * 0.5
        groups.append(_ipm.Group(a, c))
        order.append(members)
    b = rhs[keep] / row_scale

    tol = min(opts.gap_tol, opts.feas_tol) * 1e-2
    try:
        res = _ipm.solve(groups, b, tol=tol, max_iter=opts.max_iter)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        sol = SdpSolution(SdpStatus.NUMERICAL_FAILURE, message=f"solver error: {exc}")
        _record(problem, sol)
        return sol

    if res.status == "primal_infeasible":
        y = np.zeros(m)
        y[keep] = res.y / row_scale
        y /= y @ rhs
        sol = SdpSolution(SdpStatus.INFEASIBLE, ray=y, iterations=res.iterations, message="Farkas ray found")
        _record(problem, sol)
        return sol
    if res.status == "dual_infeasible":
        direction = {name: _compress(x) for members, xs in zip(order, res.X) for name, x in zip(members, xs)}
        sol = SdpSolution(SdpStatus.UNBOUNDED, blocks=direction, iterations=res.iterations, message="improving ray found")
        _record(problem, sol)
        return sol

    blocks = {name: _compress(x) for members, xs in zip(order, res.X) for name, x in zip(members, xs)}
    blocks = {name: blocks[name] for name in names}
    y = np.zeros(m)
    y[keep] = sign * res.y / row_scale
    summary = _summarize(problem, blocks, y, names, assembled)
    passed = (
        summary["gap"] <= opts.gap_tol
        and summary["max_residual"] <= opts.feas_tol
        and summary["min_eigenvalue"] >= -opts.feas_tol
        and summary["dual_min_eigenvalue"] >= -opts.feas_tol
    )
    sol = SdpSolution(
        SdpStatus.OPTIMAL if passed else SdpStatus.NUMERICAL_FAILURE,
        blocks=blocks,
        multipliers=y,
        iterations=res.iterations,
        message="" if passed else f"tolerances not met (iteration status {res.status}): {summary}",
        **summary,
    )
    _record(problem, sol)
    return sol


def _solve_unconstrained(problem, names, cvec, sign, m) -> SdpSolution:
    floor = min(min_eigenvalue(sign * cvec[n]) for n in names)
    if floor < 0:
        direction = {}
        for n in names:
            w, v = np.linalg.eigh(sign * cvec[n])
            direction[n] = np.outer(v[:, 0], v[:, 0].conj()) if w[0] < 0 else np.zeros_like(cvec[n])
        return SdpSolution(SdpStatus.UNBOUNDED, blocks=direction, message="objective unbounded on the PSD cone")
    blocks = {n: np.zeros_like(cvec[n]) for n in names}
    return SdpSolution(
        SdpStatus.OPTIMAL,
        blocks=blocks,
        multipliers=np.zeros(m),
        primal_value=0.0,
        dual_value=0.0,
        gap=0.0,
        max_residual=0.0,
        min_eigenvalue=0.0,
        dual_min_eigenvalue=floor,
    )


def _record(problem, sol):
    log = _AUDIT.get()
    if log is not None:
        log.append((problem, sol))


# ---------------------------------------------------------------------------
# certificates


@dataclass
class CertificateReport:
    passed: bool
    primal_value: float
    dual_value: float
    gap: float
    max_residual: float
    min_eigenvalue: float
    dual_min_eigenvalue: float
    violations: list[tuple[str, float]]


def check_certificate(
    problem: SdpProblem, sol: SdpSolution, gap_tol: float = GAP_TOL, feas_tol: float = FEAS_TOL
) -> CertificateReport:
    """Re-evaluate objective, residuals, eigenvalue floors and gap from the raw blocks.

    Works constraint by constraint on the problem's own term dictionaries, so
    it does not share code paths with the solver's assembled arrays.
    """
    for name, d in problem.blocks.items():
        if name not in sol.blocks:
            raise SdpError(f"solution is missing block {name!r}")
        if np.shape(sol.blocks[name]) != (d, d):
            raise SdpError(f"block {name!r} has shape {np.shape(sol.blocks[name])}, expected {(d, d)}")
    if len(sol.multipliers) != problem.n_constraints:
        raise SdpError("multiplier vector does not match the constraint count")

    violations: list[tuple[str, float]] = []
    blocks = {n: np.asarray(x, dtype=complex) for n, x in sol.blocks.items()}
    for name, x in blocks.items():
        herm = float(np.max(np.abs(x - x.conj().T)))
        if herm > feas_tol:
            violations.append((f"block {name} not Hermitian", herm))

    pv = problem.evaluate(problem.objective, blocks)
    worst = 0.0
    for con in problem.constraints:
        r = abs(problem.evaluate(con.terms, blocks) - con.rhs)
        worst = max(worst, r)
        if r > feas_tol:
            violations.append((f"constraint {con.label} residual", r))

    floor = np.inf
    for name, x in blocks.items():
        lam = float(np.linalg.eigvalsh(hermitian_part(x))[0])
        floor = min(floor, lam)
        if lam < -feas_tol:
            violations.append((f"block {name} min eigenvalue", lam))

    sign = 1.0 if problem.sense == "minimize" else -1.0
    y = np.asarray(sol.multipliers, dtype=float)
    dual_floor = np.inf
    for name, d in problem.blocks.items():
        slack = problem.objective.get(name, np.zeros((d, d), dtype=complex)).astype(complex).copy()
        for yi, con in zip(y, problem.constraints):
            if name in con.terms and yi != 0.0:
                slack = slack - yi * con.terms[name]
        lam = float(np.linalg.eigvalsh(hermitian_part(sign * slack))[0])
        dual_floor = min(dual_floor, lam)
        if lam < -feas_tol:
            violations.append((f"dual slack {name} min eigenvalue", lam))

    dv = float(sum(yi * con.rhs for yi, con in zip(y, problem.constraints)))
    gap = abs(pv - dv) / max(1.0, abs(pv))
    if gap > gap_tol:
        violations.append(("duality gap", gap))
    return CertificateReport(
        passed=not violations,
        primal_value=pv,
        dual_value=dv,
        gap=gap,
        max_residual=worst,
        min_eigenvalue=floor,
        dual_min_eigenvalue=dual_floor,
        violations=violations,
    )


def check_farkas_ray(problem: SdpProblem, ray: np.ndarray, feas_tol: float = FEAS_TOL) -> tuple[bool, float, float]:
    """Verify an infeasibility ray ``y``: ``b . y > 0`` while ``sum_i y_i F_ik <= 0`` for every block.

    Returns ``(valid, b . y, largest eigenvalue of sum_i y_i F_ik)``.
    """
    y = np.asarray(ray, dtype=float)
    by = float(sum(yi * con.rhs for yi, con in zip(y, problem.constraints)))
    worst = -np.inf
    for name, d in problem.blocks.items():
        acc = np.zeros((d, d), dtype=complex)
        for yi, con in zip(y, problem.constraints):
            if name in con.terms:
                acc += yi * con.terms[name]
        worst = max(worst, float(np.linalg.eigvalsh(hermitian_part(acc))[-1]))
    return (by > 0 and worst <= feas_tol * max(1.0, by)), by, worst
