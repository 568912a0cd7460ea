"""Infeasible-start primal-dual interior-point method for real symmetric block SDPs.

Solves ``min <C, X> s.t. A(X) = b, X >= 0`` together with its dual
``max b.y s.t. C - A^T(y) = S >= 0``. Uses the HKM search direction with
Mehrotra predictor-corrector steps. Blocks of equal order are stacked so
every matrix operation is batched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


@dataclass
class Group:
    """``K`` blocks of order ``n``: ``A`` has shape ``(K, m, n, n)``, ``C`` shape ``(K, n, n)``."""

    A: np.ndarray
    C: np.ndarray

    @property
    def n(self) -> int:
        return self.C.shape[1]


@dataclass
class IpmResult:
    status: str  # converged | stalled | max_iter | primal_infeasible | dual_infeasible
    X: list
    y: np.ndarray
    S: list
    iterations: int
    relgap: float
    pinf: float
    dinf: float


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _aop(groups, xs):
    return sum(np.einsum("kmij,kij->m", g.A, x) for g, x in zip(groups, xs))


def _atop(groups, y):
    return [np.einsum("kmij,m->kij", g.A, y) for g in groups]


def _inner(xs, ys):
    return float(sum(np.sum(x * y) for x, y in zip(xs, ys)))


def _max_step(xs, dxs):
    """Largest ``alpha`` keeping every ``X + alpha dX`` positive semidefinite."""
    alpha = np.inf
    for x, dx in zip(xs, dxs):
        try:
            lo = np.linalg.cholesky(x)
        except np.linalg.LinAlgError:
            return 0.0
        li = np.linalg.inv(lo)
        w = li @ dx @ np.swapaxes(li, -1, -2)
        lam = float(np.linalg.eigvalsh(_sym(w))[..., 0].min())
        if lam < 0:
            alpha = min(alpha, -1.0 / lam)
    return alpha


def _inv_spd(xs):
    out = []
    for x in xs:
        try:
            lo = np.linalg.cholesky(x)
            li = np.linalg.inv(lo)
            out.append(np.swapaxes(li, -1, -2) @ li)
        except np.linalg.LinAlgError:
            out.append(np.linalg.pinv(x, hermitian=True))
    return out


class _Schur:
    def __init__(self, mat):
        self.mat = mat
        scale = max(1.0, float(np.max(np.abs(np.diag(mat))))) if mat.size else 1.0
        try:
            self.factor = scipy.linalg.cho_factor(mat, lower=True, check_finite=False)
            self.lstsq = False
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            reg = mat + 1e-14 * scale * np.eye(mat.shape[0])
            try:
                self.factor = scipy.linalg.cho_factor(reg, lower=True, check_finite=False)
                self.lstsq = False
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
                self.lstsq = True

    def solve(self, rhs):
        if self.lstsq:
            return np.linalg.lstsq(self.mat, rhs, rcond=None)[0]
        return scipy.linalg.cho_solve(self.factor, rhs, check_finite=False)


def solve(groups: list[Group], b: np.ndarray, tol: float = 1e-10, max_iter: int = 200) -> IpmResult:
    m = b.shape[0]
    n_total = sum(g.C.shape[0] * g.n for g in groups)
    norm_b = float(np.linalg.norm(b))
    norm_c = float(np.sqrt(sum(np.sum(g.C**2) for g in groups)))

    xs, ss = [], []
    for g in groups:
        a_norm = np.sqrt(np.sum(g.A**2, axis=(2, 3)))  # (K, m)
        c_norm = np.sqrt(np.sum(g.C**2, axis=(1, 2)))  # (K,)
        xi = np.maximum(10.0, np.maximum(np.sqrt(g.n), g.n * np.max((1 + np.abs(b)) / (1 + a_norm), axis=1)))
        eta = np.maximum(10.0, np.maximum(np.sqrt(g.n), np.maximum(a_norm.max(axis=1), c_norm)))
        eye = np.eye(g.n)
        xs.append(xi[:, None, None] * eye)
        ss.append(eta[:, None, None] * eye)
    y = np.zeros(m)

    best = None
    best_score = np.inf
    gamma = 0.9
    status = "max_iter"
    stall = 0
    it = 0
    for it in range(max_iter + 1):
        rp = b - _aop(groups, xs)
        aty = _atop(groups, y)
        rd = [g.C - s - t for g, s, t in zip(groups, ss, aty)]
        pobj = _inner([g.C for g in groups], xs)
        dobj = float(b @ y)
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        pinf = float(np.linalg.norm(rp)) / (1.0 + norm_b)
        dinf = float(np.sqrt(sum(np.sum(r**2) for r in rd))) / (1.0 + norm_c)
        score = max(relgap, pinf, dinf)
        if score < best_score:
            best_score = score
            best = ([x.copy() for x in xs], y.copy(), [s.copy() for s in ss], relgap, pinf, dinf)
        if score <= tol:
            status = "converged"
            break
        if it == max_iter:
            break

        # infeasibility: normalised iterates approaching a ray
        if dobj > 0:
            cmr = np.sqrt(sum(np.sum((g.C - r) ** 2) for g, r in zip(groups, rd)))
            if cmr / dobj < tol and dobj > 1e6:
                status = "primal_infeasible"
                best = ([x.copy() for x in xs], y / dobj, [s.copy() for s in ss], relgap, pinf, dinf)
                break
        if pobj < 0:
            ax = _aop(groups, xs)
            if np.linalg.norm(ax) / -pobj < tol and -pobj > 1e6:
                status = "dual_infeasible"
                best = ([x / -pobj for x in xs], y.copy(), [s.copy() for s in ss], relgap, pinf, dinf)
                break

        mu = _inner(xs, ss) / n_total
        sinv = _inv_spd(ss)
        schur = np.zeros((m, m))
        for g, x, si in zip(groups, xs, sinv):
            t = x[:, None] @ g.A @ si[:, None]
            schur += np.einsum("kinp,kjnp->ij", t, g.A)
        schur = 0.5 * (schur + schur.T)
        fac = _Schur(schur)

        x_rd_sinv = [x @ r @ si for x, r, si in zip(xs, rd, sinv)]
        base = rp + _aop(groups, xs) + _aop(groups, x_rd_sinv)

        def direction(target):
            # target: sigma*mu*I - (corrector product), per group
            rhs = base - _aop(groups, [tg @ si for tg, si in zip(target, sinv)])
            dy = fac.solve(rhs)
            ds = [r - t for r, t in zip(rd, _atop(groups, dy))]
            dx = [_sym(tg @ si - x - x @ d @ si) for tg, si, x, d in zip(target, sinv, xs, ds)]
            return dx, dy, ds

        zero = [np.zeros_like(x) for x in xs]
        dx_a, dy_a, ds_a = direction(zero)
        ap = min(1.0, _max_step(xs, dx_a))
        ad = min(1.0, _max_step(ss, ds_a))
        mu_aff = _inner([x + ap * d for x, d in zip(xs, dx_a)], [s + ad * d for s, d in zip(ss, ds_a)]) / n_total
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3 if mu > 0 else 0.0
        eye_targets = [sigma * mu * np.broadcast_to(np.eye(x.shape[1]), x.shape) - dxa @ dsa
                       for x, dxa, dsa in zip(xs, dx_a, ds_a)]
        dx, dy, ds = direction(eye_targets)

        ap = min(1.0, gamma * _max_step(xs, dx))
        ad = min(1.0, gamma * _max_step(ss, ds))
        if ap < 1e-12 and ad < 1e-12:
            stall += 1
            if stall >= 3:
                status = "stalled"
                break
        else:
            stall = 0
        xs = [_sym(x + ap * d) for x, d in zip(xs, dx)]
        y = y + ad * dy
        ss = [_sym(s + ad * d) for s, d in zip(ss, ds)]
        gamma = 0.9 + 0.09 * min(ap, ad)

    bx, by, bs, relgap, pinf, dinf = best
    return IpmResult(status, bx, by, bs, it, relgap, pinf, dinf)
