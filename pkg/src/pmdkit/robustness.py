"""Generalized robustness of a PMD and its witness game.

The robustness ``r(M)`` is the least ``r`` such that ``(M + r N)/(1 + r)`` is
simple for some PMD ``N``. Writing ``N' = r N`` it is the SDP::

    minimize  lambda
    s.t.      sum_{h: h(x)=a} G_h = M(a|x) + N'(a|x),   sum_a N'(a|x) = lambda 1,
              G_h >= 0, N'(a|x) >= 0.

Its dual maximizes ``sum Tr[M(a|x) w(a|x)] - 1`` over ``w(a|x) >= 0`` and
``gamma_x`` with ``sum_x Tr gamma_x = 1`` and ``sum_x gamma_x >= sum_x w(h(x)|x)``
for every response function ``h``. Only ``Gamma = sum_x gamma_x`` enters, so the
dual is solved for ``Gamma`` and split evenly over ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sdp
from .devices import DeviceError, Ensemble, GuessingGame, Pmd, require_valid_pmd
from .jointmeas import response_functions

WITNESS_TOL = 1e-7
RATIO_TOL = 1e-5


class DegenerateWitness(DeviceError):
    """The dual witness has (numerically) zero weight and cannot be normalized into a game."""


@dataclass
class RobustnessResult:
    value: float
    noise: np.ndarray  # N'(a|x), shape (X, A, d, d)
    parent: np.ndarray  # G_h, shape (H, d, d)
    functions: list
    dual_value: float
    gap: float
    solution: sdp.SdpSolution

    def noisy_pmd(self, pmd: Pmd) -> Pmd:
        """``(M + N')/(1 + r)``, the simple PMD reached by the optimal noise."""
        eff = (pmd.effects + self.noise) / (1.0 + self.value)
        return Pmd(eff, pmd.programs, pmd.outcomes)


@dataclass
class RobustnessWitness:
    gamma: np.ndarray  # gamma_x, shape (X, d, d)
    omega: np.ndarray  # w(a|x) stored as [x, a], shape (X, A, d, d)
    programs: tuple
    outcomes: tuple

    @property
    def normalization(self) -> float:
        return float(np.einsum("xaii->", self.omega).real)

    def payoff(self, pmd: Pmd) -> float:
        return float(np.einsum("xaij,xaji->", self.omega, pmd.effects).real)

    def cone_violation(self) -> float:
        """Most negative eigenvalue of ``sum_x gamma_x - sum_x w(h(x)|x)`` over all ``h`` (0 if none)."""
        nx, na = self.omega.shape[:2]
        total = self.gamma.sum(axis=0)
        worst = 0.0
        for h in response_functions(nx, na):
            k = total - sum(self.omega[x, a] for x, a in enumerate(h))
            worst = min(worst, float(np.linalg.eigvalsh(0.5 * (k + k.conj().T))[0]))
        return worst

    def check(self, tol: float = WITNESS_TOL) -> list[str]:
        problems = []
        tr = float(np.einsum("xii->", self.gamma).real)
        if abs(tr - 1.0) > 1e-8:
            problems.append(f"sum_x Tr gamma_x = {tr!r}")
        cone = self.cone_violation()
        if cone < -tol:
            problems.append(f"dual-cone violation {cone:.3e}")
        floor = min(float(np.linalg.eigvalsh(w)[0]) for w in self.omega.reshape(-1, *self.omega.shape[2:]))
        if floor < -1e-8:
            problems.append(f"omega has eigenvalue {floor:.3e}")
        return problems


def _require(sol: sdp.SdpSolution, what: str) -> None:
    if not sol.ok:
        raise sdp.SdpFailure(sol, what)


def primal(pmd: Pmd, opts: sdp.SolverOptions | None = None) -> RobustnessResult:
    require_valid_pmd(pmd)
    nx, na, d = pmd.n_programs, pmd.n_outcomes, pmd.dim
    funcs = response_functions(nx, na)
    ident = np.eye(d)

    prob = sdp.SdpProblem("minimize")
    g_names = [prob.add_block(f"G{k}", d) for k in range(len(funcs))]
    n_names = [[prob.add_block(f"N{x},{a}", d) for a in range(na)] for x in range(nx)]
    prob.add_block("lam", 1)
    prob.set_objective({"lam": 1.0})
    for x in range(nx):
        for a in range(na):
            terms = {g_names[k]: 1.0 for k, h in enumerate(funcs) if h[x] == a}
            terms[n_names[x][a]] = -1.0
            prob.add_matrix_equality(terms, pmd.effects[x, a], f"parent[{x},{a}]")
        prob.add_matrix_equality(
            {n_names[x][a]: 1.0 for a in range(na)}, np.zeros((d, d)), f"noise[{x}]", lifted={"lam": -ident}
        )
    sol = sdp.solve(prob, opts)
    _require(sol, "robustness primal")
    noise = np.array([[sol[n_names[x][a]] for a in range(na)] for x in range(nx)])
    parent = np.array([sol[n] for n in g_names])
    return RobustnessResult(
        value=float(sol["lam"][0, 0].real),
        noise=noise,
        parent=parent,
        functions=funcs,
        dual_value=sol.dual_value,
        gap=sol.gap,
        solution=sol,
    )


def dual(pmd: Pmd, opts: sdp.SolverOptions | None = None) -> tuple[float, RobustnessWitness]:
    require_valid_pmd(pmd)
    nx, na, d = pmd.n_programs, pmd.n_outcomes, pmd.dim
    funcs = response_functions(nx, na)

    prob = sdp.SdpProblem("maximize")
    prob.add_block("Gamma", d)
    w_names = [[prob.add_block(f"w{x},{a}", d) for a in range(na)] for x in range(nx)]
    s_names = [prob.add_block(f"S{k}", d) for k in range(len(funcs))]
    prob.set_objective({w_names[x][a]: pmd.effects[x, a] for x in range(nx) for a in range(na)})
    prob.add_constraint({"Gamma": 1.0}, 1.0, "trace")
    for k, h in enumerate(funcs):
        # S_h = Gamma - sum_x w(h(x)|x) >= 0
        terms = {s_names[k]: 1.0, "Gamma": -1.0}
        for x, a in enumerate(h):
            terms[w_names[x][a]] = 1.0
        prob.add_matrix_equality(terms, np.zeros((d, d)), f"cone[{k}]")
    sol = sdp.solve(prob, opts)
    _require(sol, "robustness dual")
    omega = np.array([[sol[w_names[x][a]] for a in range(na)] for x in range(nx)])
    gamma = np.repeat(sol["Gamma"][None] / nx, nx, axis=0)
    witness = RobustnessWitness(gamma, omega, pmd.programs, pmd.outcomes)
    return witness.payoff(pmd) - 1.0, witness


def robustness(pmd: Pmd, opts: sdp.SolverOptions | None = None) -> float:
    return primal(pmd, opts).value


def witness_to_game(witness: RobustnessWitness, tol: float = 1e-10) -> GuessingGame:
    """Ensemble ``rho_{x,a} = w(a|x)/s``; post-information is the program, the answer is the outcome."""
    s = witness.normalization
    if not s > tol:
        raise DegenerateWitness(f"witness normalization {s!r} is not positive")
    states = []
    for row in witness.omega:
        out = []
        for w in row:
            # clip solver-level negative eigenvalues so the game is a valid ensemble
            lam, vec = np.linalg.eigh(0.5 * (w + w.conj().T))
            out.append((vec * np.clip(lam, 0.0, None)) @ vec.conj().T)
        states.append(out)
    states = np.array(states)
    states /= np.einsum("xaii->", states).real
    return Ensemble(states, witness.programs, witness.outcomes)


@dataclass
class Theorem2Report:
    robustness: float
    numerator: float
    denominator: float
    ratio: float
    difference: float
    classical_ratio: float
    passed: bool
    game: GuessingGame

    def to_json(self) -> dict:
        return {
            "robustness": self.robustness,
            "one_plus_robustness": 1.0 + self.robustness,
            "numerator": self.numerator,
            "denominator": self.denominator,
            "ratio": self.ratio,
            "difference": self.difference,
            "classical_ratio": self.classical_ratio,
            "passed": self.passed,
        }


def verify_theorem2(pmd: Pmd, tol: float = RATIO_TOL, opts: sdp.SolverOptions | None = None) -> Theorem2Report:
    """Check that the witness game's advantage ratio equals ``1 + r(M)``.

    The numerator is the direct payoff ``sum Tr[M(a|x) rho_{x,a}]``; the
    denominator is the best value any simple PMD attains on the same game.
    """
    from . import games

    r, witness = dual(pmd, opts)
    game = witness_to_game(witness)
    num = float(np.einsum("xaij,xaji->", game.states, pmd.effects).real)
    den = games.pguess_simple(game, opts=opts).value
    classical = games.pguess_classical(pmd, game).value
    ratio = num / den
    diff = abs(ratio - (1.0 + r))
    return Theorem2Report(r, num, den, ratio, diff, classical / den, diff <= tol, game)
