"""Guessing games with post-information.

A game is an ensemble ``rho_{w,z}``: a state is sent, the player measures,
and only afterwards learns ``w`` and must guess ``z``. Three evaluators:

* :func:`pguess_classical` - exact optimum for a fixed PMD when the only
  processing is classical (choose the program from ``w``, map outcome to guess);
* :func:`pguess_simple` - optimum over all simple PMDs, i.e. a single
  measurement followed by relabeling that may depend on ``w``;
* :func:`pguess_seesaw` - heuristic lower bound allowing a quantum instrument
  before the PMD.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import sdp
from .devices import DeviceError, FreeOperation, GuessingGame, Pmd
from .generators import as_rng, random_ensemble, random_instrument
from .jointmeas import MAX_RESPONSE_FUNCTIONS, ParentSizeError, check_simple
from .operators import ChoiMap, choi_from_kraus, hermitian_basis, ket

ADVANTAGE_TOL = 1e-7


@dataclass
class StrategyValue:
    """Optimal (or best found) value of a game together with the strategy attaining it.

    For classical strategies ``program_map[w]`` is the program and
    ``answer_map[a, w]`` the guess. For the simple benchmark ``povm`` holds the
    function-indexed POVM ``T_f`` and ``functions`` the maps ``f: W -> Z``. For
    the see-saw ``instrument`` holds Choi maps and the classical maps gain an
    instrument-outcome axis: ``program_map[w, i]``, ``answer_map[w, i, a]``.
    """

    value: float
    program_map: np.ndarray | None = None
    answer_map: np.ndarray | None = None
    povm: np.ndarray | None = None
    functions: list | None = None
    instrument: list | None = None
    lower_bound: bool = False
    converged: bool = True
    history: list = field(default_factory=list)

    def to_json(self) -> dict:
        out: dict = {"value": self.value, "lower_bound": self.lower_bound}
        if self.program_map is not None:
            out["program_map"] = np.asarray(self.program_map).tolist()
        if self.answer_map is not None:
            out["answer_map"] = np.asarray(self.answer_map).tolist()
        if self.functions is not None:
            out["functions"] = [list(f) for f in self.functions]
        if self.instrument is not None:
            out["instrument_outcomes"] = len(self.instrument)
            out["converged"] = self.converged
            out["history"] = list(self.history)
        return out


def _check_dims(pmd: Pmd, game: GuessingGame) -> None:
    if pmd.dim != game.dim:
        raise DeviceError(f"game dimension {game.dim} does not match PMD dimension {pmd.dim}")


def payoff_table(pmd: Pmd, game: GuessingGame) -> np.ndarray:
    """``p[w, z, x, a] = Tr[rho_{w,z} M(a|x)]``."""
    _check_dims(pmd, game)
    return np.einsum("wzij,xaji->wzxa", game.states, pmd.effects).real


def evaluate_classical(pmd: Pmd, game: GuessingGame, program_map, answer_map) -> float:
    """Payoff of the deterministic strategy ``x = f(w)``, ``z = g(a, w)``."""
    p = payoff_table(pmd, game)
    f = np.asarray(program_map)
    g = np.asarray(answer_map)
    total = 0.0
    for w in range(game.n_post_info):
        for a in range(pmd.n_outcomes):
            total += p[w, g[a, w], f[w], a]
    return float(total)


def pguess_classical(pmd: Pmd, game: GuessingGame) -> StrategyValue:
    """Exact optimum over classical pre- and post-processing.

    The payoff is affine in each stochastic table, so deterministic strategies
    suffice: ``sum_w max_x sum_a max_z Tr[rho_{w,z} M(a|x)]``.
    """
    p = payoff_table(pmd, game)  # w z x a
    best_z = p.argmax(axis=1)  # w x a
    per_x = p.max(axis=1).sum(axis=2)  # w x
    f = per_x.argmax(axis=1)
    g = np.array([[best_z[w, f[w], a] for w in range(game.n_post_info)] for a in range(pmd.n_outcomes)])
    value = evaluate_classical(pmd, game, f, g)
    return StrategyValue(value, program_map=f, answer_map=g)


def pguess_simple(game: GuessingGame, limit: int = MAX_RESPONSE_FUNCTIONS, opts: sdp.SolverOptions | None = None) -> StrategyValue:
    """Best value over all simple PMDs: ``max sum_f Tr[T_f sigma_f]`` with ``sigma_f = sum_w rho_{w,f(w)}``."""
    nw, nz, d = game.n_post_info, game.n_answers, game.dim
    count = nz**nw
    if count > limit:
        raise ParentSizeError(f"{nz}^{nw} = {count} guessing functions exceeds the guard of {limit}")
    funcs = list(itertools.product(range(nz), repeat=nw))
    sigma = np.array([sum(game.states[w, z] for w, z in enumerate(f)) for f in funcs])

    prob = sdp.SdpProblem("maximize")
    names = [prob.add_block(f"T{k}", d) for k in range(len(funcs))]
    prob.set_objective(dict(zip(names, sigma)))
    prob.add_matrix_equality({n: 1.0 for n in names}, np.eye(d), "completeness")
    sol = sdp.solve(prob, opts)
    if not sol.ok:
        raise sdp.SdpFailure(sol, "simple guessing SDP")
    povm = np.array([sol[n] for n in names])
    value = float(np.einsum("fij,fji->", povm, sigma).real)
    return StrategyValue(value, povm=povm, functions=funcs)


# ---------------------------------------------------------------------------
# see-saw over quantum pre-processing


def _instrument_tensor(instrument) -> np.ndarray:
    return np.array([c.choi for c in instrument])


def _seesaw_values(choi: np.ndarray, game: GuessingGame, pmd: Pmd) -> np.ndarray:
    """``v[w, i, x, a, z] = Tr[J_i (rho_{w,z}^T (x) M(a|x))]``."""
    dr, dq = game.dim, pmd.dim
    j4 = choi.reshape(-1, dr, dq, dr, dq)
    # Tr[J (A^T (x) B)] = sum J[j,m,k,n] A[j,k] B[n,m]
    return np.einsum("ijmkn,wzjk,xanm->wixaz", j4, game.states, pmd.effects).real


def _classical_step(v: np.ndarray):
    best_z = v.argmax(axis=4)  # w i x a
    per_x = v.max(axis=4).sum(axis=3)  # w i x
    f = per_x.argmax(axis=2)  # w i
    w_idx, i_idx = np.indices(f.shape)
    g = best_z[w_idx, i_idx, f]  # w i a
    value = float(per_x[w_idx, i_idx, f].sum())
    return value, f, g


def _instrument_step(f, g, game: GuessingGame, pmd: Pmd, n_out: int, opts) -> np.ndarray | None:
    dr, dq = game.dim, pmd.dim
    n = dr * dq
    prob = sdp.SdpProblem("maximize")
    names = [prob.add_block(f"J{i}", n) for i in range(n_out)]
    objective = {}
    for i, name in enumerate(names):
        k = np.zeros((n, n), dtype=complex)
        for w in range(game.n_post_info):
            x = f[w, i]
            for a in range(pmd.n_outcomes):
                k += np.kron(game.states[w, g[w, i, a]].T, pmd.effects[x, a])
        objective[name] = k
    prob.set_objective(objective)
    # sum_i Tr_out J_i = 1, imposed along an orthonormal Hermitian basis
    eye_q = np.eye(dq)
    target = np.eye(dr)
    for j, e in enumerate(hermitian_basis(dr)):
        coef = np.kron(e, eye_q)
        prob.add_constraint({name: coef for name in names}, float(np.einsum("ij,ji->", e, target).real), f"tp[{j}]")
    sol = sdp.solve(prob, opts)
    if sol.status in (sdp.SdpStatus.INFEASIBLE, sdp.SdpStatus.UNBOUNDED) or not sol.blocks:
        return None
    return np.array([sol[n] for n in names])


def _repair_trace_preserving(choi: np.ndarray, dr: int, dq: int) -> np.ndarray:
    """Congruence ``J -> (A (x) 1) J (A (x) 1)^+`` with ``A = T^{-1/2}`` so that ``sum_i Tr_out J_i = 1`` exactly."""
    choi = 0.5 * (choi + np.swapaxes(choi.conj(), -1, -2))
    lam, vec = np.linalg.eigh(choi)
    choi = np.einsum("ijk,ik,ilk->ijl", vec, np.clip(lam, 0.0, None), vec.conj())
    j4 = choi.reshape(-1, dr, dq, dr, dq)
    t = np.einsum("ijmkm->jk", j4)
    w, v = np.linalg.eigh(0.5 * (t + t.conj().T))
    a = (v * np.clip(w, 1e-300, None) ** -0.5) @ v.conj().T
    j4 = np.einsum("jp,ipmqn,kq->ijmkn", a, j4, a.conj())
    return j4.reshape(choi.shape)


def identity_seed(in_dim: int, out_dim: int, n_outcomes: int) -> list[ChoiMap]:
    """Instrument that passes the state through on outcome 0 (embedding or truncating as needed).

    When ``in_dim > out_dim`` the basis states that do not fit are sent to
    ``|0>`` on outcome 1, which requires ``n_outcomes >= 2``.
    """
    zero = [np.zeros((out_dim, in_dim), dtype=complex)]
    if in_dim <= out_dim:
        kraus = [[np.eye(out_dim, in_dim, dtype=complex)]] + [zero] * (n_outcomes - 1)
    else:
        if n_outcomes < 2:
            raise ValueError("truncating identity seed needs at least two instrument outcomes")
        keep = np.eye(out_dim, in_dim, dtype=complex)
        rest = [np.outer(ket(0, out_dim), ket(j, in_dim)) for j in range(out_dim, in_dim)]
        kraus = [[keep], rest] + [zero] * (n_outcomes - 2)
    return [choi_from_kraus(k, in_dim) for k in kraus]


def merged_instrument(op: FreeOperation) -> list[ChoiMap]:
    """Fold shared randomness into the instrument: outcome ``(r, i)`` has Choi ``mu_r J_{r,i}``."""
    out = []
    for r, inst in enumerate(op.instruments):
        for c in inst:
            out.append(ChoiMap(c.in_dim, c.out_dim, op.mu[r] * c.choi))
    return out


def pguess_seesaw(
    pmd: Pmd,
    game: GuessingGame,
    instrument_outcomes: int | None = None,
    restarts: int = 3,
    seed=None,
    seeds: list | None = None,
    max_iter: int = 50,
    tol: float = 1e-9,
    opts: sdp.SolverOptions | None = None,
) -> StrategyValue:
    """Lower bound on the guessing probability with quantum pre-processing.

    Alternates an exact classical-strategy step with an SDP over instrument
    Choi blocks. Restarts: the identity/embedding seed, any ``seeds`` given
    (lists of :class:`ChoiMap`), then ``restarts`` random instruments. The
    instrument outcome count defaults to ``|X| * |Z|``.
    """
    dr, dq = game.dim, pmd.dim
    n_out = instrument_outcomes or pmd.n_programs * game.n_answers
    rng = as_rng(seed)
    starts = []
    if dr <= dq or n_out >= 2:
        starts.append(identity_seed(dr, dq, max(n_out, 1 if dr <= dq else 2)))
    starts.extend(seeds or [])
    for _ in range(restarts):
        starts.append(random_instrument(dr, dq, n_out, rng))

    best: StrategyValue | None = None
    for start in starts:
        res = _seesaw_run(_instrument_tensor(start), game, pmd, max_iter, tol, opts)
        if best is None or res.value > best.value:
            best = res
    return best


def _seesaw_run(choi, game, pmd, max_iter, tol, opts) -> StrategyValue:
    dr, dq = game.dim, pmd.dim
    n_out = choi.shape[0]
    value, f, g = _classical_step(_seesaw_values(choi, game, pmd))
    best = (value, choi, f, g)
    history = [value]
    converged = False
    for _ in range(max_iter):
        new = _instrument_step(best[2], best[3], game, pmd, n_out, opts)
        if new is None:
            break
        new = _repair_trace_preserving(new, dr, dq)
        value, f, g = _classical_step(_seesaw_values(new, game, pmd))
        improved = value - best[0]
        if improved > 0:
            best = (value, new, f, g)
        history.append(best[0])
        if improved <= tol:
            converged = True
            break
    value, choi, f, g = best
    inst = [ChoiMap(dr, dq, c) for c in choi]
    return StrategyValue(
        value, program_map=f, answer_map=g, instrument=inst, lower_bound=True, converged=converged, history=history
    )


def evaluate_seesaw(pmd: Pmd, game: GuessingGame, strategy: StrategyValue) -> float:
    """Re-evaluate a see-saw strategy from its instrument and classical maps."""
    v = _seesaw_values(_instrument_tensor(strategy.instrument), game, pmd)
    f, g = strategy.program_map, strategy.answer_map
    total = 0.0
    for w in range(game.n_post_info):
        for i in range(len(strategy.instrument)):
            for a in range(pmd.n_outcomes):
                total += v[w, i, f[w, i], a, g[w, i, a]]
    return float(total)


# ---------------------------------------------------------------------------
# incompatibility witnessing


@dataclass
class WitnessOutcome:
    is_simple: bool
    passed: bool
    margin: float  # incompatible: payoff - benchmark; simple: -(max excess)
    payoff: float | None = None
    benchmark: float | None = None
    game: GuessingGame | None = None
    max_excess: float | None = None
    n_games: int = 0

    def to_json(self) -> dict:
        return {
            "is_simple": self.is_simple,
            "passed": self.passed,
            "margin": self.margin,
            "payoff": self.payoff,
            "benchmark": self.benchmark,
            "max_excess": self.max_excess,
            "n_games": self.n_games,
        }


def incompatibility_witness_check(
    pmd: Pmd, n_games: int = 50, seed=None, tol: float = ADVANTAGE_TOL, opts: sdp.SolverOptions | None = None
) -> WitnessOutcome:
    """Confirm the game-theoretic signature of (in)compatibility.

    Incompatible: the robustness witness game gives a strict advantage over
    every simple PMD. Simple: no sampled game gives any advantage.
    """
    from . import robustness

    if not check_simple(pmd, opts=opts).is_simple:
        _, witness = robustness.dual(pmd, opts)
        game = robustness.witness_to_game(witness)
        payoff = float(np.einsum("xaij,xaji->", game.states, pmd.effects).real)
        bench = pguess_simple(game, opts=opts).value
        margin = payoff - bench
        return WitnessOutcome(False, margin >= tol, margin, payoff, bench, game)

    rng = as_rng(seed)
    worst = -np.inf
    worst_game = None
    for _ in range(n_games):
        game = random_ensemble(pmd.dim, pmd.n_programs, pmd.n_outcomes, rng)
        excess = pguess_classical(pmd, game).value - pguess_simple(game, opts=opts).value
        if excess > worst:
            worst, worst_game = excess, game
    return WitnessOutcome(True, worst <= tol, -worst, game=worst_game, max_excess=worst, n_games=n_games)
