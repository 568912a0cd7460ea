"""Convertibility of PMDs under free operations.

* :func:`convertibility_lp` decides conversion by classical processing
  (shared randomness, program choice, outcome relabeling) exactly with an LP;
  infeasibility yields a guessing game on which the target beats every
  classical processing of the source.
* :func:`simple_interconvert` builds the measure-and-prepare protocol that turns
  any PMD into any simple PMD.
* :func:`refute_by_game_search` looks for guessing games separating the two
  devices when quantum pre-processing is allowed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import games
from .devices import (
    DeviceError,
    Ensemble,
    FreeOperation,
    GuessingGame,
    Pmd,
    SimpleDecomposition,
    apply_free_operation,
    classical_operation,
    require_valid_pmd,
)
from .generators import as_rng, random_ensemble
from .jointmeas import ParentSizeError, check_simple
from .operators import from_coords, measure_and_prepare, to_coords

CONVERT_TOL = 1e-6
MARGIN_TOL = 1e-7
LP_TOL = 1e-9
MAX_STRATEGIES = 10**6

CONVERTIBLE = "convertible"
NOT_CONVERTIBLE_CLASSICAL = "not_convertible_classical"
UNDECIDED = "undecided"


class ConversionSizeError(DeviceError):
    """Deterministic-strategy enumeration would exceed the guard."""


@dataclass
class ConversionCertificate:
    verdict: str
    protocol: FreeOperation | None = None
    witness_game: GuessingGame | None = None
    margins: dict = field(default_factory=dict)

    @property
    def convertible(self) -> bool:
        return self.verdict == CONVERTIBLE


def strategy_count(src: Pmd, dst: Pmd) -> int:
    nx, na = src.n_programs, src.n_outcomes
    ny, nb = dst.n_programs, dst.n_outcomes
    return nx**ny * nb ** (na * ny)


def _local_strategies(nx: int, na: int, nb: int):
    """All ``(x, g)`` with ``g: A -> B``: what a deterministic strategy does for one target program."""
    return [(x, g) for x in range(nx) for g in itertools.product(range(nb), repeat=na)]


def _candidate(src: Pmd, x: int, g, nb: int) -> np.ndarray:
    out = np.zeros((nb, src.dim, src.dim), dtype=complex)
    for a, b in enumerate(g):
        out[b] += src.effects[x, a]
    return out


def _couple(weights_per_y, tol: float = 1e-12):
    """Joint distribution over tuples of local choices whose marginals are the per-program mixtures.

    Uses the quantile coupling: every program's cumulative distribution is
    laid on [0, 1] and the union of breakpoints defines the shared randomness.
    """
    cuts = {0.0, 1.0}
    cums = []
    for w in weights_per_y:
        c = np.cumsum(w)
        c /= c[-1]
        cums.append(c)
        cuts.update(c.tolist())
    cuts = sorted(cuts)
    out = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi - lo <= tol:
            continue
        mid = 0.5 * (lo + hi)
        out.append((hi - lo, [int(np.searchsorted(c, mid)) for c in cums]))
    return out


def convertibility_lp(src: Pmd, dst: Pmd, tol: float = LP_TOL) -> ConversionCertificate:
    """Exact decision for classical processing on equal dimensions."""
    require_valid_pmd(src)
    require_valid_pmd(dst)
    if src.dim != dst.dim:
        raise DeviceError(f"classical processing needs equal dimensions, got {src.dim} and {dst.dim}")
    count = strategy_count(src, dst)
    if count > MAX_STRATEGIES:
        raise ConversionSizeError(f"{count} deterministic strategies exceeds the guard of {MAX_STRATEGIES}")

    nx, na = src.n_programs, src.n_outcomes
    ny, nb = dst.n_programs, dst.n_outcomes
    d2 = src.dim**2
    local = _local_strategies(nx, na, nb)
    n_loc = len(local)
    cand = np.array([to_coords(_candidate(src, x, g, nb)).reshape(-1) for x, g in local]).T  # (nb*d2, n_loc)
    rows_y = nb * d2

    # variables: lambda (ny * n_loc), e+ and e- (ny * rows_y each)
    n_lam = ny * n_loc
    n_err = ny * rows_y
    a_eq = np.zeros((ny * rows_y + ny, n_lam + 2 * n_err))
    b_eq = np.zeros(ny * rows_y + ny)
    for y in range(ny):
        r0 = y * rows_y
        a_eq[r0 : r0 + rows_y, y * n_loc : (y + 1) * n_loc] = cand
        a_eq[r0 : r0 + rows_y, n_lam + r0 : n_lam + r0 + rows_y] = np.eye(rows_y)
        a_eq[r0 : r0 + rows_y, n_lam + n_err + r0 : n_lam + n_err + r0 + rows_y] = -np.eye(rows_y)
        b_eq[r0 : r0 + rows_y] = to_coords(dst.effects[y]).reshape(-1)
        a_eq[ny * rows_y + y, y * n_loc : (y + 1) * n_loc] = 1.0
        b_eq[ny * rows_y + y] = 1.0
    cost = np.concatenate([np.zeros(n_lam), np.ones(2 * n_err)])
    res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"convertibility LP failed: {res.message}")
    error = float(res.fun)

    if error <= tol:
        lam = np.clip(res.x[:n_lam].reshape(ny, n_loc), 0.0, None)
        coupled = _couple(list(lam))
        weights = np.array([w for w, _ in coupled])
        strategies = []
        for _, choice in coupled:
            f = [local[choice[y]][0] for y in range(ny)]
            g = np.array([[local[choice[y]][1][a] for y in range(ny)] for a in range(na)])
            strategies.append((f, g))
        op = classical_operation(src.dim, weights / weights.sum(), strategies, (nx, na), dst.programs, dst.outcomes)
        reproduced = apply_free_operation(op, src)
        dist = reproduced.distance(dst)
        verdict = CONVERTIBLE if dist <= CONVERT_TOL else UNDECIDED
        return ConversionCertificate(verdict, protocol=op, margins={"lp_error": error, "reproduction_error": dist})

    marg = res.eqlin.marginals[: ny * rows_y].reshape(ny, nb, d2)
    game = farkas_game(from_coords(marg))
    payoff = float(np.einsum("ybij,ybji->", game.states, dst.effects).real)
    bound = games.pguess_classical(src, game).value
    margin = payoff - bound
    verdict = NOT_CONVERTIBLE_CLASSICAL if margin > MARGIN_TOL else UNDECIDED
    return ConversionCertificate(
        verdict, witness_game=game, margins={"lp_error": error, "payoff": payoff, "classical_bound": bound, "margin": margin}
    )


def farkas_game(y_ops: np.ndarray) -> GuessingGame:
    """Shift ``Y_{b,y}`` by ``C = (max |eig| + 1) 1`` and normalize into an ensemble ``rho_{y,b}``.

    Adding the same ``C`` to every ``b`` changes every strategy's payoff by
    ``Tr C``, so the separation is preserved.
    """
    d = y_ops.shape[-1]
    spread = max(float(np.max(np.abs(np.linalg.eigvalsh(y)))) for y in y_ops.reshape(-1, d, d))
    shifted = y_ops + (spread + 1.0) * np.eye(d)
    shifted /= np.einsum("ybii->", shifted).real
    return Ensemble(shifted)


def simple_interconvert(src_dec: SimpleDecomposition, dst_dec: SimpleDecomposition) -> FreeOperation:
    """Protocol turning the source's PMD into the target's simple PMD.

    The instrument discards the input after measuring the target's mother POVM
    (outcome ``i``) and prepares the maximally mixed state for the source. The
    source is queried with a fixed program, its outcome is ignored, and the
    answer is drawn from ``p(b|i,y)``.
    """
    for name, dec in (("source", src_dec), ("target", dst_dec)):
        dec.validate().raise_if_invalid(f"{name} decomposition")
    src = src_dec.reconstruct()
    d_src = src.dim
    tau = np.eye(d_src) / d_src
    mother = dst_dec.mother.effects
    n_i = mother.shape[0]
    ny, nb = dst_dec.post.shape[1:]
    nx, na = src.n_programs, src.n_outcomes
    instrument = [measure_and_prepare(e, tau) for e in mother]
    pre = np.zeros((1, n_i, ny, nx))
    pre[..., 0] = 1.0
    post = np.broadcast_to(
        dst_dec.post[None, :, :, None, None, :], (1, n_i, ny, nx, na, nb)
    ).copy()
    return FreeOperation([1.0], [instrument], pre, post, dst_dec.programs, dst_dec.outcomes)


def _payoff(pmd: Pmd, game: GuessingGame) -> float:
    return float(np.einsum("ybij,ybji->", game.states, pmd.effects).real)


def refute_by_game_search(
    src: Pmd, dst: Pmd, restarts: int = 10, seed=None, seesaw_restarts: int = 2
) -> ConversionCertificate:
    """Search guessing games (post-information = target program, answer = target outcome) separating ``dst`` from ``src``.

    Candidate games come from the classical LP's Farkas witness, the target's
    robustness witness and random ensembles. A candidate is scored against
    the exact classical optimum of the source when dimensions agree.

    Verdicts: ``convertible`` if the classical LP finds a protocol;
    ``not_convertible_classical`` if some game beats every classical
    processing of the source; ``undecided`` otherwise. The margins dictionary
    also reports the margin over the best simple PMD when the source is simple
    (``simple_margin``; that bound covers every free operation) and over the
    see-saw lower bound (``seesaw_margin``, not a certificate).
    """
    from . import robustness

    require_valid_pmd(src)
    require_valid_pmd(dst)
    rng = as_rng(seed)
    same_dim = src.dim == dst.dim
    candidates: list[tuple[str, GuessingGame]] = []
    margins: dict = {}

    if same_dim:
        try:
            cert = convertibility_lp(src, dst)
        except ConversionSizeError:
            cert = None
        if cert is not None:
            if cert.verdict == CONVERTIBLE:
                return cert
            if cert.witness_game is not None:
                candidates.append(("farkas", cert.witness_game))
            margins["lp_error"] = cert.margins.get("lp_error")

    try:
        if not check_simple(dst).is_simple:
            _, witness = robustness.dual(dst)
            candidates.append(("robustness", robustness.witness_to_game(witness)))
    except ParentSizeError:
        pass
    for _ in range(restarts):
        candidates.append(("random", random_ensemble(dst.dim, dst.n_programs, dst.n_outcomes, rng)))

    try:
        src_simple = check_simple(src).is_simple
    except ParentSizeError:
        src_simple = False

    best = None
    for origin, game in candidates:
        payoff = _payoff(dst, game)
        entry = {"origin": origin, "payoff": payoff}
        if same_dim:
            entry["classical_margin"] = payoff - games.pguess_classical(src, game).value
        if src_simple:
            try:
                entry["simple_margin"] = payoff - games.pguess_simple(game).value
            except ParentSizeError:
                pass
        key = entry.get("classical_margin", entry.get("simple_margin", -np.inf))
        if best is None or key > best[0]:
            best = (key, entry, game)

    _, entry, game = best
    if not same_dim or entry.get("classical_margin", -np.inf) <= MARGIN_TOL:
        # no exact source-side bound separates: fall back to the see-saw lower bound
        sw = games.pguess_seesaw(src, game, restarts=seesaw_restarts, seed=rng)
        entry["seesaw_margin"] = entry["payoff"] - sw.value
    margins.update(entry)
    if entry.get("classical_margin", -np.inf) > MARGIN_TOL:
        verdict = NOT_CONVERTIBLE_CLASSICAL
    else:
        verdict = UNDECIDED
    margins["general_refutation"] = bool(entry.get("simple_margin", -np.inf) > MARGIN_TOL)
    return ConversionCertificate(verdict, witness_game=game, margins=margins)
