import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pmdkit import convert as C
from pmdkit import generators as G
from pmdkit import games
from pmdkit.devices import (
    DeviceError,
    Pmd,
    Povm,
    SimpleDecomposition,
    apply_free_operation,
    classical_operation,
    compose_operations,
    trivial_pmd,
    validate_free_operation,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _random_classical_target(src, ny, nb, n_mix, rng):
    strategies = []
    for _ in range(n_mix):
        f = rng.integers(src.n_programs, size=ny)
        g = rng.integers(nb, size=(src.n_outcomes, ny))
        strategies.append((list(f), g))
    w = rng.dirichlet(np.ones(n_mix))
    op = classical_operation(src.dim, w, strategies, (src.n_programs, src.n_outcomes), None, [f"b{k}" for k in range(nb)])
    return apply_free_operation(op, src)


def test_identity_conversion():
    pmd = G.random_pmd(2, 2, 2, rng=0)
    cert = C.convertibility_lp(pmd, pmd)
    assert cert.verdict == C.CONVERTIBLE
    assert apply_free_operation(cert.protocol, pmd).allclose(pmd, 1e-6)


def test_program_swap():
    xz = G.sharp_xz()
    cert = C.convertibility_lp(xz, xz.relabel([1, 0]))
    assert cert.verdict == C.CONVERTIBLE


def test_trivial_to_sharp_refuted():
    triv = Pmd(np.eye(2, dtype=complex)[None, None])
    xz = G.sharp_xz()
    cert = C.convertibility_lp(triv, xz)
    assert cert.verdict == C.NOT_CONVERTIBLE_CLASSICAL
    game = cert.witness_game
    assert game.validate().ok
    payoff = np.einsum("ybij,ybji->", game.states, xz.effects).real
    assert payoff - games.pguess_classical(triv, game).value > 1e-7


def test_dimension_mismatch():
    with pytest.raises(DeviceError):
        C.convertibility_lp(G.sharp_xz(), G.noisy_mub(1.0, 3))


def test_strategy_guard():
    src = G.random_pmd(2, 4, 4, rng=0)
    dst = G.random_pmd(2, 6, 4, rng=1)
    assert C.strategy_count(src, dst) > C.MAX_STRATEGIES
    with pytest.raises(C.ConversionSizeError):
        C.convertibility_lp(src, dst)


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_lp_recovers_classical_mixtures(seed):
    rng = np.random.default_rng(seed)
    src = G.random_pmd(2, 2, 2, rng)
    dst = _random_classical_target(src, int(rng.integers(1, 4)), int(rng.integers(2, 4)), 3, rng)
    cert = C.convertibility_lp(src, dst)
    assert cert.verdict == C.CONVERTIBLE
    assert validate_free_operation(cert.protocol).ok
    assert apply_free_operation(cert.protocol, src).distance(dst) <= 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_simple_to_incompatible_refuted(seed):
    rng = np.random.default_rng(seed)
    src, _ = G.random_simple_pmd(2, 2, 2, rng=rng)
    dst = G.noisy_mub(rng.uniform(0.75, 1.0))
    cert = C.convertibility_lp(src, dst)
    assert cert.verdict == C.NOT_CONVERTIBLE_CLASSICAL
    assert cert.margins["margin"] > 1e-7


def test_couple_marginals():
    w = [np.array([0.2, 0.8]), np.array([0.5, 0.25, 0.25])]
    joint = C._couple(w)
    assert abs(sum(p for p, _ in joint) - 1) < 1e-12
    for y, wy in enumerate(w):
        marg = np.zeros(len(wy))
        for p, choice in joint:
            marg[choice[y]] += p
        assert np.abs(marg - wy).max() < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_simple_interconvert_both_directions(seed):
    rng = np.random.default_rng(seed)
    a, da = G.random_simple_pmd(2, 2, 2, rng=rng)
    b, db = G.random_simple_pmd(3, 3, 2, rng=rng)
    for src, ds, dst, dd in ((a, da, b, db), (b, db, a, da)):
        op = C.simple_interconvert(ds, dd)
        assert validate_free_operation(op).ok
        assert apply_free_operation(op, src).distance(dst) <= 1e-6


def test_simple_interconvert_round_trip_and_discard():
    a, da = G.random_simple_pmd(2, 2, 3, rng=3)
    assert apply_free_operation(C.simple_interconvert(da, da), a).distance(a) <= 1e-12
    triv = trivial_pmd(2)
    dt = SimpleDecomposition(Povm(np.eye(2, dtype=complex)[None]), np.ones((1, 1, 1)))
    assert apply_free_operation(C.simple_interconvert(da, dt), a).distance(triv) <= 1e-12
    # trivial source on a qubit, random simple qutrit target
    c, dc = G.random_simple_pmd(3, 2, 2, rng=4)
    assert apply_free_operation(C.simple_interconvert(dt, dc), triv).distance(c) <= 1e-6


def test_simple_interconvert_rejects_invalid():
    a, da = G.random_simple_pmd(2, 2, 2, rng=5)
    bad = SimpleDecomposition(da.mother, da.post * 2)
    with pytest.raises(DeviceError):
        C.simple_interconvert(da, bad)


def test_transitivity_of_found_protocols():
    rng = np.random.default_rng(6)
    m = G.random_pmd(2, 2, 2, rng)
    n = _random_classical_target(m, 2, 2, 2, rng)
    p = _random_classical_target(n, 2, 2, 2, rng)
    c1, c2 = C.convertibility_lp(m, n), C.convertibility_lp(n, p)
    assert c1.convertible and c2.convertible
    comp = compose_operations(c2.protocol, c1.protocol)
    assert apply_free_operation(comp, m).distance(p) <= 1e-6


def test_refute_finds_nothing_for_processed_target():
    rng = np.random.default_rng(7)
    src = G.random_pmd(2, 2, 2, rng)
    op = G.random_free_operation(src, 2, 2, 2, rng)
    dst = apply_free_operation(op, src)
    cert = C.refute_by_game_search(src, dst, restarts=5, seed=1)
    game = cert.witness_game
    payoff = np.einsum("ybij,ybji->", game.states, dst.effects).real
    # the known protocol is a strategy for src, so no game can separate
    reachable = games.pguess_seesaw(src, game, restarts=0, seeds=[games.merged_instrument(op)]).value
    assert payoff <= reachable + 1e-6


def test_refute_simple_to_incompatible():
    src, _ = G.random_simple_pmd(2, 2, 2, rng=8)
    cert = C.refute_by_game_search(src, G.noisy_mub(0.9), restarts=3, seed=2)
    assert cert.verdict == C.NOT_CONVERTIBLE_CLASSICAL
    assert cert.margins["simple_margin"] > 1e-7
    assert cert.margins["general_refutation"]


def test_refute_across_dimensions_is_undecided_but_general():
    src, _ = G.random_simple_pmd(3, 2, 2, rng=9)
    cert = C.refute_by_game_search(src, G.noisy_mub(0.9), restarts=2, seed=3)
    assert cert.verdict == C.UNDECIDED
    assert cert.margins["general_refutation"]


def test_refute_between_simple_pmds_finds_no_margin():
    a, da = G.random_simple_pmd(2, 2, 2, rng=10)
    b, db = G.random_simple_pmd(2, 2, 2, rng=11)
    cert = C.refute_by_game_search(a, b, restarts=4, seed=4)
    assert cert.margins.get("simple_margin", 0.0) <= 1e-7
    assert apply_free_operation(C.simple_interconvert(da, db), a).distance(b) <= 1e-6
