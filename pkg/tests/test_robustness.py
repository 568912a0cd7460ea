import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_classical

from pmdkit import generators as G
from pmdkit import games, robustness as R
from pmdkit.devices import Pmd, apply_free_operation, mix_pmds
from pmdkit.jointmeas import check_simple

seeds = st.integers(min_value=0, max_value=2**32 - 1)
BB84_SIMPLE = (2 + np.sqrt(2)) / 4


def test_simple_pmd_has_zero_robustness():
    pmd, _ = G.random_simple_pmd(2, 2, 2, rng=0)
    res = R.primal(pmd)
    assert abs(res.value) < 1e-7
    value, witness = R.dual(pmd)
    assert abs(value) < 1e-7
    assert abs(witness.payoff(pmd) - 1) < 1e-7


def test_single_program_zero():
    pmd = Pmd(G.random_povm(2, 3, rng=1)[None])
    assert abs(R.primal(pmd).value) < 1e-7


def test_sharp_xz_primal_dual():
    pmd = G.sharp_xz()
    res = R.primal(pmd)
    value, _ = R.dual(pmd)
    assert res.value > 0.1
    assert abs(res.value - value) < 1e-7
    # witness game is BB84-like: payoff 1 against the simple optimum (2 + sqrt 2)/4
    assert abs(res.value - (1 / BB84_SIMPLE - 1)) < 1e-6


def test_noisy_xz_09_gap():
    pmd = G.noisy_mub(0.9)
    res = R.primal(pmd)
    value, _ = R.dual(pmd)
    assert abs(res.value - value) < 1e-7
    assert res.gap < 1e-7


def test_permutation_invariance():
    pmd = G.random_pmd(2, 2, 3, rng=2)
    base = R.dual(pmd)[0]
    assert abs(R.dual(pmd.relabel([1, 0]))[0] - base) < 1e-7
    assert abs(R.dual(pmd.relabel(None, [2, 0, 1]))[0] - base) < 1e-7


@pytest.mark.parametrize("seed", range(5))
def test_noisy_pmd_at_optimum_is_simple(seed):
    pmd = G.random_pmd(2, 2, 2, rng=seed, kind="projective")
    res = R.primal(pmd)
    noisy = res.noisy_pmd(pmd)
    assert check_simple(noisy).is_simple
    # noise is a PMD scaled by r
    assert np.abs(res.noise.sum(axis=1) - res.value * np.eye(2)).max() < 1e-7


@pytest.mark.parametrize("seed", range(6))
def test_witness_invariants(seed):
    rng = np.random.default_rng(seed)
    pmd = G.random_pmd(int(rng.integers(2, 4)), 2, 2, rng)
    _, witness = R.dual(pmd)
    assert witness.check() == []
    assert witness.cone_violation() >= -1e-7


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_zero_robustness_iff_simple(seed):
    pmd = G.random_pmd(2, 2, 2, rng=seed)
    r = R.primal(pmd).value
    res = check_simple(pmd)
    if res.is_simple:
        assert r <= 1e-6
    elif res.slack < -1e-5:
        assert r > 1e-7


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_monotone_under_free_operations(seed):
    rng = np.random.default_rng(seed)
    pmd = G.random_pmd(2, 2, 2, rng)
    op = G.random_free_operation(pmd, 2, 2, 2, rng)
    assert R.primal(apply_free_operation(op, pmd)).value <= R.primal(pmd).value + 1e-6


@settings(max_examples=10, deadline=None)
@given(seeds, st.floats(0, 1))
def test_quasi_convexity(seed, w):
    rng = np.random.default_rng(seed)
    a, b = G.random_pmd(2, 2, 2, rng), G.random_pmd(2, 2, 2, rng)
    mixed = R.primal(mix_pmds([w, 1 - w], [a, b])).value
    assert mixed <= max(R.primal(a).value, R.primal(b).value) + 1e-6


def test_constant_answer_witness_game():
    nx, na, d = 2, 2, 2
    omega = np.zeros((nx, na, d, d), dtype=complex)
    sigma = G.random_density(d, rng=3)
    omega[:, 1] = sigma / nx
    gamma = np.repeat(np.eye(d)[None] / (d * nx), nx, axis=0)
    game = R.witness_to_game(R.RobustnessWitness(gamma, omega, ("x0", "x1"), ("a0", "a1")))
    assert game.validate().ok
    for seed in range(3):
        pmd = G.random_pmd(d, 2, 3, rng=seed)
        assert abs(games.pguess_classical(pmd, game).value - 1) < 1e-12


def test_uniform_witness_game():
    nx, na, d = 2, 2, 2
    omega = np.broadcast_to(np.eye(d) / (2 * na * nx), (nx, na, d, d)).astype(complex)
    gamma = np.repeat(np.eye(d)[None] / (d * nx), nx, axis=0)
    game = R.witness_to_game(R.RobustnessWitness(gamma, omega, ("x0", "x1"), ("a0", "a1")))
    pmd = G.random_pmd(d, 2, 2, rng=4)
    value = games.pguess_classical(pmd, game).value
    assert abs(value - brute_force_classical(pmd, game)) < 1e-12
    assert abs(value - 0.5) < 1e-12


def test_degenerate_witness():
    gamma = np.repeat(np.eye(2)[None] / 4, 2, axis=0)
    w = R.RobustnessWitness(gamma, np.zeros((2, 2, 2, 2), dtype=complex), ("x0", "x1"), ("a0", "a1"))
    with pytest.raises(R.DegenerateWitness):
        R.witness_to_game(w)


def test_witness_ratio_simple():
    pmd, _ = G.random_simple_pmd(2, 2, 2, rng=5)
    rep = R.verify_theorem2(pmd)
    assert rep.passed
    assert abs(rep.ratio - 1) < 1e-5 and abs(rep.robustness) < 1e-7


def test_witness_ratio_noisy_08():
    rep = R.verify_theorem2(G.noisy_mub(0.8))
    assert rep.passed and rep.difference <= 1e-5


def test_witness_ratio_sharp_classical_saturates():
    rep = R.verify_theorem2(G.sharp_xz())
    assert rep.passed
    assert abs(rep.classical_ratio - (1 + rep.robustness)) < 1e-5
    assert abs(rep.denominator - BB84_SIMPLE) < 1e-6
