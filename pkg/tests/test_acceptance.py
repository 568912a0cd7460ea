"""Acceptance checks, one per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
"""

import contextlib
import io
import json
import sys
import tempfile
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from oracles import bb84_parent_search  # noqa: E402

from pmdkit import cli, convert, games, robustness, sdp, serialization  # noqa: E402
from pmdkit import generators as G  # noqa: E402
from pmdkit.devices import apply_free_operation, classical_operation  # noqa: E402
from pmdkit.jointmeas import check_simple  # noqa: E402

BB84_SIMPLE = (2 + np.sqrt(2)) / 4
AUDIT_LOG: list = []


def report(number, title, passed, detail):
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    print(line, flush=True)
    return bool(passed)


def audited(fn):
    def wrapper(*args, **kwargs):
        with sdp.audit() as log:
            out = fn(*args, **kwargs)
        AUDIT_LOG.extend(log)
        return out

    wrapper.__name__ = fn.__name__
    return wrapper


@lru_cache(maxsize=1)
def robustness_suite():
    """50 random qubit PMDs (2 programs x 2 outcomes) and 10 qutrit PMDs (2 programs x 3 outcomes)."""
    rng = np.random.default_rng(2024)
    qubits = [G.random_pmd(2, 2, 2, rng) for _ in range(50)]
    qutrits = [G.random_pmd(3, 2, 3, rng) for _ in range(10)]
    return qubits + qutrits


# ---------------------------------------------------------------------------


@audited
def criterion_1():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    disagreements = 0
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "pmd.json"
        for _ in range(200):
            a = rng.standard_normal(3)
            a /= np.linalg.norm(a)
            b = rng.standard_normal(3)
            b -= (b @ a) * a
            b /= np.linalg.norm(b)
            eta = rng.uniform(0.0, 1.0)
            while abs(eta - 1 / np.sqrt(2)) < 1e-6:
                eta = rng.uniform(0.0, 1.0)
            serialization.save(G.qubit_pair(a, b, eta), path, "pmd")
            with contextlib.redirect_stdout(io.StringIO()):
                code = cli.run(["compat", str(path), "--format", "json"])
            analytic = np.linalg.norm(eta * (a + b)) + np.linalg.norm(eta * (a - b)) <= 2
            if (code == 0) != analytic:
                disagreements += 1
    lo, hi = 0.5, 1.0
    while hi - lo > 1e-5:
        mid = 0.5 * (lo + hi)
        if check_simple(G.noisy_mub(mid)).is_simple:
            lo = mid
        else:
            hi = mid
    flip = 0.5 * (lo + hi)
    elapsed = time.perf_counter() - start
    ok = disagreements == 0 and abs(flip - 1 / np.sqrt(2)) <= 1e-3 and elapsed <= 30
    return report(1, "joint-measurability threshold", ok,
                  f"disagreements={disagreements}/200 flip={flip:.6f} (1/sqrt2={1 / np.sqrt(2):.6f}) time={elapsed:.1f}s")


@audited
def criterion_2():
    start = time.perf_counter()
    worst = 0.0
    for pmd in robustness_suite():
        p = robustness.primal(pmd).value
        d, _ = robustness.dual(pmd)
        worst = max(worst, abs(p - d))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-7 and elapsed <= 300
    return report(2, "strong duality", ok, f"max |primal - dual| = {worst:.2e} over 60 PMDs, time={elapsed:.1f}s")


@audited
def criterion_3():
    worst = 0.0
    for pmd in robustness_suite():
        worst = max(worst, robustness.verify_theorem2(pmd).difference)
    sharp = robustness.verify_theorem2(G.sharp_xz())
    worst = max(worst, sharp.difference)
    den_err = abs(sharp.denominator - BB84_SIMPLE)
    search_err = abs(sharp.denominator - bb84_parent_search())
    ok = worst <= 1e-5 and den_err <= 1e-6 and search_err <= 1e-6
    return report(3, "ratio equals 1 + robustness", ok,
                  f"max |ratio - (1+r)| = {worst:.2e}; sharp X/Z denominator {sharp.denominator:.7f} "
                  f"(err {den_err:.1e}, vs parent search {search_err:.1e})")


@audited
def criterion_4():
    rng = np.random.default_rng(4)
    worst_game = worst_rob = -np.inf
    for _ in range(100):
        pmd = G.random_pmd(2, 2, 2, rng)
        op = G.random_free_operation(pmd, 2, 2, 2, rng)
        game = G.random_ensemble(2, 2, 2, rng)
        out = apply_free_operation(op, pmd)
        after = games.pguess_classical(out, game).value
        before = games.pguess_seesaw(pmd, game, restarts=0, seeds=[games.merged_instrument(op)]).value
        worst_game = max(worst_game, after - before)
        worst_rob = max(worst_rob, robustness.primal(out).value - robustness.primal(pmd).value)
    ok = worst_game <= 1e-6 and worst_rob <= 1e-6
    return report(4, "monotonicity under free operations", ok,
                  f"max pguess increase {worst_game:.2e}, max robustness increase {worst_rob:.2e} over 100 triples")


@audited
def criterion_5():
    pmds = list(robustness_suite()) + [G.noisy_mub(0.8), G.sharp_xz()]
    rng = np.random.default_rng(5)
    pmds += [G.random_simple_pmd(2, 2, 2, rng=rng)[0] for _ in range(5)]
    min_margin, max_excess = np.inf, -np.inf
    n_inc = n_simple = 0
    for k, pmd in enumerate(pmds):
        out = games.incompatibility_witness_check(pmd, n_games=50, seed=k)
        if out.is_simple:
            n_simple += 1
            max_excess = max(max_excess, out.max_excess)
        else:
            n_inc += 1
            min_margin = min(min_margin, out.margin)
    ok = n_inc > 0 and n_simple > 0 and min_margin >= 1e-7 and max_excess <= 1e-7
    return report(5, "incompatibility witness", ok,
                  f"{n_inc} incompatible (min margin {min_margin:.2e}), {n_simple} simple (max excess {max_excess:.2e})")


@audited
def criterion_6():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        shapes = [(int(rng.integers(2, 4)), int(rng.integers(1, 4)), int(rng.integers(2, 4))) for _ in range(2)]
        (a, da), (b, db) = (G.random_simple_pmd(*s, rng=rng) for s in shapes)
        for src, ds, dst, dd in ((a, da, b, db), (b, db, a, da)):
            op = convert.simple_interconvert(ds, dd)
            op.validate().raise_if_invalid("protocol")
            worst = max(worst, apply_free_operation(op, src).distance(dst))
    return report(6, "simple devices interconvert", worst <= 1e-6, f"max reproduction error {worst:.2e} over 200 conversions")


def _classical_target(src, rng):
    ny, nb, n_mix = int(rng.integers(1, 4)), int(rng.integers(2, 4)), int(rng.integers(1, 4))
    strategies = [(list(rng.integers(src.n_programs, size=ny)), rng.integers(nb, size=(src.n_outcomes, ny)))
                  for _ in range(n_mix)]
    op = classical_operation(src.dim, rng.dirichlet(np.ones(n_mix)), strategies,
                             (src.n_programs, src.n_outcomes), None, [f"b{k}" for k in range(nb)])
    return apply_free_operation(op, src)


@audited
def criterion_7():
    rng = np.random.default_rng(7)
    worst = 0.0
    recovered = 0
    for _ in range(50):
        src = G.random_pmd(int(rng.integers(2, 4)), 2, 2, rng)
        dst = _classical_target(src, rng)
        cert = convert.convertibility_lp(src, dst)
        if cert.verdict == convert.CONVERTIBLE:
            recovered += 1
            worst = max(worst, apply_free_operation(cert.protocol, src).distance(dst))
    min_margin = np.inf
    refuted = 0
    pairs = 0
    while pairs < 20:
        src, _ = G.random_simple_pmd(2, 2, 2, rng=rng)
        dst = G.random_pmd(2, 2, 2, rng, kind="projective")
        if check_simple(dst).is_simple:
            continue
        pairs += 1
        cert = convert.convertibility_lp(src, dst)
        if cert.verdict == convert.NOT_CONVERTIBLE_CLASSICAL and cert.witness_game is not None:
            refuted += 1
            min_margin = min(min_margin, cert.margins["margin"])
    ok = recovered == 50 and worst <= 1e-6 and refuted == 20 and min_margin > 0
    return report(7, "convertibility LP soundness", ok,
                  f"{recovered}/50 protocols (max error {worst:.2e}); {refuted}/20 refuted (min margin {min_margin:.2e})")


def _planted(rng):
    dims = [int(rng.integers(1, 4)) for _ in range(int(rng.integers(1, 4)))]
    prob = sdp.SdpProblem(rng.choice(["minimize", "maximize"]))
    x0 = {}
    for k, d in enumerate(dims):
        prob.add_block(f"B{k}", d)
        x0[f"B{k}"] = G.random_density(d, rng=rng)
    sign = 1 if prob.sense == "minimize" else -1
    prob.set_objective({f"B{k}": sign * (G.random_density(d, rng=rng) + np.eye(d)) for k, d in enumerate(dims)})
    for i in range(int(rng.integers(1, 6))):
        terms = {}
        for k, d in enumerate(dims):
            a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
            terms[f"B{k}"] = a + a.conj().T
        prob.add_constraint(terms, sum(np.trace(terms[n] @ x0[n]).real for n in terms), f"r{i}")
    return prob


def criterion_8():
    if not AUDIT_LOG:
        for fn in (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7):
            fn()
    optimal = [(p, s) for p, s in AUDIT_LOG if s.ok]
    failures = [p for p, s in optimal if not sdp.check_certificate(p, s).passed]
    rng = np.random.default_rng(8)
    planted_bad = 0
    for _ in range(50):
        prob = _planted(rng)
        sol = sdp.solve(prob)
        if not (sol.ok and sol.max_residual <= 1e-8 and sdp.check_certificate(prob, sol).passed):
            planted_bad += 1
    ok = not failures and planted_bad == 0 and len(optimal) > 0
    return report(8, "solver self-check", ok,
                  f"{len(optimal) - len(failures)}/{len(optimal)} audited optimal solves certified "
                  f"({len(AUDIT_LOG) - len(optimal)} non-optimal); planted problems failing: {planted_bad}/50")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{k}" for k in range(1, 9)])
def test_acceptance(criterion, capsys):
    with capsys.disabled():
        passed = criterion()
    assert passed


if __name__ == "__main__":
    results = [fn() for fn in CRITERIA]
    print(json.dumps({"passed": int(sum(results)), "total": len(results)}))
    sys.exit(0 if all(results) else 1)
