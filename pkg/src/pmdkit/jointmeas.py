"""Joint measurability (simplicity) of PMDs via a parent POVM over response functions.

Every decomposition ``M(a|x) = sum_i p(a|i,x) G(i)`` coarse-grains to one
indexed by deterministic response functions ``h: X -> A``::

    M(a|x) = sum_{h : h(x) = a} G_h .

Feasibility is decided by maximising a common eigenvalue floor ``t`` with
``G_h - t 1 >= 0``; the device is simple iff ``t* >= -SIMPLE_TOL``. The
program is parametrised by the PSD parts ``P_h = G_h - t 1`` and the
nonnegative scalar ``s = 1 - |H| t``, so every variable is a PSD block.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import sdp
from .devices import DeviceError, Pmd, Povm, SimpleDecomposition, require_valid_pmd

SIMPLE_TOL = 1e-7
MAX_RESPONSE_FUNCTIONS = 4096


class ParentSizeError(DeviceError):
    """The response-function parent would exceed the enumeration guard."""


def response_functions(n_inputs: int, n_outputs: int, limit: int = MAX_RESPONSE_FUNCTIONS) -> list[tuple[int, ...]]:
    """All maps ``h: range(n_inputs) -> range(n_outputs)`` as tuples ``(h(0), h(1), ...)``."""
    count = n_outputs**n_inputs
    if count > limit:
        raise ParentSizeError(f"{n_outputs}^{n_inputs} = {count} response functions exceeds the guard of {limit}")
    return list(itertools.product(range(n_outputs), repeat=n_inputs))


@dataclass
class SeparatingWitness:
    """Functional ``W(a|x)`` with ``sum_x W(h(x)|x) <= 0`` for every ``h`` but ``<W, M> > 0``."""

    functional: np.ndarray
    value_on_pmd: float
    max_parent_eigenvalue: float
    margin: float

    def evaluate(self, pmd: Pmd) -> float:
        return float(np.einsum("xaij,xaji->", self.functional, pmd.effects).real)


@dataclass
class CompatibilityResult:
    is_simple: bool
    slack: float
    decomposition: SimpleDecomposition | None
    witness: SeparatingWitness | None
    solution: sdp.SdpSolution


def parent_sums(parent: np.ndarray, functions, n_programs: int, n_outcomes: int) -> np.ndarray:
    """``sum_{h: h(x)=a} G_h`` for all (x, a)."""
    out = np.zeros((n_programs, n_outcomes) + parent.shape[1:], dtype=complex)
    for g, h in zip(parent, functions):
        for x, a in enumerate(h):
            out[x, a] += g
    return out


def check_simple(pmd: Pmd, tol: float = SIMPLE_TOL, opts: sdp.SolverOptions | None = None) -> CompatibilityResult:
    """Decide whether ``pmd`` is simple (jointly measurable).

    Returns a :class:`SimpleDecomposition` (mother POVM over response
    functions, deterministic post-processing) when simple, and a separating
    witness from the dual multipliers otherwise.
    """
    require_valid_pmd(pmd)
    nx, na, d = pmd.n_programs, pmd.n_outcomes, pmd.dim
    funcs = response_functions(nx, na)
    n_h = len(funcs)
    ident = np.eye(d)

    prob = sdp.SdpProblem("minimize")
    names = [prob.add_block(f"P{k}", d) for k in range(n_h)]
    prob.add_block("s", 1)
    prob.set_objective({"s": 1.0})
    for x in range(nx):
        for a in range(na):
            members = {names[k]: 1.0 for k, h in enumerate(funcs) if h[x] == a}
            prob.add_matrix_equality(
                members, pmd.effects[x, a] - ident / na, f"marginal[{x},{a}]", lifted={"s": -ident / na}
            )
    sol = sdp.solve(prob, opts)
    if not sol.ok:
        raise sdp.SdpFailure(sol, "joint measurability SDP")

    s_val = float(sol["s"][0, 0].real)
    slack = (1.0 - s_val) / n_h
    if slack >= -tol:
        if slack >= 0:
            parent = np.array([sol[n] + slack * ident for n in names])
        else:
            # sum_h P_h = s 1, so P_h / s is an exactly PSD mother; reproduction error ~ |H t|
            parent = np.array([sol[n] / s_val for n in names])
        post = np.zeros((n_h, nx, na))
        for k, h in enumerate(funcs):
            post[k, np.arange(nx), list(h)] = 1.0
        mother = Povm(parent, ["h" + "".join(map(str, h)) if na <= 10 else "h" + ",".join(map(str, h)) for h in funcs])
        dec = SimpleDecomposition(mother, post, pmd.programs, pmd.outcomes)
        return CompatibilityResult(True, slack, dec, None, sol)

    y = sol.multipliers.reshape(nx, na, d * d)
    from .operators import from_coords

    functional = from_coords(y)
    return CompatibilityResult(False, slack, None, _separating_witness(functional, pmd, funcs), sol)


def _separating_witness(functional: np.ndarray, pmd: Pmd, funcs) -> SeparatingWitness:
    nx = pmd.n_programs
    worst = -np.inf
    for h in funcs:
        k_h = sum(functional[x, h[x]] for x in range(nx))
        worst = max(worst, float(np.linalg.eigvalsh(0.5 * (k_h + k_h.conj().T))[-1]))
    value = float(np.einsum("xaij,xaji->", functional, pmd.effects).real)
    # <W, F> <= dim * max(0, worst) for every simple F
    margin = value - pmd.dim * max(worst, 0.0)
    return SeparatingWitness(functional, value, worst, margin)


def reconstruct(dec: SimpleDecomposition) -> Pmd:
    """``M(a|x) = sum_i p(a|i,x) G(i)``; raises if ``dec`` is invalid."""
    dec.validate().raise_if_invalid("simple decomposition")
    return dec.reconstruct()
