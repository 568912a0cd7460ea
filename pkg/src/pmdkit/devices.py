"""Programmable measurement devices, ensembles, classical channels and free operations.

Array layouts (all dense):

* ``Pmd.effects[x, a]``            -> M(a|x), shape ``(|X|, |A|, d, d)``
* ``Ensemble.states[w, z]``         -> rho_{w,z}, shape ``(|W|, |Z|, d, d)``
* ``SimpleDecomposition.post[i, x, a]`` -> p(a|i,x)
* ``FreeOperation.pre[r, i, y, x]``  -> p(x|i,y,r)
* ``FreeOperation.post[r, i, y, x, a, b]`` -> q(b|a,x,i,y,r)
* ``FreeOperation.instruments[r][i]`` -> Choi map of E_{i|r}, from the target
  space (dimension of the produced PMD) to the source PMD's space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .operators import HERM_TOL, PSD_TOL, ChoiMap, compose, hermiticity_error, identity_channel, min_eigenvalue

COMPLETENESS_TOL = 1e-8
CHANNEL_TOL = 1e-10
PMD_EQ_TOL = 1e-7


class DeviceError(ValueError):
    """Raised on alphabet/dimension mismatches or when a valid object is required."""


@dataclass
class ValidationReport:
    violations: list[tuple[str, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def add(self, what: str, magnitude: float) -> None:
        self.violations.append((what, float(magnitude)))

    def extend(self, other: "ValidationReport", prefix: str = "") -> None:
        for what, mag in other.violations:
            self.add(prefix + what, mag)

    def raise_if_invalid(self, kind: str) -> None:
        if self.violations:
            lines = "; ".join(f"{w} ({m:.3e})" for w, m in self.violations[:5])
            more = f" and {len(self.violations) - 5} more" if len(self.violations) > 5 else ""
            raise DeviceError(f"invalid {kind}: {lines}{more}")


def _labels(labels, n: int, prefix: str) -> tuple[str, ...]:
    if labels is None:
        return tuple(f"{prefix}{k}" for k in range(n))
    labels = tuple(str(s) for s in labels)
    if len(labels) != n:
        raise DeviceError(f"expected {n} {prefix}-labels, got {len(labels)}")
    if len(set(labels)) != n:
        raise DeviceError(f"duplicate labels in {labels}")
    return labels


def _frozen(arr, dtype=complex) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


def _check_operators(report: ValidationReport, ops: np.ndarray, names, psd_tol: float) -> None:
    for name, op in zip(names, ops):
        herm = hermiticity_error(op)
        if herm > HERM_TOL:
            report.add(f"{name} not Hermitian", herm)
        lam = min_eigenvalue(op)
        if lam < -psd_tol:
            report.add(f"{name} not PSD (min eigenvalue)", lam)


def _completeness_error(total: np.ndarray) -> float:
    dev = total - np.eye(total.shape[0])
    return float(np.linalg.norm(0.5 * (dev + dev.conj().T), 2))


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Povm:
    effects: np.ndarray
    outcomes: tuple[str, ...] = None

    def __post_init__(self):
        eff = _frozen(self.effects)
        if eff.ndim != 3 or eff.shape[1] != eff.shape[2]:
            raise DeviceError(f"POVM effects must have shape (n, d, d), got {eff.shape}")
        object.__setattr__(self, "effects", eff)
        object.__setattr__(self, "outcomes", _labels(self.outcomes, eff.shape[0], "i"))

    @property
    def dim(self) -> int:
        return self.effects.shape[1]

    def __len__(self) -> int:
        return self.effects.shape[0]

    def validate(self, tol: float = COMPLETENESS_TOL, psd_tol: float = PSD_TOL) -> ValidationReport:
        rep = ValidationReport()
        _check_operators(rep, self.effects, [f"effect {o}" for o in self.outcomes], psd_tol)
        err = _completeness_error(self.effects.sum(axis=0))
        if err > tol:
            rep.add("completeness sum_a E(a) = 1 violated", err)
        return rep


@dataclass(frozen=True, eq=False)
class Pmd:
    """A programmable measurement device: one POVM ``M(.|x)`` per program ``x``."""

    effects: np.ndarray
    programs: tuple[str, ...] = None
    outcomes: tuple[str, ...] = None

    def __post_init__(self):
        eff = _frozen(self.effects)
        if eff.ndim != 4 or eff.shape[2] != eff.shape[3]:
            raise DeviceError(f"PMD effects must have shape (|X|, |A|, d, d), got {eff.shape}")
        if min(eff.shape) < 1:
            raise DeviceError("PMD alphabets and dimension must be non-empty")
        object.__setattr__(self, "effects", eff)
        object.__setattr__(self, "programs", _labels(self.programs, eff.shape[0], "x"))
        object.__setattr__(self, "outcomes", _labels(self.outcomes, eff.shape[1], "a"))

    @classmethod
    def from_povms(cls, povms: Sequence[Sequence], programs=None, outcomes=None) -> "Pmd":
        return cls(np.array([[np.asarray(e, dtype=complex) for e in povm] for povm in povms]), programs, outcomes)

    @property
    def dim(self) -> int:
        return self.effects.shape[2]

    @property
    def n_programs(self) -> int:
        return self.effects.shape[0]

    @property
    def n_outcomes(self) -> int:
        return self.effects.shape[1]

    def povm(self, x: int) -> Povm:
        return Povm(self.effects[x], self.outcomes)

    def effect(self, a: str, x: str) -> np.ndarray:
        return self.effects[self.programs.index(x), self.outcomes.index(a)]

    def relabel(self, program_order=None, outcome_order=None) -> "Pmd":
        """Permute programs/outcomes by index lists (labels travel with them)."""
        po = list(range(self.n_programs)) if program_order is None else list(program_order)
        oo = list(range(self.n_outcomes)) if outcome_order is None else list(outcome_order)
        return Pmd(
            self.effects[np.ix_(po, oo)],
            [self.programs[k] for k in po],
            [self.outcomes[k] for k in oo],
        )

    def distance(self, other: "Pmd") -> float:
        if self.effects.shape != other.effects.shape:
            raise DeviceError(f"PMD shapes differ: {self.effects.shape} vs {other.effects.shape}")
        return float(np.max(np.abs(self.effects - other.effects)))

    def allclose(self, other: "Pmd", tol: float = PMD_EQ_TOL) -> bool:
        return self.effects.shape == other.effects.shape and self.distance(other) <= tol


def validate_pmd(pmd: Pmd, tol: float = COMPLETENESS_TOL, psd_tol: float = PSD_TOL) -> ValidationReport:
    """List every violated PMD invariant together with its magnitude."""
    rep = ValidationReport()
    for ix, x in enumerate(pmd.programs):
        rep.extend(pmd.povm(ix).validate(tol, psd_tol), prefix=f"program {x}: ")
    return rep


def require_valid_pmd(pmd: Pmd, tol: float = 1e-7) -> Pmd:
    validate_pmd(pmd, tol, psd_tol=tol).raise_if_invalid("PMD")
    return pmd


def mix_pmds(weights, pmds: Sequence[Pmd]) -> Pmd:
    """Effect-wise convex combination of PMDs with identical dimension and alphabets."""
    w = np.asarray(weights, dtype=float)
    if len(w) != len(pmds) or not pmds:
        raise DeviceError("need one weight per PMD")
    if np.any(w < -CHANNEL_TOL) or abs(w.sum() - 1.0) > CHANNEL_TOL:
        raise DeviceError(f"weights must form a probability distribution, got {w}")
    first = pmds[0]
    for p in pmds[1:]:
        if p.effects.shape != first.effects.shape:
            raise DeviceError(f"mismatched PMD shapes {p.effects.shape} vs {first.effects.shape}")
    eff = np.einsum("k,kxaij->xaij", w, np.stack([p.effects for p in pmds]))
    return Pmd(eff, first.programs, first.outcomes)


def trivial_pmd(dim: int = 1) -> Pmd:
    """The single-program, single-outcome device ``{1}``."""
    return Pmd(np.eye(dim, dtype=complex)[None, None], ["x0"], ["a0"])


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SimpleDecomposition:
    """``M(a|x) = sum_i p(a|i,x) G(i)`` with a single mother POVM ``G``."""

    mother: Povm
    post: np.ndarray
    programs: tuple[str, ...] = None
    outcomes: tuple[str, ...] = None

    def __post_init__(self):
        post = _frozen(self.post, float)
        if post.ndim != 3 or post.shape[0] != len(self.mother):
            raise DeviceError(f"post-processing must have shape (|I|, |X|, |A|), got {post.shape}")
        object.__setattr__(self, "post", post)
        object.__setattr__(self, "programs", _labels(self.programs, post.shape[1], "x"))
        object.__setattr__(self, "outcomes", _labels(self.outcomes, post.shape[2], "a"))

    def validate(self) -> ValidationReport:
        rep = ValidationReport()
        rep.extend(self.mother.validate(), prefix="mother: ")
        if self.post.min() < -CHANNEL_TOL:
            rep.add("post-processing has negative entries", self.post.min())
        norm = np.max(np.abs(self.post.sum(axis=2) - 1.0))
        if norm > CHANNEL_TOL:
            rep.add("post-processing p(.|i,x) not normalized", norm)
        return rep

    def reconstruct(self) -> Pmd:
        return Pmd(np.einsum("ixa,ikl->xakl", self.post, self.mother.effects), self.programs, self.outcomes)


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Double-indexed sub-normalized states ``rho_{w,z}`` with ``sum Tr rho = 1``."""

    states: np.ndarray
    post_info: tuple[str, ...] = None
    answers: tuple[str, ...] = None

    def __post_init__(self):
        st = _frozen(self.states)
        if st.ndim != 4 or st.shape[2] != st.shape[3]:
            raise DeviceError(f"ensemble states must have shape (|W|, |Z|, d, d), got {st.shape}")
        object.__setattr__(self, "states", st)
        object.__setattr__(self, "post_info", _labels(self.post_info, st.shape[0], "w"))
        object.__setattr__(self, "answers", _labels(self.answers, st.shape[1], "z"))

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    @property
    def n_post_info(self) -> int:
        return self.states.shape[0]

    @property
    def n_answers(self) -> int:
        return self.states.shape[1]

    def joint_distribution(self) -> np.ndarray:
        return np.einsum("wzii->wz", self.states).real

    def validate(self, tol: float = COMPLETENESS_TOL, psd_tol: float = PSD_TOL) -> ValidationReport:
        rep = ValidationReport()
        names = [f"state ({w},{z})" for w in self.post_info for z in self.answers]
        _check_operators(rep, self.states.reshape(-1, self.dim, self.dim), names, psd_tol)
        total = self.joint_distribution().sum()
        if abs(total - 1.0) > tol:
            rep.add("p(w,z) = Tr rho_{w,z} does not sum to 1", total - 1.0)
        return rep

    def relabel(self, post_info_order=None, answer_order=None) -> "Ensemble":
        wo = list(range(self.n_post_info)) if post_info_order is None else list(post_info_order)
        zo = list(range(self.n_answers)) if answer_order is None else list(answer_order)
        return Ensemble(
            self.states[np.ix_(wo, zo)], [self.post_info[k] for k in wo], [self.answers[k] for k in zo]
        )


# A guessing game with post-information is fully specified by its ensemble.
GuessingGame = Ensemble


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ClassicalChannel:
    """Conditional distribution table; the last axis is the output alphabet."""

    table: np.ndarray
    inputs: tuple[str, ...] = ()
    output: str = ""

    def __post_init__(self):
        object.__setattr__(self, "table", _frozen(self.table, float))

    def validate(self, name: str = "channel") -> ValidationReport:
        rep = ValidationReport()
        if self.table.size and self.table.min() < -CHANNEL_TOL:
            rep.add(f"{name} has negative entries", self.table.min())
        if self.table.size:
            err = float(np.max(np.abs(self.table.sum(axis=-1) - 1.0)))
            if err > CHANNEL_TOL:
                rep.add(f"{name} conditionals not normalized", err)
        return rep


@dataclass(frozen=True, eq=False)
class FreeOperation:
    """Shared randomness, a program-independent instrument and two classical channels.

    Maps a source PMD on ``out_dim`` with alphabets (X, A) to a target PMD on
    ``in_dim`` with alphabets (Y, B).
    """

    mu: np.ndarray
    instruments: tuple[tuple[ChoiMap, ...], ...]
    pre: np.ndarray
    post: np.ndarray
    target_programs: tuple[str, ...] = None
    target_outcomes: tuple[str, ...] = None

    def __post_init__(self):
        mu = _frozen(self.mu, float)
        inst = tuple(tuple(fam) for fam in self.instruments)
        pre = _frozen(self.pre, float)
        post = _frozen(self.post, float)
        n_r = mu.shape[0]
        if len(inst) != n_r:
            raise DeviceError(f"need one instrument per shared-randomness value ({n_r}), got {len(inst)}")
        n_i = {len(fam) for fam in inst}
        if len(n_i) != 1:
            raise DeviceError("all instruments must declare the same number of outcomes (pad with zero maps)")
        n_i = n_i.pop()
        dims = {(m.in_dim, m.out_dim) for fam in inst for m in fam}
        if len(dims) != 1:
            raise DeviceError(f"instrument maps disagree on dimensions: {dims}")
        if pre.ndim != 4 or pre.shape[:2] != (n_r, n_i):
            raise DeviceError(f"pre-channel must have shape (R, I, Y, X) with R={n_r}, I={n_i}; got {pre.shape}")
        n_y, n_x = pre.shape[2:]
        if post.ndim != 6 or post.shape[:4] != (n_r, n_i, n_y, n_x):
            raise DeviceError(f"post-channel must have shape (R, I, Y, X, A, B); got {post.shape}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "instruments", inst)
        object.__setattr__(self, "pre", pre)
        object.__setattr__(self, "post", post)
        object.__setattr__(self, "target_programs", _labels(self.target_programs, n_y, "y"))
        object.__setattr__(self, "target_outcomes", _labels(self.target_outcomes, post.shape[5], "b"))

    @property
    def in_dim(self) -> int:
        return self.instruments[0][0].in_dim

    @property
    def out_dim(self) -> int:
        return self.instruments[0][0].out_dim

    @property
    def n_randomness(self) -> int:
        return self.mu.shape[0]

    @property
    def n_instrument_outcomes(self) -> int:
        return len(self.instruments[0])

    @property
    def source_shape(self) -> tuple[int, int]:
        """(|X|, |A|) expected of the source PMD."""
        return self.post.shape[3], self.post.shape[4]

    @property
    def target_shape(self) -> tuple[int, int]:
        return self.post.shape[2], self.post.shape[5]

    @property
    def pre_channel(self) -> ClassicalChannel:
        return ClassicalChannel(self.pre, ("r", "i", "y"), "x")

    @property
    def post_channel(self) -> ClassicalChannel:
        return ClassicalChannel(self.post, ("r", "i", "y", "x", "a"), "b")

    def validate(self, tol: float = 1e-9) -> ValidationReport:
        rep = ValidationReport()
        if self.mu.min() < -CHANNEL_TOL:
            rep.add("mu has negative entries", self.mu.min())
        if abs(self.mu.sum() - 1.0) > CHANNEL_TOL:
            rep.add("mu does not sum to 1", self.mu.sum() - 1.0)
        for r, fam in enumerate(self.instruments):
            total = np.zeros((self.in_dim, self.in_dim), dtype=complex)
            for i, m in enumerate(fam):
                lam = m.psd(tol).min_eigenvalue
                if lam < -tol:
                    rep.add(f"instrument r={r} outcome {i}: Choi matrix not PSD", lam)
                total += m.partial_trace_out()
            err = float(np.max(np.abs(total - np.eye(self.in_dim))))
            if err > tol:
                rep.add(f"instrument r={r} is not trace preserving", err)
        rep.extend(self.pre_channel.validate("pre-channel p(x|i,y,r)"))
        rep.extend(self.post_channel.validate("post-channel q(b|a,x,i,y,r)"))
        return rep


def validate_free_operation(op: FreeOperation, tol: float = 1e-9) -> ValidationReport:
    return op.validate(tol)


def _check_compatible(op: FreeOperation, pmd: Pmd) -> None:
    if op.out_dim != pmd.dim:
        raise DeviceError(f"free operation feeds a {op.out_dim}-dim system, PMD acts on dim {pmd.dim}")
    if op.source_shape != (pmd.n_programs, pmd.n_outcomes):
        raise DeviceError(
            f"free operation expects source alphabets {op.source_shape}, PMD has {(pmd.n_programs, pmd.n_outcomes)}"
        )


def adjoint_effects(op: FreeOperation, pmd: Pmd) -> np.ndarray:
    """``E_{i|r}^dag[M(a|x)]`` for all (r, i, x, a); shape ``(R, I, X, A, d', d')``."""
    out = np.empty((op.n_randomness, op.n_instrument_outcomes, pmd.n_programs, pmd.n_outcomes, op.in_dim, op.in_dim),
                   dtype=complex)
    for r, fam in enumerate(op.instruments):
        for i, m in enumerate(fam):
            out[r, i] = np.einsum("jmkn,xanm->xakj", m.tensor, pmd.effects)
    return out


def apply_free_operation(op: FreeOperation, pmd: Pmd, check: bool = True) -> Pmd:
    """``N(b|y) = sum_r mu(r) sum_{i,x,a} q(b|a,x,i,y,r) p(x|i,y,r) E_{i|r}^dag[M(a|x)]``."""
    _check_compatible(op, pmd)
    if check:
        op.validate().raise_if_invalid("free operation")
    adj = adjoint_effects(op, pmd)
    eff = np.einsum("r,riyxab,riyx,rixakl->ybkl", op.mu, op.post, op.pre, adj)
    return Pmd(eff, op.target_programs, op.target_outcomes)


def identity_operation(pmd: Pmd) -> FreeOperation:
    nx, na = pmd.n_programs, pmd.n_outcomes
    pre = np.eye(nx)[None, None]
    post = np.broadcast_to(np.eye(na), (1, 1, nx, nx, na, na)).copy()
    return FreeOperation([1.0], [[identity_channel(pmd.dim)]], pre, post, pmd.programs, pmd.outcomes)


def classical_operation(dim: int, weights, strategies, source_shape, target_programs=None, target_outcomes=None):
    """Free operation with identity pre-processing and shared randomness over deterministic strategies.

    Each strategy is a pair ``(f, g)`` with ``f[y]`` the program fed to the
    source and ``g[a, y]`` the relabelled outcome.
    """
    nx, na = source_shape
    weights = np.asarray(weights, dtype=float)
    n_r = len(strategies)
    f0, g0 = strategies[0]
    ny = len(f0)
    nb = 1 + max(int(np.max(g)) for _, g in strategies) if target_outcomes is None else len(target_outcomes)
    pre = np.zeros((n_r, 1, ny, nx))
    post = np.zeros((n_r, 1, ny, nx, na, nb))
    for r, (f, g) in enumerate(strategies):
        g = np.asarray(g)
        for y in range(ny):
            pre[r, 0, y, f[y]] = 1.0
            for x in range(nx):
                for a in range(na):
                    post[r, 0, y, x, a, g[a, y]] = 1.0
    ident = identity_channel(dim)
    return FreeOperation(weights, [[ident]] * n_r, pre, post, target_programs, target_outcomes)


def compose_operations(second: FreeOperation, first: FreeOperation) -> FreeOperation:
    """Single free operation equal to applying ``first`` and then ``second``.

    The intermediate program chosen by ``second`` is marginalised out of the
    pre-channel and re-inferred (Bayes) inside the post-channel, so the
    composite stays within the form of a free operation.
    """
    ny_mid, nb_mid = first.target_shape
    if second.source_shape != (ny_mid, nb_mid) or second.out_dim != first.in_dim:
        raise DeviceError("operations are not composable: intermediate alphabets/dimensions differ")
    r1, r2 = first.n_randomness, second.n_randomness
    i1, i2 = first.n_instrument_outcomes, second.n_instrument_outcomes
    nv = second.target_shape[0]
    nx, na = first.source_shape
    nc = second.target_shape[1]

    mu = np.einsum("s,r->sr", second.mu, first.mu).reshape(-1)
    instruments = []
    for s in range(r2):
        for r in range(r1):
            instruments.append([compose(first.instruments[r][i], second.instruments[s][j])
                                for j in range(i2) for i in range(i1)])
    # joint weight over the intermediate program y:  p2(y|j,v,s) p1(x|i,y,r)
    joint = np.einsum("sjvy,riyx->srjivyx", second.pre, first.pre)
    pre = joint.sum(axis=5)
    # sum_b q1(b|a,x,i,y,r) q2(c|b,y,j,v,s)
    chain = np.einsum("riyxab,sjvybc->srjivyxac", first.post, second.post)
    with np.errstate(invalid="ignore", divide="ignore"):
        post_y = np.where(pre[..., None, :] > 0, joint / pre[..., None, :], 0.0)
    # x never chosen: any conditional works, use the p2 marginal over y
    unreachable = pre[..., None, :] <= 0
    fallback = np.broadcast_to(
        np.einsum("sjvy->sjvy", second.pre)[:, None, :, None, :, :, None], joint.shape
    )
    post_y = np.where(unreachable, fallback, post_y)
    post = np.einsum("srjivyx,srjivyxac->srjivxac", post_y, chain)
    pre = pre.reshape(r2 * r1, i2 * i1, nv, nx)
    post = post.reshape(r2 * r1, i2 * i1, nv, nx, na, nc)
    return FreeOperation(mu, instruments, pre, post, second.target_programs, second.target_outcomes)
