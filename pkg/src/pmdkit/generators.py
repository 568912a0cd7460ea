"""Standard devices, games and seeded random instances."""

from __future__ import annotations

import numpy as np

from .devices import Ensemble, FreeOperation, Pmd, Povm, SimpleDecomposition
from .operators import ChoiMap, bloch_operator, choi_from_kraus, projector


def as_rng(seed=None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def fourier_basis(dim: int) -> np.ndarray:
    """Columns are the discrete Fourier basis vectors (mutually unbiased to the computational basis)."""
    k = np.arange(dim)
    return np.exp(2j * np.pi * np.outer(k, k) / dim) / np.sqrt(dim)


def noisy_mub(eta: float, dim: int = 2) -> Pmd:
    """Two mutually unbiased bases mixed with white noise: ``eta P + (1 - eta) 1/d``.

    For ``dim=2`` the programs are X and Z with effects ``(1 +/- eta sigma)/2``.
    """
    ident = np.eye(dim, dtype=complex) / dim
    f = fourier_basis(dim)
    xs = [eta * projector(f[:, a]) + (1 - eta) * ident for a in range(dim)]
    zs = [eta * projector(np.eye(dim)[a]) + (1 - eta) * ident for a in range(dim)]
    return Pmd(np.array([xs, zs]), ["X", "Z"], [str(a) for a in range(dim)])


def sharp_xz() -> Pmd:
    return noisy_mub(1.0, 2)


def qubit_pair(a_vec, b_vec, eta: float = 1.0) -> Pmd:
    """Two unbiased binary qubit observables ``(1 +/- eta r.sigma)/2`` along unit vectors ``a``, ``b``."""
    eff = []
    for v in (a_vec, b_vec):
        v = np.asarray(v, dtype=float)
        op = eta * bloch_operator(v / np.linalg.norm(v))
        eff.append([(np.eye(2) + op) / 2, (np.eye(2) - op) / 2])
    return Pmd(np.array(eff), ["A", "B"], ["+", "-"])


def qubit_pair_jointly_measurable(a_vec, b_vec) -> bool:
    """Analytic criterion for unbiased qubit pairs: ``|a + b| + |a - b| <= 2``."""
    a = np.asarray(a_vec, dtype=float)
    b = np.asarray(b_vec, dtype=float)
    return bool(np.linalg.norm(a + b) + np.linalg.norm(a - b) <= 2.0)


def bb84_game() -> Ensemble:
    """Post-information told the basis (X or Z), answer is the bit; uniform prior."""
    plus = np.array([1, 1]) / np.sqrt(2)
    minus = np.array([1, -1]) / np.sqrt(2)
    zero, one = np.eye(2)
    states = np.array([[projector(plus), projector(minus)], [projector(zero), projector(one)]]) / 4
    return Ensemble(states, ["X", "Z"], ["0", "1"])


# ---------------------------------------------------------------------------
# random instances


def random_unitary(dim: int, rng=None) -> np.ndarray:
    rng = as_rng(rng)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_isometry(rows: int, cols: int, rng=None) -> np.ndarray:
    rng = as_rng(rng)
    z = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(dim: int, rank: int | None = None, rng=None) -> np.ndarray:
    rng = as_rng(rng)
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_povm(dim: int, n_outcomes: int, rng=None) -> np.ndarray:
    """Random full-rank POVM, shape ``(n, d, d)``."""
    rng = as_rng(rng)
    a = rng.standard_normal((n_outcomes, dim, dim)) + 1j * rng.standard_normal((n_outcomes, dim, dim))
    pos = np.einsum("kji,kjl->kil", a.conj(), a)
    w, v = np.linalg.eigh(pos.sum(axis=0))
    s = v @ np.diag(w ** -0.5) @ v.conj().T
    return np.einsum("ij,kjl,lm->kim", s, pos, s)


def random_projective_povm(dim: int, n_outcomes: int | None = None, rng=None) -> np.ndarray:
    """Projective measurement in a Haar-random basis; basis vectors are grouped when ``n < dim``."""
    rng = as_rng(rng)
    n = dim if n_outcomes is None else n_outcomes
    u = random_unitary(dim, rng)
    eff = np.zeros((n, dim, dim), dtype=complex)
    for k in range(dim):
        eff[k % n] += projector(u[:, k])
    return eff


def random_pmd(dim: int, n_programs: int, n_outcomes: int, rng=None, kind: str = "mixed") -> Pmd:
    """Random PMD.

    ``kind``: ``"povm"`` (full-rank random POVMs), ``"projective"`` (Haar
    bases) or ``"mixed"`` (projective blended with a random POVM, weight drawn
    uniformly, so both compatible and incompatible devices occur).
    """
    rng = as_rng(rng)
    povms = []
    for _ in range(n_programs):
        if kind == "povm":
            povms.append(random_povm(dim, n_outcomes, rng))
        elif kind == "projective":
            povms.append(random_projective_povm(dim, n_outcomes, rng))
        elif kind == "mixed":
            t = rng.uniform(0.3, 1.0)
            povms.append(t * random_projective_povm(dim, n_outcomes, rng) + (1 - t) * random_povm(dim, n_outcomes, rng))
        else:
            raise ValueError(f"unknown kind {kind!r}")
    return Pmd(np.array(povms))


def random_conditional(shape, rng=None, deterministic: bool = False) -> np.ndarray:
    """Random conditional distribution table normalized along the last axis."""
    rng = as_rng(rng)
    if deterministic:
        idx = rng.integers(shape[-1], size=shape[:-1])
        return np.eye(shape[-1])[idx]
    t = rng.exponential(size=shape)
    return t / t.sum(axis=-1, keepdims=True)


def random_simple_pmd(dim: int, n_programs: int, n_outcomes: int, n_mother: int = 3, rng=None):
    """Random simple PMD together with the decomposition that generated it."""
    rng = as_rng(rng)
    mother = Povm(random_povm(dim, n_mother, rng))
    post = random_conditional((n_mother, n_programs, n_outcomes), rng)
    dec = SimpleDecomposition(mother, post)
    return dec.reconstruct(), dec


def random_ensemble(dim: int, n_post_info: int, n_answers: int, rng=None, rank: int | None = None) -> Ensemble:
    rng = as_rng(rng)
    states = np.array([[random_density(dim, rank, rng) for _ in range(n_answers)] for _ in range(n_post_info)])
    weights = rng.exponential(size=(n_post_info, n_answers))
    weights /= weights.sum()
    return Ensemble(states * weights[..., None, None])


def random_instrument(in_dim: int, out_dim: int, n_outcomes: int, rng=None, kraus_rank: int = 1) -> list[ChoiMap]:
    """Instrument from a Haar-random isometry split into ``n_outcomes * kraus_rank`` Kraus operators."""
    rng = as_rng(rng)
    v = random_isometry(n_outcomes * kraus_rank * out_dim, in_dim, rng)
    ks = v.reshape(n_outcomes, kraus_rank, out_dim, in_dim)
    return [choi_from_kraus(list(ks[i]), in_dim) for i in range(n_outcomes)]


def random_free_operation(
    source: Pmd,
    target_dim: int,
    n_target_programs: int,
    n_target_outcomes: int,
    rng=None,
    n_randomness: int = 2,
    n_instrument_outcomes: int = 2,
    deterministic: bool = False,
) -> FreeOperation:
    rng = as_rng(rng)
    nr, ni = n_randomness, n_instrument_outcomes
    mu = rng.exponential(size=nr)
    mu /= mu.sum()
    instruments = [random_instrument(target_dim, source.dim, ni, rng) for _ in range(nr)]
    pre = random_conditional((nr, ni, n_target_programs, source.n_programs), rng, deterministic)
    post = random_conditional(
        (nr, ni, n_target_programs, source.n_programs, source.n_outcomes, n_target_outcomes), rng, deterministic
    )
    return FreeOperation(mu, instruments, pre, post)
