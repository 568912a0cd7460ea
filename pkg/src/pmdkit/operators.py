"""Complex Hermitian linear algebra and completely positive maps in Choi form.

Choi convention used throughout the package: for a map E from an ``in_dim``
system to an ``out_dim`` system,

    J = sum_{jk} |j><k| (x) E(|j><k|)          (input factor first)

so that ``E(X) = Tr_in[(X^T (x) 1) J]`` and trace preservation reads
``Tr_out J = 1_in``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

HERM_TOL = 1e-9
PSD_TOL = 1e-9


class OperatorError(ValueError):
    """Raised when an operator fails a structural check (shape, hermiticity, positivity)."""


def as_matrix(op, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(op, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise OperatorError(f"expected a square matrix, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise OperatorError(f"dimension mismatch: expected {dim}, got {arr.shape[0]}")
    return arr


def hermiticity_error(op) -> float:
    arr = np.asarray(op, dtype=complex)
    if arr.size == 0:
        return 0.0
    return float(np.max(np.abs(arr - arr.conj().T)))


def check_hermitian(op, tol: float = HERM_TOL, dim: int | None = None) -> np.ndarray:
    """Return ``op`` as a complex matrix, raising if it is not Hermitian within ``tol``."""
    arr = as_matrix(op, dim)
    err = hermiticity_error(arr)
    if err > tol:
        raise OperatorError(f"operator is not Hermitian: max |A - A^dag| = {err:.3e} > {tol:.1e}")
    return arr


def hermitian_part(op) -> np.ndarray:
    arr = np.asarray(op, dtype=complex)
    return 0.5 * (arr + arr.conj().T)


def eig_hermitian(op, tol: float = HERM_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian operator.

    Returns ascending eigenvalues ``w`` and a unitary ``V`` with
    ``op = V @ diag(w) @ V^dag``.
    """
    arr = check_hermitian(op, tol)
    w, v = np.linalg.eigh(hermitian_part(arr))
    return w, v


def min_eigenvalue(op) -> float:
    arr = np.asarray(op, dtype=complex)
    if arr.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(hermitian_part(arr))[0])


@dataclass(frozen=True)
class PsdReport:
    min_eigenvalue: float
    is_psd: bool


def psd_report(op, tol: float = PSD_TOL) -> PsdReport:
    lam = min_eigenvalue(check_hermitian(op, max(tol, HERM_TOL)))
    return PsdReport(min_eigenvalue=lam, is_psd=lam >= -tol)


def trace_pair(a, b) -> float:
    """Hilbert-Schmidt pairing ``Tr(a b)`` of two Hermitian operators (real)."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise OperatorError(f"dimension mismatch: {a.shape} vs {b.shape}")
    val = np.einsum("ij,ji->", a, b)
    if abs(val.imag) > 1e-12 * max(1.0, abs(val.real)):
        raise OperatorError(f"trace pairing has imaginary part {val.imag:.3e}; inputs not Hermitian?")
    return float(val.real)


@lru_cache(maxsize=64)
def _hermitian_basis(dim: int) -> np.ndarray:
    basis = np.zeros((dim * dim, dim, dim), dtype=complex)
    n = 0
    for j in range(dim):
        basis[n, j, j] = 1.0
        n += 1
    s = 1.0 / np.sqrt(2.0)
    for j in range(dim):
        for k in range(j + 1, dim):
            basis[n, j, k] = basis[n, k, j] = s
            n += 1
            basis[n, j, k] = -1j * s
            basis[n, k, j] = 1j * s
            n += 1
    basis.setflags(write=False)
    return basis


def hermitian_basis(dim: int) -> np.ndarray:
    """Orthonormal basis of the real space of ``dim x dim`` Hermitian matrices.

    Shape ``(dim**2, dim, dim)``; ``Tr(E_j E_k) = delta_jk``.
    """
    return _hermitian_basis(int(dim))


def to_coords(op) -> np.ndarray:
    """Real coordinates of (the Hermitian part of) ``op`` in :func:`hermitian_basis`."""
    arr = np.asarray(op, dtype=complex)
    basis = hermitian_basis(arr.shape[-1])
    return np.einsum("kij,...ji->...k", basis, arr).real


def from_coords(coords) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    dim = int(round(np.sqrt(coords.shape[-1])))
    if dim * dim != coords.shape[-1]:
        raise OperatorError(f"coordinate vector of length {coords.shape[-1]} is not a square")
    return np.einsum("...k,kij->...ij", coords, hermitian_basis(dim))


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=complex).ravel()
    return np.outer(v, v.conj())


PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def bloch_operator(vec) -> np.ndarray:
    """``r . sigma`` for a real 3-vector ``r``."""
    x, y, z = np.asarray(vec, dtype=float)
    return x * PAULI_X + y * PAULI_Y + z * PAULI_Z


# ---------------------------------------------------------------------------
# Choi maps


@dataclass(frozen=True, eq=False)
class ChoiMap:
    """A linear map given by its Choi matrix (input factor first)."""

    in_dim: int
    out_dim: int
    choi: np.ndarray

    def __post_init__(self):
        n = self.in_dim * self.out_dim
        choi = np.array(self.choi, dtype=complex)
        if choi.shape != (n, n):
            raise OperatorError(
                f"Choi matrix must be {n}x{n} for in_dim={self.in_dim}, out_dim={self.out_dim}; got {choi.shape}"
            )
        choi.setflags(write=False)
        object.__setattr__(self, "choi", choi)

    @property
    def tensor(self) -> np.ndarray:
        # [j, m, k, n] = <j m| J |k n> = E(|j><k|)_{mn}
        return self.choi.reshape(self.in_dim, self.out_dim, self.in_dim, self.out_dim)

    def psd(self, tol: float = PSD_TOL) -> PsdReport:
        return psd_report(self.choi, tol)

    def partial_trace_out(self) -> np.ndarray:
        return np.einsum("jmkm->jk", self.tensor)

    def is_trace_preserving(self, tol: float = 1e-10) -> bool:
        return float(np.max(np.abs(self.partial_trace_out() - np.eye(self.in_dim)))) <= tol

    def apply(self, state) -> np.ndarray:
        return apply_choi(self, state)

    def adjoint(self, effect) -> np.ndarray:
        return adjoint_apply(self, effect)


def _apply_linear(cmap: ChoiMap, x: np.ndarray) -> np.ndarray:
    return np.einsum("jk,jmkn->mn", x, cmap.tensor)


def _adjoint_linear(cmap: ChoiMap, y: np.ndarray) -> np.ndarray:
    return np.einsum("jmkn,nm->kj", cmap.tensor, y)


def apply_choi(cmap: ChoiMap, state, check_cp: bool = True) -> np.ndarray:
    """Apply the map to an operator on the input space."""
    x = as_matrix(state)
    if x.shape[0] != cmap.in_dim:
        raise OperatorError(f"state has dim {x.shape[0]}, map expects in_dim={cmap.in_dim}")
    if check_cp:
        rep = cmap.psd()
        if not rep.is_psd:
            raise OperatorError(f"Choi matrix is not PSD (min eigenvalue {rep.min_eigenvalue:.3e})")
    return _apply_linear(cmap, x)


def adjoint_apply(cmap: ChoiMap, effect) -> np.ndarray:
    """Apply the trace-dual map: ``Tr[E(rho) F] = Tr[rho E^dag(F)]``."""
    y = as_matrix(effect)
    if y.shape[0] != cmap.out_dim:
        raise OperatorError(f"effect has dim {y.shape[0]}, map expects out_dim={cmap.out_dim}")
    return _adjoint_linear(cmap, y)


def compose(second: ChoiMap, first: ChoiMap) -> ChoiMap:
    """Choi map of ``second o first`` (apply ``first``, then ``second``)."""
    if first.out_dim != second.in_dim:
        raise OperatorError(f"cannot compose: {first.out_dim} != {second.in_dim}")
    d = first.in_dim
    blocks = np.zeros((d, second.out_dim, d, second.out_dim), dtype=complex)
    for j in range(d):
        for k in range(d):
            unit = np.zeros((d, d), dtype=complex)
            unit[j, k] = 1.0
            blocks[j, :, k, :] = _apply_linear(second, _apply_linear(first, unit))
    n = d * second.out_dim
    return ChoiMap(d, second.out_dim, blocks.reshape(n, n))


def choi_from_kraus(kraus, in_dim: int | None = None) -> ChoiMap:
    kraus = [np.asarray(k, dtype=complex) for k in kraus]
    out_dim, d = kraus[0].shape
    if in_dim is not None and d != in_dim:
        raise OperatorError(f"Kraus operators act on dim {d}, expected {in_dim}")
    choi = np.zeros((d * out_dim, d * out_dim), dtype=complex)
    for k in kraus:
        v = k.T.reshape(-1)  # v[j*out + m] = K[m, j]
        choi += np.outer(v, v.conj())
    return ChoiMap(d, out_dim, choi)


def kraus_from_choi(cmap: ChoiMap, tol: float = 1e-12) -> list[np.ndarray]:
    w, v = np.linalg.eigh(hermitian_part(cmap.choi))
    if w[0] < -PSD_TOL:
        raise OperatorError(f"Choi matrix is not PSD (min eigenvalue {w[0]:.3e})")
    ops = []
    for lam, vec in zip(w, v.T):
        if lam > tol:
            ops.append(np.sqrt(lam) * vec.reshape(cmap.in_dim, cmap.out_dim).T)
    return ops


def identity_channel(dim: int) -> ChoiMap:
    return choi_from_kraus([np.eye(dim)])


def unitary_channel(u) -> ChoiMap:
    return choi_from_kraus([np.asarray(u, dtype=complex)])


def depolarizing_channel(dim: int) -> ChoiMap:
    """Fully depolarizing channel ``X -> Tr(X) 1/d``."""
    return ChoiMap(dim, dim, np.eye(dim * dim, dtype=complex) / dim)


def measure_and_prepare(effect, state) -> ChoiMap:
    """CP map ``X -> Tr(effect X) state``; the building block of destructive instruments."""
    effect = as_matrix(effect)
    state = as_matrix(state)
    return ChoiMap(effect.shape[0], state.shape[0], np.kron(effect.T, state))


# ---------------------------------------------------------------------------
# JSON encoding of complex matrices


def matrix_to_json(op) -> dict:
    arr = np.asarray(op, dtype=complex)
    return {"re": arr.real.tolist(), "im": arr.imag.tolist()}


def matrix_from_json(obj) -> np.ndarray:
    try:
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
    except (KeyError, TypeError, AttributeError) as exc:
        raise OperatorError(f"malformed complex matrix record: {exc}") from exc
    if re.shape != im.shape:
        raise OperatorError(f"real/imaginary shapes differ: {re.shape} vs {im.shape}")
    return re + 1j * im
