"""Dense complex linear algebra over explicit tensor-product spaces.

Every value is immutable once built: the backing arrays are copied and
flagged read-only, so states and operators can be shared across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .errors import NotHermitianError, ShapeError

HERMITIAN_TOL = 1e-10


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=complex, copy=True)
    out.flags.writeable = False
    return out


def _check_dims(dims: Sequence[int], size: int) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims or any(d <= 0 for d in dims):
        raise ShapeError(f"factor dimensions must be positive, got {dims}")
    if int(np.prod(dims)) != size:
        raise ShapeError(f"dims {dims} do not multiply to {size}")
    return dims


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray
    dims: tuple[int, ...]

    def __init__(self, amplitudes, dims: Sequence[int] | None = None):
        amps = _frozen(amplitudes)
        if amps.ndim != 1:
            raise ShapeError("amplitudes must be one-dimensional")
        if dims is None:
            dims = (amps.size,)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "dims", _check_dims(dims, amps.size))
        if not np.all(np.isfinite(amps)):
            raise ShapeError("amplitudes must be finite")

    @classmethod
    def basis(cls, index: int, dim: int) -> "StateVector":
        v = np.zeros(dim, dtype=complex)
        v[index] = 1.0
        return cls(v)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        n = self.norm()
        if n == 0.0:
            raise ShapeError("cannot normalize the zero vector")
        return StateVector(self.amplitudes / n, self.dims)

    def inner(self, other: "StateVector") -> complex:
        """<self|other>."""
        if other.dim != self.dim:
            raise ShapeError("dimension mismatch in inner product")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def projector(self) -> "Operator":
        v = self.amplitudes
        return Operator(np.outer(v, v.conj()), self.dims)

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped with one axis per factor."""
        return self.amplitudes.reshape(self.dims)


@dataclass(frozen=True, eq=False)
class Operator:
    matrix: np.ndarray
    dims: tuple[int, ...]

    def __init__(self, matrix, dims: Sequence[int] | None = None):
        m = _frozen(matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"operator must be square, got shape {m.shape}")
        if dims is None:
            dims = (m.shape[0],)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", _check_dims(dims, m.shape[0]))

    @classmethod
    def identity(cls, dim: int) -> "Operator":
        return cls(np.eye(dim))

    @classmethod
    def diagonal(cls, values) -> "Operator":
        return cls(np.diag(np.asarray(values, dtype=complex)))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dag(self) -> "Operator":
        return Operator(self.matrix.conj().T, self.dims)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return self.hermiticity_error() <= tol

    def apply(self, state: StateVector) -> StateVector:
        if state.dim != self.dim:
            raise ShapeError("dimension mismatch applying operator")
        return StateVector(self.matrix @ state.amplitudes, self.dims)

    def expectation(self, state: StateVector) -> complex:
        v = state.amplitudes
        return complex(np.vdot(v, self.matrix @ v))

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def __add__(self, other: "Operator") -> "Operator":
        if other.dim != self.dim:
            raise ShapeError("dimension mismatch in operator sum")
        return Operator(self.matrix + other.matrix, self.dims)

    def __sub__(self, other: "Operator") -> "Operator":
        if other.dim != self.dim:
            raise ShapeError("dimension mismatch in operator difference")
        return Operator(self.matrix - other.matrix, self.dims)

    def __matmul__(self, other: "Operator") -> "Operator":
        if other.dim != self.dim:
            raise ShapeError("dimension mismatch in operator product")
        return Operator(self.matrix @ other.matrix, self.dims)

    def scaled(self, factor: complex) -> "Operator":
        return Operator(self.matrix * factor, self.dims)


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __init__(self, eigenvalues, eigenvectors):
        vals = np.array(eigenvalues, dtype=float, copy=True)
        vecs = _frozen(eigenvectors)
        vals.flags.writeable = False
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "eigenvectors", vecs)

    def vector(self, k: int) -> StateVector:
        return StateVector(self.eigenvectors[:, k])


def _fix_phases(vecs: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    # first non-negligible component of each column made real positive
    out = vecs.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        idx = int(np.argmax(np.abs(col) > tol))
        out[:, j] = col * (abs(col[idx]) / col[idx])
    return out


def eigh(H: Operator, tol: float = HERMITIAN_TOL) -> Spectrum:
    """Ascending eigen-decomposition with deterministic eigenvector phases."""
    if not H.is_hermitian(tol):
        raise NotHermitianError(f"operator deviates from Hermitian by {H.hermiticity_error():.3e}")
    herm = 0.5 * (H.matrix + H.matrix.conj().T)
    vals, vecs = np.linalg.eigh(herm)
    return Spectrum(vals, _fix_phases(vecs))


def _kron_all(items) -> np.ndarray:
    return reduce(np.kron, items)


def tensor_product(*factors):
    """Kronecker product of states or of operators; dims are concatenated."""
    if len(factors) < 2:
        raise ShapeError("tensor_product needs at least two operands")
    if all(isinstance(f, StateVector) for f in factors):
        dims = sum((f.dims for f in factors), ())
        return StateVector(_kron_all([f.amplitudes for f in factors]), dims)
    if all(isinstance(f, Operator) for f in factors):
        dims = sum((f.dims for f in factors), ())
        return Operator(_kron_all([f.matrix for f in factors]), dims)
    raise ShapeError("operands must all be states or all be operators")


def embed(op: Operator, position: int, dims: Sequence[int]) -> Operator:
    """Lift an operator on one factor to the full product space."""
    dims = tuple(dims)
    if op.dim != dims[position]:
        raise ShapeError("operator does not match the target factor")
    mats = [np.eye(d) for d in dims]
    mats[position] = op.matrix
    return Operator(_kron_all(mats) if len(mats) > 1 else mats[0], dims)


def partial_trace(rho: Operator, keep: int | Sequence[int]) -> Operator:
    """Trace out every factor except ``keep`` (an index or a list of indices)."""
    n = len(rho.dims)
    if n < 2:
        raise ShapeError("partial trace needs at least two factors")
    keep = [keep] if isinstance(keep, (int, np.integer)) else list(keep)
    if not keep or any(not 0 <= k < n for k in keep) or len(set(keep)) != len(keep):
        raise ShapeError(f"invalid factor index {keep} for {n} factors")
    keep = sorted(keep)
    t = rho.matrix.reshape(rho.dims + rho.dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = list(letters[n:2 * n])
    for i in range(n):
        if i not in keep:
            col[i] = row[i]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    reduced = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    kept = tuple(rho.dims[i] for i in keep)
    side = int(np.prod(kept))
    return Operator(reduced.reshape(side, side), kept)


def unitary_from_hamiltonian(H: Operator, t: float, hbar: float = 1.0) -> Operator:
    """exp(-i H t / hbar) through the spectral decomposition of H."""
    spec = eigh(H)
    phases = np.exp(-1j * spec.eigenvalues * (t / hbar))
    v = spec.eigenvectors
    return Operator((v * phases) @ v.conj().T, H.dims)


def trace_distance(rho: Operator, sigma: Operator) -> float:
    if rho.matrix.shape != sigma.matrix.shape:
        raise ShapeError("trace distance needs operators of equal shape")
    sv = np.linalg.svd(rho.matrix - sigma.matrix, compute_uv=False)
    return float(0.5 * np.sum(sv))


def is_projector(P: Operator, tol: float = HERMITIAN_TOL) -> bool:
    m = P.matrix
    return P.is_hermitian(tol) and float(np.max(np.abs(m @ m - m))) <= tol
