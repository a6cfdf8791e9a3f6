"""
Dense finite-dimensional linear algebra: states, operators, tensor products
and unitary evolution.

Every value is immutable after construction. Operations accept either the
wrapper types below or plain array-likes, which are converted on entry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Union

import numpy as np
import scipy.linalg

from .exceptions import DimensionCapError, DimensionError, NotHermitianError

__all__ = [
    "Constants", "StateVector", "OperatorMatrix", "FockOperators",
    "as_state", "as_operator", "inner", "tensor", "evolve",
    "matrix_exponential", "truncated_fock_operators", "coherent_state",
    "basis_state", "pauli", "identity", "HERMITIAN_TOL", "UNITARY_TOL",
    "DIM_CAP",
]

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
DIM_CAP = 4096


@dataclass(frozen=True)
class Constants:
    """Physical constants threaded through every calculation.

    Defaults are natural units. ``hbar`` is kept explicit so that the
    factors of hbar in the action identities are exercised by tests.
    """

    hbar: float = 1.0
    mass: float = 1.0
    c_light: float = 1.0

    def __post_init__(self):
        for name in ("hbar", "mass", "c_light"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")


def _frozen(array):
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class StateVector:
    """Complex amplitudes over a labelled finite basis."""

    amplitudes: np.ndarray
    basis_label: str = ""

    def __post_init__(self):
        amps = _frozen(self.amplitudes).reshape(-1)
        if amps.size < 1:
            raise DimensionError("a state needs at least one amplitude")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.amplitudes / n, self.basis_label)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)

    def __repr__(self):
        return f"StateVector(dim={self.dim}, basis_label={self.basis_label!r})"


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense square complex matrix with cached Hermiticity/unitarity flags.

    ``hermitian_flag`` is evaluated at construction. ``unitary_flag`` needs
    a matrix product, so it is evaluated on first access and then cached.
    """

    entries: np.ndarray
    hermitian_flag: bool = field(init=False)

    def __post_init__(self):
        m = _frozen(self.entries)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"operator must be square, got shape {m.shape}")
        object.__setattr__(self, "entries", m)
        herm = bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= HERMITIAN_TOL)
        object.__setattr__(self, "hermitian_flag", herm)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def unitary_flag(self) -> bool:
        m = self.entries
        resid = m.conj().T @ m - np.eye(self.dim)
        return bool(np.max(np.abs(resid)) <= UNITARY_TOL)

    @cached_property
    def eigh(self):
        """Eigendecomposition ``(values, vectors)``; Hermitian operators only."""
        if not self.hermitian_flag:
            raise NotHermitianError("eigh requested for a non-Hermitian operator")
        return np.linalg.eigh(self.entries)

    def dagger(self) -> "OperatorMatrix":
        return OperatorMatrix(self.entries.conj().T)

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            return OperatorMatrix(self.entries @ other.entries)
        if isinstance(other, StateVector):
            return StateVector(self.entries @ other.amplitudes, other.basis_label)
        return NotImplemented

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __repr__(self):
        return (f"OperatorMatrix(dim={self.dim}, "
                f"hermitian_flag={self.hermitian_flag})")


StateLike = Union[StateVector, np.ndarray, list, tuple]
OperatorLike = Union[OperatorMatrix, np.ndarray, list, tuple]


def as_state(x, label: str = "") -> StateVector:
    if isinstance(x, StateVector):
        return x
    return StateVector(np.asarray(x, dtype=complex), label)


def as_operator(x) -> OperatorMatrix:
    if isinstance(x, OperatorMatrix):
        return x
    return OperatorMatrix(np.asarray(x, dtype=complex))


def inner(bra: StateLike, ket: StateLike) -> complex:
    """Return <bra|ket>, conjugate-linear in ``bra``."""
    bra, ket = as_state(bra), as_state(ket)
    if bra.dim != ket.dim:
        raise DimensionError(f"inner product of dims {bra.dim} and {ket.dim}")
    return complex(np.vdot(bra.amplitudes, ket.amplitudes))


def tensor(a, b):
    """Kronecker product with ``a`` as the major (slow) index."""
    if isinstance(a, OperatorMatrix) or isinstance(b, OperatorMatrix):
        return OperatorMatrix(np.kron(as_operator(a).entries, as_operator(b).entries))
    a, b = as_state(a), as_state(b)
    label = f"{a.basis_label}*{b.basis_label}" if (a.basis_label or b.basis_label) else ""
    return StateVector(np.kron(a.amplitudes, b.amplitudes), label)


def matrix_exponential(M: OperatorLike, scale: complex = 1.0,
                       dim_cap: int = DIM_CAP) -> OperatorMatrix:
    """Return ``exp(scale * M)``.

    Hermitian ``M`` goes through its eigendecomposition; anything else uses
    scipy's scaling-and-squaring Padé routine.
    """
    M = as_operator(M)
    if M.dim > dim_cap:
        raise DimensionCapError(f"dimension {M.dim} exceeds cap {dim_cap}")
    if scale == 0:
        return OperatorMatrix(np.eye(M.dim, dtype=complex))
    if M.hermitian_flag:
        w, v = M.eigh
        return OperatorMatrix((v * np.exp(scale * w)) @ v.conj().T)
    return OperatorMatrix(scipy.linalg.expm(scale * M.entries))


def evolve(state: StateLike, H: OperatorLike, t: float,
           k: Constants = Constants()) -> StateVector:
    """Return ``exp(-i H t / hbar) |state>``."""
    state, H = as_state(state), as_operator(H)
    if not H.hermitian_flag:
        raise NotHermitianError("evolution requires a Hermitian Hamiltonian")
    if H.dim != state.dim:
        raise DimensionError(f"Hamiltonian dim {H.dim} vs state dim {state.dim}")
    w, v = H.eigh
    coeffs = np.exp(-1j * w * t / k.hbar) * (v.conj().T @ state.amplitudes)
    return StateVector(v @ coeffs, state.basis_label)


class FockOperators(NamedTuple):
    a: OperatorMatrix
    adag: OperatorMatrix
    x: OperatorMatrix
    p: OperatorMatrix
    n: OperatorMatrix


def truncated_fock_operators(n_max: int, k: Constants = Constants(),
                             omega: float = 1.0) -> FockOperators:
    """Ladder, quadrature and number operators on the first ``n_max`` levels.

    The canonical commutator holds on every level except the last one,
    where truncation cuts the ladder.
    """
    if n_max < 2:
        raise ValueError(f"n_max must be >= 2, got {n_max}")
    if omega <= 0:
        raise ValueError("omega sets the quadrature scale and must be > 0")
    a = np.diag(np.sqrt(np.arange(1, n_max, dtype=float)), 1).astype(complex)
    adag = a.conj().T
    x = math.sqrt(k.hbar / (2 * k.mass * omega)) * (a + adag)
    p = 1j * math.sqrt(k.hbar * k.mass * omega / 2) * (adag - a)
    n = np.diag(np.arange(n_max, dtype=float)).astype(complex)
    return FockOperators(*(OperatorMatrix(m) for m in (a, adag, x, p, n)))


def coherent_state(alpha: complex, n_max: int, normalize: bool = True) -> StateVector:
    """Coherent state |alpha> truncated to ``n_max`` Fock levels."""
    amps = np.empty(n_max, dtype=complex)
    amps[0] = math.exp(-abs(alpha) ** 2 / 2)
    for n in range(1, n_max):
        amps[n] = amps[n - 1] * alpha / math.sqrt(n)
    state = StateVector(amps, "fock")
    return state.normalize() if normalize else state


def basis_state(dim: int, index: int, label: str = "") -> StateVector:
    amps = np.zeros(dim, dtype=complex)
    amps[index] = 1.0
    return StateVector(amps, label)


_PAULI = {
    "x": [[0, 1], [1, 0]],
    "y": [[0, -1j], [1j, 0]],
    "z": [[1, 0], [0, -1]],
}


def pauli(axis: str) -> OperatorMatrix:
    """Pauli matrix for ``axis`` in {'x', 'y', 'z'}."""
    return OperatorMatrix(np.array(_PAULI[axis.lower()], dtype=complex))


def identity(dim: int) -> OperatorMatrix:
    return OperatorMatrix(np.eye(dim, dtype=complex))
