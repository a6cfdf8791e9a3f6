"""
Weak values, post-selection probabilities and the source functional W[J].

Conventions
-----------
A process is a product of slice unitaries ``U_k = exp(-i H_k dt / hbar)``,
``k = 0 .. N-1``. Boundary states are normalized before use; the
post-selected state is given at the final time.

Two kinds of variation appear here:

* ``action_derivative`` varies the slice Hamiltonians, ``H_k -> H_k + g dH_k``,
  so the action changes by ``-g dH_k dt``.
* A *perturbation* ``P`` (``postselect_probability`` and friends) and a
  *source* ``J`` both enter with the source sign, ``H -> H - g P``, so the
  action changes by ``+g P dt``. A delta-time perturbation is the kick
  ``exp(+i g P / hbar)``.

Sources act as a kick ``exp(+i J_k phi dt / hbar)`` at the end of slice
``k``; the functional derivative of W with respect to ``J_k`` is then
exactly the weak value of ``phi`` inserted at the lattice time ``t_{k+1}``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from .exceptions import (BranchError, DimensionError, NotHermitianError,
                         OrthogonalStatesError, TruncationError,
                         UnsupportedOrderError)
from .linalg import (Constants, OperatorMatrix, as_operator, as_state,
                     coherent_state, truncated_fock_operators)
from .numdiff import richardson_derivative, richardson_mixed

__all__ = [
    "ORTHOGONALITY_THRESHOLD", "WeakValueResult", "TimeSlicedProcess",
    "SourceConfig", "IdentityCheck", "weak_value", "postselect_probability",
    "transition_amplitude", "log_prob_derivative", "log_prob_derivative_check",
    "action_derivative", "action_derivative_check", "generating_functional",
    "background_field", "heisenberg_weak_value", "npoint_correlation",
    "time_ordered_insertion", "coherent_background",
]

ORTHOGONALITY_THRESHOLD = 1e-12
FD_STEP = 1e-4
MAX_PATH_SUBSTEPS = 64


@dataclass(frozen=True)
class WeakValueResult:
    """Weak value with its conditioning metadata.

    ``value`` is NaN whenever ``conditioned`` is False.
    """

    value: complex
    overlap_mag: float
    conditioned: bool

    def checked(self) -> complex:
        """Return ``value``, raising if the boundary states were orthogonal."""
        if not self.conditioned:
            raise OrthogonalStatesError(
                f"|<F|I>| = {self.overlap_mag:.3e} below orthogonality threshold")
        return self.value


class IdentityCheck(NamedTuple):
    """An analytic value next to its finite-difference counterpart."""

    analytic: complex
    numeric: complex

    @property
    def abs_err(self) -> float:
        return abs(self.analytic - self.numeric)

    @property
    def rel_err(self) -> float:
        scale = max(abs(self.analytic), abs(self.numeric))
        return self.abs_err / scale if scale > 0 else 0.0


def _unit(x, label=""):
    return as_state(x, label).normalize().amplitudes


def weak_value(pre, post, A, threshold: float = ORTHOGONALITY_THRESHOLD) -> WeakValueResult:
    """Weak value ``<post|A|pre> / <post|pre>`` of normalized boundary states."""
    pre, post, A = _unit(pre), _unit(post), as_operator(A)
    if not (pre.size == post.size == A.dim):
        raise DimensionError(f"dims pre={pre.size} post={post.size} A={A.dim}")
    overlap = np.vdot(post, pre)
    mag = abs(overlap)
    if mag < threshold:
        return WeakValueResult(complex(math.nan, math.nan), mag, False)
    return WeakValueResult(complex(np.vdot(post, A.entries @ pre) / overlap), mag, True)


@dataclass(frozen=True, eq=False)
class TimeSlicedProcess:
    """Piecewise-constant evolution between the initial and final times.

    Parameters
    ----------
    hamiltonians : sequence of Hermitian operators, one per slice.
    dt : slice duration.
    source_operator : the operator a classical source couples to.
    kick_slice : if set, perturbations act as a single kick after this many
        slices (0 = before the first slice) instead of continuously.
    constants : physical constants; only ``hbar`` is used here.
    """

    hamiltonians: tuple
    dt: float
    source_operator: OperatorMatrix | None = None
    kick_slice: int | None = None
    constants: Constants = field(default_factory=Constants)

    def __post_init__(self):
        hams = tuple(as_operator(h) for h in self.hamiltonians)
        if not hams:
            raise ValueError("a process needs at least one slice")
        dim = hams[0].dim
        for i, h in enumerate(hams):
            if h.dim != dim:
                raise DimensionError(f"slice {i} has dim {h.dim}, expected {dim}")
            if not h.hermitian_flag:
                raise NotHermitianError(f"Hamiltonian of slice {i} is not Hermitian")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be finite and > 0, got {self.dt!r}")
        object.__setattr__(self, "hamiltonians", hams)
        if self.source_operator is not None:
            src = as_operator(self.source_operator)
            if src.dim != dim:
                raise DimensionError(f"source operator dim {src.dim} vs {dim}")
            if not src.hermitian_flag:
                raise NotHermitianError("source operator must be Hermitian")
            object.__setattr__(self, "source_operator", src)
        if self.kick_slice is not None and not 0 <= self.kick_slice <= len(hams):
            raise ValueError(f"kick_slice {self.kick_slice} outside 0..{len(hams)}")

    @classmethod
    def trivial(cls, dim: int, source_operator=None, kick: bool = True,
                constants: Constants | None = None) -> "TimeSlicedProcess":
        """One slice with zero Hamiltonian; perturbations act as a kick."""
        return cls((np.zeros((dim, dim)),), 1.0, source_operator,
                   0 if kick else None, constants or Constants())

    @classmethod
    def constant(cls, H, n_slices: int, dt: float, source_operator=None,
                 kick_slice=None, constants: Constants | None = None):
        """``n_slices`` copies of the same Hamiltonian."""
        H = as_operator(H)
        return cls((H,) * n_slices, dt, source_operator, kick_slice,
                   constants or Constants())

    @property
    def n_slices(self) -> int:
        return len(self.hamiltonians)

    @property
    def dim(self) -> int:
        return self.hamiltonians[0].dim

    @property
    def hbar(self) -> float:
        return self.constants.hbar

    @property
    def t_grid(self) -> np.ndarray:
        """Lattice times ``t_0 = 0 .. t_N = N dt``."""
        return np.arange(self.n_slices + 1) * self.dt

    @cached_property
    def unitaries(self) -> tuple:
        return tuple(self._slice_unitary(h) for h in self.hamiltonians)

    def _slice_unitary(self, h: OperatorMatrix, shift=None):
        m = h.entries if shift is None else h.entries + shift
        w, v = np.linalg.eigh(m)
        return (v * np.exp(-1j * w * self.dt / self.hbar)) @ v.conj().T

    @cached_property
    def _source_eigh(self):
        if self.source_operator is None:
            raise ValueError("process has no source operator")
        return self.source_operator.eigh

    def source_kick(self, strength: float) -> np.ndarray:
        """``exp(+i strength phi / hbar)`` for the source operator ``phi``."""
        w, v = self._source_eigh
        return (v * np.exp(1j * strength * w / self.hbar)) @ v.conj().T

    def kets(self, pre) -> list:
        """States after 0, 1, ..., N slices."""
        out = [np.asarray(pre, dtype=complex)]
        for u in self.unitaries:
            out.append(u @ out[-1])
        return out

    def bras(self, post) -> list:
        """``bras[j]`` pairs with ``kets[j]``: ``<F| U_N ... U_{j+1}`` as a column."""
        out = [np.asarray(post, dtype=complex)]
        for u in reversed(self.unitaries):
            out.append(u.conj().T @ out[-1])
        return out[::-1]


@dataclass(frozen=True)
class SourceConfig:
    """Classical source strengths on selected slices."""

    j_values: tuple
    slice_indices: tuple

    def __post_init__(self):
        j = tuple(float(v) for v in self.j_values)
        idx = tuple(int(i) for i in self.slice_indices)
        if len(j) != len(idx):
            raise DimensionError("j_values and slice_indices differ in length")
        if not all(math.isfinite(v) for v in j):
            raise ValueError("source values must be finite")
        object.__setattr__(self, "j_values", j)
        object.__setattr__(self, "slice_indices", idx)

    @classmethod
    def zero(cls) -> "SourceConfig":
        return cls((), ())

    def as_array(self, n_slices: int) -> np.ndarray:
        out = np.zeros(n_slices)
        for j, k in zip(self.j_values, self.slice_indices):
            if not 0 <= k < n_slices:
                raise IndexError(f"source slice {k} outside 0..{n_slices - 1}")
            out[k] += j
        return out


def _as_source_array(source, n_slices):
    if source is None:
        return np.zeros(n_slices)
    if isinstance(source, SourceConfig):
        return source.as_array(n_slices)
    arr = np.asarray(source, dtype=float)
    if arr.shape != (n_slices,):
        raise DimensionError(f"source array shape {arr.shape}, expected ({n_slices},)")
    return arr


def transition_amplitude(pre, post, process: TimeSlicedProcess, source=None) -> complex:
    """``<F|I>_J`` for normalized boundary states under the sourced process."""
    pre, post = _unit(pre), _unit(post)
    _check_dims(pre, post, process)
    J = _as_source_array(source, process.n_slices)
    ket = pre
    for k, u in enumerate(process.unitaries):
        ket = u @ ket
        if J[k] != 0.0:
            ket = process.source_kick(J[k] * process.dt) @ ket
    return complex(np.vdot(post, ket))


def _check_dims(pre, post, process):
    if not (pre.size == post.size == process.dim):
        raise DimensionError(
            f"dims pre={pre.size} post={post.size} process={process.dim}")


def _check_perturbation(P, dim):
    P = as_operator(P)
    if not P.hermitian_flag:
        raise NotHermitianError("perturbation must be Hermitian")
    if P.dim != dim:
        raise DimensionError(f"perturbation dim {P.dim} vs process dim {dim}")
    return P


def _perturbed_amplitude(pre, post, process, g, P):
    """Amplitude with the action varied by ``+g P`` (per unit time, or as a kick)."""
    hbar = process.hbar
    if process.kick_slice is None:
        ket = pre
        for h in process.hamiltonians:
            ket = process._slice_unitary(h, -g * P.entries) @ ket
        return complex(np.vdot(post, ket))
    m = process.kick_slice
    ket = process.kets(pre)[m]
    w, v = P.eigh
    ket = v @ (np.exp(1j * g * w / hbar) * (v.conj().T @ ket))
    for u in process.unitaries[m:]:
        ket = u @ ket
    return complex(np.vdot(post, ket))


def postselect_probability(pre, post, process: TimeSlicedProcess, g: float,
                           perturbation) -> float:
    """Post-selection probability ``|<F|I>_g|^2`` with the action varied by ``g P``."""
    pre, post = _unit(pre), _unit(post)
    _check_dims(pre, post, process)
    P = _check_perturbation(perturbation, process.dim)
    if not math.isfinite(g):
        raise ValueError("coupling must be finite")
    return min(1.0, abs(_perturbed_amplitude(pre, post, process, g, P)) ** 2)


def _slice_derivative(process, h: OperatorMatrix, dh: np.ndarray) -> np.ndarray:
    """Exact derivative of ``exp(-i (h + g dh) dt / hbar)`` at ``g = 0``.

    Uses the divided-difference formula in the eigenbasis of ``h``; this is
    the insertion of ``dh`` integrated over the slice, time-ordered.
    """
    w, v = h.eigh
    lam = -1j * w * process.dt / process.hbar
    delta = lam[None, :] - lam[:, None]
    safe = np.where(delta == 0, 1.0, delta)
    phi = np.exp(lam)[:, None] * np.where(delta == 0, 1.0, np.expm1(delta) / safe)
    dh_eig = v.conj().T @ dh @ v
    return v @ ((-1j * process.dt / process.hbar) * dh_eig * phi) @ v.conj().T


def _per_slice(ops, n_slices, dim):
    if isinstance(ops, (OperatorMatrix, np.ndarray)) and np.ndim(ops) == 2:
        ops = [ops] * n_slices
    ops = list(ops)
    if len(ops) != n_slices:
        raise DimensionError(f"{len(ops)} variations for {n_slices} slices")
    out = []
    for op in ops:
        if op is None:
            out.append(None)
            continue
        op = as_operator(op)
        if op.dim != dim:
            raise DimensionError(f"variation dim {op.dim} vs process dim {dim}")
        out.append(None if not np.any(op.entries) else op.entries)
    return out


def action_derivative(pre, post, process: TimeSlicedProcess, dH_dg) -> complex:
    """``d<F|I>_g / dg`` at ``g = 0`` for ``H_k -> H_k + g dH_dg[k]``.

    Evaluated as ``(i/hbar) <F| dS |I>`` with the time-ordered action
    variation ``dS_k = -dH_dg[k] dt`` inserted in each slice. ``dH_dg`` is
    one operator for every slice or a sequence (``None`` = no variation).
    """
    pre, post = _unit(pre), _unit(post)
    _check_dims(pre, post, process)
    variations = _per_slice(dH_dg, process.n_slices, process.dim)
    kets, bras = process.kets(pre), process.bras(post)
    total = 0j
    for k, (h, dh) in enumerate(zip(process.hamiltonians, variations)):
        if dh is None:
            continue
        total += np.vdot(bras[k + 1], _slice_derivative(process, h, dh) @ kets[k])
    return complex(total)


def _fd_step(process, op_norm):
    scale = process.n_slices * process.dt * max(op_norm, 1e-300)
    return FD_STEP * process.hbar / scale


def action_derivative_check(pre, post, process: TimeSlicedProcess, dH_dg,
                            step: float | None = None) -> IdentityCheck:
    """Compare :func:`action_derivative` with a Richardson finite difference."""
    analytic = action_derivative(pre, post, process, dH_dg)
    pre_u, post_u = _unit(pre), _unit(post)
    variations = _per_slice(dH_dg, process.n_slices, process.dim)
    norm = max((np.linalg.norm(d, 2) for d in variations if d is not None), default=1.0)
    h = step if step is not None else 10 * _fd_step(process, norm)

    def amp(g):
        ket = pre_u
        for H, d in zip(process.hamiltonians, variations):
            ket = process._slice_unitary(H, None if d is None else g * d) @ ket
        return np.vdot(post_u, ket)

    return IdentityCheck(analytic, complex(richardson_derivative(amp, h)))


def _perturbation_derivative(pre, post, process, P):
    """``dZ/dg`` at zero for the action varied by ``+g P``."""
    if process.kick_slice is None:
        return action_derivative(pre, post, process, OperatorMatrix(-P.entries))
    m = process.kick_slice
    ket = process.kets(pre)[m]
    bra = process.bras(post)[m]
    return 1j / process.hbar * complex(np.vdot(bra, P.entries @ ket))


def log_prob_derivative(pre, post, process: TimeSlicedProcess, perturbation) -> float:
    """Relative change of the post-selection probability per unit coupling.

    Returns ``-(2/hbar) Im(<F|dS|I> / <F|I>)`` where the action variation
    is ``dS = P dt`` per slice (``dS = P`` for a kick).
    """
    pre, post = _unit(pre), _unit(post)
    _check_dims(pre, post, process)
    P = _check_perturbation(perturbation, process.dim)
    Z = transition_amplitude(pre, post, process)
    if abs(Z) < ORTHOGONALITY_THRESHOLD:
        raise OrthogonalStatesError(f"|<F|I>| = {abs(Z):.3e} under the unperturbed process")
    dZ = _perturbation_derivative(pre, post, process, P)
    dS_weak = process.hbar / 1j * dZ / Z
    return -2.0 / process.hbar * dS_weak.imag


def log_prob_derivative_check(pre, post, process: TimeSlicedProcess, perturbation,
                              step: float | None = None) -> IdentityCheck:
    """Analytic log-probability slope next to the finite difference of ln p(g)."""
    analytic = log_prob_derivative(pre, post, process, perturbation)
    P = as_operator(perturbation)
    span = 1.0 if process.kick_slice is not None else process.n_slices * process.dt
    h = step if step is not None else 1e-3 * process.hbar / (span * max(np.linalg.norm(P.entries, 2), 1e-300))

    def lnp(g):
        return math.log(postselect_probability(pre, post, process, g, P))

    return IdentityCheck(analytic, richardson_derivative(lnp, h))


def _source_step(process, J):
    phi = process.source_operator
    if phi is None:
        raise ValueError("process has no source operator")
    norm = max(np.max(np.abs(phi.eigh[0])), 1e-300)
    natural = process.hbar / (process.dt * norm)
    return FD_STEP * max(natural, float(np.max(np.abs(J), initial=0.0)))


def generating_functional(pre, post, process: TimeSlicedProcess, source=None) -> complex:
    """``W[J] = -i hbar ln <F|I>_J`` on a branch continuous in ``J``.

    The branch is the principal one at ``J = 0`` and is continued along the
    straight path ``lambda J``, refining the path up to 64 substeps until
    every phase increment is below pi/4.
    """
    pre, post = _unit(pre), _unit(post)
    _check_dims(pre, post, process)
    J = _as_source_array(source, process.n_slices)
    hbar = process.hbar
    z0 = transition_amplitude(pre, post, process)
    if abs(z0) < ORTHOGONALITY_THRESHOLD:
        raise BranchError(f"amplitude vanishes at J = 0 (|Z| = {abs(z0):.3e})")
    log_z = cmath.log(z0)
    if not np.any(J):
        return -1j * hbar * log_z
    n_sub = 1
    while True:
        zs = [z0]
        for i in range(1, n_sub + 1):
            z = transition_amplitude(pre, post, process, J * (i / n_sub))
            if abs(z) < ORTHOGONALITY_THRESHOLD:
                raise BranchError(f"amplitude vanishes on the source path at lambda={i / n_sub:.3f}")
            zs.append(z)
        ratios = [b / a for a, b in zip(zs[:-1], zs[1:])]
        if all(abs(cmath.phase(r)) < math.pi / 4 for r in ratios):
            break
        if n_sub >= MAX_PATH_SUBSTEPS:
            raise BranchError("phase jumps exceed pi/4 even with 64 path substeps")
        n_sub *= 2
    for r in ratios:
        log_z += cmath.log(r)
    return -1j * hbar * log_z


def background_field(pre, post, process: TimeSlicedProcess, slice_k: int,
                     source=None, step: float | None = None) -> complex:
    """Functional derivative ``dW/dJ`` at slice ``slice_k`` by finite differences.

    Central difference in ``J_k`` with one Richardson level, divided by
    ``dt``. The default step is 1e-4 of the source scale, taken as the
    larger of ``max|J|`` and ``hbar / (dt ||phi||)``.
    """
    if not 0 <= slice_k < process.n_slices:
        raise IndexError(f"slice {slice_k} outside 0..{process.n_slices - 1}")
    J0 = _as_source_array(source, process.n_slices)
    h = step if step is not None else _source_step(process, J0)
    e_k = np.zeros(process.n_slices)
    e_k[slice_k] = 1.0

    def W(eps):
        return generating_functional(pre, post, process, J0 + eps * e_k)

    return complex(richardson_derivative(W, h)) / process.dt


def heisenberg_weak_value(pre, post, process: TimeSlicedProcess, slice_k: int,
                          op=None) -> WeakValueResult:
    """Weak value of ``U_{1..k}^dag op U_{1..k}`` with the Heisenberg-picture post state.

    ``op`` defaults to the source operator; slice ``k`` is 0-based, so the
    insertion sits at the end of slice ``k``.
    """
    op = as_operator(op if op is not None else process.source_operator)
    u_k = np.eye(process.dim, dtype=complex)
    for u in process.unitaries[: slice_k + 1]:
        u_k = u @ u_k
    u_total = u_k
    for u in process.unitaries[slice_k + 1:]:
        u_total = u @ u_total
    op_h = u_k.conj().T @ op.entries @ u_k
    post_h = u_total.conj().T @ _unit(post)
    return weak_value(pre, post_h, op_h)


def time_ordered_insertion(pre, post, process: TimeSlicedProcess,
                           slices: Sequence[int], ops=None) -> complex:
    """``<F| ... op(t_2) ... op(t_1) ... |I> / <F|I>`` for increasing slices."""
    slices = list(slices)
    if any(b <= a for a, b in zip(slices, slices[1:])):
        raise ValueError("slices must be strictly increasing")
    if ops is None:
        ops = [process.source_operator] * len(slices)
    ops = [as_operator(o).entries for o in ops]
    pre, post = _unit(pre), _unit(post)
    ket = pre
    inserts = dict(zip(slices, ops))
    for k, u in enumerate(process.unitaries):
        ket = u @ ket
        if k in inserts:
            ket = inserts[k] @ ket
    Z = transition_amplitude(pre, post, process)
    if abs(Z) < ORTHOGONALITY_THRESHOLD:
        raise OrthogonalStatesError("boundary states orthogonal under the process")
    return complex(np.vdot(post, ket) / Z)


def npoint_correlation(pre, post, process: TimeSlicedProcess, slices: Sequence[int],
                       source=None, step: float | None = None) -> complex:
    """Time-ordered 1- or 2-point function from derivatives of ``exp(iW/hbar)``.

    Two-point functions require distinct slices; equal-time products have
    no ordering prescription here.
    """
    slices = list(slices)
    n = len(slices)
    if n not in (1, 2):
        raise UnsupportedOrderError(f"only n = 1, 2 supported, got n = {n}")
    if n == 1:
        return background_field(pre, post, process, slices[0], source, step)
    k1, k2 = slices
    if k1 >= k2:
        raise ValueError("two-point slices must be distinct and sorted")
    J0 = _as_source_array(source, process.n_slices)
    h = step if step is not None else _source_step(process, J0)
    hbar = process.hbar
    w0 = generating_functional(pre, post, process, J0)

    def Z(e1, e2):
        J = J0.copy()
        J[k1] += e1
        J[k2] += e2
        return cmath.exp(1j * generating_functional(pre, post, process, J) / hbar)

    d2 = richardson_mixed(Z, h)
    return complex(cmath.exp(-1j * w0 / hbar) * (-1j * hbar) ** 2 * d2 / process.dt ** 2)


def coherent_background(alpha: complex, post, n_max: int,
                        tail_tol: float = 1e-10) -> complex:
    """Weak value of the annihilation operator with a coherent pre-selection.

    For any post-selection not orthogonal to ``|alpha>`` this is ``alpha``
    up to truncation error.
    """
    tail = float(stats.poisson.sf(n_max - 1, abs(alpha) ** 2))
    if tail >= tail_tol:
        raise TruncationError(
            f"coherent tail mass {tail:.2e} beyond n_max={n_max} exceeds {tail_tol:g}")
    a = truncated_fock_operators(n_max).a
    pre = coherent_state(alpha, n_max)
    return weak_value(pre, post, a).checked()
