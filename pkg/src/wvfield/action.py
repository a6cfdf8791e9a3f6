"""
Lattice actions for quadratic Lagrangians and the classical side of the
weak-value correspondence.

The Lagrangian is ``L = (m/2) phi'^2 - (m omega^2/2) phi^2 + J phi`` on
``n_sites`` equally spaced times. Paths may be complex: a weak-valued
trajectory is complex in general and still solves the (holomorphic)
Euler-Lagrange equation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import lapack

from .exceptions import DimensionError, ResonanceError, TruncationError
from .export import write_csv
from .linalg import (Constants, as_operator, as_state, truncated_fock_operators)
from .weak import (TimeSlicedProcess, background_field, generating_functional,
                   _as_source_array, _unit)

__all__ = [
    "LatticeAction", "LatticePath", "LegendreReport", "action_value",
    "el_residual", "action_gradient", "solve_boundary_value",
    "fock_hamiltonian", "weak_trajectory", "weak_trajectory_via_source",
    "classicality_check", "legendre_check", "sourced_insertion",
    "write_trajectory_csv", "PIVOT_TOL", "CONVERGENCE_TOL",
]

PIVOT_TOL = 1e-12
CONVERGENCE_TOL = 1e-8


def _frozen_values(values):
    arr = np.array(values)
    if not np.iscomplexobj(arr):
        arr = arr.astype(float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LatticeAction:
    """Discretized quadratic action.

    ``source`` defaults to zero; it may be real or complex, one value per site.
    """

    n_sites: int
    dt: float
    mass: float = 1.0
    omega: float = 0.0
    source: np.ndarray | None = None

    def __post_init__(self):
        if self.n_sites < 3:
            raise ValueError("n_sites must be >= 3")
        if not (self.dt > 0 and self.mass > 0 and self.omega >= 0):
            raise ValueError("need dt > 0, mass > 0, omega >= 0")
        if self.dt * self.omega >= 0.5:
            raise ValueError(f"dt*omega = {self.dt * self.omega:g} must be < 0.5")
        src = np.zeros(self.n_sites) if self.source is None else self.source
        src = _frozen_values(src)
        if src.shape != (self.n_sites,):
            raise DimensionError(f"source has shape {src.shape}, expected ({self.n_sites},)")
        object.__setattr__(self, "source", src)

    @property
    def duration(self) -> float:
        return self.dt * (self.n_sites - 1)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_sites)

    def with_source(self, source) -> "LatticeAction":
        return LatticeAction(self.n_sites, self.dt, self.mass, self.omega, source)


@dataclass(frozen=True, eq=False)
class LatticePath:
    """Field values per site; the endpoints are the fixed boundary data."""

    values: np.ndarray

    def __post_init__(self):
        vals = _frozen_values(self.values).reshape(-1)
        if vals.size < 2:
            raise DimensionError("a path needs at least two sites")
        object.__setattr__(self, "values", vals)

    @property
    def boundary(self) -> tuple:
        return self.values[0], self.values[-1]

    def with_interior(self, interior) -> "LatticePath":
        """New path with the same endpoints and the given interior values."""
        interior = np.asarray(interior)
        if interior.shape != (self.values.size - 2,):
            raise DimensionError("interior length mismatch")
        return LatticePath(np.concatenate([[self.values[0]], interior, [self.values[-1]]]))

    def __len__(self):
        return self.values.size


def _check_lengths(a: LatticeAction, path: LatticePath):
    if len(path) != a.n_sites:
        raise DimensionError(f"path has {len(path)} sites, action has {a.n_sites}")


def action_value(a: LatticeAction, path: LatticePath) -> complex:
    """Left-point lattice action over the ``n_sites - 1`` intervals."""
    _check_lengths(a, path)
    phi = path.values
    kinetic = 0.5 * a.mass * (np.diff(phi) / a.dt) ** 2
    potential = 0.5 * a.mass * a.omega ** 2 * phi[:-1] ** 2
    return complex(a.dt * np.sum(kinetic - potential + a.source[:-1] * phi[:-1]))


def el_residual(a: LatticeAction, path: LatticePath) -> np.ndarray:
    """Discrete Euler-Lagrange residual at the interior sites.

    Equals ``(dS/dphi_k) / dt``, so it has the units of a force.
    """
    _check_lengths(a, path)
    phi = path.values
    second = (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / a.dt ** 2
    return -a.mass * second - a.mass * a.omega ** 2 * phi[1:-1] + a.source[1:-1]


def action_gradient(a: LatticeAction, path: LatticePath, step: float | None = None) -> np.ndarray:
    """Central finite-difference ``dS/dphi_k`` at interior sites, divided by ``dt``.

    The action is quadratic, so the central difference has no truncation
    error and a large step (default ``0.1 max(1, max|phi|)``) keeps rounding low.
    """
    _check_lengths(a, path)
    phi = np.array(path.values, dtype=complex)
    if step is None:
        step = 0.1 * max(1.0, float(np.max(np.abs(phi))))
    out = np.empty(a.n_sites - 2, dtype=complex)
    for k in range(1, a.n_sites - 1):
        up, down = phi.copy(), phi.copy()
        up[k] += step
        down[k] -= step
        out[k - 1] = (action_value(a, LatticePath(up)) - action_value(a, LatticePath(down))) / (2 * step)
    out /= a.dt
    return out if np.iscomplexobj(path.values) else out.real


def _banded_solve(sub, diag, sup, rhs, omega_T):
    """LU with partial pivoting on a tridiagonal system; small pivots mean resonance.

    Pivot rounding grows with the system size, so the 1e-12 threshold is
    taken relative to ``max|A| * n``.
    """
    n = diag.size
    ab = np.zeros((4, n), dtype=complex)
    ab[1, 1:] = sup
    ab[2, :] = diag
    ab[3, :-1] = sub
    scale = np.max(np.abs(ab))
    gbtrf, gbtrs = lapack.get_lapack_funcs(("gbtrf", "gbtrs"), (ab,))
    lu, piv, info = gbtrf(ab, 1, 1)
    pivots = np.abs(lu[2, :])
    if info > 0 or np.min(pivots) < PIVOT_TOL * scale * n:
        raise ResonanceError(
            f"boundary-value system is singular at omega*T = {omega_T:.12g} "
            f"(smallest pivot {np.min(pivots):.3e})")
    x, info = gbtrs(lu, 1, 1, rhs.astype(complex), piv)
    if info != 0:
        raise ArithmeticError(f"banded solve failed (info={info})")
    return x


def solve_boundary_value(a: LatticeAction, phi_I, phi_F) -> LatticePath:
    """Path with the given endpoints and zero Euler-Lagrange residual.

    Complex boundary values and sources are supported. A singular system
    (the discrete analogue of ``sin(omega T) = 0``) raises
    :class:`ResonanceError`.
    """
    n = a.n_sites - 2
    c = a.mass / a.dt ** 2
    diag = np.full(n, 2 * c - a.mass * a.omega ** 2, dtype=complex)
    off = np.full(n - 1, -c, dtype=complex)
    rhs = -np.asarray(a.source[1:-1], dtype=complex)
    rhs[0] += c * phi_I
    rhs[-1] += c * phi_F
    interior = _banded_solve(off, diag, off, rhs, a.omega * a.duration)
    values = np.concatenate([[phi_I], interior, [phi_F]])
    if not (np.iscomplexobj(np.asarray(phi_I)) or np.iscomplexobj(np.asarray(phi_F))
            or np.iscomplexobj(a.source)):
        values = values.real
    return LatticePath(values)


# --- weak-valued trajectories on a truncated Fock space ------------------------

def fock_hamiltonian(n_max: int, omega: float, constants: Constants = Constants(),
                     omega_ref: float = 1.0):
    """Hamiltonian and position operator for a free (omega = 0) or harmonic mode.

    The harmonic case uses the exact diagonal ``hbar omega (n + 1/2)``; the
    free case uses ``p^2 / 2m`` with quadratures scaled by ``omega_ref``.
    """
    if omega > 0:
        ops = truncated_fock_operators(n_max, constants, omega)
        H = constants.hbar * omega * (np.diag(np.arange(n_max)) + 0.5 * np.eye(n_max))
    else:
        ops = truncated_fock_operators(n_max, constants, omega_ref)
        p = ops.p.entries
        H = p @ p / (2 * constants.mass)
    return as_operator(H), ops.x


def _pad(state, n):
    amps = as_state(state).amplitudes
    if amps.size > n:
        raise DimensionError(f"state of dim {amps.size} exceeds n_max={n}")
    out = np.zeros(n, dtype=complex)
    out[: amps.size] = amps
    return out


def _heisenberg_weak_x(pre, post, omega, times, n_max, constants, omega_ref):
    H, x = fock_hamiltonian(n_max, omega, constants, omega_ref)
    w, v = H.eigh
    psi_i = _unit(_pad(pre, n_max))
    psi_f = _unit(_pad(post, n_max))
    overlap = np.vdot(psi_f, psi_i)
    if abs(overlap) < 1e-12:
        raise ValueError("pre- and post-selected states are orthogonal")
    phases = np.exp(-1j * np.outer(w, times) / constants.hbar)
    ket = v @ (phases * (v.conj().T @ psi_i)[:, None])
    bra = v @ (phases * (v.conj().T @ psi_f)[:, None])
    return np.einsum("it,it->t", bra.conj(), x.entries @ ket) / overlap


def weak_trajectory(pre, post, omega: float, times, n_max: int = 64,
                    constants: Constants = Constants(), omega_ref: float = 1.0,
                    check_convergence: bool = True) -> np.ndarray:
    """``<F| x_H(t) |I> / <F|I>`` at each time, Heisenberg picture.

    Both boundary states are Heisenberg-picture states (so ``pre = post``
    gives an expectation value). Convergence is checked by repeating the
    computation with ``2 n_max`` levels (states zero-padded) and requiring
    agreement within 1e-8; otherwise :class:`TruncationError` is raised.
    """
    times = np.asarray(times, dtype=float)
    xw = _heisenberg_weak_x(pre, post, omega, times, n_max, constants, omega_ref)
    if check_convergence:
        ref = _heisenberg_weak_x(pre, post, omega, times, 2 * n_max, constants, omega_ref)
        change = float(np.max(np.abs(ref - xw)))
        if change >= CONVERGENCE_TOL * max(1.0, float(np.max(np.abs(ref)))):
            raise TruncationError(
                f"doubling n_max={n_max} changes the trajectory by {change:.2e}")
    return xw


def weak_trajectory_via_source(pre, post, omega: float, n_slices: int, dt: float,
                               n_max: int = 64, constants: Constants = Constants(),
                               omega_ref: float = 1.0) -> np.ndarray:
    """Same trajectory from source derivatives of W[J] at ``t_1 .. t_N``.

    The Heisenberg-picture post state is moved to the final time first.
    """
    H, x = fock_hamiltonian(n_max, omega, constants, omega_ref)
    process = TimeSlicedProcess.constant(H, n_slices, dt, source_operator=x,
                                         constants=constants)
    psi_f = _pad(post, n_max)
    for u in process.unitaries:
        psi_f = u @ psi_f
    psi_i = _pad(pre, n_max)
    return np.array([background_field(psi_i, psi_f, process, k) for k in range(n_slices)])


def classicality_check(x_w, a: LatticeAction) -> float:
    """Max Euler-Lagrange residual of ``x_w`` taken as a lattice path."""
    if np.any(a.source != 0):
        raise ValueError("classicality_check expects a source-free action")
    return float(np.max(np.abs(el_residual(a, LatticePath(np.asarray(x_w))))))


def write_trajectory_csv(path, a: LatticeAction, x_w) -> None:
    """CSV ``t, re_phi, im_phi, residual``; boundary sites have an empty residual."""
    x_w = np.asarray(x_w, dtype=complex)
    res = [None] + list(np.abs(el_residual(a, LatticePath(x_w)))) + [None]
    write_csv(path, ["t", "re_phi", "im_phi", "residual"],
              zip(a.times, x_w.real, x_w.imag, res))


# --- Legendre structure of W[J] -------------------------------------------------

def sourced_insertion(pre, post, process: TimeSlicedProcess, source, slice_k: int) -> complex:
    """Weak value of the source operator at the end of slice ``k`` in the sourced process."""
    pre, post = _unit(pre), _unit(post)
    J = _as_source_array(source, process.n_slices)
    phi = process.source_operator.entries
    ket = pre
    inserted = None
    for k, u in enumerate(process.unitaries):
        ket = u @ ket
        if inserted is not None:
            inserted = u @ inserted
        if k == slice_k:
            inserted = phi @ ket
        if J[k] != 0:
            kick = process.source_kick(J[k] * process.dt)
            ket = kick @ ket
            inserted = kick @ inserted if inserted is not None else None
    return complex(np.vdot(post, inserted) / np.vdot(post, ket))


class LegendreReport(NamedTuple):
    derivative_dev: float
    path_dev: float
    gamma_dev: float

    @property
    def max_deviation(self) -> float:
        return max(self.derivative_dev, self.path_dev, self.gamma_dev)


def _leg_integral(pre, post, process, J_start, J_end, nodes, weights):
    """Integral of ``sum_k phi_k dJ_k dt`` along the straight segment."""
    dJ = J_end - J_start
    active = np.flatnonzero(dJ)
    total = 0j
    for s, wq in zip(nodes, weights):
        J = J_start + s * dJ
        for k in active:
            total += wq * background_field(pre, post, process, k, J) * dJ[k] * process.dt
    return total


def legendre_check(pre, post, process: TimeSlicedProcess, source,
                   sites: Sequence[int] = (0, 1), quad_order: int = 8,
                   rng_seed: int = 0) -> LegendreReport:
    """Check the Legendre structure of W[J] around ``source``.

    * ``derivative_dev``: ``dW/dJ_k / dt`` against the sourced insertion
      weak value, at every slice.
    * ``path_dev``: the line integral of ``sum phi dJ dt`` from zero source to
      ``source`` along two orderings of the coordinate legs over ``sites``,
      compared with each other and with ``W[source] - W[0]``.
    * ``gamma_dev``: relative mismatch of ``dGamma`` and ``-sum J dphi dt``
      for a small random source variation, with ``Gamma = W - sum J phi dt``.
    """
    if process.n_slices > 8:
        raise ValueError("legendre_check is limited to 8 source sites")
    J = _as_source_array(source, process.n_slices)
    n = process.n_slices
    phi = np.array([background_field(pre, post, process, k, J) for k in range(n)])
    direct = np.array([sourced_insertion(pre, post, process, J, k) for k in range(n)])
    derivative_dev = float(np.max(np.abs(phi - direct)))

    x, w = np.polynomial.legendre.leggauss(quad_order)
    nodes, weights = (x + 1) / 2, w / 2
    k1, k2 = sites
    corner_a = np.zeros(n)
    corner_a[k1] = J[k1]
    corner_b = np.zeros(n)
    corner_b[k2] = J[k2]
    J_path = np.zeros(n)
    J_path[[k1, k2]] = J[[k1, k2]]
    zero = np.zeros(n)
    path_1 = (_leg_integral(pre, post, process, zero, corner_a, nodes, weights)
              + _leg_integral(pre, post, process, corner_a, J_path, nodes, weights))
    path_2 = (_leg_integral(pre, post, process, zero, corner_b, nodes, weights)
              + _leg_integral(pre, post, process, corner_b, J_path, nodes, weights))
    dW = (generating_functional(pre, post, process, J_path)
          - generating_functional(pre, post, process, zero))
    path_dev = float(max(abs(path_1 - path_2), abs(path_1 - dW), abs(path_2 - dW)))

    rng = np.random.default_rng(rng_seed)
    delta = rng.standard_normal(n)
    eps = 1e-3 * max(1.0, float(np.max(np.abs(J))))

    def gamma_and_phi(Jv):
        ph = np.array([background_field(pre, post, process, k, Jv) for k in range(n)])
        return generating_functional(pre, post, process, Jv) - np.sum(Jv * ph) * process.dt, ph

    g_up, ph_up = gamma_and_phi(J + eps * delta)
    g_dn, ph_dn = gamma_and_phi(J - eps * delta)
    d_gamma = g_up - g_dn
    predicted = -np.sum(J * (ph_up - ph_dn)) * process.dt
    scale = max(abs(predicted), abs(d_gamma), eps * process.dt * float(np.max(np.abs(phi))))
    gamma_dev = float(abs(d_gamma - predicted) / scale)
    return LegendreReport(derivative_dev, path_dev, gamma_dev)
