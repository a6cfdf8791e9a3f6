"""
Von Neumann pointer measurements at arbitrary coupling.

The system observable ``A`` couples to the pointer momentum through the
impulsive unitary ``exp(-i g A (x) p / hbar)``, which translates the pointer
by ``g a_k`` in the eigenspace of ``A`` with eigenvalue ``a_k``. Translations
are carried out exactly with the Fourier shift theorem on the pointer grid,
so nothing here assumes the weak limit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import (DegeneratePostselectionError, DimensionError,
                         EntangledStateError, GeometryError,
                         InsufficientShotsError, NotHermitianError,
                         OrthogonalStatesError)
from .export import write_csv
from .linalg import Constants, as_operator, as_state
from .numdiff import richardson_derivative
from .weak import ORTHOGONALITY_THRESHOLD, weak_value

__all__ = [
    "PointerState", "MeasurementScenario", "ShotRecord", "ShotEstimate",
    "WeaknessWarning", "gaussian_pointer", "postselected_pointer_distribution",
    "conditional_pointer_amplitude", "weak_estimators", "sample_shots",
    "sample_readings", "estimate_from_shots", "product_split_check",
    "factorize_product_state", "shot_uniforms", "sample_from_grid",
    "write_shots_csv",
]

MAX_OBSERVABLE_DIM = 64
P_POST_FLOOR = 1e-14


class WeaknessWarning(UserWarning):
    """Coupling is outside the weak regime; estimators carry visible bias."""


def _is_power_of_two(n):
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True, eq=False)
class PointerState:
    """Pointer wavefunction on a uniform, power-of-two grid."""

    grid: np.ndarray
    amplitudes: np.ndarray
    sigma: float
    center: float = 0.0
    constants: Constants = field(default_factory=Constants)

    def __post_init__(self):
        x = np.asarray(self.grid, dtype=float)
        psi = np.asarray(self.amplitudes, dtype=complex)
        if x.shape != psi.shape or x.ndim != 1:
            raise DimensionError("grid and amplitudes must be 1D of equal length")
        if not _is_power_of_two(x.size):
            raise GeometryError(f"n_points={x.size} is not a power of two")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if x[0] > self.center - 8 * self.sigma or x[-1] < self.center + 8 * self.sigma:
            raise GeometryError("pointer grid must span at least +-8 sigma")
        dx = x[1] - x[0]
        norm = np.sum(np.abs(psi) ** 2) * dx
        if abs(norm - 1) > 1e-10:
            raise ValueError(f"pointer norm {norm!r} differs from 1")
        x.setflags(write=False)
        psi.setflags(write=False)
        object.__setattr__(self, "grid", x)
        object.__setattr__(self, "amplitudes", psi)

    @property
    def n_points(self) -> int:
        return self.grid.size

    @property
    def dx(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def half_width(self) -> float:
        return min(self.center - self.grid[0], self.grid[-1] - self.center)

    @property
    def momenta(self) -> np.ndarray:
        """Momentum of each FFT bin (unshifted order)."""
        return 2 * np.pi * self.constants.hbar * np.fft.fftfreq(self.n_points, self.dx)

    @property
    def position_density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def mean_position(self) -> float:
        return float(np.sum(self.grid * self.position_density) * self.dx)

    def momentum_moments(self) -> tuple[float, float]:
        """Mean and variance of momentum from the discrete Fourier representation."""
        return _momentum_moments(self.amplitudes, self.momenta)


def _momentum_moments(amplitudes, momenta):
    w = np.abs(np.fft.fft(amplitudes)) ** 2
    w = w / w.sum()
    mean = float(np.sum(momenta * w))
    var = float(np.sum((momenta - mean) ** 2 * w))
    return mean, var


def gaussian_pointer(sigma: float, n_points: int = 1024, half_width: float | None = None,
                     center: float = 0.0, constants: Constants | None = None) -> PointerState:
    """Real Gaussian pointer whose position density has standard deviation ``sigma``.

    The grid covers ``center +- half_width`` (default 16 sigma).
    """
    half_width = 16 * sigma if half_width is None else half_width
    dx = 2 * half_width / n_points
    x = center + (np.arange(n_points) - n_points // 2) * dx
    psi = np.exp(-((x - center) ** 2) / (4 * sigma ** 2)).astype(complex)
    psi /= math.sqrt(np.sum(np.abs(psi) ** 2) * dx)
    return PointerState(x, psi, sigma, center, constants or Constants())


@dataclass(frozen=True, eq=False)
class MeasurementScenario:
    """Pre/post-selected system coupled impulsively to a pointer."""

    sys_pre: object
    sys_post: object
    observable: object
    pointer: PointerState
    g: float

    def __post_init__(self):
        pre = as_state(self.sys_pre).normalize()
        post = as_state(self.sys_post).normalize()
        A = as_operator(self.observable)
        if not A.hermitian_flag:
            raise NotHermitianError("observable must be Hermitian")
        if A.dim > MAX_OBSERVABLE_DIM:
            raise DimensionError(f"observable dim {A.dim} exceeds {MAX_OBSERVABLE_DIM}")
        if not (pre.dim == post.dim == A.dim):
            raise DimensionError("pre, post and observable dims differ")
        if not math.isfinite(self.g):
            raise ValueError("coupling g must be finite")
        object.__setattr__(self, "sys_pre", pre)
        object.__setattr__(self, "sys_post", post)
        object.__setattr__(self, "observable", A)

    def with_coupling(self, g: float) -> "MeasurementScenario":
        return MeasurementScenario(self.sys_pre, self.sys_post, self.observable, self.pointer, g)

    @property
    def hbar(self) -> float:
        return self.pointer.constants.hbar

    def weak_value(self) -> complex:
        return weak_value(self.sys_pre, self.sys_post, self.observable).checked()


def conditional_pointer_amplitude(s: MeasurementScenario) -> tuple[np.ndarray, float]:
    """Normalized pointer amplitude after post-selection, and its success probability."""
    a_k, vecs = s.observable.eigh
    shift = s.g * a_k
    ptr = s.pointer
    if np.max(np.abs(shift)) > ptr.half_width - 8 * ptr.sigma:
        raise GeometryError(
            f"pointer shift {np.max(np.abs(shift)):.3g} leaves less than 8 sigma of grid")
    weights = (s.sys_post.amplitudes.conj() @ vecs) * (vecs.conj().T @ s.sys_pre.amplitudes)
    phases = np.exp(-1j * np.outer(ptr.momenta, shift) / s.hbar) @ weights
    amp = np.fft.ifft(np.fft.fft(ptr.amplitudes) * phases)
    p_post = float(np.sum(np.abs(amp) ** 2) * ptr.dx)
    if p_post < P_POST_FLOOR:
        raise DegeneratePostselectionError(f"post-selection probability {p_post:.3e}")
    return amp / math.sqrt(p_post), p_post


def postselected_pointer_distribution(s: MeasurementScenario) -> tuple[np.ndarray, float]:
    """Conditional pointer position density on ``s.pointer.grid`` and ``p_post``."""
    amp, p_post = conditional_pointer_amplitude(s)
    return np.abs(amp) ** 2, p_post


def _estimator_scales(pointer: PointerState):
    x0 = pointer.mean_position()
    p0, var_p = pointer.momentum_moments()
    return x0, p0, var_p


def weak_estimators(s: MeasurementScenario, guard: float = 0.25) -> tuple[float, float]:
    """Real and imaginary weak-value estimates from exact pointer shifts.

    ``re = <dx> / g`` and ``im = hbar <dp> / (2 g Var_p)``, with ``Var_p``
    the initial pointer momentum variance. Emits :class:`WeaknessWarning`
    when ``g max|a| >= guard * sigma``.
    """
    if s.g == 0:
        raise ValueError("estimators divide by g; g must be nonzero")
    a_max = float(np.max(np.abs(s.observable.eigh[0])))
    if abs(s.g) * a_max >= guard * s.pointer.sigma:
        warnings.warn(f"g*max|a| = {abs(s.g) * a_max:.3g} >= {guard} sigma",
                      WeaknessWarning, stacklevel=2)
    amp, _ = conditional_pointer_amplitude(s)
    ptr = s.pointer
    x0, p0, var_p = _estimator_scales(ptr)
    mean_x = float(np.sum(ptr.grid * np.abs(amp) ** 2) * ptr.dx)
    mean_p, _ = _momentum_moments(amp, ptr.momenta)
    re = (mean_x - x0) / s.g
    im = s.hbar * (mean_p - p0) / (2 * s.g * var_p)
    return re, im


# --- shot sampling -----------------------------------------------------------

@dataclass(frozen=True)
class ShotRecord:
    seed_index: int
    passed: bool
    basis: str
    reading: float | None

    def __post_init__(self):
        if self.passed != (self.reading is not None):
            raise ValueError("reading must be present iff the shot passed")


def shot_uniforms(seed: int, start: int, stop: int, n: int = 2) -> np.ndarray:
    """Uniform variates for shots ``start .. stop-1``; row ``i`` depends only on (seed, i).

    Each shot owns one Philox counter block (four 64-bit words), so any
    partition of the shot range reproduces the same numbers.
    """
    if not 1 <= n <= 4:
        raise ValueError("at most four uniforms per shot")
    key = np.random.SeedSequence(seed).generate_state(2, np.uint64)
    bitgen = np.random.Philox(key=key)
    if start:
        bitgen.advance(start)
    raw = bitgen.random_raw(4 * (stop - start)).reshape(-1, 4)[:, :n]
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def sample_from_grid(nodes: np.ndarray, density: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling of a piecewise-constant density on uniform nodes.

    Each node owns a cell of one grid spacing; the sample is uniform within
    its cell, so the sample mean is unbiased for ``sum(x * density)``.
    """
    spacing = nodes[1] - nodes[0]
    mass = np.clip(density, 0, None)
    cdf = np.cumsum(mass)
    total = cdf[-1]
    target = u * total
    idx = np.minimum(np.searchsorted(cdf, target, side="right"), nodes.size - 1)
    lower = cdf[idx] - mass[idx]
    frac = np.where(mass[idx] > 0, (target - lower) / np.where(mass[idx] > 0, mass[idx], 1), 0.5)
    return nodes[idx] + (np.clip(frac, 0, 1) - 0.5) * spacing


def _reading_distribution(s, basis):
    amp, p_post = conditional_pointer_amplitude(s)
    ptr = s.pointer
    if basis == "position":
        return ptr.grid, np.abs(amp) ** 2, p_post
    if basis == "momentum":
        p = np.fft.fftshift(ptr.momenta)
        return p, np.fft.fftshift(np.abs(np.fft.fft(amp)) ** 2), p_post
    raise ValueError(f"basis must be 'position' or 'momentum', got {basis!r}")


def sample_readings(s: MeasurementScenario, n_shots: int, seed: int,
                    basis: str = "position", start: int = 0):
    """Vectorized shots ``start .. start+n_shots-1``: (passed mask, readings with NaN)."""
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    nodes, density, p_post = _reading_distribution(s, basis)
    u = shot_uniforms(seed, start, start + n_shots)
    passed = u[:, 0] < p_post
    readings = np.full(n_shots, np.nan)
    readings[passed] = sample_from_grid(nodes, density, u[passed, 1])
    return passed, readings


def sample_shots(s: MeasurementScenario, n_shots: int, seed: int,
                 basis: str = "position") -> list[ShotRecord]:
    """Post-selected measurement shots drawn from the exact conditional density."""
    passed, readings = sample_readings(s, n_shots, seed, basis)
    return [ShotRecord(i, bool(ok), basis, float(r) if ok else None)
            for i, (ok, r) in enumerate(zip(passed, readings))]


class ShotEstimate(NamedTuple):
    re_est: float
    im_est: float
    stderr_re: float
    stderr_im: float


def _mean_and_se(values):
    if values.size < 2:
        raise InsufficientShotsError(f"need >= 2 passed shots, got {values.size}")
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def estimate_from_shots(records: Sequence[ShotRecord], g: float,
                        pointer: PointerState) -> ShotEstimate:
    """Plug sample means into the weak estimators; NaN for a basis with no shots."""
    by_basis = {"position": [], "momentum": []}
    for r in records:
        if r.passed:
            by_basis[r.basis].append(r.reading)
    if sum(len(v) for v in by_basis.values()) < 2:
        raise InsufficientShotsError("fewer than 2 passed shots")
    x0, p0, var_p = _estimator_scales(pointer)
    hbar = pointer.constants.hbar
    re = im = se_re = se_im = math.nan
    if by_basis["position"]:
        m, se = _mean_and_se(np.asarray(by_basis["position"]))
        re, se_re = (m - x0) / g, se / abs(g)
    if by_basis["momentum"]:
        m, se = _mean_and_se(np.asarray(by_basis["momentum"]))
        scale = hbar / (2 * g * var_p)
        im, se_im = (m - p0) * scale, se * abs(scale)
    return ShotEstimate(re, im, se_re, se_im)


def write_shots_csv(path, records: Sequence[ShotRecord]) -> None:
    """CSV with columns ``shot_index, passed, basis, reading``."""
    write_csv(path, ["shot_index", "passed", "basis", "reading"],
              ([r.seed_index, r.passed, r.basis, r.reading] for r in records))


# --- product-state split of the joint weak value ------------------------------

def factorize_product_state(joint, dims: tuple[int, int], tol: float = 1e-10):
    """Split a bipartite pure state into its factors; reject entangled input."""
    psi = as_state(joint).normalize().amplitudes
    d1, d2 = dims
    if psi.size != d1 * d2:
        raise DimensionError(f"state dim {psi.size} != {d1} x {d2}")
    u, s, vh = np.linalg.svd(psi.reshape(d1, d2))
    if s.size > 1 and s[1] > tol:
        raise EntangledStateError(f"Schmidt coefficient {s[1]:.3e} > {tol:g}")
    return u[:, 0] * math.sqrt(s[0]), vh[0] * math.sqrt(s[0])


def product_split_check(sys1_pre, sys1_post, H1, sys2_pre, sys2_post, H2,
                        g: float = 1e-3, hbar: float = 1.0) -> tuple[float, float]:
    """Log-probability slope of the kick ``exp(-i g H1 (x) H2 / hbar)`` two ways.

    ``lhs`` is the Richardson central difference of ``ln p`` at zero
    coupling with step ``g``; ``rhs`` is
    ``(2/hbar) [Re H1w Im H2w + Im H1w Re H2w]``.
    """
    H1, H2 = as_operator(H1), as_operator(H2)
    for h in (H1, H2):
        if not h.hermitian_flag:
            raise NotHermitianError("H1 and H2 must be Hermitian")
    w1 = weak_value(sys1_pre, sys1_post, H1)
    w2 = weak_value(sys2_pre, sys2_post, H2)
    if not (w1.conditioned and w2.conditioned):
        raise OrthogonalStatesError("a factor's pre/post overlap vanishes")
    h1w, h2w = w1.value, w2.value
    rhs = 2.0 / hbar * (h1w.real * h2w.imag + h1w.imag * h2w.real)

    pre = np.kron(as_state(sys1_pre).normalize().amplitudes, as_state(sys2_pre).normalize().amplitudes)
    post = np.kron(as_state(sys1_post).normalize().amplitudes, as_state(sys2_post).normalize().amplitudes)
    w, v = np.linalg.eigh(np.kron(H1.entries, H2.entries))
    c_pre = v.conj().T @ pre
    c_post = v.conj().T @ post
    if abs(np.vdot(c_post, c_pre)) < ORTHOGONALITY_THRESHOLD:
        raise OrthogonalStatesError("joint pre/post overlap vanishes")

    def lnp(coupling):
        amp = np.vdot(c_post, np.exp(-1j * coupling * w / hbar) * c_pre)
        return math.log(abs(amp) ** 2)

    lhs = float(richardson_derivative(lnp, g))
    return lhs, rhs
