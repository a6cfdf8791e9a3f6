"""
Wave mechanics on uniform power-of-two grids.

Split-step spectral propagation, local (Madelung) momentum fields and their
streamlines, and three measurement schemes for the local momentum and the
wavefunction itself:

* :func:`weak_momentum_map`: weak momentum measurement post-selected on
  position bins (one quantum at a time, weakly coupled).
* :func:`classical_probe_sample`: probes that absorb whole quanta but only a
  tiny fraction of the field (strong per quantum, weak on average).
* :func:`direct_state_measurement`: weak value of the position projector
  post-selected on zero transverse momentum.

For the paraxial two-slit scenario the propagation distance plays the role
of time, with ``hbar = 1`` and ``mass = 2 pi / wavelength``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy import signal
from scipy.interpolate import RegularGridInterpolator

from .exceptions import (DimensionError, EmptyBinError, GeometryError,
                         MaskedRegionError, StabilityError, WeakOnAverageError)
from .linalg import Constants
from .pointer import gaussian_pointer, sample_from_grid, shot_uniforms

__all__ = [
    "WaveField", "MomentumField", "Trajectory", "ProbeResult",
    "DirectMeasurement", "propagate", "local_momentum", "two_slit_scenario",
    "paraxial_constants", "streamlines", "count_crossings", "quantile_seeds",
    "endpoint_total_variation", "weak_momentum_map", "classical_probe_sample",
    "direct_state_measurement", "fringe_visibility", "fringe_spacing",
    "INTENSITY_FLOOR", "WEAK_ON_AVERAGE_LIMIT",
]

INTENSITY_FLOOR = 1e-10
WEAK_ON_AVERAGE_LIMIT = 1e-3


def _power_of_two(n):
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True, eq=False)
class WaveField:
    """Complex field on a uniform grid at one time.

    ``coords`` holds one coordinate array per axis; ``amplitudes`` has
    shape ``tuple(len(c) for c in coords)``. Norm is ``sum |psi|^2 dV``.
    """

    coords: tuple
    amplitudes: np.ndarray
    time: float = 0.0
    constants: Constants = field(default_factory=Constants)

    def __post_init__(self):
        coords = tuple(np.asarray(c, dtype=float) for c in self.coords)
        psi = np.asarray(self.amplitudes, dtype=complex)
        if psi.shape != tuple(c.size for c in coords):
            raise DimensionError(f"amplitudes {psi.shape} do not match grid")
        if len(coords) not in (1, 2):
            raise DimensionError("only 1D and 2D grids are supported")
        for c in coords:
            if not _power_of_two(c.size):
                raise GeometryError(f"grid size {c.size} is not a power of two")
            steps = np.diff(c)
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
                raise GeometryError("grid must be uniform")
        for arr in (*coords, psi):
            arr.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "amplitudes", psi)

    @classmethod
    def from_function(cls, f, coords, time=0.0, constants=None, normalize=True):
        coords = tuple(np.asarray(c, dtype=float) for c in coords)
        mesh = np.meshgrid(*coords, indexing="ij")
        psi = np.asarray(f(*mesh), dtype=complex)
        fld = cls(coords, psi, time, constants or Constants())
        return fld.normalized() if normalize else fld

    @property
    def ndim(self) -> int:
        return len(self.coords)

    @property
    def spacing(self) -> tuple:
        return tuple(float(c[1] - c[0]) for c in self.coords)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.sum(self.intensity) * self.cell_volume)

    def normalized(self) -> "WaveField":
        return replace(self, amplitudes=self.amplitudes / math.sqrt(self.norm()))

    def wavenumbers(self) -> tuple:
        return tuple(2 * np.pi * np.fft.fftfreq(c.size, c[1] - c[0]) for c in self.coords)


@dataclass(frozen=True, eq=False)
class MomentumField:
    """Local momentum per node; ``vectors[..., i]`` is the component along axis ``i``.

    Masked nodes (``mask`` False) hold NaN. ``stderr`` is present for
    sampled maps.
    """

    coords: tuple
    vectors: np.ndarray
    intensity: np.ndarray
    mask: np.ndarray
    time: float = 0.0
    stderr: np.ndarray | None = None
    counts: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Streamline samples; ``points[:, 0]`` is time, remaining columns position."""

    points: np.ndarray
    seed_point: tuple
    truncated: bool = False

    @property
    def times(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def positions(self) -> np.ndarray:
        return self.points[:, 1:]


def _kinetic_phase(fld: WaveField, dt: float) -> np.ndarray:
    k = fld.constants
    ks = np.meshgrid(*fld.wavenumbers(), indexing="ij")
    k2 = sum(q ** 2 for q in ks)
    return k.hbar * k2 * dt / (2 * k.mass)


def propagate(fld: WaveField, potential=None, dt: float = 0.0, steps: int = 0,
              absorber=None) -> WaveField:
    """Symmetric split-step (V/2, T, V/2) Fourier propagation, periodic boundaries.

    ``absorber`` is an optional real mask in [0, 1] applied once per step;
    without it the evolution is unitary. Raises :class:`StabilityError` if
    the kinetic or potential phase per step reaches pi.
    """
    if steps == 0:
        return fld
    if steps < 0 or dt <= 0:
        raise ValueError("need dt > 0 and steps >= 0")
    hbar = fld.constants.hbar
    t_phase = _kinetic_phase(fld, dt)
    if np.max(t_phase) >= math.pi:
        raise StabilityError(f"kinetic phase per step {np.max(t_phase):.3g} >= pi")
    kinetic = np.exp(-1j * t_phase)
    half_v = None
    if potential is not None:
        V = np.broadcast_to(np.asarray(potential, dtype=float), fld.amplitudes.shape)
        if np.max(np.abs(V)) * dt / hbar >= math.pi:
            raise StabilityError("potential phase per step >= pi")
        half_v = np.exp(-0.5j * V * dt / hbar)
    psi = np.array(fld.amplitudes)
    axes = tuple(range(fld.ndim))
    for _ in range(steps):
        if half_v is not None:
            psi *= half_v
        psi = np.fft.ifftn(kinetic * np.fft.fftn(psi, axes=axes), axes=axes)
        if half_v is not None:
            psi *= half_v
        if absorber is not None:
            psi *= absorber
    return replace(fld, amplitudes=psi, time=fld.time + steps * dt)


def _spectral_gradient(fld: WaveField) -> list:
    psi_k = np.fft.fftn(fld.amplitudes)
    grads = []
    for axis, k in enumerate(fld.wavenumbers()):
        shape = [1] * fld.ndim
        shape[axis] = k.size
        grads.append(np.fft.ifftn(1j * k.reshape(shape) * psi_k))
    return grads


def local_momentum(fld: WaveField, intensity_floor: float = INTENSITY_FLOOR) -> MomentumField:
    """``hbar Im(grad psi / psi)`` with spectral derivatives.

    Nodes below ``intensity_floor * max|psi|^2`` are masked.
    """
    psi = fld.amplitudes
    rho = np.abs(psi) ** 2
    mask = rho >= intensity_floor * rho.max()
    safe = np.where(mask, rho, 1.0)
    vectors = np.stack([
        np.where(mask, fld.constants.hbar * np.imag(psi.conj() * g) / safe, np.nan)
        for g in _spectral_gradient(fld)], axis=-1)
    return MomentumField(fld.coords, vectors, rho, mask, fld.time)


# --- two-slit scenario --------------------------------------------------------

def paraxial_constants(wavelength: float) -> Constants:
    """Constants mapping the paraxial wave equation onto Schroedinger form."""
    return Constants(hbar=1.0, mass=2 * math.pi / wavelength)


def _stable_dt(fld: WaveField, safety=0.5):
    k = fld.constants
    k_max2 = sum((math.pi / h) ** 2 for h in fld.spacing)
    return safety * 2 * math.pi * k.mass / (k.hbar * k_max2)


def two_slit_scenario(slit_separation: float, slit_width: float,
                      propagation_distance: float, n_points: int = 1024,
                      length: float | None = None, wavelength: float = 1.0,
                      planes: Sequence[float] | None = None,
                      n_frames: int = 2) -> list[WaveField]:
    """Propagate two Gaussian slit packets and record frames at ``planes``.

    Each slit is a Gaussian amplitude ``exp(-(x - x_s)^2 / (2 a^2))`` with
    ``a = slit_width / 2``. ``planes`` defaults to ``n_frames`` equally
    spaced distances from 0 to ``propagation_distance``.
    """
    k = paraxial_constants(wavelength)
    a = slit_width / 2
    if length is None:
        length = 2 * (slit_separation / 2 + 8 * a * math.sqrt(1 + (propagation_distance / (k.mass * a * a)) ** 2))
    dx = length / n_points
    if slit_width / dx < 8:
        raise GeometryError(f"{slit_width / dx:.1f} nodes per slit width (< 8)")
    a_far = a * math.sqrt(1 + (propagation_distance / (k.mass * a * a)) ** 2)
    if slit_separation / 2 + 8 * a_far > length / 2:
        raise GeometryError("beam reaches the grid edge before the last plane")
    x = (np.arange(n_points) - n_points // 2) * dx
    centers = (-slit_separation / 2, slit_separation / 2)

    def slits(xx):
        return sum(np.exp(-((xx - c) ** 2) / (2 * a * a)) for c in centers)

    fld = WaveField.from_function(slits, (x,), 0.0, k)
    if planes is None:
        planes = np.linspace(0.0, propagation_distance, n_frames)
    planes = np.asarray(planes, dtype=float)
    if np.any(np.diff(planes) < 0) or planes[0] < 0:
        raise ValueError("planes must be non-negative and increasing")
    dt_max = _stable_dt(fld)
    frames = []
    for z in planes:
        gap = z - fld.time
        if gap > 0:
            steps = max(1, math.ceil(gap / dt_max))
            fld = propagate(fld, None, gap / steps, steps)
        frames.append(replace(fld, time=float(z)))
    return frames


def _central_region(intensity, rel=1e-3):
    bright = np.flatnonzero(intensity >= rel * intensity.max())
    return bright[0], bright[-1] + 1


def fringe_visibility(fld: WaveField) -> float:
    """``(I_max - I_min) / (I_max + I_min)`` around the central fringe; 0 without minima."""
    rho = fld.intensity
    lo, hi = _central_region(rho)
    seg = rho[lo:hi]
    minima, _ = signal.find_peaks(-seg)
    maxima, _ = signal.find_peaks(seg)
    if minima.size == 0 or maxima.size == 0:
        return 0.0
    i_max = seg[maxima[np.argmax(seg[maxima])]]
    nearest_min = minima[np.argmin(np.abs(minima - maxima[np.argmax(seg[maxima])]))]
    i_min = seg[nearest_min]
    return float((i_max - i_min) / (i_max + i_min))


def fringe_spacing(fld: WaveField, rel_height: float = 0.05) -> float:
    """Median distance between intensity maxima, refined by parabolic interpolation."""
    rho = fld.intensity
    x = fld.coords[0]
    peaks, _ = signal.find_peaks(rho, height=rel_height * rho.max())
    if peaks.size < 2:
        raise GeometryError("fewer than two fringes above threshold")
    y0, y1, y2 = rho[peaks - 1], rho[peaks], rho[peaks + 1]
    offset = 0.5 * (y0 - y2) / (y0 - 2 * y1 + y2)
    pos = x[peaks] + offset * (x[1] - x[0])
    return float(np.median(np.diff(pos)))


# --- streamlines ----------------------------------------------------------------

def _velocity_sampler(maps: Sequence[MomentumField], mass: float):
    times = np.array([m.time for m in maps], dtype=float)
    if times.size >= 2:
        steps = np.diff(times)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9):
            raise ValueError("momentum maps must have uniform, increasing times")
    shape = maps[0].vectors.shape
    if any(m.vectors.shape != shape for m in maps):
        raise DimensionError("momentum maps are on different grids")
    coords = maps[0].coords
    ndim = len(coords)
    velocity = np.stack([m.vectors for m in maps]) / mass
    if ndim == 1:
        x = coords[0]

        def frame_velocity(f, pos):
            return np.interp(pos[:, 0], x, velocity[f, :, 0], left=np.nan, right=np.nan)[:, None]
    else:
        interps = [RegularGridInterpolator(coords, velocity[f], bounds_error=False,
                                           fill_value=np.nan) for f in range(len(maps))]

        def frame_velocity(f, pos):
            return interps[f](pos)

    def sample(t, pos):
        if times.size == 1:
            return frame_velocity(0, pos)
        s = (t - times[0]) / (times[1] - times[0])
        f = int(min(max(math.floor(s), 0), times.size - 2))
        w = s - f
        return (1 - w) * frame_velocity(f, pos) + w * frame_velocity(f + 1, pos)

    return sample, times


def streamlines(momentum_maps: Sequence[MomentumField], seeds, dt: float,
                mass: float = 1.0) -> list[Trajectory]:
    """Integrate ``dx/dt = p(x, t) / mass`` with classical RK4 from each seed.

    Momentum is interpolated linearly in space and time between maps.
    A trajectory that leaves the grid or enters a masked region stops and
    is flagged ``truncated``.
    """
    sample, times = _velocity_sampler(momentum_maps, mass)
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    if seeds.shape[1] != len(momentum_maps[0].coords):
        seeds = seeds.T
    v0 = sample(times[0], seeds)
    if np.any(np.isnan(v0)):
        bad = np.flatnonzero(np.any(np.isnan(v0), axis=1))
        raise MaskedRegionError(f"seeds {bad.tolist()} lie in masked regions")
    t_end = times[-1]
    n_steps = max(1, int(round((t_end - times[0]) / dt))) if t_end > times[0] else 0
    h = (t_end - times[0]) / n_steps if n_steps else dt
    pos = seeds.copy()
    alive = np.ones(len(seeds), dtype=bool)
    path = [pos.copy()]
    t = times[0]
    for _ in range(n_steps):
        k1 = sample(t, pos)
        k2 = sample(t + h / 2, pos + h / 2 * k1)
        k3 = sample(t + h / 2, pos + h / 2 * k2)
        k4 = sample(t + h, pos + h * k3)
        new = pos + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        dead = np.any(np.isnan(new), axis=1)
        alive &= ~dead
        pos = np.where(alive[:, None], new, pos)
        t += h
        path.append(np.where(alive[:, None], pos, np.nan))
    path = np.stack(path)
    tgrid = times[0] + h * np.arange(n_steps + 1)
    out = []
    for i, seed in enumerate(seeds):
        pts = path[:, i, :]
        keep = ~np.any(np.isnan(pts), axis=1)
        out.append(Trajectory(np.column_stack([tgrid[keep], pts[keep]]),
                              tuple(seed), not bool(keep.all())))
    return out


def count_crossings(trajectories: Sequence[Trajectory], resolution: float) -> int:
    """Number of seed-adjacent 1D trajectory pairs whose order flips by more than ``resolution``."""
    order = np.argsort([tr.seed_point[0] for tr in trajectories])
    crossings = 0
    for a, b in zip(order[:-1], order[1:]):
        xa, xb = trajectories[a].positions[:, 0], trajectories[b].positions[:, 0]
        n = min(xa.size, xb.size)
        if np.any(xb[:n] - xa[:n] < -resolution):
            crossings += 1
    return crossings


def quantile_seeds(fld: WaveField, n: int) -> np.ndarray:
    """``n`` 1D seeds at the mid-quantiles of ``|psi|^2``."""
    u = (np.arange(n) + 0.5) / n
    return sample_from_grid(fld.coords[0], fld.intensity, u)


def endpoint_total_variation(endpoints, fld: WaveField, n_bins: int = 32) -> float:
    """Total-variation distance between endpoint histogram and ``|psi|^2`` over the bright region."""
    x = fld.coords[0]
    rho = fld.intensity
    lo, hi = _central_region(rho, 1e-6)
    dx = x[1] - x[0]
    edges = np.linspace(x[lo] - dx / 2, x[hi - 1] + dx / 2, n_bins + 1)
    counts, _ = np.histogram(endpoints, bins=edges)
    p = counts / max(len(endpoints), 1)
    cells = np.clip(np.searchsorted(edges, x, side="right") - 1, -1, n_bins)
    q = np.array([rho[cells == b].sum() for b in range(n_bins)])
    q = q / rho.sum()
    return float(0.5 * np.sum(np.abs(p - q)) + 0.5 * (1 - q.sum()))


# --- weak momentum map (per-quantum weak measurement) ------------------------

def _bin_edges(x, bins):
    dx = x[1] - x[0]
    if np.isscalar(bins):
        n = int(bins)
        if x.size % n:
            raise ValueError("number of bins must divide the number of nodes")
        return x[:: x.size // n] - dx / 2, x.size // n
    edges = np.asarray(bins, dtype=float)
    if np.min(np.diff(edges)) < dx * (1 - 1e-9):
        raise ValueError("bin width must be >= grid spacing")
    return edges, None


def _bin_assignment(x, bins):
    edges, per_bin = _bin_edges(x, bins)
    if per_bin is not None:
        return np.arange(x.size) // per_bin, edges.size, np.append(edges, x[-1] + (x[1] - x[0]) / 2)
    idx = np.searchsorted(edges, x, side="right") - 1
    idx[(x < edges[0]) | (x >= edges[-1])] = -1
    return idx, edges.size - 1, edges


def _exact_bin_momentum(fld, assignment, n_bins):
    psi = fld.amplitudes
    (grad,) = _spectral_gradient(fld)
    current = fld.constants.hbar * np.imag(psi.conj() * grad)
    rho = np.abs(psi) ** 2
    valid = assignment >= 0
    weight = np.bincount(assignment[valid], rho[valid], n_bins)
    flux = np.bincount(assignment[valid], current[valid], n_bins)
    return flux, weight


def weak_momentum_map(fld: WaveField, bins=64, shots: int | None = None, seed: int = 0,
                      g: float | None = None, pointer_sigma: float = 1.0,
                      pointer_points: int = 256, skip_empty: bool = False,
                      intensity_floor: float = INTENSITY_FLOOR) -> MomentumField:
    """Bin-resolved weak value of momentum post-selected on position.

    With ``shots=None`` the exact bin average ``sum hbar Im(psi* psi') / sum |psi|^2``
    is returned. Otherwise each shot couples the transverse momentum to a
    Gaussian pointer through ``exp(-i g p (x) P / hbar)``, post-selects the
    system on a position bin and reads the pointer position; the bin mean
    pointer shift over ``g`` estimates the momentum, with standard errors.
    """
    if fld.ndim != 1:
        raise DimensionError("weak_momentum_map works on 1D fields")
    x = fld.coords[0]
    assignment, n_bins, edges = _bin_assignment(x, bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    flux, weight = _exact_bin_momentum(fld, assignment, n_bins)
    total = fld.intensity.sum()
    nonempty = weight >= intensity_floor * total
    if not skip_empty and not nonempty.all():
        raise EmptyBinError(f"bins {np.flatnonzero(~nonempty).tolist()} carry no intensity")
    values = np.where(nonempty, flux / np.where(nonempty, weight, 1), np.nan)
    prob = weight / total
    if shots is None:
        return MomentumField((centers,), values[:, None], prob, nonempty, fld.time,
                             np.zeros(n_bins), None)

    hbar = fld.constants.hbar
    ptr = gaussian_pointer(pointer_sigma, pointer_points, constants=fld.constants)
    if g is None:
        p_rms = math.sqrt(max(np.sum(prob * np.nan_to_num(values) ** 2), 1e-300))
        g = 0.02 * pointer_sigma / p_rms
    (k_sys,) = fld.wavenumbers()
    P = ptr.momenta
    # joint amplitude over (system position, pointer position)
    psi_k = np.fft.fft(fld.amplitudes)
    shifted = np.fft.ifft(np.fft.fft(ptr.amplitudes)[None, :]
                          * np.exp(-1j * g * np.outer(hbar * k_sys, P) / hbar), axis=1)
    joint = np.fft.ifft(psi_k[:, None] * shifted, axis=0)
    density = np.abs(joint) ** 2
    valid = assignment >= 0
    bin_density = np.zeros((n_bins, ptr.n_points))
    np.add.at(bin_density, assignment[valid], density[valid])
    bin_mass = bin_density.sum(axis=1)
    cdf = np.cumsum(bin_mass) / density.sum()

    u = shot_uniforms(seed, 0, shots)
    shot_bin = np.searchsorted(cdf, u[:, 0], side="right")
    passed = shot_bin < n_bins
    x0 = ptr.mean_position()
    est = np.full(n_bins, np.nan)
    se = np.full(n_bins, np.nan)
    counts = np.zeros(n_bins, dtype=int)
    for b in range(n_bins):
        sel = passed & (shot_bin == b)
        counts[b] = sel.sum()
        if counts[b] < 2 or not nonempty[b]:
            continue
        readings = sample_from_grid(ptr.grid, bin_density[b], u[sel, 1])
        est[b] = (readings.mean() - x0) / g
        se[b] = readings.std(ddof=1) / math.sqrt(counts[b]) / abs(g)
    return MomentumField((centers,), est[:, None], prob, nonempty & (counts >= 2),
                         fld.time, se, counts)


# --- classical probes (strong per quantum, weak on average) -------------------

class ProbeResult(NamedTuple):
    positions: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    empty: np.ndarray
    absorbed_fraction: float


def classical_probe_sample(fld: WaveField, probe_positions, cross_section: float,
                           shots: int, seed: int = 0,
                           absorption_efficiency: float = 1e-3,
                           limit: float = WEAK_ON_AVERAGE_LIMIT) -> ProbeResult:
    """Sample momentum deposited in small absorbing probes.

    ``shots`` quanta are drawn from ``|psi|^2``. A quantum landing inside a
    probe's cross-section is absorbed with probability
    ``absorption_efficiency`` and deposits the local momentum at its landing
    node. The expected absorbed share of the field must stay below
    ``limit``; otherwise :class:`WeakOnAverageError` is raised.
    """
    if fld.ndim != 1:
        raise DimensionError("classical_probe_sample works on 1D fields")
    x = fld.coords[0]
    dx = x[1] - x[0]
    if cross_section < dx * (1 - 1e-9):
        raise ValueError("cross_section must be >= grid spacing")
    probes = np.atleast_1d(np.asarray(probe_positions, dtype=float))
    owner = np.full(x.size, -1)
    for j, c in enumerate(probes):
        inside = np.abs(x - c) < cross_section / 2 + 1e-9 * dx
        if np.any(owner[inside] >= 0):
            raise GeometryError("probe cross-sections overlap")
        owner[inside] = j
    rho = fld.intensity / fld.intensity.sum()
    covered = float(rho[owner >= 0].sum())
    absorbed = absorption_efficiency * covered
    if absorbed >= limit:
        raise WeakOnAverageError(
            f"weak-on-average criterion violated: probes absorb {absorbed:.2e} "
            f"of the field (limit {limit:g})")
    p_local = local_momentum(fld).vectors[:, 0]
    u = shot_uniforms(seed, 0, shots)
    node = np.minimum(np.searchsorted(np.cumsum(rho), u[:, 0], side="right"), x.size - 1)
    hit = (owner[node] >= 0) & (u[:, 1] < absorption_efficiency)
    mean = np.full(probes.size, np.nan)
    se = np.full(probes.size, np.nan)
    counts = np.zeros(probes.size, dtype=int)
    for j in range(probes.size):
        deposits = p_local[node[hit & (owner[node] == j)]]
        deposits = deposits[np.isfinite(deposits)]
        counts[j] = deposits.size
        if deposits.size:
            mean[j] = deposits.mean()
            se[j] = deposits.std(ddof=1) / math.sqrt(deposits.size) if deposits.size > 1 else math.inf
    return ProbeResult(probes, mean, se, counts, counts == 0, absorbed)


# --- direct state measurement ---------------------------------------------------

class DirectMeasurement(NamedTuple):
    reconstruction: np.ndarray
    fidelity: float
    weak_values: np.ndarray


def _unit_vector(fld: WaveField):
    psi = fld.amplitudes.reshape(-1)
    return psi / np.linalg.norm(psi)


def _invert_ancilla(eps: complex, g: float) -> complex:
    """Projector weak value from the ancilla Bloch combination ``<sx> + i <sy>``.

    Inverts ``eps = 2 z / (1 + |z|^2)`` on the small-``|z|`` branch, then
    ``z = w sin g / (1 - w (1 - cos g))`` for ``w``. Reduces to
    ``eps / 2g`` at small coupling.
    """
    mag = min(abs(eps), 1.0)
    if mag == 0.0:
        return 0.0j
    z = eps / abs(eps) * (1 - math.sqrt(1 - mag * mag)) / mag
    return z / (math.sin(g) + z * (1 - math.cos(g)))


def direct_state_measurement(fld: WaveField, g: float | None = None,
                             shots: int | None = None, seed: int = 0,
                             threshold: float = 1e-8) -> DirectMeasurement:
    """Reconstruct the node amplitudes from projector weak values.

    The weak value of ``|x><x|`` between the field and the zero-momentum
    post-selection is proportional to ``psi(x)``. In exact mode
    (``shots=None``) it is evaluated directly. Otherwise a two-level
    ancilla in ``|0>`` couples through ``exp(-i g |x><x| (x) sigma_y)``, the
    system is post-selected on zero momentum, and alternate shots read the
    ancilla in the sigma_x and sigma_y bases; the Bloch combination
    ``<sx> + i <sy>`` is inverted exactly for the weak value (``~ / 2g`` at
    small ``g``). Node results are renormalized to unit norm.
    """
    psi = _unit_vector(fld)
    n = psi.size
    zero_p = np.full(n, 1 / math.sqrt(n))
    overlap = complex(np.vdot(zero_p, psi))
    if abs(overlap) < threshold:
        raise ValueError(f"zero-momentum component {abs(overlap):.2e} below threshold")
    b = zero_p.conj() * psi
    if shots is None:
        wv = b / overlap
    else:
        if g is None or g == 0:
            raise ValueError("ancilla mode needs a nonzero coupling g")
        c0 = overlap - b * (1 - math.cos(g))
        c1 = b * math.sin(g)
        p_pass = np.abs(c0) ** 2 + np.abs(c1) ** 2
        px = np.abs(c0 + c1) ** 2 / (2 * p_pass)
        py = np.abs(c0 - 1j * c1) ** 2 / (2 * p_pass)
        wv = np.empty(n, dtype=complex)
        for i in range(n):
            u = shot_uniforms(seed, i * shots, (i + 1) * shots)
            ok = u[:, 0] < p_pass[i]
            is_x = (np.arange(shots) % 2) == 0
            sx = np.where(u[ok & is_x, 1] < px[i], 1.0, -1.0)
            sy = np.where(u[ok & ~is_x, 1] < py[i], 1.0, -1.0)
            mx = sx.mean() if sx.size else 0.0
            my = sy.mean() if sy.size else 0.0
            wv[i] = _invert_ancilla(mx + 1j * my, g)
    rec = wv / np.linalg.norm(wv)
    fidelity = float(abs(np.vdot(rec, psi)) ** 2)
    return DirectMeasurement(rec, fidelity, wv)
