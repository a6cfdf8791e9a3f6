"""
Average momentum in a two-slit field
====================================

A paraxial two-slit field is propagated to the screen. Its local momentum
is reconstructed three ways: directly from the wavefunction, from weak
momentum measurements post-selected on position, and from rare strong
absorptions in small probes. Streamlines of the local momentum carry the
intensity from the slits to the screen without crossing.
"""

# %%
# Propagate the field
# -------------------
import numpy as np

from wvfield import wavefield as wf
from wvfield.scenarios import central_bins, probe_sites

frames = wf.two_slit_scenario(40.0, 3.0, 200.0, n_points=1024, n_frames=41)
final = frames[-1]
print(f"fringe spacing {wf.fringe_spacing(final):.3f} (lambda D / d = 5.0)")
print(f"visibility {wf.fringe_visibility(final):.3f}")

# %%
# Weak measurement versus classical probes
# ----------------------------------------
# 64 bins of four nodes around the axis; ten probes sit on a subset of
# the bins and absorb well under 0.1 % of the field.
dx = final.spacing[0]
edges = central_bins(final, 4, 64)
centers = 0.5 * (edges[:-1] + edges[1:])
exact = wf.weak_momentum_map(final, edges)
weak = wf.weak_momentum_map(final, edges, shots=1_000_000, seed=1, g=0.2)
sites = probe_sites(64, 10)
probes = wf.classical_probe_sample(final, centers[sites], 4 * dx, 1_000_000, seed=2,
                                   absorption_efficiency=6e-3)
print(f"absorbed fraction {probes.absorbed_fraction:.1e}")
print("    x      exact     weak          probe")
for j, b in enumerate(sites):
    print(f"{centers[b]:7.2f} {exact.vectors[b, 0]:8.4f} "
          f"{weak.vectors[b, 0]:8.4f}+-{weak.stderr[b]:.4f} "
          f"{probes.mean[j]:8.4f}+-{probes.stderr[j]:.4f}")

# %%
# Streamlines
# -----------
maps = [wf.local_momentum(f) for f in frames]
seeds = wf.quantile_seeds(frames[0], 1000)
trajs = wf.streamlines(maps, seeds, 0.5, final.constants.mass)
ends = np.array([t.positions[-1, 0] for t in trajs])
print(f"crossings {wf.count_crossings(trajs, dx)}")
print(f"endpoint vs intensity total variation {wf.endpoint_total_variation(ends, final):.4f}")
