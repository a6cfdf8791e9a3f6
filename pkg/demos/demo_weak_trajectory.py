"""
Weak-valued trajectory of an oscillator
=======================================

Between a coherent pre-selection ``|alpha>`` and a coherent
post-selection ``|beta>``, the weak value of position is a complex
trajectory. It satisfies the lattice Euler-Lagrange equation and equals
the extremal path through its own endpoints.
"""

# %%
# Complex trajectory
# ------------------
import numpy as np

from wvfield.action import (LatticeAction, classicality_check, fock_hamiltonian,
                            legendre_check, solve_boundary_value, weak_trajectory)
from wvfield.linalg import coherent_state
from wvfield.weak import TimeSlicedProcess

omega = 0.3
a = LatticeAction(1001, 1e-3, omega=omega)
xw = weak_trajectory(coherent_state(1.0, 64), coherent_state(0.4j, 64), omega, a.times, 64)
print(f"x_w(0) = {xw[0]:.4f}, x_w(T) = {xw[-1]:.4f}")

# %%
# Classical equation of motion
# ----------------------------
line = solve_boundary_value(a, xw[0], xw[-1])
print(f"max Euler-Lagrange residual {classicality_check(xw, a):.1e}")
print(f"max distance to extremal path {np.max(np.abs(line.values - xw)):.1e}")

# %%
# Generating functional
# ---------------------
# The source derivative of ``W[J]`` reproduces the weak value, and the line
# integral of ``phi dJ`` does not depend on the path in source space.
H, x = fock_hamiltonian(16, 0.8)
proc = TimeSlicedProcess.constant(H, 6, 0.1, source_operator=x)
J = 0.5 * np.random.default_rng(0).standard_normal(6)
rep = legendre_check(coherent_state(0.5, 16), coherent_state(0.2 + 0.3j, 16), proc, J, (1, 4))
print(rep)
