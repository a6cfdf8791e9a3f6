"""
wvfield: weak values, pointer measurements, wave fields and lattice actions.

Submodules
----------
linalg     dense states, operators and evolution
weak       weak values, post-selection and the source functional W[J]
pointer    von Neumann pointer model and shot sampling
wavefield  grid wave mechanics, local momentum and its measurement
action     lattice actions, boundary-value solver and classicality checks
scenarios  configuration-driven runs and artifact output
"""

__version__ = "0.1.0"

from .exceptions import *  # noqa: F401,F403
from .linalg import Constants, OperatorMatrix, StateVector  # noqa: F401
from .weak import (TimeSlicedProcess, SourceConfig, weak_value,  # noqa: F401
                   generating_functional, background_field)
