"""Exception hierarchy shared by all wvfield modules."""


class WVFieldError(Exception):
    """Base class for every error raised by wvfield."""


class DimensionError(WVFieldError, ValueError):
    """Operands have incompatible dimensions or lengths."""


class DimensionCapError(WVFieldError, ValueError):
    """A dense operation was requested above the configured size cap."""


class NotHermitianError(WVFieldError, ValueError):
    """An operator that must be Hermitian is not."""


class OrthogonalStatesError(WVFieldError, ValueError):
    """Pre- and post-selected states are orthogonal within threshold."""


class BranchError(WVFieldError, ArithmeticError):
    """The logarithm of an amplitude could not be continued (amplitude vanished)."""


class UnsupportedOrderError(WVFieldError, ValueError):
    """Correlation order outside the supported range."""


class TruncationError(WVFieldError, ValueError):
    """Fock-space truncation is not converged for the requested state."""


class DegeneratePostselectionError(WVFieldError, ValueError):
    """Post-selection succeeds with vanishing probability."""


class EntangledStateError(WVFieldError, ValueError):
    """A product state was required but the input is entangled."""


class InsufficientShotsError(WVFieldError, ValueError):
    """Too few post-selected shots to form an estimate."""


class StabilityError(WVFieldError, ValueError):
    """Time step violates the split-step stability precondition."""


class GeometryError(WVFieldError, ValueError):
    """Scenario geometry does not fit the numerical grid."""


class MaskedRegionError(WVFieldError, ValueError):
    """A point lies where the momentum field is masked (negligible intensity)."""


class EmptyBinError(WVFieldError, ValueError):
    """A position bin carries no intensity."""


class WeakOnAverageError(WVFieldError, ValueError):
    """Probes absorb too large a fraction of the field to be weakly perturbing."""


class ResonanceError(WVFieldError, ArithmeticError):
    """Boundary-value problem is singular (discrete resonance)."""


class ConfigError(WVFieldError, ValueError):
    """Scenario configuration is invalid."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
