"""Exception hierarchy shared by all modules."""


class FracPMEError(Exception):
    """Base class for all package errors."""


class ZeroMass(FracPMEError):
    """Density has zero total mass and cannot be normalized."""


class NotNormalized(FracPMEError):
    """Operation requires a unit-mass density (|mass - 1| <= 1e-10)."""


class OutOfRange(FracPMEError):
    """Parameter outside its admissible interval (e.g. s not in (0,1))."""


class NonPositive(FracPMEError):
    """Parameter required to be strictly positive."""


class OutsideSupport(FracPMEError):
    """Evaluation point lies outside the profile support."""


class EmptySupport(FracPMEError):
    """No grid cell exceeds the support threshold."""


class Inconsistent(FracPMEError):
    """Two independent computations of the same quantity disagree."""


class NegativeBeyondTolerance(FracPMEError):
    """Quadratic form came out negative beyond round-off tolerance."""


class NegativeRemainder(FracPMEError):
    """Dissipation-rate remainder negative beyond tolerance (quadrature bug)."""


class EpsilonOutOfRange(FracPMEError):
    """Diffusion parameter outside [0, lambda/(2*pi))."""


class DegenerateDenominator(FracPMEError):
    """Interaction integral non-positive where positivity is guaranteed."""


class ParameterOrder(FracPMEError):
    """Exponent parameters violate the required ordering (e.g. r >= alpha/2)."""


class CflViolation(FracPMEError):
    """Time step exceeds the stability bound."""


class PositivityLoss(FracPMEError):
    """Negativity clamping exceeded the per-step mass budget."""


class EnergyIncrease(FracPMEError):
    """Free energy increased beyond the per-step slack along the flow."""


class NotConverged(FracPMEError):
    """Iteration reached its horizon without meeting the tolerance."""


class InsufficientSamples(FracPMEError):
    """Not enough samples in the requested fit window."""


class NonpositiveQuantity(FracPMEError):
    """Log-linear fit requested on a quantity that is not positive."""
