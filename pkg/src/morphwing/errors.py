"""Exception types shared across the toolkit."""


class MorphwingError(Exception):
    """Base class for all toolkit errors."""


class RankDeficient(MorphwingError):
    """Matrix does not have the row rank required for inversion."""


class NotHurwitz(MorphwingError):
    """System matrix has an eigenvalue with nonnegative real part."""


class NoStabilizingSolution(MorphwingError):
    """Riccati iteration failed to converge to a stabilizing solution."""


class BadSampling(MorphwingError):
    """Sample period too coarse for the requested filter bandwidth."""


class NonFiniteState(MorphwingError):
    """Integration produced NaN or Inf entries."""


class BadDimension(MorphwingError):
    """Dimension argument outside the valid range."""


class DimensionMismatch(MorphwingError):
    """Operand shapes are inconsistent."""


class InfeasibleCurrentState(MorphwingError):
    """Current servo configuration violates the relative-position limits."""


class RankLoss(MorphwingError):
    """Shape basis lost column rank at the given sample locations."""


class NotStabilizable(MorphwingError):
    """Augmented pair is not stabilizable; no LQR design exists."""


class NotDetectable(MorphwingError):
    """Pair (A, C) is not detectable; no stable estimator exists."""


class GainNotContractive(MorphwingError):
    """Effectiveness mismatch exceeds the contraction condition of the
    boundedness certificate; the certificate does not apply."""


class ConfigError(MorphwingError):
    """Scenario configuration file is malformed or inconsistent."""
