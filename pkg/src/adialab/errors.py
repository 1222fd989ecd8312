"""Exception and warning types raised across the package."""


class AdialabError(Exception):
    """Base class for all package errors."""


class DegenerateSpan(AdialabError):
    """Spanning vectors of the tangential subspace are linearly dependent."""


class MixedRationality(AdialabError):
    """The lattice F ∩ Z^n has rank strictly between 0 and p."""


class NonPositiveMetric(AdialabError):
    """A metric coefficient is not strictly positive at some grid node."""


class TransverseLeafDependence(AdialabError):
    """The transverse coefficient varies along the leaves (not bundle-like)."""


class SingularWeight(AdialabError):
    """The symmetrizing weight (ab)^(1/4) underflowed."""


class BudgetExceeded(AdialabError):
    """Lattice enumeration would visit more candidates than allowed."""


class NoConvergence(AdialabError):
    """The iterative eigensolver did not reach the residual tolerance."""


class UnsupportedTail(AdialabError):
    """A test function does not decay inside the resolved part of the spectrum."""


class MatchAmbiguity(AdialabError):
    """Eigenvector overlap between consecutive scales fell below threshold."""


class InsufficientData(AdialabError):
    """Too few positive counts to fit an exponent."""


class ConfigError(AdialabError):
    """Invalid experiment configuration.

    ``field`` is the dotted path of the offending entry and ``line`` its
    1-based line in the source file, when known.
    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = ""
        if field is not None:
            where = f"{field}: "
        if line is not None:
            where = f"line {line}: " + where
        super().__init__(where + message)


class TailNotNegligible(UserWarning):
    """Spectral sum truncated where the integrand has not decayed enough."""


class HeuristicRationality(UserWarning):
    """Rationality was decided by a bounded search, not exact arithmetic."""
