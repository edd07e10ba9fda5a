"""Exception hierarchy shared by all metasim modules."""

from __future__ import annotations


class MetasimError(Exception):
    """Base class for every error raised by this package."""


class DomainError(MetasimError, ValueError):
    """A parameter or argument is outside its valid range."""


class InvalidCovarianceError(MetasimError, ValueError):
    """A covariance matrix is asymmetric or not positive semidefinite."""


class DegenerateSampleSizeError(MetasimError):
    """Sample-size rejection sampling exhausted its attempt budget."""


class InvalidStudyError(MetasimError, ValueError):
    """A meta-analysis contains studies an estimator cannot consume."""


class SingularDesignError(MetasimError):
    """A regression design matrix is (numerically) rank deficient."""


class TooFewPublishedError(MetasimError):
    """Selection left fewer studies than a meta-analysis requires."""

    def __init__(self, n_published: int):
        self.n_published = n_published
        super().__init__(f"only {n_published} studies survived selection")


class InfeasibleTargetError(MetasimError):
    """The target publication rate is below the significant fraction."""


class CalibrationError(MetasimError):
    """Post-calibration verification missed the target publication rate."""
