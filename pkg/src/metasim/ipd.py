"""Two-group heteroscedastic mixed-effects model at the participant level.

A study draws latent effects ``(U0, U1, V)`` from a trivariate normal, then
individual outcomes ``Y = mu + effect + U + sigma * exp(V/2) * Z`` per arm.
Aggregation reduces the raw outcomes to the triple ``(d, s_sq, df)``: mean
difference, its squared standard error, and Welch-Satterthwaite degrees of
freedom.

Sign convention: arm 0 carries the treatment effect ``beta1`` (and the
latent effect ``U0``); arm 1 is the control arm at level ``mu``. The mean
difference is treated minus control, ``d = mean(arm0) - mean(arm1)``, so
``E(d) = beta1`` and the covariance between ``d`` and ``s_sq`` has the sign
of ``rho02*tau0 - rho12*tau1``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .stochastics import RngStream, psd_cholesky


def _check_unit_interval(name: str, value: float) -> None:
    if not -1.0 <= value <= 1.0:
        raise DomainError(f"{name} must be in [-1, 1], got {value}")


@dataclass(frozen=True)
class IpdParams:
    """Full participant-level parameterization.

    ``tau0, tau1`` are the standard deviations of the per-arm latent mean
    effects, ``tau2`` the standard deviation of the log residual-variance
    inflation ``V``, and the ``rho``s their pairwise correlations.
    """

    mu: float = 0.0
    beta1: float = 0.0
    sigma0_sq: float = 100.0
    sigma1_sq: float = 64.0
    tau0: float = 0.0
    tau1: float = 0.0
    tau2: float = 0.0
    rho01: float = 0.0
    rho02: float = 0.0
    rho12: float = 0.0

    def __post_init__(self) -> None:
        if not (self.sigma0_sq > 0 and self.sigma1_sq > 0):
            raise DomainError("residual variances must be > 0")
        if self.tau0 < 0 or self.tau1 < 0 or self.tau2 < 0:
            raise DomainError("random-effect standard deviations must be >= 0")
        _check_unit_interval("rho01", self.rho01)
        _check_unit_interval("rho02", self.rho02)
        _check_unit_interval("rho12", self.rho12)


@dataclass(frozen=True)
class AggregatedStudy:
    """One study's aggregated statistics: the atom of a meta-analysis.

    Literature-style simulators that carry no notion of study size use the
    sentinels ``df = inf`` and ``n0 = n1 = 0``.
    """

    d: float
    s_sq: float
    df: float
    n0: int
    n1: int

    def __post_init__(self) -> None:
        if not self.s_sq > 0:
            raise DomainError(f"s_sq must be > 0, got {self.s_sq}")
        if not self.df > 0:
            raise DomainError(f"df must be > 0, got {self.df}")
        sized = self.n0 >= 2 and self.n1 >= 2
        sentinel = self.n0 == 0 and self.n1 == 0
        if not (sized or sentinel):
            raise DomainError(f"per-arm sizes must be >= 2 (or both 0), got {self.n0}, {self.n1}")


@dataclass(frozen=True)
class AggParams:
    """Reduced aggregated-level parameterization.

    ``rho`` is the correlation between the study-effect heterogeneity and
    the log variance inflation; it is ignored whenever ``tau_sq == 0``.
    """

    theta: float = 0.0
    tau_sq: float = 0.0
    tau2_sq: float = 0.0
    rho: float = 0.0
    sigma0_sq: float = 100.0
    sigma1_sq: float = 64.0

    def __post_init__(self) -> None:
        if self.tau_sq < 0 or self.tau2_sq < 0:
            raise DomainError("variance components must be >= 0")
        _check_unit_interval("rho", self.rho)
        if not (self.sigma0_sq > 0 and self.sigma1_sq > 0):
            raise DomainError("residual variances must be > 0")


def build_sigma(p: IpdParams) -> np.ndarray:
    """3x3 covariance of ``(U0, U1, V)``; raises if not PSD."""
    sig = np.array(
        [
            [p.tau0**2, p.rho01 * p.tau0 * p.tau1, p.rho02 * p.tau0 * p.tau2],
            [p.rho01 * p.tau0 * p.tau1, p.tau1**2, p.rho12 * p.tau1 * p.tau2],
            [p.rho02 * p.tau0 * p.tau2, p.rho12 * p.tau1 * p.tau2, p.tau2**2],
        ]
    )
    psd_cholesky(sig)  # validation only; raises InvalidCovarianceError
    return sig


def reduce_params(p: IpdParams) -> AggParams:
    """Map the full parameterization onto the aggregated one.

    ``tau_sq = tau0^2 - 2*rho01*tau0*tau1 + tau1^2`` is the variance of the
    heterogeneity ``U0 - U1`` and ``rho`` its correlation with ``V``. When
    ``tau_sq`` vanishes the correlation is undefined and reported as 0 (a
    warning flags any information lost that way).
    """
    tau_sq = p.tau0**2 - 2.0 * p.rho01 * p.tau0 * p.tau1 + p.tau1**2
    tau_sq = max(tau_sq, 0.0)
    cross = p.rho02 * p.tau0 - p.rho12 * p.tau1
    if tau_sq == 0.0:
        if cross != 0.0 and p.tau2 > 0:
            warnings.warn(
                "heterogeneity vanishes; its correlation with V is undefined and reported as 0",
                stacklevel=2,
            )
        rho = 0.0
    else:
        rho = min(1.0, max(-1.0, cross / math.sqrt(tau_sq)))
    return AggParams(
        theta=p.beta1,
        tau_sq=tau_sq,
        tau2_sq=p.tau2**2,
        rho=rho,
        sigma0_sq=p.sigma0_sq,
        sigma1_sq=p.sigma1_sq,
    )


def canonical_ipd_from_agg(a: AggParams, mu: float = 0.0) -> IpdParams:
    """Canonical participant-level preimage of an aggregated parameterization.

    Loads all heterogeneity on arm 0 (``tau1 = 0``) so that
    ``reduce_params(canonical_ipd_from_agg(a)) == a`` up to rounding.
    """
    return IpdParams(
        mu=mu,
        beta1=a.theta,
        sigma0_sq=a.sigma0_sq,
        sigma1_sq=a.sigma1_sq,
        tau0=math.sqrt(a.tau_sq),
        tau1=0.0,
        tau2=math.sqrt(a.tau2_sq),
        rho01=0.0,
        rho02=a.rho if a.tau_sq > 0 else 0.0,
        rho12=0.0,
    )


def satterthwaite_df(sigma0_sq_hat: float, sigma1_sq_hat: float, n0: int, n1: int) -> float:
    """Welch-Satterthwaite effective degrees of freedom.

    ``df = (a0 + a1)^2 / (a0^2/(n0-1) + a1^2/(n1-1))`` with
    ``a_j = sigma_j_sq_hat / n_j``. Analytically the result lies in
    ``[min(n0-1, n1-1), n0+n1-2]``; rounding beyond 1e-9 outside that band
    is an internal error rather than something to clip away silently.
    """
    if not (sigma0_sq_hat > 0 and sigma1_sq_hat > 0):
        raise DomainError("variance estimates must be > 0")
    if n0 < 2 or n1 < 2:
        raise DomainError("per-arm sizes must be >= 2")
    nu0, nu1 = n0 - 1, n1 - 1
    a0 = sigma0_sq_hat / n0
    a1 = sigma1_sq_hat / n1
    if a0 == a1 and nu0 == nu1:
        # The formula reduces algebraically to n0+n1-2 here; computing it
        # directly keeps the identity exact in floating point.
        return float(nu0 + nu1)
    df = (a0 + a1) ** 2 / (a0 * a0 / nu0 + a1 * a1 / nu1)
    lo, hi = float(min(nu0, nu1)), float(nu0 + nu1)
    if df < lo - 1e-9 or df > hi + 1e-9:
        raise AssertionError(f"df {df} violates [{lo}, {hi}] beyond tolerance")
    return float(min(max(df, lo), hi))


def simulate_study_ipd(
    p: IpdParams,
    n0: int,
    n1: int,
    stream: RngStream,
    se_estimator: str = "welch",
) -> AggregatedStudy:
    """Simulate one study's raw outcomes and aggregate them.

    ``se_estimator`` selects the squared-standard-error estimate:
    ``"welch"`` uses ``S0^2/n0 + S1^2/n1`` with Satterthwaite df, while
    ``"pooled"`` (valid under equal residual variances) uses the pooled
    variance with ``df = n0 + n1 - 2``.
    """
    if n0 < 2 or n1 < 2:
        raise DomainError("per-arm sizes must be >= 2")
    if se_estimator not in ("welch", "pooled"):
        raise DomainError(f"unknown se_estimator {se_estimator!r}")
    factor = psd_cholesky(build_sigma(p))
    gen = stream.generator()
    u0, u1, v = factor @ gen.standard_normal(3)
    scale = math.exp(0.5 * v)
    sd0 = math.sqrt(p.sigma0_sq) * scale
    sd1 = math.sqrt(p.sigma1_sq) * scale
    y0 = p.mu + p.beta1 + u0 + sd0 * gen.standard_normal(n0)
    y1 = p.mu + u1 + sd1 * gen.standard_normal(n1)
    d = float(y0.mean() - y1.mean())
    s0_sq = float(y0.var(ddof=1))
    s1_sq = float(y1.var(ddof=1))
    if se_estimator == "pooled":
        pooled = ((n0 - 1) * s0_sq + (n1 - 1) * s1_sq) / (n0 + n1 - 2)
        s_sq = pooled * (1.0 / n0 + 1.0 / n1)
        df = float(n0 + n1 - 2)
    else:
        s_sq = s0_sq / n0 + s1_sq / n1
        df = satterthwaite_df(s0_sq, s1_sq, n0, n1)
    return AggregatedStudy(d=d, s_sq=s_sq, df=df, n0=n0, n1=n1)
