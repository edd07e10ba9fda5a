"""Direct simulation of aggregated studies under four generative models.

The mixture model reproduces the participant-level model of :mod:`.ipd`
without touching raw outcomes: it draws the two within-arm chi-square
variables and the log variance-inflation ``V`` and then the mean difference
from its conditional normal law. The three literature-style models share the
random-effects equation ``d = theta + U + eps`` with ``Var(eps | s_sq) =
s_sq`` and differ only in how the variance ``s_sq`` is generated: a scaled
central chi-square, a scaled non-central chi-square, or the square of a
gamma-distributed standard error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar, Union

import numpy as np

from .errors import DegenerateSampleSizeError, DomainError
from .ipd import AggParams, AggregatedStudy, satterthwaite_df
from .stochastics import RngStream

_SQRT2 = math.sqrt(2.0)
_QUARTER_ROOT2 = 2.0 ** 0.25
_MAX_SIZE_ATTEMPTS = 1000
_MAX_RANGE_ATTEMPTS = 100000


@dataclass(frozen=True)
class SampleSizeParams:
    """Overdispersed-Poisson study-size generator.

    A gamma variable ``g ~ Gamma(a, rate b)`` mixes the Poisson rate. In
    ``log_gamma`` mode the rate is ``lambda0 * exp(g)`` (heavy-tailed; the
    mean size is infinite, hence the configurable cap), in ``scaled_gamma``
    mode it is the classic ``lambda0 * g`` with mean ``lambda0 * a/b``. The
    total is split binomially and the whole draw is rejected until both arms
    reach ``n_min``.
    """

    lambda0: float = 100.0
    a: float = 1.0
    b: float = 1.0
    p: float = 0.5
    n_min: int = 2
    mixing_mode: str = "log_gamma"
    lambda_cap: float = 1e6

    def __post_init__(self) -> None:
        if not (self.lambda0 > 0 and self.a > 0 and self.b > 0):
            raise DomainError("lambda0, a, b must be > 0")
        if not 0.0 < self.p < 1.0:
            raise DomainError(f"p must be in (0, 1), got {self.p}")
        if self.n_min < 2:
            raise DomainError(f"n_min must be >= 2, got {self.n_min}")
        if self.mixing_mode not in ("log_gamma", "scaled_gamma"):
            raise DomainError(f"unknown mixing_mode {self.mixing_mode!r}")
        if not self.lambda_cap > 0:
            raise DomainError("lambda_cap must be > 0")


@dataclass(frozen=True)
class ChiSquareMixture:
    """Aggregated counterpart of the participant-level model."""

    tag: ClassVar[str] = "mixture"


@dataclass(frozen=True)
class CentralChiSquare:
    """``s_sq = scale * ChiSquare(1)``, optionally restricted to a range."""

    tag: ClassVar[str] = "central"
    scale: float = 3.28
    restrict_range: tuple[float, float] | None = None
    hetero: bool = False

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise DomainError("scale must be > 0")
        if self.restrict_range is not None:
            lo, hi = self.restrict_range
            if not 0 <= lo < hi:
                raise DomainError(f"invalid restrict_range {self.restrict_range}")


@dataclass(frozen=True)
class NonCentralChiSquare:
    """``s_sq = c * (shift + Z)^2`` with standard normal ``Z``."""

    tag: ClassVar[str] = "non-central"
    c: float = 3.0
    shift: float = 0.3
    hetero: bool = False

    def __post_init__(self) -> None:
        if not self.c > 0:
            raise DomainError("c must be > 0")


@dataclass(frozen=True)
class GammaStandardError:
    """``s_sq = S^2`` with the standard error ``S ~ Gamma(shape, rate)``."""

    tag: ClassVar[str] = "gamma-se"
    shape: float = 9.0
    rate: float = 5.0
    hetero: bool = False

    def __post_init__(self) -> None:
        if not (self.shape > 0 and self.rate > 0):
            raise DomainError("shape and rate must be > 0")


SimModel = Union[ChiSquareMixture, CentralChiSquare, NonCentralChiSquare, GammaStandardError]

LITERATURE_DF = math.inf
LITERATURE_SIZE = 0


@dataclass(frozen=True)
class MetaAnalysis:
    """A simulated meta-analysis stored column-wise for fast pooling.

    ``true_theta`` is pure bookkeeping for bias/coverage accounting.
    """

    d: np.ndarray
    s_sq: np.ndarray
    df: np.ndarray
    n0: np.ndarray
    n1: np.ndarray
    true_theta: float
    lambda_cap_hits: int = 0

    def __post_init__(self) -> None:
        for name in ("d", "s_sq", "df"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("n0", "n1"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        m = self.d.shape[0]
        if m < 2:
            raise DomainError(f"a meta-analysis needs at least 2 studies, got {m}")
        if not all(getattr(self, name).shape == (m,) for name in ("s_sq", "df", "n0", "n1")):
            raise DomainError("all study columns must have equal length")

    def __len__(self) -> int:
        return int(self.d.shape[0])

    @classmethod
    def from_studies(cls, studies, true_theta: float) -> "MetaAnalysis":
        studies = list(studies)
        return cls(
            d=np.array([s.d for s in studies]),
            s_sq=np.array([s.s_sq for s in studies]),
            df=np.array([s.df for s in studies]),
            n0=np.array([s.n0 for s in studies]),
            n1=np.array([s.n1 for s in studies]),
            true_theta=float(true_theta),
        )

    @property
    def studies(self) -> tuple[AggregatedStudy, ...]:
        return tuple(
            AggregatedStudy(float(self.d[i]), float(self.s_sq[i]), float(self.df[i]),
                            int(self.n0[i]), int(self.n1[i]))
            for i in range(len(self))
        )

    def subset(self, mask: np.ndarray) -> "MetaAnalysis":
        """Studies where ``mask`` is true, original order preserved."""
        mask = np.asarray(mask, dtype=bool)
        return MetaAnalysis(
            d=self.d[mask], s_sq=self.s_sq[mask], df=self.df[mask],
            n0=self.n0[mask], n1=self.n1[mask], true_theta=self.true_theta,
            lambda_cap_hits=self.lambda_cap_hits,
        )


@dataclass(frozen=True)
class StudyLaw:
    """Latent state of one study: ``d ~ Normal(d_mean, d_sd)`` given the rest.

    Exposing the conditional law (rather than only the realized ``d``) lets
    the selection calibrator average exact significance probabilities
    instead of noisy indicators.
    """

    s_sq: float
    d_mean: float
    d_sd: float
    df: float
    n0: int
    n1: int

    def realize(self, gen: np.random.Generator) -> AggregatedStudy:
        d = float(gen.normal(self.d_mean, self.d_sd))
        return AggregatedStudy(d=d, s_sq=self.s_sq, df=self.df, n0=self.n0, n1=self.n1)


def _draw_sample_sizes_info(ssp: SampleSizeParams, stream: RngStream) -> tuple[int, int, int, int]:
    """Returns ``(n0, n1, attempts, cap_hits)``; fresh substream per attempt."""
    cap_hits = 0
    for attempt in range(_MAX_SIZE_ATTEMPTS):
        gen = stream.derive(attempt).generator()
        g = gen.gamma(ssp.a, 1.0 / ssp.b)
        if ssp.mixing_mode == "log_gamma":
            lam = ssp.lambda0 * math.exp(min(g, 700.0))
        else:
            lam = ssp.lambda0 * g
        if lam > ssp.lambda_cap:
            lam = ssp.lambda_cap
            cap_hits += 1
        if lam <= 0:
            continue
        n = int(gen.poisson(lam))
        n0 = int(gen.binomial(n, ssp.p))
        n1 = n - n0
        if n0 >= ssp.n_min and n1 >= ssp.n_min:
            return n0, n1, attempt + 1, cap_hits
    raise DegenerateSampleSizeError(
        f"no admissible sample size in {_MAX_SIZE_ATTEMPTS} attempts (ssp={ssp})"
    )


def draw_sample_sizes(ssp: SampleSizeParams, stream: RngStream) -> tuple[int, int]:
    """One per-study pair of arm sizes."""
    n0, n1, _, _ = _draw_sample_sizes_info(ssp, stream)
    return n0, n1


def mixture_law(a: AggParams, n0: int, n1: int, gen: np.random.Generator) -> StudyLaw:
    """Draw the latent pieces of a mixture-model study from ``gen``.

    Consumes (in order) the two within-arm chi-squares and, when
    ``tau2_sq > 0``, the inflation ``V``.
    """
    nu0, nu1 = n0 - 1, n1 - 1
    chi0 = gen.gamma(0.5 * nu0, 2.0)
    chi1 = gen.gamma(0.5 * nu1, 2.0)
    if a.tau2_sq > 0:
        v = gen.normal(0.0, math.sqrt(a.tau2_sq))
    else:
        v = 0.0
    exp_v = math.exp(v)
    var0 = a.sigma0_sq * chi0 / (n0 * nu0)
    var1 = a.sigma1_sq * chi1 / (n1 * nu1)
    s_sq = exp_v * (var0 + var1)
    sigma_i_sq = a.sigma0_sq / n0 + a.sigma1_sq / n1
    if a.tau2_sq > 0 and a.tau_sq > 0:
        ratio = math.sqrt(a.tau_sq) * a.rho / math.sqrt(a.tau2_sq)
        d_mean = a.theta + ratio * v
        d_var = a.tau_sq * (1.0 - a.rho**2) + exp_v * sigma_i_sq
    else:
        # With no inflation (or no heterogeneity) rho carries no information.
        d_mean = a.theta
        d_var = a.tau_sq + exp_v * sigma_i_sq
    df = satterthwaite_df(exp_v * a.sigma0_sq * chi0 / nu0, exp_v * a.sigma1_sq * chi1 / nu1, n0, n1)
    return StudyLaw(s_sq=float(s_sq), d_mean=float(d_mean), d_sd=math.sqrt(d_var),
                    df=df, n0=n0, n1=n1)


def literature_variance(model: SimModel, gen: np.random.Generator) -> float:
    """One draw of the within-study variance for a literature-style model."""
    if isinstance(model, CentralChiSquare):
        for _ in range(_MAX_RANGE_ATTEMPTS):
            s_sq = model.scale * gen.gamma(0.5, 2.0)
            if model.restrict_range is None:
                break
            lo, hi = model.restrict_range
            if lo <= s_sq <= hi:
                break
        else:
            raise DomainError(f"variance range {model.restrict_range} too narrow to sample")
        if model.hetero:
            s_sq *= _SQRT2
        return float(s_sq)
    if isinstance(model, NonCentralChiSquare):
        s_sq = model.c * (model.shift + gen.standard_normal()) ** 2
        if model.hetero:
            s_sq *= _SQRT2
        return float(s_sq)
    if isinstance(model, GammaStandardError):
        s = gen.gamma(model.shape, 1.0 / model.rate)
        if model.hetero:
            # The heterogeneity factor applies to the generated standard
            # error, inflating the variance by the same sqrt(2).
            s *= _QUARTER_ROOT2
        return float(s * s)
    raise DomainError(f"model {model!r} does not generate variances directly")


def literature_law(model: SimModel, theta: float, tau_sq: float,
                   gen: np.random.Generator) -> StudyLaw:
    s_sq = literature_variance(model, gen)
    return StudyLaw(s_sq=s_sq, d_mean=float(theta), d_sd=math.sqrt(tau_sq + s_sq),
                    df=LITERATURE_DF, n0=LITERATURE_SIZE, n1=LITERATURE_SIZE)


def simulate_study_mixture(a: AggParams, n0: int, n1: int, stream: RngStream) -> AggregatedStudy:
    """One aggregated study under the mixture model at fixed arm sizes."""
    if n0 < 2 or n1 < 2:
        raise DomainError("per-arm sizes must be >= 2")
    gen = stream.generator()
    law = mixture_law(a, n0, n1, gen)
    return law.realize(gen)


def simulate_study_literature(model: SimModel, theta: float, tau_sq: float,
                              stream: RngStream) -> AggregatedStudy:
    """One aggregated study under a literature-style model."""
    if tau_sq < 0:
        raise DomainError("tau_sq must be >= 0")
    gen = stream.generator()
    law = literature_law(model, theta, tau_sq, gen)
    return law.realize(gen)


def draw_study_law(model: SimModel, a: AggParams, ssp: SampleSizeParams,
                   stream: RngStream) -> StudyLaw:
    """Latent law of one study under ``model``, using the same substream
    layout as :func:`simulate_meta` (sizes on child 0, study on child 1)."""
    if isinstance(model, ChiSquareMixture):
        n0, n1, _, _ = _draw_sample_sizes_info(ssp, stream.derive(0))
        return mixture_law(a, n0, n1, stream.derive(1).generator())
    return literature_law(model, a.theta, a.tau_sq, stream.generator())


def simulate_meta(model: SimModel, agg: AggParams, ssp: SampleSizeParams,
                  m: int, stream: RngStream) -> MetaAnalysis:
    """``m`` independent studies, one derived substream per study."""
    if m < 2:
        raise DomainError(f"m must be >= 2, got {m}")
    d = np.empty(m)
    s_sq = np.empty(m)
    df = np.empty(m)
    n0 = np.empty(m, dtype=np.int64)
    n1 = np.empty(m, dtype=np.int64)
    cap_hits = 0
    mixture = isinstance(model, ChiSquareMixture)
    for i in range(m):
        study_stream = stream.derive(i)
        if mixture:
            k0, k1, _, hits = _draw_sample_sizes_info(ssp, study_stream.derive(0))
            cap_hits += hits
            study = simulate_study_mixture(agg, k0, k1, study_stream.derive(1))
        else:
            study = simulate_study_literature(model, agg.theta, agg.tau_sq, study_stream)
        d[i] = study.d
        s_sq[i] = study.s_sq
        df[i] = study.df
        n0[i] = study.n0
        n1[i] = study.n1
    return MetaAnalysis(d=d, s_sq=s_sq, df=df, n0=n0, n1=n1,
                        true_theta=agg.theta, lambda_cap_hits=cap_hits)


MODELS_BY_TAG = {
    ChiSquareMixture.tag: ChiSquareMixture,
    CentralChiSquare.tag: CentralChiSquare,
    NonCentralChiSquare.tag: NonCentralChiSquare,
    GammaStandardError.tag: GammaStandardError,
}
