"""Deterministic hierarchical random streams and the distribution samplers
used throughout the simulation engine.

Every stochastic component draws through an :class:`RngStream`, a
value-semantic ``(master_seed, path)`` address. The address is hashed
(blake2b) into a PCG64 seed, so replaying any address reproduces the exact
draw sequence regardless of process, thread count, or what other streams
were consumed in between. Streams with different paths are independent for
all practical purposes.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError, InvalidCovarianceError

_MASK64 = (1 << 64) - 1

# Pivots in [NEGATIVE_PIVOT_TOL, PIVOT_TOL] are treated as exactly zero so
# that rank-deficient PSD matrices factor cleanly; anything more negative is
# rejected as not positive semidefinite.
PIVOT_TOL = 1e-12
NEGATIVE_PIVOT_TOL = -1e-10


@dataclass(frozen=True)
class RngStream:
    """A replayable random stream addressed by a master seed and a path.

    The path is a sequence of non-negative integers (e.g. setting index,
    replication index, draw-site index). Two streams with identical
    addresses produce identical draws; extending the path with
    :meth:`derive` yields a statistically independent substream.
    """

    master_seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        for part in self.path:
            if not 0 <= part <= _MASK64:
                raise DomainError(f"path component {part} outside [0, 2**64)")

    def derive(self, child_index: int) -> "RngStream":
        """Return the child stream at ``child_index``; self is unchanged."""
        child_index = int(child_index)
        if child_index < 0:
            raise DomainError("child_index must be non-negative")
        return RngStream(self.master_seed, self.path + (child_index,))

    def generator(self) -> np.random.Generator:
        """Fresh generator keyed by hashing this stream's address.

        Calling twice returns generators replaying the same sequence, so a
        stream is a pure value: independent draws require distinct paths.
        """
        buf = (self.master_seed & _MASK64).to_bytes(8, "little") + b"".join(
            part.to_bytes(8, "little") for part in self.path
        )
        digest = hashlib.blake2b(buf, digest_size=16).digest()
        return np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))


def derive_stream(parent: RngStream, child_index: int) -> RngStream:
    """Functional alias for :meth:`RngStream.derive`."""
    return parent.derive(child_index)


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value}")
    return value


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    def __post_init__(self) -> None:
        _require_finite("mean", self.mean)
        if not self.sd >= 0:
            raise DomainError(f"sd must be >= 0, got {self.sd}")

    def draw(self, gen: np.random.Generator, size=None):
        return gen.normal(self.mean, self.sd, size)


@dataclass(frozen=True)
class Gamma:
    """Gamma distribution in shape/rate form: mean = shape/rate.

    The shape/rate convention is used everywhere inside this package; call
    sites holding shape/scale parameters must convert explicitly.
    """

    shape: float
    rate: float

    def __post_init__(self) -> None:
        if not (self.shape > 0 and self.rate > 0):
            raise DomainError(f"shape and rate must be > 0, got {self.shape}, {self.rate}")

    def draw(self, gen: np.random.Generator, size=None):
        return gen.gamma(self.shape, 1.0 / self.rate, size)


@dataclass(frozen=True)
class Poisson:
    lam: float

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise DomainError(f"lam must be > 0, got {self.lam}")

    def draw(self, gen: np.random.Generator, size=None):
        # numpy's sampler is exact (inversion / transformed rejection), which
        # matters because mixed rates can be small.
        return gen.poisson(self.lam, size)


@dataclass(frozen=True)
class Binomial:
    n: int
    p: float

    def __post_init__(self) -> None:
        if self.n < 0:
            raise DomainError(f"n must be >= 0, got {self.n}")
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"p must be in [0, 1], got {self.p}")

    def draw(self, gen: np.random.Generator, size=None):
        return gen.binomial(self.n, self.p, size)


@dataclass(frozen=True)
class ChiSquare:
    df: float

    def __post_init__(self) -> None:
        if not self.df > 0:
            raise DomainError(f"df must be > 0, got {self.df}")

    def draw(self, gen: np.random.Generator, size=None):
        # Realized as Gamma(df/2, rate 1/2).
        return gen.gamma(0.5 * self.df, 2.0, size)


def psd_cholesky(cov, *, pivot_tol: float = PIVOT_TOL,
                 negative_tol: float = NEGATIVE_PIVOT_TOL) -> np.ndarray:
    """Lower-triangular factor L with ``L @ L.T == cov`` for PSD ``cov``.

    Rank-deficient matrices are handled by zeroing columns whose pivot falls
    inside the tolerance band; a pivot below ``negative_tol`` raises
    :class:`InvalidCovarianceError`.
    """
    a = np.asarray(cov, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"covariance must be square, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-10):
        raise InvalidCovarianceError("covariance matrix is not symmetric")
    n = a.shape[0]
    lower = np.zeros_like(a)
    for k in range(n):
        pivot = a[k, k] - float(np.dot(lower[k, :k], lower[k, :k]))
        if pivot < negative_tol:
            raise InvalidCovarianceError(
                f"matrix is not positive semidefinite (pivot {pivot:.3e} at {k})"
            )
        if pivot <= pivot_tol:
            continue  # column already fully explained
        lower[k, k] = math.sqrt(pivot)
        for i in range(k + 1, n):
            lower[i, k] = (a[i, k] - float(np.dot(lower[i, :k], lower[k, :k]))) / lower[k, k]
    return lower


@dataclass(frozen=True)
class MultivariateNormal3:
    """Trivariate normal; the covariance is factored once at construction."""

    mean: tuple[float, float, float]
    cov: tuple[tuple[float, float, float], ...]

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float)
        if mean.shape != (3,):
            raise DomainError(f"mean must have 3 components, got shape {mean.shape}")
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (3, 3):
            raise DomainError(f"covariance must be 3x3, got shape {cov.shape}")
        factor = psd_cholesky(cov)
        object.__setattr__(self, "_mean_arr", mean)
        object.__setattr__(self, "_factor", factor)

    def draw(self, gen: np.random.Generator, size=None):
        if size is None:
            return self._mean_arr + self._factor @ gen.standard_normal(3)
        z = gen.standard_normal((size, 3))
        return self._mean_arr + z @ self._factor.T


Distribution = Union[Normal, Gamma, Poisson, Binomial, ChiSquare, MultivariateNormal3]


def sample(stream: RngStream, dist: Distribution):
    """One draw from ``dist`` driven by ``stream``.

    Pure in its arguments: calling twice with the same stream returns the
    identical value. Derive distinct substreams for independent draws.
    """
    return dist.draw(stream.generator())
