"""Seeded sampling and density evaluation for the distribution families used
by the Gibbs and Metropolis samplers.

Parameterization conventions
----------------------------
Gamma(shape, rate)
    density ``rate**shape / Gamma(shape) * x**(shape-1) * exp(-rate*x)``,
    mean ``shape / rate``.
InverseGamma(shape, rate)
    density ``rate**shape / Gamma(shape) * x**(-shape-1) * exp(-rate/x)``,
    mean ``rate / (shape - 1)``. If ``X ~ Gamma(shape, rate)`` then
    ``1/X ~ InverseGamma(shape, rate)``. This is the form that appears in the
    conjugate variance updates, so ``rate`` here is the *scale* of the
    inverse-gamma in the scipy convention.
ShiftedBeta(a, b, min, max)
    ``min + (max - min) * Beta(a, b)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "ShiftedBeta",
    "InverseGamma",
    "rng_stream",
    "sample_normal",
    "sample_gamma",
    "sample_inverse_gamma",
    "sample_beta",
    "sample_shifted_beta",
    "sample_bernoulli",
    "normal_log_density",
    "inverse_gamma_log_density",
    "beta_moment_match",
]

_LOG_2PI = math.log(2.0 * math.pi)


class DomainError(ValueError):
    """Raised when a distribution parameter is outside its domain."""


@dataclass(frozen=True)
class ShiftedBeta:
    """Beta(a, b) distribution rescaled to the interval [min, max]."""

    a: float
    b: float
    min: float
    max: float

    def __post_init__(self):
        for name in ("a", "b", "min", "max"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.a > 0 and self.b > 0):
            raise DomainError(f"Beta shapes must be positive, got a={self.a}, b={self.b}")
        if not self.min < self.max:
            raise DomainError(f"support requires min < max, got [{self.min}, {self.max}]")

    @property
    def width(self) -> float:
        return self.max - self.min

    def mean(self) -> float:
        return self.min + self.width * self.a / (self.a + self.b)

    def var(self) -> float:
        s = self.a + self.b
        return self.width**2 * self.a * self.b / (s * s * (s + 1.0))

    def logpdf(self, x):
        """Log density; ``-inf`` outside [min, max]."""
        x = np.asarray(x, dtype=float)
        t = (x - self.min) / self.width
        inside = (t >= 0.0) & (t <= 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (
                special.xlogy(self.a - 1.0, t)
                + special.xlog1py(self.b - 1.0, -t)
                - special.betaln(self.a, self.b)
                - math.log(self.width)
            )
        out = np.where(inside, val, -np.inf)
        return out[()] if out.ndim == 0 else out

    def cdf(self, x):
        t = np.clip((np.asarray(x, dtype=float) - self.min) / self.width, 0.0, 1.0)
        return special.betainc(self.a, self.b, t)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "min": self.min, "max": self.max}

    @classmethod
    def from_dict(cls, d: dict) -> "ShiftedBeta":
        return cls(float(d["a"]), float(d["b"]), float(d["min"]), float(d["max"]))


@dataclass(frozen=True)
class InverseGamma:
    """Inverse-gamma with (shape, rate); see module docstring."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise DomainError(
                f"InverseGamma needs shape > 0 and rate > 0, got ({self.shape}, {self.rate})"
            )

    def logpdf(self, x):
        return inverse_gamma_log_density(x, self.shape, self.rate)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return special.gammaincc(self.shape, self.rate / x)


def rng_stream(seed: int, *stream_id: int) -> np.random.Generator:
    """Independent generator for ``(seed, stream_id...)``.

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys, so
    distinct ids give statistically independent sequences and the same ids
    always reproduce the same draws.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream_id))
    return np.random.Generator(np.random.PCG64(ss))


def _check_positive(**kwargs):
    for name, v in kwargs.items():
        if not np.all(np.asarray(v) > 0):
            raise DomainError(f"{name} must be positive, got {v}")


def sample_normal(mean, variance, rng: np.random.Generator, size=None):
    _check_positive(variance=variance)
    return rng.normal(mean, np.sqrt(variance), size=size)


def sample_gamma(shape, rate, rng: np.random.Generator, size=None):
    _check_positive(shape=shape, rate=rate)
    return rng.gamma(shape, 1.0 / np.asarray(rate, dtype=float), size=size)


def sample_inverse_gamma(shape, rate, rng: np.random.Generator, size=None):
    """Draw from InverseGamma(shape, rate) as ``rate / Gamma(shape, 1)``."""
    _check_positive(shape=shape, rate=rate)
    return np.asarray(rate, dtype=float) / rng.standard_gamma(shape, size=size)


def sample_beta(a, b, rng: np.random.Generator, size=None):
    _check_positive(a=a, b=b)
    return rng.beta(a, b, size=size)


def sample_shifted_beta(prior: ShiftedBeta, rng: np.random.Generator, size=None):
    return prior.min + prior.width * rng.beta(prior.a, prior.b, size=size)


def sample_bernoulli(p, rng: np.random.Generator, size=None):
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise DomainError(f"Bernoulli probability outside [0, 1]: {p}")
    u = rng.random(size=size if size is not None else p.shape)
    return (u < p).astype(np.int8)


def normal_log_density(x, mean, variance):
    _check_positive(variance=variance)
    x = np.asarray(x, dtype=float)
    r = x - mean
    return -0.5 * (_LOG_2PI + np.log(variance)) - 0.5 * r * r / variance


def inverse_gamma_log_density(x, shape, rate):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = shape * math.log(rate) - special.gammaln(shape) - (shape + 1.0) * np.log(x) - rate / x
    return np.where(x > 0, val, -np.inf)


def beta_moment_match(mean: float, variance: float, min: float, max: float) -> ShiftedBeta:
    """Shifted Beta on [min, max] with the given mean and variance.

    Raises
    ------
    DomainError
        If the moments are infeasible, i.e. unless ``min < mean < max`` and
        ``0 < variance < (mean - min) * (max - mean)``.
    """
    if not min < max:
        raise DomainError(f"support requires min < max, got [{min}, {max}]")
    if not min < mean < max:
        raise DomainError(f"mean {mean} must lie strictly inside ({min}, {max})")
    bound = (mean - min) * (max - mean)
    if not 0 < variance < bound:
        raise DomainError(
            f"variance {variance} infeasible: need 0 < variance < (mean-min)*(max-mean) = {bound}"
        )
    w = max - min
    m = (mean - min) / w
    v = variance / (w * w)
    k = m * (1.0 - m) / v - 1.0
    return ShiftedBeta(m * k, (1.0 - m) * k, min, max)
