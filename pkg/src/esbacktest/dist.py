"""Distributions and reproducible random streams.

Normal, Student-t, and skewed Student-t laws with pdf/cdf/quantile/sampling,
plus counter-based random streams so Monte Carlo draws are reproducible and
independent of worker scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.random import Generator, Philox
from scipy import special, stats

__all__ = [
    "RngStream",
    "Normal",
    "StudentT",
    "SkewT",
    "DistSpec",
    "dist_to_json",
    "dist_from_json",
    "preset",
    "PRESETS",
]

_UINT64 = (1 << 64) - 1
_OPEN_UNIT = float(1 << 53)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by (seed, stream_id).

    The same (seed, stream_id) pair reproduces the same draw sequence on any
    platform and under any worker count; distinct stream_ids are independent.
    Entry points that fan out work derive one stream per task from their seed.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> Generator:
        """Fresh generator positioned at the start of the stream."""
        key = (self.seed & _UINT64) | ((self.stream_id & _UINT64) << 64)
        return Generator(Philox(key=key))


def _open_uniform(gen: Generator, n: int) -> np.ndarray:
    """Uniform draws on the open interval (0, 1), safe for quantile transforms."""
    return gen.integers(1, 1 << 53, size=n).astype(np.float64) / _OPEN_UNIT


@dataclass(frozen=True)
class Normal:
    """Normal law with mean ``mu`` and standard deviation ``sigma``."""

    mu: float = 0.0
    sigma: float = 1.0

    kind = "normal"

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def pdf(self, x):
        return stats.norm.pdf(x, loc=self.mu, scale=self.sigma)

    def logpdf(self, x):
        return stats.norm.logpdf(x, loc=self.mu, scale=self.sigma)

    def cdf(self, x):
        return stats.norm.cdf(x, loc=self.mu, scale=self.sigma)

    def quantile(self, p):
        _check_prob(p)
        return stats.norm.ppf(p, loc=self.mu, scale=self.sigma)

    def sample(self, n: int, stream: RngStream) -> np.ndarray:
        _check_count(n)
        gen = stream.generator()
        return self.mu + self.sigma * gen.standard_normal(n)

    def mean(self) -> float:
        return self.mu

    def variance(self) -> float:
        return self.sigma**2


@dataclass(frozen=True)
class StudentT:
    """Student-t law with ``nu`` degrees of freedom, shifted and scaled.

    ``nu`` must exceed 2 so the variance (and the tail expectations used for
    shortfall work) stay finite.
    """

    nu: float
    loc: float = 0.0
    scale: float = 1.0

    kind = "student_t"

    def __post_init__(self) -> None:
        if not self.nu > 2:
            raise ValueError(f"nu must exceed 2, got {self.nu}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def pdf(self, x):
        return stats.t.pdf(x, self.nu, loc=self.loc, scale=self.scale)

    def logpdf(self, x):
        return stats.t.logpdf(x, self.nu, loc=self.loc, scale=self.scale)

    def cdf(self, x):
        return stats.t.cdf(x, self.nu, loc=self.loc, scale=self.scale)

    def quantile(self, p):
        _check_prob(p)
        return stats.t.ppf(p, self.nu, loc=self.loc, scale=self.scale)

    def sample(self, n: int, stream: RngStream) -> np.ndarray:
        _check_count(n)
        gen = stream.generator()
        return self.loc + self.scale * gen.standard_t(self.nu, n)

    def mean(self) -> float:
        return self.loc

    def variance(self) -> float:
        return self.scale**2 * self.nu / (self.nu - 2.0)


def _abs_t_mean(nu: float) -> float:
    """E|T| for a standard Student-t with nu > 1 degrees of freedom."""
    return (
        2.0
        * math.sqrt(nu)
        * math.exp(special.gammaln((nu + 1.0) / 2.0) - special.gammaln(nu / 2.0))
        / (math.sqrt(math.pi) * (nu - 1.0))
    )


@dataclass(frozen=True)
class SkewT:
    """Skewed Student-t built by one-parameter two-piece rescaling of the t law.

    A standardised variate z has density

        f(z) = 2 / (xi + 1/xi) * [ t_nu(z / xi)  if z >= 0
                                   t_nu(z * xi)  if z <  0 ]

    so ``xi = 1`` recovers the symmetric Student-t, ``xi > 1`` skews right and
    ``xi < 1`` skews left. ``loc`` and ``scale`` shift and scale the result.
    """

    nu: float
    xi: float
    loc: float = 0.0
    scale: float = 1.0

    kind = "skew_t"

    def __post_init__(self) -> None:
        if not self.nu > 2:
            raise ValueError(f"nu must exceed 2, got {self.nu}")
        if not self.xi > 0:
            raise ValueError(f"xi must be positive, got {self.xi}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.loc) / self.scale
        norm = 2.0 / (self.xi + 1.0 / self.xi)
        core = np.where(
            z >= 0,
            stats.t.pdf(z / self.xi, self.nu),
            stats.t.pdf(z * self.xi, self.nu),
        )
        out = norm * core / self.scale
        return out if out.ndim else float(out)

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.loc) / self.scale
        core = np.where(
            z >= 0,
            stats.t.logpdf(z / self.xi, self.nu),
            stats.t.logpdf(z * self.xi, self.nu),
        )
        out = math.log(2.0 / (self.xi + 1.0 / self.xi)) - math.log(self.scale) + core
        return out if out.ndim else float(out)

    def cdf(self, x):
        z = (np.asarray(x, dtype=float) - self.loc) / self.scale
        w = self.xi**2
        lower = 2.0 / (1.0 + w) * stats.t.cdf(z * self.xi, self.nu)
        upper = 1.0 / (1.0 + w) + 2.0 * w / (1.0 + w) * (
            stats.t.cdf(z / self.xi, self.nu) - 0.5
        )
        out = np.where(z < 0, lower, upper)
        return out if out.ndim else float(out)

    def quantile(self, p):
        _check_prob(p)
        p = np.asarray(p, dtype=float)
        w = self.xi**2
        p0 = 1.0 / (1.0 + w)  # mass below zero
        lower = stats.t.ppf(p * (1.0 + w) / 2.0, self.nu) / self.xi
        upper = self.xi * stats.t.ppf((p - p0) * (1.0 + w) / (2.0 * w) + 0.5, self.nu)
        z = np.where(p < p0, lower, upper)
        out = self.loc + self.scale * z
        return out if out.ndim else float(out)

    def sample(self, n: int, stream: RngStream) -> np.ndarray:
        _check_count(n)
        gen = stream.generator()
        return np.asarray(self.quantile(_open_uniform(gen, n)))

    def mean(self) -> float:
        m1 = _abs_t_mean(self.nu)
        return self.loc + self.scale * m1 * (self.xi - 1.0 / self.xi)

    def variance(self) -> float:
        m1 = _abs_t_mean(self.nu)
        m2 = self.nu / (self.nu - 2.0)
        ez = m1 * (self.xi - 1.0 / self.xi)
        ez2 = m2 * (self.xi**3 + self.xi**-3) / (self.xi + 1.0 / self.xi)
        return self.scale**2 * (ez2 - ez**2)


DistSpec = Union[Normal, StudentT, SkewT]

PRESETS = {
    "normal": Normal(0.0, 1.0),
    "t3": StudentT(3.0),
    "t5": StudentT(5.0),
    "t10": StudentT(10.0),
    "t15": StudentT(15.0),
}


def preset(name: str) -> DistSpec:
    """Look up a named reference distribution."""
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(
            f"unknown preset {name!r}; expected one of {sorted(PRESETS)}"
        ) from None


def dist_to_json(d: DistSpec) -> dict:
    """Serialize a distribution to a plain JSON-ready dict."""
    if isinstance(d, Normal):
        return {"kind": "normal", "mu": d.mu, "sigma": d.sigma}
    if isinstance(d, StudentT):
        return {"kind": "student_t", "nu": d.nu, "loc": d.loc, "scale": d.scale}
    if isinstance(d, SkewT):
        return {
            "kind": "skew_t",
            "nu": d.nu,
            "xi": d.xi,
            "loc": d.loc,
            "scale": d.scale,
        }
    raise ValueError(f"unsupported distribution {d!r}")


def dist_from_json(obj: dict) -> DistSpec:
    """Rebuild a distribution from its JSON dict form."""
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValueError("distribution JSON must be an object with a 'kind' field")
    kind = obj["kind"]
    params = {k: v for k, v in obj.items() if k != "kind"}
    try:
        if kind == "normal":
            return Normal(**params)
        if kind == "student_t":
            return StudentT(**params)
        if kind == "skew_t":
            return SkewT(**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {kind!r}: {exc}") from None
    raise ValueError(f"unknown distribution kind {kind!r}")


def _check_prob(p) -> None:
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("probability level must lie strictly inside (0, 1)")


def _check_count(n: int) -> None:
    if n < 1:
        raise ValueError(f"sample size must be at least 1, got {n}")
