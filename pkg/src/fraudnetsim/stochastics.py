"""Seeded random streams, scalar distributions and bivariate copulas.

Every random draw in the engine goes through a :class:`RandomStream`.  Streams
are addressed by a path of ``(kind, index)`` labels below one master seed, so
the value drawn for an entity depends only on the seed and its own path, never
on the order in which other entities were generated.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import expm1, log1p

from .errors import ParameterError

__all__ = [
    "RandomStream",
    "Normal",
    "Uniform",
    "Poisson",
    "Gamma",
    "Exponential",
    "Bernoulli",
    "Categorical",
    "CopulaSpec",
    "sample_scalar",
    "sample_copula_pair",
    "copula_conditional_inverse",
    "couple_feature",
    "kendall_tau",
]


def _label_key(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


class RandomStream:
    """Deterministic random stream addressed by ``(master_seed, path)``.

    Two streams with the same seed and path produce the same draws.  Children
    are derived through :class:`numpy.random.SeedSequence` spawn keys, which
    yields statistically independent generators for distinct paths.
    """

    def __init__(self, master_seed: int, path: Sequence = ()):
        if not 0 <= int(master_seed) < 2**64:
            raise ParameterError("master_seed must be a 64-bit unsigned integer")
        self.master_seed = int(master_seed)
        self.path = tuple(path)
        key = []
        for kind, index in self.path:
            key.extend((_label_key(kind), _label_key(index)))
        seq = np.random.SeedSequence(self.master_seed, spawn_key=tuple(key))
        self.rng = np.random.Generator(np.random.PCG64(seq))

    def child(self, kind, index=0) -> "RandomStream":
        return RandomStream(self.master_seed, self.path + ((kind, index),))

    def __repr__(self):
        return f"RandomStream(master_seed={self.master_seed}, path={self.path!r})"


# -- scalar distributions ---------------------------------------------------


def _check(cond, message):
    if not np.all(cond):
        raise ParameterError(message)


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    def __post_init__(self):
        _check(np.asarray(self.sd) > 0, "Normal: sd must be > 0")

    def sample(self, stream, size=None):
        return stream.rng.normal(self.mean, self.sd, size)

    def ppf(self, q):
        return stats.norm.ppf(q, loc=self.mean, scale=self.sd)


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def __post_init__(self):
        _check(np.asarray(self.high) >= np.asarray(self.low), "Uniform: high must be >= low")

    def sample(self, stream, size=None):
        return stream.rng.uniform(self.low, self.high, size)

    def ppf(self, q):
        return self.low + (np.asarray(self.high) - self.low) * np.asarray(q)


@dataclass(frozen=True)
class Poisson:
    rate: float

    def __post_init__(self):
        _check(np.asarray(self.rate) >= 0, "Poisson: rate must be >= 0")

    def sample(self, stream, size=None):
        return stream.rng.poisson(self.rate, size)

    def ppf(self, q):
        return stats.poisson.ppf(q, self.rate)


@dataclass(frozen=True)
class Gamma:
    """Gamma with shape/rate parameterisation (mean ``shape / rate``)."""

    shape: float
    rate: float

    def __post_init__(self):
        _check(np.asarray(self.shape) > 0, "Gamma: shape must be > 0")
        _check(np.asarray(self.rate) > 0, "Gamma: rate must be > 0")

    def sample(self, stream, size=None):
        return stream.rng.gamma(self.shape, 1.0 / np.asarray(self.rate), size)

    def ppf(self, q):
        return stats.gamma.ppf(q, self.shape, scale=1.0 / np.asarray(self.rate))


@dataclass(frozen=True)
class Exponential:
    """Exponential with rate parameterisation (mean ``1 / rate``)."""

    rate: float

    def __post_init__(self):
        _check(np.asarray(self.rate) > 0, "Exponential: rate must be > 0")

    def sample(self, stream, size=None):
        return stream.rng.exponential(1.0 / np.asarray(self.rate), size)

    def ppf(self, q):
        return -log1p(-np.asarray(q)) / np.asarray(self.rate)


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self):
        p = np.asarray(self.p)
        _check((p >= 0) & (p <= 1), "Bernoulli: p must lie in [0, 1]")

    def sample(self, stream, size=None):
        u = stream.rng.random(size)
        return np.asarray(u < self.p).astype(np.int64)

    def ppf(self, q):
        return (np.asarray(q) > 1 - np.asarray(self.p)).astype(np.int64)


@dataclass(frozen=True)
class Categorical:
    """Weighted draw from a finite set of values (multinomial with one trial).

    ``normalize=True`` rescales weights that do not sum to one.  Inverse-CDF
    sampling resolves ties toward the lower index.
    """

    values: tuple
    probs: tuple
    normalize: bool = False

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        _check(len(self.values) == len(p) and len(p) > 0, "Categorical: values/probs length mismatch")
        _check((p >= 0) & (p <= 1), "Categorical: probabilities must lie in [0, 1]")
        if not self.normalize:
            _check(abs(p.sum() - 1.0) < 1e-9, "Categorical: probabilities must sum to 1")

    @property
    def weights(self):
        p = np.asarray(self.probs, dtype=float)
        return p / p.sum()

    def ppf(self, q):
        cdf = np.cumsum(self.weights)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, np.asarray(q), side="left")
        return np.asarray(self.values)[np.minimum(idx, len(cdf) - 1)]

    def sample(self, stream, size=None):
        return self.ppf(stream.rng.random(size))


def sample_scalar(dist, stream: RandomStream):
    """Draw one value from ``dist``."""
    return dist.sample(stream)


# -- copulas -----------------------------------------------------------------


@dataclass(frozen=True)
class CopulaSpec:
    family: str
    theta: float

    def __post_init__(self):
        fam = self.family.upper()
        object.__setattr__(self, "family", fam)
        if fam == "AMH":
            if not -1 <= self.theta < 1:
                raise ParameterError("AMH copula requires theta in [-1, 1)")
        elif fam == "FRANK":
            if not np.isfinite(self.theta) or self.theta == 0:
                raise ParameterError("Frank copula requires finite, nonzero theta")
        else:
            raise ParameterError(f"unknown copula family {self.family!r}")


def _frank_inverse(u, w, theta):
    # closed-form inverse of dC(u, v)/du = w
    num = w * expm1(-theta)
    den = w + (1.0 - w) * np.exp(-theta * u)
    return -log1p(num / den) / theta


def _amh_conditional(u, v, theta):
    d = 1.0 - theta * (1.0 - u) * (1.0 - v)
    return v * (1.0 - theta * (1.0 - v)) / (d * d)


def _amh_inverse(u, w, theta, tol=1e-10):
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        below = _amh_conditional(u, mid, theta) < w
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def copula_conditional_inverse(spec: CopulaSpec, u, w):
    """Solve ``P(V <= v | U = u) = w`` for ``v``."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    u, w = np.broadcast_arrays(u, w)
    if spec.family == "FRANK":
        if abs(spec.theta) < 1e-8:
            return w.copy()
        v = _frank_inverse(u, w, spec.theta)
    else:
        if spec.theta == 0:
            return w.copy()
        v = _amh_inverse(u, w, spec.theta)
    return np.clip(v, np.finfo(float).tiny, 1.0 - np.finfo(float).eps)


def sample_copula_pair(spec: CopulaSpec, stream: RandomStream, size=None):
    """Draw ``(u, v)`` from the copula by conditional inversion."""
    u = stream.rng.random(size)
    w = stream.rng.random(size)
    return u, copula_conditional_inverse(spec, u, w)


def couple_feature(existing_values, target_dist, spec: CopulaSpec, stream: RandomStream):
    """Generate a new feature whose copula with ``existing_values`` is ``spec``.

    The existing feature is mapped to pseudo-observations through its ranks,
    a partner uniform is drawn conditionally on each, and the target marginal
    is inverted.  ``target_dist`` may carry per-row parameters.
    """
    x = np.asarray(existing_values, dtype=float)
    if x.size == 0:
        raise ParameterError("couple_feature needs at least one existing value")
    u = stats.rankdata(x) / (x.size + 1.0)
    w = stream.rng.random(x.size)
    v = copula_conditional_inverse(spec, u, w)
    return target_dist.ppf(v)


def kendall_tau(spec: CopulaSpec) -> float:
    """Closed-form Kendall's tau for the copula."""
    th = spec.theta
    if spec.family == "AMH":
        if th == 0:
            return 0.0
        return 1.0 - 2.0 * (th + (1.0 - th) ** 2 * np.log1p(-th)) / (3.0 * th**2)
    from scipy.integrate import quad

    debye1 = quad(lambda t: t / np.expm1(t) if t != 0 else 1.0, 0.0, th)[0] / th
    return 1.0 - 4.0 / th * (1.0 - debye1)
