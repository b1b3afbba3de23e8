"""Covariance function of the pure p-spin model and the derived scalars.

The Hamiltonian has covariance ``N * xi(R)`` with ``xi(x) = beta**2 |x|**p``.
Everything else in the package is written in terms of

* ``xi_prime(x) = p beta**2 |x|**(p-1) sgn(x)``
* ``theta(x) = x xi'(x) - xi(x) = beta**2 (p-1) |x|**p``
* ``delta(u, q) = xi(u) - u xi'(q) + theta(q)``, which is nonnegative by convexity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


def _abs_pow(x, power):
    # |x|**power with the x=0 branch pinned to 0 (no log(0) for fractional powers)
    x = np.abs(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    nz = x > 0
    out[nz] = np.exp(power * np.log(x[nz]))
    return out


def _ret(value, like):
    return float(value) if np.ndim(like) == 0 else value


@dataclass(frozen=True)
class MixtureSpec:
    """Pure p-spin mixture ``xi(x) = beta**2 |x|**p``."""

    p: int
    beta: float

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 2:
            raise ConfigError(f"p must be an integer >= 2, got {self.p!r}")
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ConfigError(f"beta must be positive and finite, got {self.beta!r}")
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def beta2(self) -> float:
        return self.beta * self.beta

    def xi(self, x):
        if self.p % 2 == 0:
            # even p: exact integer power of |x|, bitwise even in x
            return _ret(self.beta2 * np.abs(np.asarray(x, dtype=float)) ** self.p, x)
        return _ret(self.beta2 * _abs_pow(x, self.p), x)

    def xi_prime(self, x):
        xa = np.asarray(x, dtype=float)
        return _ret(self.p * self.beta2 * _abs_pow(xa, self.p - 1) * np.sign(xa), x)

    def xi_second(self, x):
        return _ret(self.p * (self.p - 1) * self.beta2 * _abs_pow(x, self.p - 2), x)

    def theta(self, x):
        return _ret(self.beta2 * (self.p - 1) * _abs_pow(x, self.p), x)

    def delta(self, u, q):
        u = np.asarray(u, dtype=float)
        q = np.asarray(q, dtype=float)
        val = self.xi(u) - u * self.xi_prime(q) + self.theta(q)
        return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class ModelParams:
    """Mixture plus external field ``h`` and moment exponent ``a >= 1``.

    ``n`` is the replica count with ``n <= a < n + 1``.
    """

    mixture: MixtureSpec
    h: float = 0.0
    a: float = 1.0
    n: int = field(init=False)

    def __post_init__(self):
        if not math.isfinite(self.h):
            raise ConfigError(f"h must be finite, got {self.h!r}")
        if not (self.a >= 1 and math.isfinite(self.a)):
            raise ConfigError(f"a must be >= 1 (the 0 <= a < 1 regime is not covered), got {self.a!r}")
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "n", int(math.floor(self.a)))

    @classmethod
    def create(cls, p=2, beta=1.0, h=0.0, a=1.0) -> "ModelParams":
        return cls(MixtureSpec(p, beta), h=h, a=a)

    def replace(self, **changes) -> "ModelParams":
        kw = dict(p=self.mixture.p, beta=self.mixture.beta, h=self.h, a=self.a)
        kw.update(changes)
        return ModelParams.create(**kw)

    @property
    def p(self) -> int:
        return self.mixture.p

    @property
    def beta(self) -> float:
        return self.mixture.beta

    @property
    def a_is_integer(self) -> bool:
        return float(self.a).is_integer()


def xi(x, mixture: MixtureSpec):
    return mixture.xi(x)


def xi_prime(x, mixture: MixtureSpec):
    return mixture.xi_prime(x)


def theta(x, mixture: MixtureSpec):
    return mixture.theta(x)


def delta(u, q, mixture: MixtureSpec):
    """``xi(u) - u xi'(q) + theta(q)``; zero on the diagonal ``u == q``."""
    return mixture.delta(u, q)
