"""Expectations of functions of Gaussian vectors.

All rules are Gauss-Hermite rules for the standard normal measure.  An
n-dimensional covariance is first factored as ``C = F F^T`` with ``F`` of
numerical rank ``r``; the expectation is then a tensor rule over ``r``
standard normals, so a rank-1 covariance costs one 1-D rule no matter how
large ``n`` is.  Ranks above 4 fall back to Monte Carlo.

Expectations of products of exponentials are carried in log-space.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp, roots_hermitenorm

from .errors import NotPSD

DEFAULT_ORDER = 64
MAX_ORDER = 512
ADAPT_RTOL = 1e-12
RANK_RTOL = 1e-10
NEG_RTOL = 1e-8
MAX_TENSOR_RANK = 4
# per-dimension order of the tensor rule, by effective rank
TENSOR_ORDER = {1: DEFAULT_ORDER, 2: 48, 3: 20, 4: 12}


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes and weights integrating against the standard normal density."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)


@functools.lru_cache(maxsize=None)
def hermite_rule(order: int) -> QuadratureRule:
    """Gauss-Hermite rule of ``order`` nodes for ``N(0, 1)``, weights summing to 1."""
    if int(order) != order or not 1 <= order <= MAX_ORDER:
        raise ValueError(f"quadrature order must be an integer in [1, {MAX_ORDER}], got {order!r}")
    order = int(order)
    if order == 1:
        nodes, weights = np.zeros(1), np.ones(1)
    else:
        nodes, weights = roots_hermitenorm(order)
        # the outermost weights of large rules underflow to 0; drop them
        keep = weights > 0
        nodes, weights = nodes[keep], weights[keep]
        weights = weights / weights.sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(order, nodes, weights)


def psd_factor(C, rank_rtol: float = RANK_RTOL, neg_rtol: float = NEG_RTOL):
    """Factor a symmetric PSD matrix as ``F F^T``.

    Returns ``(F, rank)`` with ``F`` of shape ``(dim, rank)``.  Eigenvalues
    below ``rank_rtol * max`` count as zero.  Raises :class:`NotPSD` if the
    smallest eigenvalue is below ``-neg_rtol * max``.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"covariance must be square, got shape {C.shape}")
    scale = float(np.max(np.abs(C))) if C.size else 0.0
    if np.max(np.abs(C - C.T), initial=0.0) > 1e-12 * max(scale, 1.0):
        raise NotPSD("covariance is not symmetric")
    C = 0.5 * (C + C.T)
    dim = C.shape[0]
    if scale == 0.0:
        return np.zeros((dim, 0)), 0
    evals, evecs = np.linalg.eigh(C)
    top = evals[-1]
    if top <= 0 or evals[0] < -neg_rtol * top:
        raise NotPSD(f"smallest eigenvalue {evals[0]:.3e} vs largest {top:.3e}")
    keep = evals > rank_rtol * top
    F = evecs[:, keep] * np.sqrt(evals[keep])
    return F, int(keep.sum())


def expect_1d(f, variance: float, rule: QuadratureRule | None = None, *,
              adaptive: bool = True, rtol: float = ADAPT_RTOL, max_order: int = MAX_ORDER) -> float:
    """``E f(sqrt(variance) x)``, ``x ~ N(0, 1)``.

    ``f`` must accept a 1-D array.  With ``adaptive`` the order is doubled from
    ``rule.order`` until the relative change drops below ``rtol``.
    """
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    if variance == 0:
        return float(np.asarray(f(np.zeros(1)))[0])
    rule = rule or hermite_rule(DEFAULT_ORDER)
    sigma = math.sqrt(variance)

    def at(r):
        return float(np.dot(r.weights, f(sigma * r.nodes)))

    value = at(rule)
    order = rule.order
    while adaptive and order * 2 <= max_order:
        order *= 2
        new = at(hermite_rule(order))
        done = abs(new - value) <= rtol * abs(new)
        value = new
        if done:
            break
    return value


def log_expect_1d(logf, variance: float, rule: QuadratureRule | None = None, *,
                  adaptive: bool = True, rtol: float = ADAPT_RTOL, max_order: int = MAX_ORDER) -> float:
    """``log E exp(logf(sqrt(variance) x))`` with a max-shifted sum."""
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    if variance == 0:
        return float(np.asarray(logf(np.zeros(1)))[0])
    rule = rule or hermite_rule(DEFAULT_ORDER)
    sigma = math.sqrt(variance)

    def at(r):
        return float(logsumexp(logf(sigma * r.nodes) + r.log_weights))

    value = at(rule)
    order = rule.order
    while adaptive and order * 2 <= max_order:
        order *= 2
        new = at(hermite_rule(order))
        done = abs(new - value) <= rtol
        value = new
        if done:
            break
    return value


def log_cosh(y):
    """``log ch(y)`` without overflow."""
    y = np.asarray(y, dtype=float)
    return np.logaddexp(y, -y) - math.log(2.0)


def _log_cosh_power_fixed(a, variance, h, rule):
    # Peel off floor(a) factors of ch with the shift identity
    #   E ch^a(s x + h) = 2^-k sum_j C(k,j) exp(m h + s^2 m^2 / 2) E ch^(a-k)(s x + h + m s^2),  m = 2j - k,
    # so the quadrature only sees a fractional power whose growth is at most e^{|y|}.
    k = int(math.floor(a)) if a >= 0 else 0
    frac = a - k
    sigma = math.sqrt(variance)
    m = 2.0 * np.arange(k + 1) - k
    j = np.arange(k + 1)
    log_coef = (gammaln(k + 1) - gammaln(j + 1) - gammaln(k - j + 1)
                - k * math.log(2.0) + m * h + 0.5 * variance * m * m)
    if frac == 0.0:
        return float(logsumexp(log_coef))
    y = sigma * rule.nodes[None, :] + (h + m * variance)[:, None]
    inner = logsumexp(frac * log_cosh(y) + rule.log_weights[None, :], axis=1)
    return float(logsumexp(log_coef + inner))


def log_expect_cosh_power(a: float, variance: float, h: float = 0.0, order: int = DEFAULT_ORDER, *,
                          adaptive: bool = True, rtol: float = ADAPT_RTOL,
                          max_order: int = MAX_ORDER) -> float:
    """``log E ch^a(z + h)`` for ``z ~ N(0, variance)``.

    Exact for integer ``a >= 0``; otherwise the fractional remainder is
    integrated with a Gauss-Hermite rule of ``order`` nodes (doubled until the
    log changes by less than ``rtol`` when ``adaptive``).
    """
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    if variance == 0:
        return float(a * log_cosh(h))
    value = _log_cosh_power_fixed(a, variance, h, hermite_rule(order))
    while adaptive and order * 2 <= max_order and not float(a).is_integer():
        order *= 2
        new = _log_cosh_power_fixed(a, variance, h, hermite_rule(order))
        done = abs(new - value) <= rtol
        value = new
        if done:
            break
    return value


@functools.lru_cache(maxsize=64)
def _tensor_rule(rank, order):
    rule = hermite_rule(order)
    if rank == 1:
        return rule.nodes[:, None], rule.log_weights
    grids = np.meshgrid(*([rule.nodes] * rank), indexing="ij")
    lw = np.meshgrid(*([rule.log_weights] * rank), indexing="ij")
    x = np.stack([g.ravel() for g in grids], axis=1)
    return x, np.sum([w.ravel() for w in lw], axis=0)


def gaussian_nodes(C, order: int | None = None):
    """Quadrature nodes for ``N(0, C)``.

    Returns ``(z, log_w)``; ``z`` has shape ``(M, dim)`` and ``exp(log_w)``
    sums to one.  Degenerate directions are dropped before tensorizing.
    """
    F, rank = psd_factor(C)
    dim = F.shape[0]
    if rank == 0:
        return np.zeros((1, dim)), np.zeros(1)
    if rank > MAX_TENSOR_RANK:
        raise ValueError(f"effective rank {rank} > {MAX_TENSOR_RANK}: use the Monte Carlo route")
    x, log_w = _tensor_rule(rank, order or TENSOR_ORDER[rank])
    return x @ F.T, log_w


def mc_expect_nd(f, C, n_samples: int, seed: int = 0, chunk: int = 65536):
    """Plain Monte Carlo ``E f(z)``; returns ``(mean, stderr)``.

    Chunk ``i`` draws from a Philox stream keyed by ``(seed, i)`` so the
    result does not depend on how chunks are scheduled.
    """
    F, rank = psd_factor(C)
    dim = F.shape[0]
    total, total_sq = 0.0, 0.0
    for i, start in enumerate(range(0, n_samples, chunk)):
        size = min(chunk, n_samples - start)
        rng = np.random.Generator(np.random.Philox(key=[seed, i]))
        x = rng.standard_normal((size, max(rank, 1)))[:, :rank]
        vals = np.asarray(f(x @ F.T if rank else np.zeros((size, dim))), dtype=float)
        total += vals.sum()
        total_sq += np.dot(vals, vals)
    mean = total / n_samples
    var = max(total_sq / n_samples - mean * mean, 0.0)
    return mean, math.sqrt(var / max(n_samples - 1, 1))


def expect_nd(f, C, order: int | None = None, *, n_mc: int = 1_000_000, seed: int = 0) -> float:
    """``E f(z)`` for ``z ~ N(0, C)``; ``f`` maps an ``(M, dim)`` array to ``(M,)``."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    _, rank = psd_factor(C)
    if rank > MAX_TENSOR_RANK:
        return mc_expect_nd(f, C, n_mc, seed)[0]
    if rank == 1 and order is None:
        # collapse to 1-D along the single direction and reuse the adaptive rule
        F, _ = psd_factor(C)
        return expect_1d(lambda x: f(np.outer(x, F[:, 0])), 1.0)
    z, log_w = gaussian_nodes(C, order)
    return float(np.dot(np.exp(log_w), f(z)))


def log_expect_nd(logf, C, order: int | None = None) -> float:
    """``log E exp(logf(z))`` for ``z ~ N(0, C)`` (tensor rule, rank <= 4)."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    F, rank = psd_factor(C)
    if rank == 1 and order is None:
        return log_expect_1d(lambda x: logf(np.outer(x, F[:, 0])), 1.0)
    z, log_w = gaussian_nodes(C, order)
    return float(logsumexp(logf(z) + log_w))


def enumerate_signs(n: int) -> np.ndarray:
    """All of ``{-1, +1}^n`` as a ``(2^n, n)`` float array (first coordinate slowest)."""
    return np.array(list(itertools.product((-1.0, 1.0), repeat=n))).reshape(-1, n)
