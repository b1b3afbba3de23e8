"""Exact integer moments by lumping configurations into pattern histograms.

For ``m`` replicas the Gaussian disorder integrates out exactly:

    E exp(sum_l H_t(sigma^l)) = exp(N [ m/2 (t xi(1) + (1-t) xi'(q))
                                      + sum_{l<l'} (t xi(R_ll') + (1-t) xi'(q) R_ll') ]),

so a moment only depends on the per-site sign columns through their counts.
Flipping every replica at one site leaves all overlaps unchanged, so by
default the 2^m sign columns are paired with their negatives and the field is
summed out per pair (``log 2 ch(h c)`` with ``c`` the column sum).  That
lumps ``multichoose(2^(m-1), N)`` histograms instead of ``multichoose(2^m, N)``.
``reduce_gauge=False`` keeps all 2^m columns (used to cross-check).

Overlap targets ``u`` are snapped to the feasible grid ``k/N`` with
``k = N mod 2``; ties go to the smaller ``|k|``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import comb, gammaln, logsumexp

from .core import ModelParams
from .errors import BudgetExceeded, InfeasibleConstraint

MAX_HISTOGRAMS = 20_000_000      # histograms actually held in memory
MAX_FULL_HISTOGRAMS = 10**9      # cap on multichoose(2^m, N), the unreduced count
MAX_REPLICAS = 4
# size limits of the tilted-overlap enumeration, by number of replicas
TILTED_N_MAX = {2: 400, 3: 40, 4: 16}


def multichoose(k: int, N: int) -> int:
    """Number of ways to put ``N`` sites into ``k`` classes."""
    return int(comb(N + k - 1, k - 1, exact=True))


def compositions(N: int, K: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``K`` summing to ``N`` (lexicographic in bar positions)."""
    if K == 1:
        return np.array([[N]], dtype=np.int64)
    total = N + K - 1
    count = multichoose(K, N)
    bars = np.fromiter(itertools.chain.from_iterable(itertools.combinations(range(total), K - 1)),
                       dtype=np.int64, count=count * (K - 1)).reshape(count, K - 1)
    edges = np.hstack([np.full((count, 1), -1), bars, np.full((count, 1), total)])
    return np.diff(edges, axis=1) - 1


@dataclass(frozen=True, eq=False)
class PatternHistogram:
    """Every histogram of ``N`` sites over the sign-column classes of ``n_replicas`` replicas.

    ``patterns`` is ``(K, m)``; ``counts`` is ``(H, K)``.  With
    ``gauge_reduced`` each class stands for a column and its negative.
    """

    n_replicas: int
    N: int
    patterns: np.ndarray
    counts: np.ndarray
    gauge_reduced: bool

    @property
    def pairs(self):
        m = self.n_replicas
        return [(i, j) for i in range(m) for j in range(i + 1, m)]

    @property
    def overlap_counts(self) -> np.ndarray:
        """``N R_{ll'}`` as integers, shape ``(H, n_pairs)`` in pair order."""
        if not self.pairs:
            return np.zeros((self.counts.shape[0], 0), dtype=np.int64)
        prod = np.stack([self.patterns[:, i] * self.patterns[:, j] for i, j in self.pairs], axis=1)
        return self.counts @ prod.astype(np.int64)

    @property
    def overlaps(self) -> np.ndarray:
        return self.overlap_counts / self.N

    def as_mapping(self, i: int) -> dict:
        """Histogram ``i`` as ``{pattern: count}`` over nonzero classes."""
        return {tuple(int(v) for v in self.patterns[k]): int(c)
                for k, c in enumerate(self.counts[i]) if c}

    def log_multiplicity(self, h: float) -> np.ndarray:
        """log of (multinomial coefficient x field factor) per histogram."""
        c = self.patterns.sum(axis=1).astype(float)
        if self.gauge_reduced:
            field = np.logaddexp(h * c, -h * c)
        else:
            field = h * c
        lmult = gammaln(self.N + 1) - np.sum(gammaln(self.counts + 1), axis=1)
        return lmult + self.counts @ field


def pattern_histograms(N: int, m: int, *, reduce_gauge: bool = True,
                       budget: int = MAX_HISTOGRAMS) -> PatternHistogram:
    if N < 1 or not 1 <= m <= MAX_REPLICAS:
        raise ValueError(f"need N >= 1 and 1 <= m <= {MAX_REPLICAS}")
    if multichoose(2 ** m, N) > MAX_FULL_HISTOGRAMS:
        raise BudgetExceeded(f"multichoose(2^{m}, {N}) exceeds {MAX_FULL_HISTOGRAMS}")
    patterns = np.array(list(itertools.product((1, -1), repeat=m)), dtype=np.int64)
    if reduce_gauge:
        patterns = patterns[patterns[:, 0] == 1]
    K = patterns.shape[0]
    count = multichoose(K, N)
    if count > budget:
        raise BudgetExceeded(f"{count} histograms for N={N}, m={m} exceeds the budget {budget}")
    return PatternHistogram(m, N, patterns, compositions(N, K), reduce_gauge)


def _log_weights(hist: PatternHistogram, params: ModelParams, t: float, q: float) -> np.ndarray:
    mix = params.mixture
    m, N = hist.n_replicas, hist.N
    xq = mix.xi_prime(q)
    diag = 0.5 * m * (t * mix.xi(1.0) + (1.0 - t) * xq)
    R = hist.overlaps
    pair_part = np.sum(t * mix.xi(R) + (1.0 - t) * xq * R, axis=1) if R.shape[1] else 0.0
    return hist.log_multiplicity(params.h) + N * (diag + pair_part)


def log_moment_exact(N: int, m: int, params: ModelParams, t: float = 1.0, q: float = 0.0, *,
                     reduce_gauge: bool = True, budget: int = MAX_HISTOGRAMS) -> float:
    """``log E Z_t^m`` exactly."""
    hist = pattern_histograms(N, m, reduce_gauge=reduce_gauge, budget=budget)
    return float(logsumexp(_log_weights(hist, params, t, q)))


def annealed_moment_exact(N: int, m: int, params: ModelParams, t: float = 1.0, q: float = 0.0, *,
                          reduce_gauge: bool = True, budget: int = MAX_HISTOGRAMS) -> float:
    """``(1/(N m)) log E Z_t^m``; at ``t = 1`` this is the finite-N moment of ``Z_N``."""
    return log_moment_exact(N, m, params, t, q, reduce_gauge=reduce_gauge, budget=budget) / (N * m)


def snap_overlap(u: float, N: int) -> int:
    """Nearest ``k`` with ``k = N mod 2`` and ``|k| <= N``; ties to the smaller ``|k|``."""
    if not -1.0 <= u <= 1.0:
        raise ValueError("overlap must lie in [-1, 1]")
    x = u * N
    lo = math.floor(x)
    cands = [k for k in (lo - 1, lo, lo + 1, lo + 2) if (k - N) % 2 == 0 and abs(k) <= N]
    return min(cands, key=lambda k: (abs(k - x), abs(k)))


def _constraint_mask(hist: PatternHistogram, constraints: dict) -> np.ndarray:
    oc = hist.overlap_counts
    index = {pair: i for i, pair in enumerate(hist.pairs)}
    mask = np.ones(oc.shape[0], dtype=bool)
    for (l, l2), u in constraints.items():
        key = (min(l, l2), max(l, l2))
        if key not in index:
            raise ValueError(f"no replica pair {key} among {hist.n_replicas} replicas")
        mask &= oc[:, index[key]] == snap_overlap(u, hist.N)
    return mask


def constrained_moment_exact(N: int, m: int, constraints: dict, params: ModelParams, t: float = 1.0,
                             q: float = 0.0, *, reduce_gauge: bool = True, budget: int = MAX_HISTOGRAMS) -> float:
    """``log E[sum over m-tuples with the listed overlaps fixed]``.

    ``constraints`` maps replica pairs ``(l, l')`` (0-based) to target overlaps;
    e.g. ``{(0, 1): u}`` gives ``log E Z^(m-2) Z_2(u)``.
    """
    hist = pattern_histograms(N, m, reduce_gauge=reduce_gauge, budget=budget)
    mask = _constraint_mask(hist, constraints)
    if not mask.any():
        raise InfeasibleConstraint(f"no histogram satisfies {constraints} at N={N}")
    return float(logsumexp(_log_weights(hist, params, t, q)[mask]))


@dataclass
class TiltedOverlapDistribution:
    """Law of ``R_12`` under the moment-tilted Gibbs measure, on ``k = -N..N``."""

    N: int
    a: int
    t: float
    q: float
    k: np.ndarray
    log_probs: np.ndarray

    @property
    def u(self) -> np.ndarray:
        return self.k / self.N

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def log_mass(self, mask) -> float:
        return float(logsumexp(self.log_probs[mask])) if np.any(mask) else -math.inf

    def tail_log_mass(self, threshold: float) -> float:
        """log P(|R_12| > threshold)."""
        return self.log_mass(np.abs(self.k) > threshold * self.N)

    def outside_log_mass(self, center: float, radius: float) -> float:
        return self.log_mass(np.abs(self.k / self.N - center) > radius)


def _tilted_weights(N, params, t, q, budget):
    if not params.a_is_integer:
        raise ValueError("exact tilted laws need integer a (use the disorder Monte Carlo otherwise)")
    a = int(params.a)
    if a < 2:
        raise ValueError("the overlap R_12 needs a >= 2 replicas")
    n_max = TILTED_N_MAX.get(a)
    if n_max is not None and N > n_max and budget == MAX_HISTOGRAMS:
        raise BudgetExceeded(f"N={N} exceeds the limit {n_max} for a={a}")
    hist = pattern_histograms(N, a, budget=budget)
    lw = _log_weights(hist, params, t, q)
    return hist, lw - logsumexp(lw)


def tilted_overlap_distribution(N: int, params: ModelParams, t: float = 1.0, q: float = 0.0, *,
                                budget: int = MAX_HISTOGRAMS) -> TiltedOverlapDistribution:
    """``E'<I(R_12 = k/N)>`` for every ``k``; infeasible ``k`` get probability 0."""
    hist, lw = _tilted_weights(N, params, t, q, budget)
    k12 = hist.overlap_counts[:, 0]
    ks = np.arange(-N, N + 1)
    out = np.full(ks.size, -np.inf)
    order = np.argsort(k12, kind="stable")
    k_sorted, lw_sorted = k12[order], lw[order]
    bounds = np.flatnonzero(np.diff(k_sorted)) + 1
    for block_k, block_lw in zip(np.split(k_sorted, bounds), np.split(lw_sorted, bounds)):
        out[block_k[0] + N] = logsumexp(block_lw)
    return TiltedOverlapDistribution(N, int(params.a), float(t), float(q), ks, out)


def tilted_delta_expectation(N: int, t: float, params: ModelParams, q0: float, *,
                             budget: int = MAX_HISTOGRAMS) -> float:
    """``E'<Delta(R_12, q0)>`` along the interpolation with parameter ``q0``."""
    hist, lw = _tilted_weights(N, params, t, q0, budget)
    d = params.mixture.delta(hist.overlaps[:, 0], q0)
    return float(np.dot(np.exp(lw), d))


def delta_moments(N: int, t: float, params: ModelParams, q0: float, *, budget: int = MAX_HISTOGRAMS) -> dict:
    """Tilted moments of Delta for replica pairs sharing 2, 1 and 0 indices.

    Returns ``m1 = E'<D12^2>``, ``m2 = E'<D12 D13>``, ``m3 = E'<D12 D34>``,
    ``m4 = (E'<D12>)^2`` and ``mean = E'<D12>``; entries that need more
    replicas than ``a`` are ``nan``.  Also returns ``derivative``, the exact
    t-derivative of ``E'<D12>`` (``N`` times the covariance of ``D12`` with
    the sum of ``D`` over all replica pairs).
    """
    hist, lw = _tilted_weights(N, params, t, q0, budget)
    w = np.exp(lw)
    D = params.mixture.delta(hist.overlaps, q0)           # (H, n_pairs)
    pairs = hist.pairs
    col = {pair: i for i, pair in enumerate(pairs)}
    d12 = D[:, col[(0, 1)]]
    mean = float(np.dot(w, d12))
    out = {"mean": mean, "m1": float(np.dot(w, d12 * d12)), "m4": mean * mean}
    out["m2"] = float(np.dot(w, d12 * D[:, col[(0, 2)]])) if (0, 2) in col else math.nan
    out["m3"] = float(np.dot(w, d12 * D[:, col[(2, 3)]])) if (2, 3) in col else math.nan
    total = D.sum(axis=1)
    out["derivative"] = N * float(np.dot(w, d12 * total) - mean * np.dot(w, total))
    return out


def holder_chain_check(N: int, params: ModelParams, t: float = 1.0, q0: float = 0.0, *,
                       budget: int = MAX_HISTOGRAMS):
    """``(m1, m2, m3, m4)`` for ``a = 4``; Hoelder orders them ``m1 >= m2 >= m3 >= m4``."""
    if params.a != 4:
        raise ValueError("the four-term chain needs a = 4")
    mom = delta_moments(N, t, params, q0, budget=budget)
    return mom["m1"], mom["m2"], mom["m3"], mom["m4"]


def derivative_coefficients(a: int):
    """Weights of m1..m4 in the t-derivative; they sum to zero."""
    return (1.0, 2.0 * (a - 2), 0.5 * (a - 2) * (a - 3), -0.5 * a * (a - 1))


def rate_function(N_list, u: float, params: ModelParams, t: float = 1.0, q: float = 0.0):
    """``-(1/N) log E'<I(R_12 = k_N/N)>`` for each ``N``, ``k_N`` the snapped target.

    Returns rows ``(N, k_N, rate)`` plus a ``stabilizing`` flag on the last row
    comparing the last two rates (relative change below 20%).
    """
    rows = []
    for N in N_list:
        dist = tilted_overlap_distribution(int(N), params, t, q)
        k = snap_overlap(u, int(N))
        rows.append({"N": int(N), "k": k, "u_N": k / N, "rate": -float(dist.log_probs[k + N]) / N})
    if len(rows) >= 2:
        r1, r2 = rows[-2]["rate"], rows[-1]["rate"]
        rows[-1]["stabilizing"] = bool(abs(r2 - r1) <= 0.2 * abs(r2))
    return rows


def binomial_rate(u: float) -> float:
    """Rate of ``R_12`` under the uniform product measure."""
    out = 0.0
    for x in (1.0 + u, 1.0 - u):
        if x > 0:
            out += 0.5 * x * math.log(x)
    return out
