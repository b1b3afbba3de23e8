"""Monte Carlo over the Gaussian couplings with exact per-sample enumeration.

Each disorder sample draws the full non-symmetrized coupling tensor
``g[i1, ..., ip]`` from its own Philox stream keyed by ``(seed, index)`` and
enumerates all ``2^N`` energies

    H(sigma) = beta / N^((p-1)/2) * sum g[i1..ip] sigma_i1 ... sigma_ip.

Configurations are indexed by the integer whose bit ``i`` is set when
``sigma_i = -1``.  For ``p <= 3`` energies come from a Gray-code walk with
local fields; larger ``p`` uses direct tensor contraction (also the reference
for the walk).

The covariance of this Hamiltonian is ``N beta^2 R^p``, which for odd ``p``
differs from the even-power model used by the exact oracle whenever overlaps
are negative.  Cross-checks against the oracle should use even ``p``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit
from scipy.special import logsumexp

from .core import ModelParams
from .errors import BudgetExceeded
from .oracle import snap_overlap

N_MAX_GRAY = 20
N_MAX_DIRECT = 14
N_MAX_PAIRS = 16
ESS_MIN = 30.0
BIAS_RTOL = 0.1
CI_SIGMAS = 3.0


@dataclass
class DisorderSample:
    N: int
    p: int
    beta: float
    seed: int
    index: int
    g: np.ndarray
    energies: np.ndarray

    def log_partition(self, h: float = 0.0) -> float:
        return float(logsumexp(self.energies + h * magnetizations(self.N)))


@dataclass
class McEstimate:
    """A Monte Carlo estimate; ``ci`` is ``None`` when the sample is too degenerate to trust."""

    mean: float
    stderr: float
    n_samples: int
    estimator_kind: str
    ess: float = math.nan
    ci: tuple | None = None
    warnings: list = field(default_factory=list)

    def covers(self, truth: float, sigmas: float = CI_SIGMAS, atol: float = 1e-12) -> bool:
        return abs(self.mean - truth) <= sigmas * self.stderr + atol

    def as_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n_samples": self.n_samples,
                "estimator_kind": self.estimator_kind, "ess": self.ess,
                "ci": list(self.ci) if self.ci is not None else None, "warnings": list(self.warnings)}


@lru_cache(maxsize=None)
def _popcounts(N: int) -> np.ndarray:
    s = np.arange(1 << N, dtype=np.int64)
    out = np.zeros_like(s)
    for i in range(N):
        out += (s >> i) & 1
    out.setflags(write=False)
    return out


def magnetizations(N: int) -> np.ndarray:
    """``sum_i sigma_i`` for every configuration index."""
    return (N - 2 * _popcounts(N)).astype(float)


def spins(N: int, idx) -> np.ndarray:
    """Rows of +-1 spins for configuration indices ``idx``."""
    idx = np.asarray(idx, dtype=np.int64)
    bits = (idx[..., None] >> np.arange(N)) & 1
    return 1.0 - 2.0 * bits


def coupling_rng(seed: int, index: int) -> np.random.Generator:
    key = np.array([seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def draw_couplings(N: int, p: int, seed: int, index: int) -> np.ndarray:
    return coupling_rng(seed, index).standard_normal((N,) * p)


@njit(cache=True, nogil=True)
def _gray_p2(J, const, N):
    M = 1 << N
    out = np.empty(M)
    sigma = np.ones(N)
    f = np.zeros(N)
    for i in range(N):
        for j in range(N):
            f[i] += J[i, j]
    E = const
    for i in range(N):
        E += 0.5 * f[i]
    s = 0
    out[0] = E
    for k in range(1, M):
        i = 0
        while not (k >> i) & 1:
            i += 1
        E -= 2.0 * sigma[i] * f[i]
        sigma[i] = -sigma[i]
        for j in range(N):
            f[j] += 2.0 * sigma[i] * J[j, i]
        s ^= 1 << i
        out[s] = E
    return out


@njit(cache=True, nogil=True)
def _gray_p3(T, b, N):
    # H = (1/6) sum T_ijk s_i s_j s_k + b.s with T symmetric and zero on repeated indices
    M = 1 << N
    out = np.empty(M)
    sigma = np.ones(N)
    Mat = np.zeros((N, N))
    for i in range(N):
        for j in range(N):
            acc = 0.0
            for k in range(N):
                acc += T[i, j, k]
            Mat[i, j] = acc
    E = 0.0
    for i in range(N):
        E += b[i]
        for j in range(N):
            E += Mat[i, j] / 6.0
    s = 0
    out[0] = E
    for k in range(1, M):
        i = 0
        while not (k >> i) & 1:
            i += 1
        F = b[i]
        for j in range(N):
            F += 0.5 * Mat[i, j] * sigma[j]
        E -= 2.0 * sigma[i] * F
        sigma[i] = -sigma[i]
        for a in range(N):
            for c in range(N):
                Mat[a, c] += 2.0 * sigma[i] * T[a, c, i]
        s ^= 1 << i
        out[s] = E
    return out


def energies_direct(g: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Unscaled ``sum g sigma...sigma`` for every configuration by tensor contraction."""
    p = g.ndim
    N = g.shape[0]
    out = np.empty(1 << N)
    for start in range(0, 1 << N, chunk):
        S = spins(N, np.arange(start, min(start + chunk, 1 << N)))
        X = g.reshape(-1, N) @ S.T
        for _ in range(p - 1):
            X = np.einsum("anb,bn->ab", X.reshape(-1, N, S.shape[0]), S)
        out[start:start + S.shape[0]] = X[0]
    return out


def energies_gray(g: np.ndarray) -> np.ndarray:
    """Unscaled energies by a Gray-code walk (``p`` in {2, 3})."""
    p, N = g.ndim, g.shape[0]
    if p == 2:
        J = g + g.T
        np.fill_diagonal(J, 0.0)
        return _gray_p2(J, float(np.trace(g)), N)
    if p == 3:
        T = sum(np.transpose(g, perm) for perm in
                ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)))
        idx = np.arange(N)
        T[idx, idx, :] = 0.0
        T[idx, :, idx] = 0.0
        T[:, idx, idx] = 0.0
        d = np.einsum("iik->ik", g) + np.einsum("iki->ik", g) + np.einsum("kii->ik", g)
        b = d.sum(axis=0) - 2.0 * np.einsum("kkk->k", g)
        return _gray_p3(np.ascontiguousarray(T), b, N)
    raise ValueError("the Gray-code walk covers p = 2 and p = 3")


def sample_energies(N: int, params: ModelParams, seed: int, index: int = 0, *,
                    method: str = "auto") -> DisorderSample:
    """Draw sample ``index`` of stream ``seed`` and enumerate its energies."""
    p = params.p
    if method == "auto":
        method = "gray" if p <= 3 else "direct"
    cap = N_MAX_GRAY if method == "gray" else N_MAX_DIRECT
    if N < 1 or N > cap:
        raise BudgetExceeded(f"N={N} outside 1..{cap} for {method} enumeration")
    g = draw_couplings(N, p, seed, index)
    raw = energies_gray(g) if method == "gray" else energies_direct(g)
    scale = params.beta / N ** ((p - 1) / 2)
    return DisorderSample(N, p, params.beta, seed, index, g, scale * raw)


@njit(cache=True, nogil=True)
def _sphere_sums(w, N):
    # G[s, d] = sum of w over configurations at Hamming distance d from s
    M = 1 << N
    G = np.zeros((M, N + 1))
    for s in range(M):
        G[s, 0] = w[s]
    for i in range(N):
        bit = 1 << i
        for s in range(M):
            if s & bit:
                continue
            t = s | bit
            for d in range(i + 1, 0, -1):
                gs = G[s, d] + G[t, d - 1]
                gt = G[t, d] + G[s, d - 1]
                G[s, d] = gs
                G[t, d] = gt
    out = np.zeros(N + 1)
    for s in range(M):
        for d in range(N + 1):
            out[d] += w[s] * G[s, d]
    return out


@njit(cache=True, nogil=True)
def _pair_sums_direct(w, N):
    M = 1 << N
    out = np.zeros(N + 1)
    for s in range(M):
        for t in range(M):
            x = s ^ t
            d = 0
            while x:
                x &= x - 1
                d += 1
            out[d] += w[s] * w[t]
    return out


def log_pair_sums(x: np.ndarray, N: int, *, method: str = "sphere") -> np.ndarray:
    """``log sum exp(x_s + x_t)`` over pairs with ``sum sigma^1 sigma^2 = k``, ``k = -N..N``.

    Entries with the wrong parity are ``-inf``.  ``method="direct"`` is the
    plain ``4^N`` pair loop.
    """
    if N > N_MAX_PAIRS:
        raise BudgetExceeded(f"pair sums need N <= {N_MAX_PAIRS}")
    shift = float(np.max(x))
    w = np.exp(x - shift)
    by_d = _sphere_sums(w, N) if method == "sphere" else _pair_sums_direct(w, N)
    out = np.full(2 * N + 1, -np.inf)
    with np.errstate(divide="ignore"):
        # distance d has overlap N - 2d
        out[N - 2 * np.arange(N + 1) + N] = np.log(by_d) + 2.0 * shift
    return out


def constrained_pair_sum(sample: DisorderSample, k: int, h: float) -> float:
    """``log Z_2`` for one sample with ``sum sigma^1 sigma^2 = k``."""
    N = sample.N
    if abs(k) > N:
        raise ValueError("need |k| <= N")
    if (k - N) % 2:
        return -math.inf
    x = sample.energies + h * magnetizations(N)
    return float(log_pair_sums(x, N)[k + N])


def _work_unit(N, params, seed, index, pairs):
    smp = sample_energies(N, params, seed, index)
    x = smp.energies + params.h * magnetizations(N)
    logz = float(logsumexp(x))
    return logz, (log_pair_sums(x, N) if pairs else None)


def sample_statistics(N: int, n_samples: int, seed: int, params: ModelParams, *,
                      threads: int = 1, pairs: bool = False):
    """Per-sample ``log Z`` (and ``log Z_2(k)`` rows) in sample-index order."""
    if n_samples < 2:
        raise ValueError("need at least two disorder samples")
    if threads < 1:
        raise ValueError("threads must be positive")
    job = lambda i: _work_unit(N, params, seed, i, pairs)  # noqa: E731
    if threads == 1:
        results = [job(i) for i in range(n_samples)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, range(n_samples)))
    logz = np.array([r[0] for r in results])
    log_pairs = np.array([r[1] for r in results]) if pairs else None
    return logz, log_pairs


def _leave_one_out_logsum(y: np.ndarray) -> np.ndarray:
    # log sum_{j != i} exp(y_j) from prefix/suffix sums, no subtraction
    if np.all(y == y[0]):
        return np.full(y.size, y[0] + math.log(y.size - 1))
    pre = np.concatenate([[-np.inf], np.logaddexp.accumulate(y)[:-1]])
    suf = np.concatenate([np.logaddexp.accumulate(y[::-1])[::-1][1:], [-np.inf]])
    return np.logaddexp(pre, suf)


def moment_estimate(logz: np.ndarray, a: float, N: int) -> McEstimate:
    """``(1/(N a)) log mean Z^a`` with a jackknife stderr from per-sample ``log Z``."""
    n = logz.size
    y = a * logz
    shift = float(np.max(y))
    w = np.exp(y - shift)
    total = float(np.sum(w))
    theta = (math.log(total / n) + shift) / (N * a)
    loo = (_leave_one_out_logsum(y) - math.log(n - 1)) / (N * a)
    stderr = float(math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))
    ess = total ** 2 / float(np.sum(w * w))
    notes = []
    rel = float(np.std(w, ddof=1) / math.sqrt(n) / np.mean(w))
    if rel > BIAS_RTOL:
        notes.append(f"relative stderr of mean Z^a is {rel:.3g}; log of the mean is biased low")
    ci = (theta - CI_SIGMAS * stderr, theta + CI_SIGMAS * stderr)
    if ess < ESS_MIN:
        notes.append(f"effective sample size {ess:.1f} < {ESS_MIN:g}; no interval reported")
        ci = None
    return McEstimate(theta, stderr, n, "plain", ess, ci, notes)


def moment_mc(N: int, a: float, n_samples: int, seed: int, params: ModelParams, *,
              threads: int = 1) -> McEstimate:
    """Estimate ``(1/(N a)) log E Z_N^a``."""
    if a < 1:
        raise ValueError("need a >= 1")
    logz, _ = sample_statistics(N, n_samples, seed, params, threads=threads)
    return moment_estimate(logz, a, N)


def ratio_estimate(log_num: np.ndarray, log_den: np.ndarray) -> McEstimate:
    """``sum X / sum Y`` from per-sample logs, delta-method stderr."""
    n = log_den.size
    shift = float(np.max(log_den))
    X = np.exp(log_num - shift)
    Y = np.exp(log_den - shift)
    r = float(X.sum() / Y.sum())
    resid = X - r * Y
    stderr = float(math.sqrt(np.sum(resid ** 2) / (n * (n - 1))) / Y.mean())
    ess = float(Y.sum() ** 2 / np.sum(Y * Y))
    notes = []
    ci = (r - CI_SIGMAS * stderr, r + CI_SIGMAS * stderr)
    if ess < ESS_MIN:
        notes.append(f"effective sample size {ess:.1f} < {ESS_MIN:g}; no interval reported")
        ci = None
    return McEstimate(r, stderr, n, "ratio", ess, ci, notes)


def tilted_overlap_law_mc(N: int, a: float, n_samples: int, seed: int, params: ModelParams, *,
                          threads: int = 1):
    """Estimates of ``E'<I(R_12 = k/N)>`` for ``k = -N..N`` from one shared sample set."""
    if a < 1:
        raise ValueError("need a >= 1")
    if N > N_MAX_PAIRS:
        raise BudgetExceeded(f"tilted overlaps need N <= {N_MAX_PAIRS}")
    logz, lp = sample_statistics(N, n_samples, seed, params, threads=threads, pairs=True)
    den = a * logz
    ks = np.arange(-N, N + 1)
    ests = []
    for j, k in enumerate(ks):
        if (k - N) % 2:
            ests.append(McEstimate(0.0, 0.0, n_samples, "ratio", math.nan, (0.0, 0.0)))
        else:
            ests.append(ratio_estimate((a - 2.0) * logz + lp[:, j], den))
    return ks, ests


def tilted_overlap_mc(N: int, a: float, u: float, n_samples: int, seed: int, params: ModelParams, *,
                      threads: int = 1) -> McEstimate:
    """Ratio estimate of ``E Z^(a-2) Z_2(u_N) / E Z^a`` with common disorder samples."""
    if a < 1:
        raise ValueError("need a >= 1")
    if N > N_MAX_PAIRS:
        raise BudgetExceeded(f"tilted overlaps need N <= {N_MAX_PAIRS}")
    k = snap_overlap(u, N)
    logz, lp = sample_statistics(N, n_samples, seed, params, threads=threads, pairs=True)
    return ratio_estimate((a - 2.0) * logz + lp[:, k + N], a * logz)


def energy_variance_check(N: int, params: ModelParams, seed: int, n_samples: int):
    """Mean of ``H(sigma)^2 / N`` over configurations and samples, with its stderr, against ``xi(1)``."""
    vals = np.array([np.mean(sample_energies(N, params, seed, i).energies ** 2) / N
                     for i in range(n_samples)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        se = float(np.std(vals, ddof=1) / math.sqrt(n_samples))
    return float(vals.mean()), se, float(params.mixture.xi(1.0))
