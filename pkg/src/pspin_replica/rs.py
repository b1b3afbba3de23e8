"""Replica-symmetric functional and its maximization over ``q in [0, 1]``.

    RS(q) = log 2 + (xi(1) - xi'(q) + (1 - a) theta(q)) / 2 + log E ch^a(z + h) / a,
    z ~ N(0, xi'(q)).

Its stationary points are the solutions of

    E ch^a(z+h) th^2(z+h) / E ch^a(z+h) = q,

because ``dRS/dq = xi''(q) (a - 1) (T(q) - q) / 2`` with ``T`` the left side.
Uniqueness of the maximizer is not known in general, so the maximizer scans a
grid, refines every local maximum, and reports all near-ties.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .core import ModelParams
from .gaussian import DEFAULT_ORDER, MAX_ORDER, log_cosh, log_expect_cosh_power

TIE_TOL = 1e-9
LOG2 = math.log(2.0)


@functools.lru_cache(maxsize=256)
def _order_for(p, beta, h, a):
    # Pick one fixed order per parameter set so RS(q) is a smooth function of q;
    # sized at the widest Gaussian (q = 1).
    params = ModelParams.create(p=p, beta=beta, h=h, a=a)
    var = params.mixture.xi_prime(1.0)
    order = DEFAULT_ORDER
    prev = log_expect_cosh_power(a, var, h, order, adaptive=False)
    while order < MAX_ORDER:
        order *= 2
        cur = log_expect_cosh_power(a, var, h, order, adaptive=False)
        if abs(cur - prev) <= 1e-14:
            break
        prev = cur
    return order


def quad_order(params: ModelParams) -> int:
    return _order_for(params.p, params.beta, params.h, params.a)


def rs_value(q: float, params: ModelParams, order: int | None = None) -> float:
    """RS(q) for ``q in [0, 1]``."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q!r}")
    mix, a = params.mixture, params.a
    order = order or quad_order(params)
    var = mix.xi_prime(q)
    lec = log_expect_cosh_power(a, var, params.h, order, adaptive=False)
    return LOG2 + 0.5 * (mix.xi(1.0) - var + (1.0 - a) * mix.theta(q)) + lec / a


def rs_values(qs, params: ModelParams, order: int | None = None) -> np.ndarray:
    order = order or quad_order(params)
    return np.array([rs_value(float(q), params, order) for q in qs])


def tilted_th2(q: float, params: ModelParams, order: int | None = None) -> float:
    """``E ch^a th^2 / E ch^a`` at variance ``xi'(q)``, via ``th^2 = 1 - ch^-2``."""
    order = order or quad_order(params)
    var = params.mixture.xi_prime(q)
    a, h = params.a, params.h
    if var == 0:
        return math.tanh(h) ** 2
    num = log_expect_cosh_power(a - 2.0, var, h, order, adaptive=False)
    den = log_expect_cosh_power(a, var, h, order, adaptive=False)
    return -math.expm1(num - den)


def critical_residual(q: float, params: ModelParams, order: int | None = None) -> float:
    return tilted_th2(q, params, order) - q


def rs_derivative(q: float, params: ModelParams, order: int | None = None) -> float:
    """Closed-form ``dRS/dq``."""
    mix = params.mixture
    return 0.5 * mix.xi_second(q) * (params.a - 1.0) * critical_residual(q, params, order)


def critical_points(params: ModelParams, grid: int = 2001, xtol: float = 1e-12):
    """All roots in [0, 1] of the critical-point equation, as ``(q, residual)`` pairs.

    Sign changes on a uniform grid are bisected (Brent) to ``xtol``; grid
    points where the residual is exactly zero are kept as they are.
    """
    order = quad_order(params)
    qs = np.linspace(0.0, 1.0, grid)
    g = np.array([critical_residual(float(q), params, order) for q in qs])
    roots = []
    for i in range(grid):
        if g[i] == 0.0:
            roots.append(float(qs[i]))
        elif i + 1 < grid and g[i] * g[i + 1] < 0:
            r = brentq(critical_residual, qs[i], qs[i + 1], args=(params, order), xtol=xtol, rtol=4 * np.finfo(float).eps)
            roots.append(float(r))
    return [(r, critical_residual(r, params, order)) for r in roots]


@dataclass
class RsReport:
    q0: float
    value: float
    local_maxima: list = field(default_factory=list)
    all_critical_points: list = field(default_factory=list)
    unique_max: bool = True
    grid_max: float = float("nan")
    convexity_in_a_scan: list | None = None

    def as_dict(self) -> dict:
        return {
            "q0": self.q0,
            "value": self.value,
            "unique_max": self.unique_max,
            "grid_max": self.grid_max,
            "local_maxima": [list(m) for m in self.local_maxima],
            "all_critical_points": [list(c) for c in self.all_critical_points],
        }


def rs_maximize(params: ModelParams, grid: int = 201, *, with_critical_points: bool = False) -> RsReport:
    """Global maximum of RS over [0, 1].

    Every grid local maximum is refined with a bounded golden-section/Brent
    search on its two neighbouring cells.  All maxima within ``TIE_TOL`` of
    the best are returned; the smallest such ``q`` is reported as ``q0``.
    """
    if grid < 101:
        raise ValueError("grid must be at least 101")
    order = quad_order(params)
    qs = np.linspace(0.0, 1.0, grid)
    vals = rs_values(qs, params, order)
    grid_max = float(vals.max())
    top = grid_max - TIE_TOL

    def neg(q):
        return -rs_value(q, params, order)

    maxima = []
    for i in range(grid):
        left = vals[i - 1] if i > 0 else -np.inf
        right = vals[i + 1] if i + 1 < grid else -np.inf
        if vals[i] < left or vals[i] < right:
            continue
        if vals[i] < top - 1e-6:
            # far below the best: cannot become a near-tie after refinement
            continue
        lo, hi = qs[max(i - 1, 0)], qs[min(i + 1, grid - 1)]
        best_q, best_v = float(qs[i]), float(vals[i])
        if vals[i] != left or vals[i] != right:
            res = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
            if -res.fun > best_v:
                best_q, best_v = float(res.x), float(-res.fun)
            best_q, best_v = _polish(best_q, best_v, params, order)
            # endpoint maxima are not interior stationary points
            for end in (lo, hi):
                if end in (0.0, 1.0):
                    v_end = rs_value(end, params, order)
                    if v_end > best_v:
                        best_q, best_v = end, v_end
        maxima.append((best_q, best_v))

    if float(vals.max() - vals.min()) <= TIE_TOL:
        # flat functional (a = 1): every q is a maximizer
        maxima = [(0.0, float(vals[0])), (1.0, float(vals[-1]))]
    best = max(v for _, v in maxima)
    ties = sorted({(q, v) for q, v in maxima if v >= best - TIE_TOL})
    q0, value = ties[0]
    if len(ties) > 1:
        value = best
    report = RsReport(q0=q0, value=value, local_maxima=ties, unique_max=len(ties) == 1, grid_max=grid_max)
    if with_critical_points:
        report.all_critical_points = critical_points(params)
    return report


def _polish(q, v, params, order, width=1e-6):
    # Brent on RS stalls near sqrt(eps) in q; finish on the stationarity residual
    if not (width < q < 1.0 - width) or params.a == 1.0:
        return q, v
    lo, hi = q - width, q + width
    f_lo, f_hi = critical_residual(lo, params, order), critical_residual(hi, params, order)
    if f_lo * f_hi > 0:
        return q, v
    root = brentq(critical_residual, lo, hi, args=(params, order), xtol=1e-15, rtol=8.9e-16)
    v_root = rs_value(root, params, order)
    return (root, v_root) if v_root >= v - 1e-15 else (q, v)


def rs_in_a_scan(params: ModelParams, a_grid, q_policy="max", grid: int = 201):
    """Table of ``a -> RS`` at the maximizer (``q_policy="max"``) or at a fixed ``q``.

    Returns a list of dicts with ``a``, ``q``, ``value`` and the centered second
    difference of ``value`` (``nan`` at the ends).  The second differences are
    a convexity diagnostic only.
    """
    a_grid = [float(a) for a in a_grid]
    if any(a < 1.0 or a > 6.0 for a in a_grid):
        raise ValueError("a_grid must lie in [1, 6]")
    rows = []
    for a in a_grid:
        pa = params.replace(a=a)
        if q_policy == "max":
            rep = rs_maximize(pa, grid)
            rows.append({"a": a, "q": rep.q0, "value": rep.value})
        else:
            q = float(q_policy)
            rows.append({"a": a, "q": q, "value": rs_value(q, pa)})
    for i, row in enumerate(rows):
        if 0 < i < len(rows) - 1:
            h1 = a_grid[i] - a_grid[i - 1]
            h2 = a_grid[i + 1] - a_grid[i]
            v0, v1, v2 = rows[i - 1]["value"], row["value"], rows[i + 1]["value"]
            row["second_difference"] = 2.0 * (h1 * v2 - (h1 + h2) * v1 + h2 * v0) / (h1 * h2 * (h1 + h2))
        else:
            row["second_difference"] = float("nan")
    return rows


def guerra_latala_curve(params: ModelParams, qs) -> np.ndarray:
    """``q -> E th^2(z+h) / q`` (untilted), exposed as a diagnostic curve only."""
    out = []
    for q in qs:
        var = params.mixture.xi_prime(q)
        # E th^2 = 1 - E ch^-2
        val = -math.expm1(log_expect_cosh_power(-2.0, var, params.h)) if var > 0 else math.tanh(params.h) ** 2
        out.append(val / q if q > 0 else float("inf"))
    return np.array(out)


def rs_closed_form_q0(params: ModelParams) -> float:
    """``RS(0) = log 2 + xi(1)/2 + log ch(h)``."""
    return LOG2 + 0.5 * params.mixture.xi(1.0) + float(log_cosh(params.h))
