"""Multi-replica variational bounds and the inequality chain behind overlap control.

Notation (``n`` replicas, overlap constraints ``U`` in C_n, couplings ``lam``):

    Phi_n(z, lam) = sum_{eps in {-1,1}^n} exp(sum_l eps_l (z_l + h) + sum_{l<l'} lam_{ll'} eps_l eps_l')

    psi(Q, lam) = 1/2 sum_{l,l'} (xi(u) - u xi'(q) + (1 - a/n) theta(q))
                  - sum_{l<l'} lam u + (n/a) log E Phi_n^{a/n}(z, lam),        z ~ N(0, xi'(Q))

    Psi(P, gam) = n/(2(n+1)) sum_{l,l' <= n+1} (xi(w) - w xi'(p) + (1 - a/(n+1)) theta(p))
                  - n/(n+1) sum_{l<l'} gam w + (n/a) log E Phi_{n+1}^{a/(n+1)}(y, gam),  y ~ N(0, xi'(P))

For the pure p-spin model the matrix ``P = [[s^2 u u^T, u], [u^T, s^-2]]`` with
``s = |u|_p^{-1/2}`` kills the cross term III, and with the couplings of the
extra replica set to zero Hoelder's inequality gives

    Psi(P, gam) <= n/(n+1) (psi(Q, lam) + RS(q)),   Q = s^2 u u^T,  q = |u|_p.

Everything here evaluates those objects at finite quadrature order.  All
double sums over replica pairs include the diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .core import ModelParams
from .errors import GluingRequired, InconsistentGluing, MaxIterations, NotPSD, ZeroVector
from .gaussian import enumerate_signs, gaussian_nodes, hermite_rule, psd_factor
from .rs import rs_value

LAMBDA_BOX = 30.0
GLUE_TOL = 1e-9
MAX_PHI_N = 16
BOUNDS_ORDER = 256
PSD_TOL = 1e-12


def pair_index(n: int):
    """Replica pairs ``(l, l')`` with ``l < l'`` in lexicographic order."""
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True, eq=False)
class OverlapMatrix:
    """A member of C_n: symmetric, unit diagonal, entries in [-1, 1], PSD."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise ValueError("overlap matrix must be square")
        if not np.array_equal(m, m.T):
            raise ValueError("overlap matrix must be symmetric")
        if not np.all(np.diag(m) == 1.0):
            raise ValueError("overlap matrix must have unit diagonal")
        if np.any(np.abs(m) > 1.0):
            raise ValueError("overlap entries must lie in [-1, 1]")
        ev = np.linalg.eigvalsh(m)
        if ev[0] < -PSD_TOL * max(ev[-1], 1.0):
            raise NotPSD(f"overlap matrix not PSD (min eigenvalue {ev[0]:.3e})")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def off_diagonal(self) -> np.ndarray:
        return np.array([self.entries[i, j] for i, j in pair_index(self.n)])

    @classmethod
    def from_off_diagonal(cls, n, values) -> "OverlapMatrix":
        m = np.eye(n)
        for (i, j), v in zip(pair_index(n), values):
            m[i, j] = m[j, i] = v
        return cls(m)


@dataclass(frozen=True, eq=False)
class CouplingVector:
    """Couplings ``lam_{ll'}`` for ``l < l'`` (lexicographic order), boxed by ``bound``."""

    n: int
    values: np.ndarray
    bound: float = LAMBDA_BOX

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != self.n * (self.n - 1) // 2:
            raise ValueError(f"expected {self.n * (self.n - 1) // 2} couplings for n={self.n}, got {v.size}")
        if np.any(np.abs(v[np.isfinite(v)]) > self.bound):
            raise ValueError(f"couplings exceed the box bound {self.bound}")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, n, bound=LAMBDA_BOX) -> "CouplingVector":
        return cls(n, np.zeros(n * (n - 1) // 2), bound)

    def matrix(self) -> np.ndarray:
        m = np.zeros((self.n, self.n))
        for (i, j), v in zip(pair_index(self.n), self.values):
            m[i, j] = m[j, i] = v
        return m

    def zero_extend(self) -> "CouplingVector":
        """Embed into ``n + 1`` replicas with every coupling to the new replica zero."""
        m = np.zeros((self.n + 1, self.n + 1))
        m[: self.n, : self.n] = self.matrix()
        vals = [m[i, j] for i, j in pair_index(self.n + 1)]
        return CouplingVector(self.n + 1, np.array(vals), self.bound)


@dataclass(frozen=True, eq=False)
class ConstraintBlock:
    """``W = [[U, u], [u^T, 1]]`` in C_{n+1}."""

    U: OverlapMatrix
    u_vec: np.ndarray
    W: OverlapMatrix = field(init=False)

    def __post_init__(self):
        u = np.asarray(self.u_vec, dtype=float).reshape(-1)
        n = self.U.n
        if u.size != n:
            raise ValueError("u_vec length must match U")
        w = np.eye(n + 1)
        w[:n, :n] = self.U.entries
        w[:n, n] = w[n, :n] = u
        object.__setattr__(self, "u_vec", u)
        object.__setattr__(self, "W", OverlapMatrix(w))

    @property
    def n(self) -> int:
        return self.U.n

    @classmethod
    def product(cls, u_vec) -> "ConstraintBlock":
        """Default completion ``U_{ll'} = u_l u_l'``; ``W - v v^T`` is diagonal PSD for ``v = (u, 1)``."""
        u = np.asarray(u_vec, dtype=float).reshape(-1)
        U = np.outer(u, u)
        np.fill_diagonal(U, 1.0)
        return cls(OverlapMatrix(U), u)


@dataclass(frozen=True, eq=False)
class PConstruction:
    s: float
    P: np.ndarray
    Q: np.ndarray
    q: float
    norm_p: float
    a_coeffs: np.ndarray          # from the covariance factor of xi'(P)
    a_coeffs_literal: np.ndarray  # xi'(s^2) xi'(u_l), for comparison only
    rank: int
    degenerate: bool = False


@dataclass
class Minimum:
    """Result of a convex coupling minimization."""

    lam: np.ndarray
    value: float
    grad_norm: float
    hessian: np.ndarray
    iterations: int
    glued: "GluedSystem | None" = None

    @property
    def hessian_min_eig(self) -> float:
        if self.hessian.size == 0:
            return 0.0
        return float(np.linalg.eigvalsh(self.hessian)[0])


@dataclass
class BoundReport:
    n: int
    u: float
    u_vec: list
    q: float
    s: float
    lambda0: list
    psi_inf: float
    rs_q: float
    Psi_at_embedding: float
    Psi_inf: float
    holder_gap: float
    strict: bool
    strict_reason: str
    margins: dict
    chain_ok: bool
    trial_psi_inf: list = field(default_factory=list)
    a_coeff_discrepancy: float = 0.0
    grad_norm: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


# ---------------------------------------------------------------------------
# Phi_n and the convex coupling objective


def _log_phi_terms(z, lam, h, field_weights=None):
    z = np.atleast_2d(np.asarray(z, dtype=float))
    n = z.shape[1]
    if n > MAX_PHI_N:
        raise ValueError(f"Phi_n enumerates 2^n terms; n={n} exceeds {MAX_PHI_N}")
    c = np.ones(n) if field_weights is None else np.asarray(field_weights, dtype=float)
    eps = enumerate_signs(n)
    pairs = pair_index(n)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    terms = z @ eps.T + h * (eps @ c)[None, :]
    if pairs:
        ee = np.stack([eps[:, i] * eps[:, j] for i, j in pairs], axis=1)
        terms = terms + (ee @ lam)[None, :]
    return terms


def phi_n(z, lam, h: float, field_weights=None):
    """``log Phi_n(z, lam)`` by explicit 2^n enumeration; ``z`` is ``(n,)`` or ``(M, n)``."""
    if isinstance(lam, CouplingVector):
        lam = lam.values
    out = logsumexp(_log_phi_terms(z, lam, h, field_weights), axis=1)
    return float(out[0]) if np.ndim(z) == 1 else out


class DualObjective:
    """``D(lam) = -sum lam u + (1/r) log E Phi^r(z, lam)`` on fixed quadrature nodes.

    Convex in ``lam``: a log-sum-exp of ``r log Phi(z_m, lam)``, each convex.
    Gradient ``-u + E_T <eps eps>``; Hessian ``E_T Cov_Gibbs + r Cov_T(<eps eps>)``
    with ``T`` the law of the node tilted by ``Phi^r``.
    """

    def __init__(self, u_pairs, z, log_w, r, h, field_weights=None):
        self.u = np.asarray(u_pairs, dtype=float).reshape(-1)
        self.z = np.atleast_2d(z)
        self.log_w = np.asarray(log_w, dtype=float)
        self.r = float(r)
        self.h = float(h)
        n = self.z.shape[1]
        self.n = n
        c = np.ones(n) if field_weights is None else np.asarray(field_weights, dtype=float)
        eps = enumerate_signs(n)
        pairs = pair_index(n)
        self.ee = (np.stack([eps[:, i] * eps[:, j] for i, j in pairs], axis=1)
                   if pairs else np.zeros((eps.shape[0], 0)))
        self.base = self.z @ eps.T + self.h * (eps @ c)[None, :]

    @property
    def dim(self) -> int:
        return self.ee.shape[1]

    def log_expect(self, lam) -> float:
        """``(1/r) log E Phi^r``."""
        terms = self.base + (self.ee @ lam)[None, :]
        lphi = logsumexp(terms, axis=1)
        return float(logsumexp(self.r * lphi + self.log_w)) / self.r

    def value(self, lam) -> float:
        lam = np.asarray(lam, dtype=float)
        return -float(np.dot(lam, self.u)) + self.log_expect(lam)

    def evaluate(self, lam):
        """``(value, gradient, hessian)``."""
        lam = np.asarray(lam, dtype=float)
        terms = self.base + (self.ee @ lam)[None, :]
        lphi = logsumexp(terms, axis=1)
        gibbs = np.exp(terms - lphi[:, None])
        lt = self.r * lphi + self.log_w
        lnorm = logsumexp(lt)
        tilt = np.exp(lt - lnorm)
        value = -float(np.dot(lam, self.u)) + float(lnorm) / self.r
        mean_ee = gibbs @ self.ee                    # <eps eps> per node
        grad = -self.u + tilt @ mean_ee
        second = np.einsum("m,me,ei,ej->ij", tilt, gibbs, self.ee, self.ee)
        cov_gibbs = second - np.einsum("m,mi,mj->ij", tilt, mean_ee, mean_ee)
        centered = mean_ee - tilt @ mean_ee
        cov_tilt = np.einsum("m,mi,mj->ij", tilt, centered, centered)
        hess = cov_gibbs + self.r * cov_tilt
        return value, grad, 0.5 * (hess + hess.T)

    def minimize(self, lam0=None, tol=1e-9, max_iter=200, bound=LAMBDA_BOX, raise_on_fail=True) -> Minimum:
        """Damped Newton with Armijo backtracking inside the box ``|lam| <= bound``."""
        d = self.dim
        lam = np.zeros(d) if lam0 is None else np.clip(np.asarray(lam0, dtype=float), -bound, bound)
        if d == 0:
            v, g, H = self.evaluate(lam)
            return Minimum(lam, v, 0.0, H, 0)
        v, g, H = self.evaluate(lam)
        for it in range(1, max_iter + 1):
            gn = float(np.linalg.norm(g))
            if gn <= tol:
                return Minimum(lam, v, gn, H, it - 1)
            evals, evecs = np.linalg.eigh(H)
            floor = max(1e-14, 1e-12 * abs(evals[-1]))
            step = -evecs @ ((evecs.T @ g) / np.maximum(evals, floor))
            if gn < 1e-6:
                # quadratic regime: value differences are at roundoff level, so
                # accept the full step on gradient decrease instead of Armijo
                trial = np.clip(lam + step, -bound, bound)
                vt, gt, Ht = self.evaluate(trial)
                if np.linalg.norm(gt) < gn:
                    lam, v, g, H = trial, vt, gt, Ht
                    continue
            t = 1.0
            slope = float(np.dot(g, step))
            while True:
                trial = np.clip(lam + t * step, -bound, bound)
                vt, gt, Ht = self.evaluate(trial)
                if vt <= v + 1e-4 * t * slope or t < 1e-12:
                    break
                t *= 0.5
            if np.array_equal(trial, lam):
                break
            lam, v, g, H = trial, vt, gt, Ht
        gn = float(np.linalg.norm(g))
        best = Minimum(lam, v, gn, H, max_iter)
        if gn <= tol or not raise_on_fail:
            return best
        raise MaxIterations(f"Newton stopped with gradient norm {gn:.3e}", best=best)


# ---------------------------------------------------------------------------
# gluing


@dataclass(frozen=True, eq=False)
class GluedSystem:
    """Coordinates merged where ``|u_{ll'}| = 1``.

    ``groups[g]`` lists original coordinates; ``signs[l]`` is the sign relating
    ``eps_l`` to its group's spin.  ``merge`` is the ``(n', n)`` matrix with
    ``z_glued = merge @ z``; ``field_weights = merge @ 1`` carries the field multiplicity.
    """

    U: np.ndarray
    groups: tuple
    signs: np.ndarray
    merge: np.ndarray

    @property
    def field_weights(self) -> np.ndarray:
        return self.merge.sum(axis=1)

    @property
    def n_reduced(self) -> int:
        return len(self.groups)

    def expand_couplings(self, lam_reduced):
        """Original-index couplings: glued pairs get ``+-inf``, each group pair's coupling sits on its first pair."""
        n = self.merge.shape[1]
        group_of = {l: g for g, members in enumerate(self.groups) for l in members}
        red = CouplingVector(self.n_reduced, np.asarray(lam_reduced)).matrix() if self.n_reduced > 1 else np.zeros((1, 1))
        out, seen = [], set()
        for i, j in pair_index(n):
            gi, gj = group_of[i], group_of[j]
            if gi == gj:
                out.append(math.copysign(math.inf, self.signs[i] * self.signs[j]))
            elif (gi, gj) in seen:
                out.append(0.0)
            else:
                seen.add((gi, gj))
                out.append(red[gi, gj] * self.signs[i] * self.signs[j])
        return np.array(out)


def glue_coordinates(U, tol: float = GLUE_TOL) -> GluedSystem:
    """Merge replicas with ``u_{ll'} = +-1`` (``eps_l = +-eps_l'``)."""
    m = U.entries if isinstance(U, OverlapMatrix) else np.asarray(U, dtype=float)
    n = m.shape[0]
    parent = list(range(n))
    sign = np.ones(n)   # sign of l relative to its root

    def find(l):
        s = 1.0
        while parent[l] != l:
            s *= sign[l]
            l = parent[l]
        return l, s

    for i, j in pair_index(n):
        if abs(m[i, j]) < 1.0 - tol:
            continue
        sij = 1.0 if m[i, j] > 0 else -1.0
        ri, si = find(i)
        rj, sj = find(j)
        if ri == rj:
            if si * sj != sij:
                raise InconsistentGluing(f"u[{i},{j}]={m[i, j]:+g} contradicts earlier +-1 constraints")
            continue
        parent[rj] = ri
        sign[rj] = si * sj * sij
    roots, groups, signs = {}, [], np.ones(n)
    for l in range(n):
        r, s = find(l)
        signs[l] = s
        if r not in roots:
            roots[r] = len(groups)
            groups.append([])
        groups[roots[r]].append(l)
    k = len(groups)
    merge = np.zeros((k, n))
    for g, members in enumerate(groups):
        for l in members:
            merge[g, l] = signs[l]
    reduced = np.eye(k)
    for g in range(k):
        for g2 in range(g + 1, k):
            vals = [signs[i] * signs[j] * m[i, j] for i in groups[g] for j in groups[g2]]
            if max(vals) - min(vals) > tol:
                raise InconsistentGluing(f"groups {groups[g]} and {groups[g2]} have inconsistent overlaps {vals}")
            reduced[g, g2] = reduced[g2, g] = vals[0]
    return GluedSystem(reduced, tuple(tuple(g) for g in groups), signs, merge)


def needs_gluing(U, tol: float = GLUE_TOL) -> bool:
    m = U.entries if isinstance(U, OverlapMatrix) else np.asarray(U)
    off = m[~np.eye(m.shape[0], dtype=bool)]
    return bool(off.size) and bool(np.any(np.abs(off) >= 1.0 - tol))


# ---------------------------------------------------------------------------
# psi and Psi


def _as_overlap(U) -> OverlapMatrix:
    return U if isinstance(U, OverlapMatrix) else OverlapMatrix(np.asarray(U, dtype=float))


def _first_line(Wm, Pm, a_over_n, mixture):
    return 0.5 * float(np.sum(mixture.xi(Wm) - Wm * mixture.xi_prime(Pm)
                              + (1.0 - a_over_n) * mixture.theta(Pm)))


def _nodes_for(C, order):
    C = np.asarray(C, dtype=float)
    _, rank = psd_factor(C)
    return gaussian_nodes(C, order if (order or rank != 1) else BOUNDS_ORDER)


def psi_first_line(U, Q, params: ModelParams) -> float:
    U = _as_overlap(U)
    return _first_line(U.entries, np.asarray(Q, dtype=float), params.a / U.n, params.mixture)


def _psi_objective(U, z, log_w, params, glue):
    n = U.n
    if needs_gluing(U):
        if not glue:
            raise GluingRequired("some |u_{ll'}| = 1; glue coordinates first")
        gs = glue_coordinates(U)
        obj = DualObjective(_off_diagonal(gs.U), z @ gs.merge.T, log_w, params.a / n, params.h, gs.field_weights)
        return obj, gs
    return DualObjective(U.off_diagonal(), z, log_w, params.a / n, params.h), None


def _off_diagonal(m):
    n = m.shape[0]
    return np.array([m[i, j] for i, j in pair_index(n)])


def psi_value(U, Q, lam, params: ModelParams, order: int | None = None, *, check_regime: bool = True) -> float:
    """psi(Q, lam) at quadrature order ``order`` (rank-1 covariances default to a 1-D rule)."""
    U = _as_overlap(U)
    n = U.n
    if check_regime and n > params.a:
        raise ValueError(f"psi requires n <= a (n={n}, a={params.a})")
    lam = lam.values if isinstance(lam, CouplingVector) else np.asarray(lam, dtype=float)
    Q = np.asarray(Q, dtype=float)
    z, log_w = _nodes_for(params.mixture.xi_prime(Q), order)
    obj = DualObjective(U.off_diagonal(), z, log_w, params.a / n, params.h)
    return psi_first_line(U, Q, params) + obj.value(lam)


def psi_inf_lambda(U, Q, params: ModelParams, order: int | None = None, *, lam0=None, tol: float = 1e-9,
                   glue: bool = False, check_regime: bool = True, max_iter: int = 200) -> Minimum:
    """``inf_lam psi(Q, lam)`` by Newton; ``Minimum.value`` is the full psi value at the minimizer.

    If some off-diagonal ``|u| >= 1 - 1e-9`` the corresponding coordinates must
    be glued (``glue=True``), otherwise :class:`GluingRequired` is raised.
    """
    U = _as_overlap(U)
    if check_regime and U.n > params.a:
        raise ValueError(f"psi requires n <= a (n={U.n}, a={params.a})")
    Q = np.asarray(Q, dtype=float)
    z, log_w = _nodes_for(params.mixture.xi_prime(Q), order)
    obj, gs = _psi_objective(U, z, log_w, params, glue)
    res = obj.minimize(lam0, tol=tol, max_iter=max_iter)
    res.value += psi_first_line(U, Q, params)
    res.glued = gs
    return res


def Psi_first_line(block: ConstraintBlock, P, params: ModelParams) -> float:
    n = block.n
    return n / (n + 1.0) * _first_line(block.W.entries, np.asarray(P, dtype=float), params.a / (n + 1.0), params.mixture)


def Psi_value(block: ConstraintBlock, P, gamma, params: ModelParams, order: int | None = None, *,
              check_regime: bool = True) -> float:
    """Psi(P, gamma) for the (n+1)-replica constraint block ``W``."""
    n = block.n
    if check_regime and params.a > n + 1:
        raise ValueError(f"Psi requires a <= n + 1 (n={n}, a={params.a})")
    gamma = gamma.values if isinstance(gamma, CouplingVector) else np.asarray(gamma, dtype=float)
    P = np.asarray(P, dtype=float)
    y, log_w = _nodes_for(params.mixture.xi_prime(P), order)
    obj = DualObjective(block.W.off_diagonal(), y, log_w, params.a / (n + 1.0), params.h)
    return Psi_first_line(block, P, params) + n / (n + 1.0) * obj.value(gamma)


def Psi_inf_gamma(block: ConstraintBlock, P, params: ModelParams, order: int | None = None, *,
                  gamma0=None, tol: float = 1e-9, glue: bool = True, max_iter: int = 200) -> Minimum:
    """``inf_gamma Psi(P, gamma)``; same Newton scheme as :func:`psi_inf_lambda`."""
    n = block.n
    P = np.asarray(P, dtype=float)
    y, log_w = _nodes_for(params.mixture.xi_prime(P), order)
    W = block.W
    if needs_gluing(W):
        if not glue:
            raise GluingRequired("some |w_{ll'}| = 1; glue coordinates first")
        gs = glue_coordinates(W)
        obj = DualObjective(_off_diagonal(gs.U), y @ gs.merge.T, log_w, params.a / (n + 1.0), params.h,
                            gs.field_weights)
        gamma0 = None
    else:
        gs = None
        obj = DualObjective(W.off_diagonal(), y, log_w, params.a / (n + 1.0), params.h)
    res = obj.minimize(gamma0, tol=tol, max_iter=max_iter, raise_on_fail=False)
    scale = n / (n + 1.0)
    res.value = Psi_first_line(block, P, params) + scale * res.value
    res.hessian = scale * res.hessian
    res.grad_norm *= scale
    res.glued = gs
    return res


# ---------------------------------------------------------------------------
# the P-matrix and the I + II + III decomposition


def p_norm(u_vec, p: int) -> float:
    """``((1/n) sum |u_l|^p)^(1/p)``."""
    u = np.abs(np.asarray(u_vec, dtype=float))
    return float(np.mean(u ** p) ** (1.0 / p))


def construct_P(u_vec, params: ModelParams, *, allow_degenerate: bool = False, s: float | None = None) -> PConstruction:
    """``P = [[s^2 u u^T, u], [u^T, s^-2]]`` with ``s = |u|_p^{-1/2}`` unless ``s`` is given."""
    u = np.asarray(u_vec, dtype=float).reshape(-1)
    n = u.size
    mix = params.mixture
    norm = p_norm(u, mix.p)
    if norm == 0.0:
        if not allow_degenerate:
            raise ZeroVector("|u|_p = 0: s is undefined")
        P = np.zeros((n + 1, n + 1))
        return PConstruction(math.inf, P, np.zeros((n, n)), 0.0, 0.0, np.zeros(n), np.zeros(n), 0, True)
    s = norm ** -0.5 if s is None else float(s)
    vec = np.append(s * u, 1.0 / s)
    P = np.outer(vec, vec)
    ev = np.linalg.eigvalsh(P)
    if ev[0] < -PSD_TOL * ev[-1]:
        raise NotPSD("constructed P is not PSD")
    F, rank = psd_factor(mix.xi_prime(P))
    # y = F x with a single standard normal x, so z_l / z = F_l / F_{n+1}
    a_coeffs = F[:n, 0] / F[n, 0]
    literal = mix.xi_prime(s * s) * mix.xi_prime(u)
    return PConstruction(s, P, P[:n, :n].copy(), float(P[n, n]), norm, a_coeffs, literal, rank)


def decompose_I_II_III(block: ConstraintBlock, P, params: ModelParams):
    """Regroup the first line of Psi as ``I + II + III``.

    ``I`` matches the psi first line on the top-left block, ``II`` matches the
    RS first line at ``p_{n+1,n+1}``; ``III`` collects the rest.  Returns
    ``(I, II, III, first_line)``.
    """
    mix, a = params.mixture, params.a
    n = block.n
    P = np.asarray(P, dtype=float)
    U, u = block.U.entries, block.u_vec
    Pb, pc, pl = P[:n, :n], P[n, n], P[:n, n]
    k = n / (n + 1.0)
    I = k * 0.5 * float(np.sum(mix.xi(U) - U * mix.xi_prime(Pb) + (1.0 - a / n) * mix.theta(Pb)))
    II = k * 0.5 * (mix.xi(1.0) - mix.xi_prime(pc) + (1.0 - a) * mix.theta(pc))
    III = 0.5 * a * k * k * (
        mix.theta(pc)
        + float(np.sum(mix.theta(Pb))) / n ** 2
        - 2.0 / n * float(np.sum(mix.theta(pl)))
        + 2.0 * (n + 1.0) / (n * a) * float(np.sum(mix.xi(u) - u * mix.xi_prime(pl) + mix.theta(pl)))
    )
    return I, II, III, Psi_first_line(block, P, params)


def III_closed_form(u_vec, s, params: ModelParams) -> float:
    """III for the P-matrix family at a general scale ``s`` (zero at the optimal ``s``)."""
    mix = params.mixture
    n = len(u_vec)
    norm = p_norm(u_vec, mix.p)
    p = mix.p
    return (params.a * mix.beta2 * (p - 1) / 2.0 * (n / (n + 1.0)) ** 2
            * (s ** (-2 * p) + s ** (2 * p) * norm ** (2 * p) - 2.0 * norm ** p))


# ---------------------------------------------------------------------------
# Hoelder factorization


@dataclass
class HolderTerms:
    log_phi_n: float       # (n/a) log E Phi_n^{a/n}
    log_ch: float          # (1/a) log E (2 ch(z + h))^a
    log_phi_n1: float      # (n/a) log E Phi_{n+1}^{a/(n+1)}
    gap: float


def _chain_nodes(pc: PConstruction, params: ModelParams, order: int):
    F, rank = psd_factor(params.mixture.xi_prime(pc.P))
    rule = hermite_rule(order)
    y = np.outer(rule.nodes, F[:, 0])
    return y, rule.log_weights


def holder_terms(u_vec, lam, params: ModelParams, order: int = BOUNDS_ORDER, pc: PConstruction | None = None) -> HolderTerms:
    """The three expectations in the Hoelder step, on one shared set of nodes."""
    u = np.asarray(u_vec, dtype=float)
    n = u.size
    a, h = params.a, params.h
    pc = pc or construct_P(u, params)
    lam = lam.values if isinstance(lam, CouplingVector) else np.asarray(lam, dtype=float)
    y, log_w = _chain_nodes(pc, params, order)
    z, zl = y[:, :n], y[:, n]
    lphi_n = phi_n(z, lam, h)
    t1 = n / a * float(logsumexp(a / n * lphi_n + log_w))
    lch = np.logaddexp(zl + h, -(zl + h))   # log 2 ch
    t2 = float(logsumexp(a * lch + log_w)) / a
    gam = CouplingVector(n, lam).zero_extend().values if n > 1 else np.zeros(1)
    lphi_n1 = phi_n(y, gam, h)
    t3 = n / a * float(logsumexp(a / (n + 1.0) * lphi_n1 + log_w))
    gap = n / (n + 1.0) * (t1 + t2) - t3
    return HolderTerms(t1, t2, t3, gap)


def holder_gap(u_vec, lam, params: ModelParams, order: int = BOUNDS_ORDER) -> float:
    """Slack in the Hoelder step for the P-matrix and the zero-extended couplings; always >= 0."""
    return holder_terms(u_vec, lam, params, order).gap


def strictness_check(u_vec, params: ModelParams, target: float | None = None):
    """Whether the Hoelder step is strict: unequal moduli, or ``h != 0`` with a negative target."""
    u = np.abs(np.asarray(u_vec, dtype=float))
    target = float(np.asarray(u_vec, dtype=float)[0]) if target is None else float(target)
    unequal = float(u.max() - u.min()) > 1e-12
    negative = params.h != 0.0 and target < 0.0
    if unequal and negative:
        return True, "unequal moduli; h != 0 and u < 0"
    if unequal:
        return True, "unequal moduli"
    if negative:
        return True, "h != 0 and u < 0"
    return False, "equal moduli and (h = 0 or u >= 0)"


# ---------------------------------------------------------------------------
# end-to-end chain


def chain_verify(u: float, n: int, params: ModelParams, trial_Qs=(), *, u_vec=None, U=None,
                 order: int = BOUNDS_ORDER, tol: float = 1e-8) -> BoundReport:
    """Evaluate the bound chain for a target overlap ``u`` with ``n`` replicas plus one.

    ``u_vec`` defaults to ``(u, ..., u)`` and ``U`` to ``u_l u_l'`` off the
    diagonal.  Records, with margins (positive means the inequality holds):

    * ``holder``: Psi(P, embedded lam0) <= n/(n+1) (psi(Q, lam0) + RS(q))
    * ``holder_gap``: the same slack computed directly from the three expectations
    * ``psi_vs_nRS``: inf_lam psi(Q, lam) <= n RS(|u|_p)
    * ``Psi_vs_nRS``: inf_gam Psi(P, gam) <= n RS(|u|_p)
    * ``III``: III = 0 for the P-matrix
    """
    if not (n <= params.a <= n + 1):
        raise ValueError(f"need n <= a <= n + 1, got n={n}, a={params.a}")
    u_vec = np.full(n, float(u)) if u_vec is None else np.asarray(u_vec, dtype=float)
    if u_vec.size != n or not np.any(np.isclose(u_vec, u, rtol=0, atol=0)):
        raise ValueError("u_vec must have length n and contain u as a coordinate")
    block = ConstraintBlock.product(u_vec) if U is None else ConstraintBlock(_as_overlap(U), u_vec)
    pc = construct_P(u_vec, params)
    y, log_w = _chain_nodes(pc, params, order)
    z = y[:, :n]

    obj, gs = _psi_objective(block.U, z, log_w, params, glue=True)
    mn = obj.minimize(tol=1e-9)
    psi_first = psi_first_line(block.U, pc.Q, params)
    psi_inf = psi_first + mn.value
    if gs is None:
        lam0 = mn.lam
    else:
        lam0 = gs.expand_couplings(mn.lam)

    rs_q = rs_value(pc.q, params)

    if gs is None:
        gam = CouplingVector(n, lam0).zero_extend().values if n > 1 else np.zeros(1)
        psi_obj = DualObjective(block.W.off_diagonal(), y, log_w, params.a / (n + 1.0), params.h)
        Psi_emb = Psi_first_line(block, pc.P, params) + n / (n + 1.0) * psi_obj.value(gam)
        hold = holder_terms(u_vec, lam0, params, order, pc)
        gap = hold.gap
    else:
        # glued couplings are infinite: evaluate both sides on the reduced system
        gw = glue_coordinates(block.W)
        y_red = y @ gw.merge.T
        red_obj = DualObjective(_off_diagonal(gw.U), y_red, log_w, params.a / (n + 1.0), params.h, gw.field_weights)
        gam_red = _embed_reduced(gs, gw, mn.lam, n)
        Psi_emb = Psi_first_line(block, pc.P, params) + n / (n + 1.0) * red_obj.value(gam_red)
        t1 = obj.log_expect(mn.lam)
        zl = y[:, n]
        t2 = float(logsumexp(params.a * np.logaddexp(zl + params.h, -(zl + params.h)) + log_w)) / params.a
        t3 = n / (n + 1.0) * red_obj.log_expect(gam_red)
        gap = n / (n + 1.0) * (t1 + t2) - t3

    Psi_min = Psi_inf_gamma(block, pc.P, params, order, glue=True,
                            gamma0=(CouplingVector(n, lam0).zero_extend().values if (gs is None and n > 1) else None))
    strict, reason = strictness_check(u_vec, params, target=u)
    I, II, III, _ = decompose_I_II_III(block, pc.P, params)
    margins = {
        "holder": n / (n + 1.0) * (psi_inf + rs_q) - Psi_emb,
        "holder_gap": gap,
        "psi_vs_nRS": n * rs_q - psi_inf,
        "Psi_vs_nRS": n * rs_q - Psi_min.value,
        "Psi_inf_le_embedding": Psi_emb - Psi_min.value,
        "III": -abs(III),
    }
    trial = []
    for Qt in trial_Qs:
        try:
            res = psi_inf_lambda(block.U, Qt, params, glue=True)
            trial.append(res.value)
        except (NotPSD, MaxIterations) as exc:
            trial.append(f"{type(exc).__name__}: {exc}")
    chain_ok = (margins["holder"] >= -tol and gap >= -1e-9 and abs(III) <= 1e-10
                and margins["Psi_inf_le_embedding"] >= -tol and (not strict or gap > 0))
    return BoundReport(
        n=n, u=float(u), u_vec=u_vec.tolist(), q=pc.q, s=pc.s, lambda0=np.asarray(lam0).tolist(),
        psi_inf=psi_inf, rs_q=rs_q, Psi_at_embedding=Psi_emb, Psi_inf=Psi_min.value, holder_gap=gap,
        strict=strict, strict_reason=reason, margins=margins, chain_ok=bool(chain_ok), trial_psi_inf=trial,
        a_coeff_discrepancy=float(np.max(np.abs(pc.a_coeffs - pc.a_coeffs_literal))), grad_norm=mn.grad_norm,
    )


def _embed_reduced(gs_u: GluedSystem, gs_w: GluedSystem, lam_red, n):
    # map the reduced U-couplings onto the reduced W system; the extra replica gets 0
    group_w = {l: g for g, members in enumerate(gs_w.groups) for l in members}
    out = np.zeros(gs_w.n_reduced * (gs_w.n_reduced - 1) // 2)
    idx = {pair: k for k, pair in enumerate(pair_index(gs_w.n_reduced))}
    if gs_u.n_reduced > 1:
        red = CouplingVector(gs_u.n_reduced, lam_red).matrix()
        for gi, gj in pair_index(gs_u.n_reduced):
            li, lj = gs_u.groups[gi][0], gs_u.groups[gj][0]
            wi, wj = group_w[li], group_w[lj]
            if wi == wj:
                continue
            sign = gs_u.signs[li] * gs_u.signs[lj] * gs_w.signs[li] * gs_w.signs[lj]
            key = (min(wi, wj), max(wi, wj))
            out[idx[key]] += red[gi, gj] * sign
    return out
