"""Variance upper-bound functionals for L_n(alpha), evaluated as exact finite sums.

All bounds are reported with the multiplicative constant K set to 1; only
their growth in n carries meaning.  Sequences phi are indexed from 0 and
power laws use phi(m) = T (m v 1)^-r.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class BoundSpecError(ValueError):
    pass


def power_phi(r: float, length: int, T: float = 1.0) -> np.ndarray:
    m = np.arange(length, dtype=float)
    return T * np.maximum(m, 1.0) ** (-r)


class PsiFromPhi:
    """psi(u, v) = phi(floor(u/2)) min(u, v) / u, with psi(0, v) = 0.

    Vectorized over numpy arrays.  Sub-additive in v with A_psi = 1.
    """

    A_psi = 1.0

    def __init__(self, phi: Sequence[float]):
        self.phi = np.asarray(phi, dtype=float)

    def __call__(self, u, v):
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v)
        safe = np.maximum(u, 1)
        val = self.phi[safe // 2] * np.minimum(safe, v) / safe
        return np.where(u > 0, val, 0.0)


def psi_from_phi(phi: Sequence[float], u: int, v: int) -> float:
    if v < 0:
        raise ValueError("v must be >= 0")
    if u == 0:
        warnings.warn("psi_from_phi(u=0): using the convention psi = 0", RuntimeWarning, stacklevel=2)
        return 0.0
    if u < 0:
        raise ValueError("u must be >= 1")
    return float(phi[u // 2]) * min(u, v) / u


def power_psi(r: float, T: float = 1.0) -> Callable:
    """psi(m, k) = T (m v 1)^{-r-1} min(k, m), the companion of phi = T m^-r."""

    def psi(u, v):
        u = np.asarray(u, dtype=float)
        return T * np.maximum(u, 1.0) ** (-r - 1) * np.minimum(u, v)

    psi.A_psi = 1.0
    return psi


@dataclass
class BoundSpec:
    phi: np.ndarray
    psi: Callable
    alpha: int
    n: int
    A_psi: float = 1.0
    probes: int = 100
    seed: int = 0

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)

    def validate(self) -> "BoundSpec":
        phi, n = self.phi, self.n
        if self.alpha < 2 or int(self.alpha) != self.alpha:
            raise BoundSpecError("alpha must be an integer >= 2")
        if n < 1:
            raise BoundSpecError("n must be >= 1")
        if phi.size < n:
            raise BoundSpecError(f"phi has {phi.size} entries, need at least n = {n}")
        if np.any(phi < 0) or np.any(~np.isfinite(phi)):
            raise BoundSpecError("phi must be finite and nonnegative")
        if np.any(np.diff(phi) > 1e-15 * np.abs(phi[:-1])):
            raise BoundSpecError("phi must be non-increasing")
        if self.A_psi < 1:
            raise BoundSpecError("A_psi must be >= 1")
        rng = np.random.default_rng(self.seed)
        top = max(2 * n, 2)
        u = rng.integers(1, top + 1, self.probes)
        v = rng.integers(0, top + 1, self.probes)
        w = rng.integers(0, top + 1, self.probes)
        base = np.asarray(self.psi(u, v), dtype=float)
        if np.any(base < 0):
            raise BoundSpecError("psi must be nonnegative")
        slack = 1e-12 * np.maximum(np.abs(base), 1e-300)
        if np.any(np.asarray(self.psi(u + 1, v)) > base + slack):
            raise BoundSpecError("psi must be non-increasing in u")
        if np.any(np.asarray(self.psi(u, v + 1)) < base - slack):
            raise BoundSpecError("psi must be non-decreasing in v")
        lhs = np.asarray(self.psi(u, v + w))
        rhs = self.A_psi * (base + np.asarray(self.psi(u, w)))
        if np.any(lhs > rhs * (1 + 1e-12) + 1e-300):
            raise BoundSpecError(f"psi is not sub-additive in v with A_psi = {self.A_psi}")
        return self


@dataclass
class Prop1Terms:
    prefix: float  # (sum_{i<n} phi(i))^(2 alpha - 4)
    phi_phi: float  # sum_{i,j,k} phi(j v i) phi(k v i)
    phi_psi: float  # sum_{i,j,k} phi(j) psi(i + k, j)
    n: int

    @property
    def value(self) -> float:
        return self.n * self.prefix * (self.phi_phi + self.phi_psi)


def prop1_terms(spec: BoundSpec, validate: bool = True) -> Prop1Terms:
    if validate:
        spec.validate()
    n = spec.n
    p = spec.phi[:n]
    G = math.fsum(p)
    suffix = np.cumsum(p[::-1])[::-1]
    i = np.arange(n)
    # sum_j phi(j v i) = i phi(i) + sum_{j >= i} phi(j)
    phi_phi = float(np.sum((i * p + suffix) ** 2))
    m = np.arange(2 * n - 1)
    cnt = np.minimum(m + 1, 2 * n - 1 - m).astype(float)
    if isinstance(spec.psi, PsiFromPhi):
        phi_psi = _phi_psi_from_phi(spec.psi.phi, p, cnt)
    else:
        phi_psi = 0.0
        chunk = max(1, 2**22 // m.size)
        for lo in range(0, n, chunk):
            j = np.arange(lo, min(n, lo + chunk))
            inner = np.asarray(spec.psi(m[None, :], j[:, None]), dtype=float) @ cnt
            phi_psi += float(np.sum(p[j] * inner))
    return Prop1Terms(G ** (2 * spec.alpha - 4), phi_phi, phi_psi, n)


def _phi_psi_from_phi(phi_full: np.ndarray, p: np.ndarray, cnt: np.ndarray) -> float:
    """O(n) form of sum_j phi(j) sum_m cnt(m) psi(m, j) for psi = PsiFromPhi."""
    n = p.size
    m = np.arange(cnt.size)
    a = np.zeros(cnt.size)
    a[1:] = cnt[1:] * phi_full[m[1:] // 2]
    b = np.zeros(cnt.size)
    b[1:] = a[1:] / m[1:]
    prefix_a = np.cumsum(a)  # sum_{m <= j} a_m
    suffix_b = np.cumsum(b[::-1])[::-1]  # sum_{m >= j} b_m
    j = np.arange(n)
    tail = np.append(suffix_b, 0.0)[j + 1]
    inner = prefix_a[j] + j * tail
    return float(np.sum(p * inner))


def prop1_bound(spec: BoundSpec) -> float:
    """n G^(2a-4) sum_{i,j,k<n} [phi(j v i) phi(k v i) + phi(j) psi(i+k, j)], K = 1."""
    return prop1_terms(spec).value


def _need(phi: np.ndarray, length: int, what: str) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.size < length:
        raise BoundSpecError(f"{what}: phi has {phi.size} entries, need {length}")
    return phi


def prop2_delta(phi: Sequence[float], alpha: int, n: int) -> float:
    """Delta_n(alpha, phi) = n (sum_{i<n} phi([i/2]))^(2a-4) sum_{j<=n} j phi([j/2]) sum_{k=j}^{2n} phi([k/2])."""
    phi = _need(phi, n + 1, "prop2_delta")
    half = phi[np.arange(2 * n + 1) // 2]
    G = math.fsum(half[:n])
    suffix = np.cumsum(half[::-1])[::-1]
    j = np.arange(n + 1)
    return n * G ** (2 * alpha - 4) * float(np.sum(j * half[j] * suffix[j]))


def prop4_bound(phi: Sequence[float], alpha: int, n: int) -> float:
    """n (sum_{i<n} phi(i))^(2a-4) sum_{j<=n} j phi(j) sum_{k=j}^{[a n]+1} phi([k/a])."""
    phi = _need(phi, n + 1, "prop4_bound")
    top = alpha * n + 1
    q = phi[np.arange(top + 1) // alpha]
    G = math.fsum(phi[:n])
    suffix = np.cumsum(q[::-1])[::-1]
    j = np.arange(n + 1)
    return n * G ** (2 * alpha - 4) * float(np.sum(j * phi[j] * suffix[j]))


# --- growth-rate fitting ----------------------------------------------------------

MODELS = ("pure-power", "power-times-log-power")


@dataclass
class RateFit:
    model: str
    a: float
    b: float
    c: float
    se_a: float
    se_b: float
    residuals: np.ndarray = field(repr=False)
    n: np.ndarray = field(repr=False)


def rate_fit(values, model: str = "pure-power", sigma=None, min_points: int = 6) -> RateFit:
    """Least squares fit of log v = a log n (+ b log log n) + c.

    ``sigma`` (optional) gives absolute standard errors of log v per point; the
    fit is then weighted and the parameter errors follow from sigma alone.
    Otherwise errors come from the residual scatter.
    """
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}")
    pts = sorted((float(n), float(v)) for n, v in values)
    if len(pts) < min_points:
        raise ValueError(f"need at least {min_points} points, got {len(pts)}")
    n = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if np.any(v <= 0) or np.any(n <= 1):
        raise ValueError("rate_fit needs n > 1 and positive values")
    cols = [np.log(n)]
    if model == "power-times-log-power":
        cols.append(np.log(np.log(n)))
    cols.append(np.ones_like(n))
    X = np.column_stack(cols)
    y = np.log(v)
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    Xw = X * w[:, None]
    if np.linalg.matrix_rank(Xw) < X.shape[1] or np.linalg.cond(Xw) > 1e12:
        raise np.linalg.LinAlgError("degenerate design matrix: widen the n range")
    coef, *_ = np.linalg.lstsq(Xw, y * w, rcond=None)
    resid = y - X @ coef
    cov = np.linalg.inv(Xw.T @ Xw)
    if sigma is None:
        dof = len(y) - X.shape[1]
        cov = cov * (float(resid @ resid) / dof if dof > 0 else 0.0)
    se = np.sqrt(np.clip(np.diag(cov), 0, None))
    if model == "pure-power":
        return RateFit(model, coef[0], 0.0, coef[1], se[0], 0.0, resid, n)
    return RateFit(model, coef[0], coef[1], coef[2], se[0], se[1], resid, n)


def log_linearity(values) -> float:
    """Max relative residual of the straight-line fit of v/n against log n."""
    pts = sorted(values)
    n = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts], dtype=float) / n
    X = np.column_stack([np.log(n), np.ones_like(n)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return float(np.max(np.abs(X @ coef - y) / np.abs(y)))
