"""Fourier-side quantities on the torus Gamma = [0, 2 pi]^d.

All integrals are normalized, i.e. (2 pi)^-d * int_Gamma, and evaluated as
means over the uniform grid t = 2 pi k / N.  For a lattice law the grid mean of
f(t)^n exp(-i t.x) equals sum_{z = x mod N} P(S_n = z), so it is exact once N
exceeds n times the support span; for |f|^m the error is the same aliasing sum.

Laws that pick a uniform axis and then a symmetric 1-D step (simple, lazy,
heavy-tailed-2d, zeta-1d) have f(t) = (1/d) sum_i g(t_i).  For those, int f^m
(m even, or g >= 0) expands multinomially into products of 1-D integrals
G_j = mean(g^j), which keeps n = 2^14 cheap in any dimension.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .report import ConvergenceWarning, QuadratureReport, SpectralAccuracyWarning
from .walks import IncrementDistribution

TRUNCATED_DEFAULT_N = 2**12
MAX_GRID_CELLS = 2**23
MAX_AXIS_POINTS = 2**24
PHI_TOL = 1e-8
# phi(m) is tiny at large m, so an absolute tolerance alone is meaningless there
PHI_RTOL = 1e-5


@dataclass
class SpectralGrid:
    dim: int
    points_per_axis: int
    values: np.ndarray  # complex f(2 pi k / N), shape (N,) * dim
    # largest n for which inversion on this grid is exact; -1 for truncated laws
    exact_for: int = -1


def _fold_1d(positions: np.ndarray, weights: np.ndarray, N: int) -> np.ndarray:
    return np.bincount(np.mod(positions, N), weights=weights, minlength=N)


def _axis_values(dist: IncrementDistribution, N: int) -> np.ndarray:
    """g(2 pi j / N) for the 1-D symmetric step law of an axis law (exact, real)."""
    m = dist.magnitude_pmf
    k = np.flatnonzero(m)
    pos = np.concatenate([k, -k[k > 0]])
    w = np.concatenate([np.where(k == 0, m[k], m[k] / 2), m[k[k > 0]] / 2])
    q = _fold_1d(pos, w, N)
    return (N * np.fft.ifft(q)).real


def spectral_grid(dist: IncrementDistribution, N: int) -> SpectralGrid:
    """f on the N^d grid, by folding the pmf mod N and one inverse FFT."""
    d = dist.dim
    if N**d > MAX_GRID_CELLS * 4:
        raise MemoryError(f"grid {N}^{d} too large")
    if dist.is_table:
        grid = np.zeros((N,) * d)
        np.add.at(grid, tuple(np.mod(dist.support, N).T), dist.probs)
        values = N**d * np.fft.ifftn(grid)
    else:
        g = _axis_values(dist, N)
        values = np.zeros((N,) * d)
        for i in range(d):
            shape = [1] * d
            shape[i] = N
            values = values + g.reshape(shape)
        values = (values / d).astype(complex)
    # the pmf sums to one, so f(0) = 1; pin it against FFT round-off
    values[(0,) * d] = 1.0
    return SpectralGrid(d, N, values, (N - 1) // dist.span if dist.bounded else -1)


def _int_power(a: np.ndarray, n: int) -> np.ndarray:
    """a**n by binary exponentiation (pointwise)."""
    result = np.ones_like(a)
    base = a.copy()
    while n:
        if n & 1:
            result = result * base
        n >>= 1
        if n:
            base = base * base
    return result


def default_grid_size(dist: IncrementDistribution, n: int) -> int:
    if not dist.bounded:
        return TRUNCATED_DEFAULT_N
    return 1 << int(n * dist.span + 1).bit_length()


def return_probabilities(dist: IncrementDistribution, n: int, N: int | None = None) -> np.ndarray:
    """P(S_n = x) for all x mod N, as an array indexed by x mod N along each axis."""
    if n < 0:
        raise ValueError("n must be >= 0")
    N = default_grid_size(dist, n) if N is None else int(N)
    exact = dist.bounded and N > n * dist.span
    if not exact:
        why = "truncated law" if not dist.bounded else f"N={N} <= n*span={n * dist.span}"
        warnings.warn(f"inversion grid not exact ({why}); result is approximate",
                      SpectralAccuracyWarning, stacklevel=2)
    f = spectral_grid(dist, N).values
    p = np.fft.fftn(_int_power(f, n)).real / N**dist.dim
    return np.clip(p, 0.0, 1.0)


def return_probability(dist: IncrementDistribution, n: int, x, N: int | None = None) -> float:
    """P(S_n = x) by Fourier inversion on the N-point torus grid."""
    x = np.atleast_1d(np.asarray(x, dtype=np.int64))
    if x.size != dist.dim:
        raise ValueError(f"x must have {dist.dim} coordinates")
    N = default_grid_size(dist, n) if N is None else int(N)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SpectralAccuracyWarning)
        p = return_probabilities(dist, n, N)
    if not (dist.bounded and N > n * dist.span):
        warnings.warn("inversion grid not exact; result is approximate",
                      SpectralAccuracyWarning, stacklevel=2)
    return float(p[tuple(np.mod(x, N))])


# --- phi(m) = (2 pi)^-d int |f|^m -----------------------------------------------

def _separable(dist: IncrementDistribution, m: int, g: np.ndarray) -> bool:
    return dist.is_axis_law and (m % 2 == 0 or g.min() >= -1e-12)


class _AxisPowers:
    """Cache of G_j = mean over the grid of g^j."""

    def __init__(self, g: np.ndarray):
        self.g = g
        with np.errstate(divide="ignore"):
            self.log_abs = np.log(np.abs(g))
        self.negative = g < 0
        self.cache: dict[int, float] = {0: 1.0}

    def get(self, js: np.ndarray) -> np.ndarray:
        missing = sorted({int(j) for j in js} - self.cache.keys())
        chunk = max(1, 2**22 // self.g.size)
        for lo in range(0, len(missing), chunk):
            jj = np.array(missing[lo:lo + chunk], dtype=float)[:, None]
            mag = np.exp(jj * self.log_abs[None, :])
            odd = (jj % 2 == 1) & self.negative[None, :]
            vals = np.where(odd, -mag, mag).mean(axis=1)
            self.cache.update(zip(missing[lo:lo + chunk], vals.tolist()))
        return np.array([self.cache[int(j)] for j in js])


def _binom_window(r: int, p: float) -> tuple[np.ndarray, np.ndarray]:
    if p >= 1.0:
        return np.array([r]), np.array([1.0])
    sd = math.sqrt(r * p * (1 - p))
    lo = max(0, int(r * p - 14 * sd - 2))
    hi = min(r, int(r * p + 14 * sd + 2))
    j = np.arange(lo, hi + 1)
    return j, stats.binom.pmf(j, r, p)


def _separable_integral(powers: _AxisPowers, d: int, m: int) -> float:
    """E over multinomial(m; 1/d,...) axis counts of prod_i G_{J_i}."""
    memo: dict[tuple[int, int], float] = {}

    def F(k: int, r: int) -> float:
        if k == 1:
            return float(powers.get(np.array([r]))[0])
        key = (k, r)
        if key not in memo:
            j, w = _binom_window(r, 1.0 / k)
            rest = np.array([F(k - 1, r - int(jj)) for jj in j]) if k > 2 else powers.get(r - j)
            memo[key] = float(np.sum(w * powers.get(j) * rest))
        return memo[key]

    return F(d, m)


def _grid_integral(dist: IncrementDistribution, m: int, N: int) -> float:
    f = np.abs(spectral_grid(dist, N).values)
    return float(np.mean(_int_power(f, m)))


def phi_report(dist: IncrementDistribution, m: int, N: int | None = None,
               tol: float = PHI_TOL, rtol: float = PHI_RTOL,
               max_doublings: int = 8) -> QuadratureReport:
    """(2 pi)^-d int_Gamma |f|^m with grid doubling.

    Converged once two successive resolutions differ by at most ``tol`` and by
    at most ``rtol`` relative to the finer value.
    """
    m = int(m)
    if m < 0:
        raise ValueError("m must be >= 0")
    if m == 0:
        return QuadratureReport(1.0, [(1, 1.0)], True, tol, "exact")
    N = default_grid_size(dist, m) if N is None else int(N)
    d = dist.dim
    use_axis = dist.is_axis_law and _separable(dist, m, _axis_values(dist, max(64, N)))
    method = "separable" if use_axis else "grid"
    limit = MAX_AXIS_POINTS if (use_axis or d == 1) else 1 << (MAX_GRID_CELLS.bit_length() - 1) // d

    def evaluate(size: int) -> float:
        if use_axis:
            return _separable_integral(_AxisPowers(_axis_values(dist, size)), d, m)
        return _grid_integral(dist, m, size)

    N = min(N, limit)
    resolutions = [(N, evaluate(N))]
    converged = False
    for _ in range(max_doublings):
        if 2 * N > limit:
            break
        N *= 2
        resolutions.append((N, evaluate(N)))
        change = abs(resolutions[-1][1] - resolutions[-2][1])
        if change <= tol and change <= rtol * abs(resolutions[-1][1]):
            converged = True
            break
    value = resolutions[-1][1]
    return QuadratureReport(value, resolutions, converged, tol, method)


def phi_integral(dist: IncrementDistribution, m: int, N: int | None = None,
                 tol: float = PHI_TOL) -> float:
    rep = phi_report(dist, m, N, tol)
    if not rep.converged:
        warnings.warn(
            f"phi({m}) did not converge: resolutions {rep.resolutions}",
            ConvergenceWarning, stacklevel=2,
        )
    return rep.value


def phi_sequence(dist: IncrementDistribution, ms: Iterable[int], tol: float = PHI_TOL) -> list[QuadratureReport]:
    return [phi_report(dist, m, tol=tol) for m in ms]


def lemma1_h_sequence(dist: IncrementDistribution, n_list: Sequence[int],
                      tol: float = PHI_TOL) -> list[float]:
    """h_n = n^{d/2} (2 pi)^-d int |f|^n for each n."""
    if not dist.genuinely_d_dimensional:
        raise ValueError("lemma1_h_sequence needs a genuinely d-dimensional law")
    return [n ** (dist.dim / 2) * phi_integral(dist, n, tol=tol) for n in n_list]
