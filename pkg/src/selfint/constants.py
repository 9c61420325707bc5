"""Asymptotic constants and growth scales for Var(L_n(alpha)).

kappa, kappa1 and kappa2 enter the leading-order variance in d = 2 and d = 3.
Each quadrature returns a :class:`QuadratureReport` holding one value per
requested accuracy level, so convergence can be read off directly.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .report import NonConvergenceError, QuadratureReport
from .walks import IncrementDistribution

KAPPA_TOL = 1e-8
KAPPA2_TOL = 1e-6
# absolute accuracies requested from the nested quadratures, coarse to fine
KAPPA_LEVELS = (1e-9, 1e-11, 1e-13)
# (quadrature accuracy, Gauss-Legendre nodes of the innermost integral)
KAPPA2_LEVELS = ((1e-7, 32), (1e-9, 64), (1e-11, 128))
A_EDGE = 1e-6


# --- covariance ----------------------------------------------------------------

@dataclass(frozen=True)
class CovarianceMatrix:
    """Sigma in the expansion f(t) = 1 - <Sigma t, t> + o(|t|^2)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise ValueError("Sigma must be square")
        if np.max(np.abs(m - m.T)) > 1e-14:
            raise ValueError("Sigma must be symmetric")
        if np.linalg.eigvalsh(m).min() <= 0:
            raise ValueError("Sigma must be positive definite")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def scaled_identity(cls, d: int, c: float) -> "CovarianceMatrix":
        return cls(c * np.eye(d))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))


def sigma_from_distribution(dist: IncrementDistribution) -> CovarianceMatrix:
    """Half the second-moment matrix E[X X^T] (the expansion convention)."""
    return CovarianceMatrix(np.asarray(dist.second_moment(), dtype=float) / 2)


def _as_sigma(sigma) -> CovarianceMatrix:
    return sigma if isinstance(sigma, CovarianceMatrix) else CovarianceMatrix(sigma)


# --- kappa ----------------------------------------------------------------------

def kappa_integrand(r, s):
    """[(1+r)(1+s) sqrt((1+r+s)^2 - 4rs)]^-1, written with (1+r-s)^2 + 4s under the root."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    return 1.0 / ((1 + r) * (1 + s) * np.sqrt((1 + r - s) ** 2 + 4 * s))


def _kappa_mapped(u: float, w: float) -> float:
    # r = u/(1-u), dr = du/(1-u)^2, and likewise for s
    r = u / (1 - u)
    s = w / (1 - w)
    return float(kappa_integrand(r, s)) / ((1 - u) ** 2 * (1 - w) ** 2)


def _kappa_double(eps: float) -> float:
    def inner(u: float) -> float:
        # the integrand peaks along the diagonal s = r, so split there
        lo, _ = integrate.quad(lambda w: _kappa_mapped(u, w), 0, u, epsabs=eps, epsrel=eps, limit=200)
        hi, _ = integrate.quad(lambda w: _kappa_mapped(u, w), u, 1, epsabs=eps, epsrel=eps, limit=200)
        return lo + hi

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, _ = integrate.quad(inner, 0, 1, epsabs=eps, epsrel=eps, limit=200)
    return value


def _report(values: list[tuple[float, float]], tol: float, method: str) -> QuadratureReport:
    rep = QuadratureReport(values[-1][1], list(values), False, tol, method)
    rep.converged = len(values) >= 3 and rep.spread(3) < tol and rep.monotone
    return rep


def kappa(levels=KAPPA_LEVELS, tol: float = KAPPA_TOL) -> QuadratureReport:
    """kappa = int int [(1+r)(1+s) sqrt((1+r+s)^2 - 4rs)]^-1 dr ds - pi^2/6.

    Resolutions are keyed by -log10 of the requested quadrature accuracy.
    """
    vals = [(round(-math.log10(e)), _kappa_double(e) - math.pi**2 / 6) for e in levels]
    return _report(vals, tol, "nested-quad u/(1-u)")


def kappa_tan(eps: float = 1e-12) -> float:
    """Same constant through r = tan(a), s = tan(b) on [0, pi/2]^2."""

    def f(b: float, a: float) -> float:
        r, s = math.tan(a), math.tan(b)
        return float(kappa_integrand(r, s)) / (math.cos(a) ** 2 * math.cos(b) ** 2)

    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        # split along the diagonal b = a, where the integrand peaks
        for lower, upper in ((lambda a: 0.0, lambda a: a), (lambda a: a, lambda a: math.pi / 2)):
            part, _ = integrate.dblquad(f, 0, math.pi / 2, lower, upper, epsabs=eps, epsrel=eps)
            total += part
    return total - math.pi**2 / 6


@dataclass
class MonteCarloEstimate:
    value: float
    stderr: float
    samples: int

    def agrees_with(self, x: float, k: float = 4.0) -> bool:
        return abs(self.value - x) <= k * self.stderr


def _sample_half_line(rng: np.random.Generator, size: int) -> np.ndarray:
    # density q(r) = (1/2)(1+r)^(-3/2) by inversion
    return (1.0 - rng.random(size)) ** -2 - 1.0


def kappa_monte_carlo(samples: int = 10**8, seed: int = 0, chunk: int = 5 * 10**6) -> MonteCarloEstimate:
    """Importance-sampled estimate of kappa with independent r, s ~ q."""
    rng = np.random.default_rng(seed)
    total = total_sq = 0.0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        r = _sample_half_line(rng, m)
        s = _sample_half_line(rng, m)
        q = 0.25 * ((1 + r) * (1 + s)) ** -1.5
        w = kappa_integrand(r, s) / q
        total += math.fsum(w)
        total_sq += math.fsum(w * w)
        done += m
    mean = total / samples
    var = (total_sq / samples - mean**2) * samples / (samples - 1)
    return MonteCarloEstimate(mean - math.pi**2 / 6, math.sqrt(var / samples), samples)


# --- kappa1, kappa2 (d = 3) ------------------------------------------------------

def kappa1(sigma) -> float:
    """2 (2 pi)^-4 |Sigma|^-1 (pi/2)."""
    sigma = _as_sigma(sigma)
    if sigma.dim != 3:
        raise ValueError("kappa1 is defined for d = 3")
    return math.pi * (2 * math.pi) ** -4 / sigma.det


def angle_cosine(theta1, theta2, phi1, phi2):
    """Cosine of the angle between two unit vectors in spherical coordinates."""
    return np.cos(phi1 - phi2) * np.sin(theta1) * np.sin(theta2) + np.cos(theta1) * np.cos(theta2)


def g_angle(A):
    """arccos(A)/sqrt(1-A^2) - pi/2, with series forms within 1e-6 of +-1."""
    A = np.asarray(A, dtype=float)
    out = np.empty_like(A)
    top = A > 1 - A_EDGE
    bottom = A < -1 + A_EDGE
    mid = ~(top | bottom)
    out[mid] = np.arccos(A[mid]) / np.sqrt(1 - A[mid] ** 2) - math.pi / 2
    e = 1 - A[top]
    # arccos(1-e)/sqrt(e(2-e)) = 1 + e/3 + 2e^2/15 + O(e^3)
    out[top] = 1 + e / 3 + 2 * e**2 / 15 - math.pi / 2
    h = 1 + A[bottom]
    # arccos(-1+h) = pi - arccos(1-h); g(-1) is +inf
    ratio = 1 + h / 3 + 2 * h**2 / 15
    with np.errstate(divide="ignore"):
        out[bottom] = (math.pi / np.sqrt(h * (2 - h)) - ratio) - math.pi / 2
    return out if out.ndim else float(out)


def _g_root(eta: np.ndarray) -> np.ndarray:
    """g(A) sqrt(1 + A) as a function of eta = 1 + A, bounded on [0, 2).

    Uses arccos(-1 + eta) = pi - 2 asin(sqrt(eta/2)), which stays exact as
    eta -> 0 where the direct form divides zero by zero.
    """
    eta = np.asarray(eta, dtype=float)
    out = np.empty_like(eta)
    low = eta < 1.5
    e = eta[low]
    out[low] = (math.pi - 2 * np.arcsin(np.sqrt(e / 2))) / np.sqrt(2 - e) - math.pi / 2 * np.sqrt(e)
    e = eta[~low]
    out[~low] = g_angle(np.minimum(e - 1, 1.0)) * np.sqrt(e)
    return out


def _psi_inner(c1: float, c2: float, x: np.ndarray, w: np.ndarray) -> float:
    """int_0^{2 pi} g(A) dpsi with A = b + a cos(psi), by Gauss-Legendre nodes (x, w).

    Writing t = pi - psi, 1 + A = eps + 2a sin^2(t/2) with eps = 1 + cos(theta1 + theta2).
    On t in [0, pi/2] the substitution sin(t/2) = sqrt(eps/2a) sinh(v) turns
    dt / sqrt(1 + A) into a smooth measure, so the sqrt(1 + A) carried by
    _g_root leaves a smooth integrand in v.  t in [pi/2, pi] is smooth as is.
    """
    th1, th2 = math.acos(c1), math.acos(c2)
    a = math.sin(th1) * math.sin(th2)
    b = c1 * c2
    if a < 1e-300:
        return 2 * math.pi * float(g_angle(b))
    t = 0.75 * math.pi + 0.25 * math.pi * x
    far = 0.25 * math.pi * np.dot(w, g_angle(np.clip(b - a * np.cos(t), -1, 1)))
    eps = max(2 * math.cos((th1 + th2) / 2) ** 2, 1e-300)
    c = math.sqrt(eps / (2 * a))
    vmax = math.asinh(math.sin(math.pi / 4) / c)
    v = 0.5 * vmax * (x + 1)
    ch = np.cosh(v)
    s = c * np.sinh(v)
    measure = 2 / (math.sqrt(2 * a) * np.sqrt(1 - s * s))
    near = 0.5 * vmax * np.dot(w, _g_root(eps * ch * ch) * measure)
    return 2 * (near + far)


def _kappa2_raw(eps: float, nodes: int) -> float:
    """Angular integral over (c1, c2, psi) with the 2 pi Jacobian of the reduction.

    The psi integral grows like log 1/|c1 + c2| near c2 = -c1; grading
    c2 = -c1 -+ L y^3 on either side removes that for the adaptive c2 quadrature.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)

    def middle(c1: float) -> float:
        total = 0.0
        for length, sign in ((1 - c1, -1.0), (1 + c1, 1.0)):
            if length <= 0:
                continue
            f = lambda y: (_psi_inner(c1, min(1.0, max(-1.0, -c1 + sign * length * y**3)), x, w)
                           * 3 * length * y * y)
            total += integrate.quad(f, 0, 1, epsabs=eps, epsrel=eps, limit=200)[0]
        return total

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(middle, -1, 1, epsabs=eps, epsrel=eps, limit=200)
    return 2 * math.pi * val


def kappa2_prefactor(sigma) -> float:
    sigma = _as_sigma(sigma)
    if sigma.dim != 3:
        raise ValueError("kappa2 is defined for d = 3")
    return 0.5 * (2 * math.pi) ** -6 / sigma.det


def kappa2(sigma, levels=KAPPA2_LEVELS, tol: float = KAPPA2_TOL) -> QuadratureReport:
    """(1/2)(2 pi)^-6 |Sigma|^-1 int g(A) sin(theta1) sin(theta2) over two spheres.

    The integrand depends on phi1 - phi2 only, leaving a 3-D integral in
    (cos theta1, cos theta2, psi).  Resolutions are keyed by the innermost node count.
    """
    pre = kappa2_prefactor(sigma)
    vals = [(nodes, pre * _kappa2_raw(e, nodes)) for e, nodes in levels]
    return _report(vals, tol, "nested-quad 3d")


def kappa2_closed_form(sigma) -> float:
    """The angular integral is 8 pi^2 (pi^2/2 - pi) by rotation invariance."""
    return kappa2_prefactor(sigma) * 8 * math.pi**2 * (math.pi**2 / 2 - math.pi)


def kappa2_monte_carlo(sigma, samples: int = 10**8, seed: int = 0,
                       chunk: int = 5 * 10**6) -> MonteCarloEstimate:
    """Plain Monte Carlo over the 4 angles; theta via uniform cosines."""
    pre = kappa2_prefactor(sigma)
    rng = np.random.default_rng(seed)
    total = total_sq = 0.0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        c = rng.uniform(-1, 1, (2, m))
        ph = rng.uniform(0, 2 * math.pi, (2, m))
        A = np.cos(ph[0] - ph[1]) * np.sqrt((1 - c[0] ** 2) * (1 - c[1] ** 2)) + c[0] * c[1]
        w = g_angle(np.clip(A, -1, 1))
        total += math.fsum(w)
        total_sq += math.fsum(w * w)
        done += m
    mean = total / samples
    var = (total_sq / samples - mean**2) * samples / (samples - 1)
    volume = (4 * math.pi) ** 2
    return MonteCarloEstimate(pre * volume * mean, pre * volume * math.sqrt(var / samples), samples)


# --- leading coefficients and growth scales ---------------------------------------

def theorem3_prefactor(d: int, alpha: int, gamma: float | None = None, sigma=None,
                       kappa_value: float | None = None) -> float:
    """Leading coefficient of Var(L_n(alpha)) relative to its growth scale.

    d = 1 uses gamma from f(t) = 1 - gamma |t| + o(|t|); d = 2, 3 use Sigma.
    """
    if alpha < 2 or int(alpha) != alpha:
        raise ValueError("alpha must be an integer >= 2")
    comb = math.factorial(alpha) ** 2 * (alpha - 1) ** 2
    if d == 1:
        if gamma is None or gamma <= 0:
            raise ValueError("d = 1 needs gamma > 0")
        return (math.pi**2 + 6) / 12 * comb / (gamma * math.pi) ** (2 * alpha - 2)
    if d == 2:
        sigma = _as_sigma(sigma)
        if kappa_value is None:
            rep = kappa()
            if not rep.converged:
                raise NonConvergenceError(f"kappa: {rep.resolution_string()}")
            kappa_value = rep.value
        return comb / (2 * (2 * math.pi * math.sqrt(sigma.det)) ** (2 * alpha - 2)) * (kappa_value + 1)
    if d == 3:
        if alpha != 2:
            raise ValueError("d = 3 is only covered for alpha = 2")
        rep = kappa2(sigma)
        if not rep.converged:
            raise NonConvergenceError(f"kappa2: {rep.resolution_string()}")
        return kappa1(sigma) + rep.value
    raise ValueError(f"no leading coefficient for d = {d}")


def v_growth(d: int, alpha: int, n: float) -> float:
    """Reference growth scale of Var(L_n(alpha)) for the simple walk."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if d < 1 or alpha < 2:
        raise ValueError("need d >= 1 and alpha >= 2")
    if d == 1:
        return float(n) ** (1 + alpha)
    if d == 2:
        return float(n) ** 2 * math.log(n) ** (2 * alpha - 4)
    if d == 3:
        return n * math.log(n)
    return float(n)
