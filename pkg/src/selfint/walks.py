"""Increment distributions on Z^d: construction, sampling, characteristic functions.

Two internal representations are used:

* table laws carry an explicit finite support (``support``, ``probs``);
* axis laws are "pick one of the 2d unit directions uniformly, then a
  magnitude from a 1-D pmf" and carry ``magnitude_pmf`` (m_0, ..., m_R).

The simple and lazy walks carry both, so spectral code can use the separable
form while sampling stays on the small table.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import integrate, special

MAX_DIM = 5
DEFAULT_RADIUS = 10**6
KINDS = (
    "simple-symmetric",
    "lazy-simple",
    "finite-table",
    "biased-1d",
    "zeta-1d",
    "heavy-tailed-2d",
    "symmetrized",
)
# largest dense grid symmetrize() will build
SYMMETRIZE_MAX_CELLS = 2**24


class DistributionError(ValueError):
    """Invalid distribution kind or parameters."""


class RngStream:
    """A reproducible random stream keyed by ``(seed, index)``.

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys, so
    distinct indices give independent streams and the same pair always
    reproduces the same sequence.  ``substream(j)`` derives a further child
    keyed by ``(index, j)``, used e.g. for scenery draws.
    """

    def __init__(self, seed: int, index: int = 0, key: tuple[int, ...] = ()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        if index < 0:
            raise ValueError("stream index must be nonnegative")
        self.seed = seed
        self.index = int(index)
        self.key = tuple(int(k) for k in key)
        seq = np.random.SeedSequence(entropy=seed, spawn_key=(self.index, *self.key))
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def substream(self, j: int) -> "RngStream":
        return RngStream(self.seed, self.index, (*self.key, j))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, index={self.index}, key={self.key})"


@dataclass(frozen=True, eq=False)
class IncrementDistribution:
    kind: str
    dim: int
    params: Mapping[str, Any]
    support: np.ndarray | None = None
    probs: np.ndarray | None = None
    magnitude_pmf: np.ndarray | None = None
    truncation_radius: int | None = None
    # mass of the untruncated law beyond the radius (folded onto the radius shell)
    tail_mass: float = 0.0
    finite_variance: bool = True
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def spec(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @property
    def is_table(self) -> bool:
        return self.support is not None

    @property
    def is_axis_law(self) -> bool:
        return self.magnitude_pmf is not None

    @property
    def bounded(self) -> bool:
        return self.truncation_radius is None

    @property
    def span(self) -> int:
        """Largest per-axis width (max - min) of the support."""
        if self.is_table:
            return int((self.support.max(axis=0) - self.support.min(axis=0)).max())
        nz = np.flatnonzero(self.magnitude_pmf)
        return 2 * int(nz[-1])

    @property
    def genuinely_d_dimensional(self) -> bool:
        if "genuine" not in self._cache:
            if self.is_axis_law:
                ok = bool(np.any(self.magnitude_pmf[1:] > 0))
            else:
                diffs = self.support - self.support[0]
                ok = int(np.linalg.matrix_rank(diffs.astype(float))) == self.dim
            self._cache["genuine"] = ok
        return self._cache["genuine"]

    def mean(self) -> np.ndarray:
        if self.is_table:
            return self.probs @ self.support
        return np.zeros(self.dim)

    def second_moment(self) -> np.ndarray:
        """E[X X^T] of the realized (possibly truncated) law."""
        if self.is_table:
            x = self.support.astype(float)
            return (x * self.probs[:, None]).T @ x
        k = np.arange(self.magnitude_pmf.size, dtype=float)
        return np.eye(self.dim) * float(np.sum(self.magnitude_pmf * k * k)) / self.dim

    def tail_probability(self, radius: int) -> float:
        """P(|X| >= radius) for axis laws, summed from the far end."""
        if not self.is_axis_law:
            norms = np.abs(self.support).max(axis=1)
            return float(self.probs[norms >= radius].sum())
        sf = self._survival()
        return float(sf[radius]) if radius < sf.size else 0.0

    def _survival(self) -> np.ndarray:
        # sf[k] = P(M >= k); summed from the tail so small values keep precision
        if "sf" not in self._cache:
            m = self.magnitude_pmf
            sf = np.cumsum(m[::-1])[::-1].copy()
            sf /= sf[0]
            self._cache["sf"] = sf
            self._cache["neg_sf"] = -sf[1:]
        return self._cache["sf"]

    def _table_cdf(self) -> np.ndarray:
        if "cdf" not in self._cache:
            cdf = np.cumsum(self.probs)
            cdf[-1] = 1.0
            self._cache["cdf"] = cdf
        return self._cache["cdf"]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` increments as an int64 array of shape (size, dim).

        Draws consume uniforms in order, so the first m rows of a size-n call
        equal a size-m call from the same generator state.
        """
        if self.is_table:
            u = rng.random(size)
            idx = np.searchsorted(self._table_cdf(), u, side="right")
            return self.support[idx]
        self._survival()
        u = rng.random((size, 2))
        # inversion on the survival function: M = #{k >= 1 : sf[k] >= 1 - u}
        mag = np.searchsorted(self._cache["neg_sf"], u[:, 0] - 1.0, side="right")
        direction = (u[:, 1] * (2 * self.dim)).astype(np.int64)
        axis, negative = np.divmod(direction, 2)
        out = np.zeros((size, self.dim), dtype=np.int64)
        out[np.arange(size), axis] = np.where(negative == 1, -mag, mag)
        return out

    def characteristic_function(self, t) -> np.ndarray | complex:
        """E exp(i t.X); ``t`` has trailing dimension ``dim`` (or is scalar for d=1)."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0 or (t.ndim == 1 and t.shape[0] == self.dim)
        if self.dim == 1 and (t.ndim == 0 or t.shape[-1] != 1):
            t = t[..., None]
        if t.shape[-1] != self.dim:
            raise ValueError(f"t must have trailing dimension {self.dim}")
        if self.is_table:
            phase = t @ self.support.T.astype(float)
            val = np.exp(1j * phase) @ self.probs
        else:
            g = _cosine_series(self.magnitude_pmf, t.reshape(-1))
            val = (g.reshape(t.shape).sum(axis=-1) / self.dim).astype(complex)
        # f(0) = 1 exactly, whatever the rounding of the probabilities
        val = np.where(np.all(t == 0, axis=-1), 1.0 + 0j, val)
        if scalar:
            return complex(np.asarray(val).reshape(-1)[0])
        return val

    def axis_characteristic(self, s) -> np.ndarray:
        """g(s) = E cos(s M) for the 1-D magnitude law of an axis law."""
        if not self.is_axis_law:
            raise ValueError("not an axis law")
        s = np.asarray(s, dtype=float)
        return _cosine_series(self.magnitude_pmf, s.reshape(-1)).reshape(s.shape)

    def table(self, max_entries: int = 2**22) -> tuple[np.ndarray, np.ndarray]:
        """Explicit (support, probs), materializing axis laws if small enough."""
        if self.is_table:
            return self.support, self.probs
        nz = np.flatnonzero(self.magnitude_pmf)
        n_entries = sum(1 if k == 0 else 2 * self.dim for k in nz)
        if n_entries > max_entries:
            raise DistributionError(
                f"{self.kind} has {n_entries} support points; lower the truncation radius"
            )
        sites, probs = [], []
        for k in nz:
            mk = self.magnitude_pmf[k]
            if k == 0:
                sites.append(np.zeros(self.dim, dtype=np.int64))
                probs.append(mk)
                continue
            for axis in range(self.dim):
                for sign in (1, -1):
                    x = np.zeros(self.dim, dtype=np.int64)
                    x[axis] = sign * k
                    sites.append(x)
                    probs.append(mk / (2 * self.dim))
        return np.array(sites), np.array(probs)


def _cosine_series(m: np.ndarray, s: np.ndarray) -> np.ndarray:
    """sum_k m_k cos(k s), chunked over k to bound memory."""
    nz = np.flatnonzero(m)
    k = nz.astype(float)
    w = m[nz]
    out = np.zeros(s.size)
    chunk = max(1, 2**22 // max(1, s.size))
    for lo in range(0, k.size, chunk):
        out += np.cos(np.outer(s, k[lo:lo + chunk])) @ w[lo:lo + chunk]
    return out


# --- construction -------------------------------------------------------------

_ALIAS = re.compile(r"^(srw|lazy)([1-5])d$")


def make_distribution(spec) -> IncrementDistribution:
    """Build a distribution from ``{"kind": ..., "params": {...}}`` or an alias.

    Aliases: ``srw<d>d`` (simple-symmetric) and ``lazy<d>d`` (lazy-simple),
    e.g. ``"srw1d"``.
    """
    if isinstance(spec, IncrementDistribution):
        return spec
    if isinstance(spec, str):
        m = _ALIAS.match(spec)
        if not m:
            raise DistributionError(f"unknown distribution alias {spec!r}")
        kind = "simple-symmetric" if m.group(1) == "srw" else "lazy-simple"
        spec = {"kind": kind, "params": {"d": int(m.group(2))}}
    if not isinstance(spec, Mapping) or "kind" not in spec:
        raise DistributionError(f"distribution spec must have a 'kind': {spec!r}")
    kind = spec["kind"]
    params = dict(spec.get("params", {}))
    builders = {
        "simple-symmetric": _simple,
        "lazy-simple": _lazy,
        "finite-table": _finite_table,
        "biased-1d": _biased,
        "zeta-1d": _zeta,
        "heavy-tailed-2d": _heavy,
        "symmetrized": lambda p: symmetrize(make_distribution(p["of"])),
    }
    if kind not in builders:
        raise DistributionError(f"unknown distribution kind {kind!r}")
    try:
        return builders[kind](params)
    except KeyError as exc:
        raise DistributionError(f"{kind}: missing parameter {exc}") from None


def _check_dim(d) -> int:
    if int(d) != d or not 1 <= d <= MAX_DIM:
        raise DistributionError(f"dimension must be an integer in 1..{MAX_DIM}, got {d}")
    return int(d)


def _table_law(kind, params, sites, probs, **kw) -> IncrementDistribution:
    sites = np.asarray(sites, dtype=np.int64)
    if sites.ndim == 1:
        sites = sites[:, None]
    probs = np.asarray(probs, dtype=float)
    if probs.size == 0 or np.any(~np.isfinite(probs)) or np.any(probs < 0):
        raise DistributionError("table probabilities must be finite and nonnegative")
    total = math.fsum(probs)
    if total <= 0:
        raise DistributionError("table has zero total mass")
    merged: dict[tuple, float] = {}
    for x, p in zip(map(tuple, sites.tolist()), probs):
        if p > 0:
            merged[x] = merged.get(x, 0.0) + p / total
    keys = sorted(merged)
    support = np.array(keys, dtype=np.int64).reshape(len(keys), sites.shape[1])
    pr = np.array([merged[k] for k in keys])
    _check_dim(support.shape[1])
    return IncrementDistribution(kind, support.shape[1], params, support=support, probs=pr, **kw)


def _simple(params) -> IncrementDistribution:
    d = _check_dim(params.get("d", 1))
    eye = np.eye(d, dtype=np.int64)
    sites = np.concatenate([eye, -eye])
    mag = np.array([0.0, 1.0])
    return _table_law("simple-symmetric", {"d": d}, sites, np.full(2 * d, 1 / (2 * d)),
                      magnitude_pmf=mag)


def _lazy(params) -> IncrementDistribution:
    d = _check_dim(params.get("d", 1))
    hold = float(params.get("hold", 0.5))
    if not 0 <= hold < 1:
        raise DistributionError("hold probability must lie in [0, 1)")
    eye = np.eye(d, dtype=np.int64)
    sites = np.concatenate([np.zeros((1, d), dtype=np.int64), eye, -eye])
    probs = np.concatenate([[hold], np.full(2 * d, (1 - hold) / (2 * d))])
    return _table_law("lazy-simple", {"d": d, "hold": hold}, sites, probs,
                      magnitude_pmf=np.array([hold, 1 - hold]))


def _finite_table(params) -> IncrementDistribution:
    rows = params["table"]
    if not rows:
        raise DistributionError("empty table")
    sites = [np.atleast_1d(np.asarray(site, dtype=np.int64)) for site, _ in rows]
    if len({s.size for s in sites}) != 1:
        raise DistributionError("table sites have inconsistent dimensions")
    probs = [float(p) for _, p in rows]
    clean = {"table": [[s.tolist() if s.size > 1 else int(s[0]), p] for s, p in zip(sites, probs)]}
    return _table_law("finite-table", clean, np.array(sites), probs)


def _biased(params) -> IncrementDistribution:
    p = float(params["p"])
    if not 0 < p < 1:
        raise DistributionError(f"drift probability p must lie in (0, 1), got {p}")
    return _table_law("biased-1d", {"p": p}, [[1], [-1]], [p, 1 - p])


def _radius(params) -> int:
    r = params.get("radius", DEFAULT_RADIUS)
    if int(r) != r or r < 4:
        raise DistributionError(f"truncation radius must be an integer >= 4, got {r}")
    return int(r)


def _zeta(params) -> IncrementDistribution:
    """p(+-k) = c / k^2, k >= 1, with c = 3 / pi^2."""
    radius = _radius(params)
    k = np.arange(radius + 1, dtype=float)
    mag = np.zeros(radius + 1)
    mag[1:] = (6 / math.pi**2) / k[1:] ** 2
    # sum_{k > R} 1/k^2 = trigamma(R + 1)
    tail = float(6 / math.pi**2 * special.polygamma(1, radius + 1))
    mag[radius] += tail
    return IncrementDistribution("zeta-1d", 1, {"radius": radius}, magnitude_pmf=mag,
                                 truncation_radius=radius, tail_mass=tail,
                                 finite_variance=False)


def heavy_tail_series(gamma: float, radius: int) -> tuple[np.ndarray, float]:
    """Terms k^-3 log(k)^-gamma for k = 0..radius (zero below 4) and the sum beyond."""
    k = np.arange(radius + 1, dtype=float)
    terms = np.zeros(radius + 1)
    terms[4:] = 1.0 / (k[4:] ** 3 * np.log(k[4:]) ** gamma)
    f = lambda x: 1.0 / (x**3 * math.log(x) ** gamma)
    # explicit terms up to 10^4, Euler-Maclaurin beyond
    cut = max(radius, 10**4)
    extra = math.fsum(f(j) for j in range(radius + 1, cut + 1))
    fp = lambda x: -(3 + gamma / math.log(x)) / (x**4 * math.log(x) ** gamma)
    # x = cut/u maps [cut, inf) onto (0, 1] with a smooth integrand
    g = lambda u: u / (cut**2 * math.log(cut / u) ** gamma) if u > 0 else 0.0
    integral = integrate.quad(g, 0, 1, epsabs=0, epsrel=1e-12, limit=200)[0]
    beyond = integral - f(cut) / 2 - fp(cut) / 12
    return terms, extra + beyond


def _heavy(params) -> IncrementDistribution:
    """P(|X| = k) = c / (k^3 log(k)^gamma), k >= 4, along a uniform axis direction."""
    gamma = float(params["gamma"])
    if not 0 <= gamma < 1:
        raise DistributionError(f"gamma must lie in [0, 1), got {gamma}")
    direction = params.get("direction", "axes")
    if direction != "axes":
        raise DistributionError(f"unsupported direction law {direction!r}")
    radius = _radius(params)
    terms, tail = heavy_tail_series(gamma, radius)
    total = math.fsum(terms) + tail
    mag = terms / total
    tail_mass = tail / total
    mag[radius] += tail_mass
    return IncrementDistribution(
        "heavy-tailed-2d", 2,
        {"gamma": gamma, "radius": radius, "direction": direction},
        magnitude_pmf=mag, truncation_radius=radius, tail_mass=tail_mass,
        finite_variance=False, _cache={"normalizer": 1.0 / total},
    )


def heavy_tail_normalizer(dist: IncrementDistribution) -> float:
    """The constant c with P(|X| = k) = c / (k^3 log(k)^gamma)."""
    return dist._cache["normalizer"]


# --- operations ---------------------------------------------------------------

def sample_increment(dist: IncrementDistribution, rng: RngStream) -> tuple[int, ...]:
    return tuple(int(v) for v in dist.sample(rng.generator, 1)[0])


def sample_increments(dist: IncrementDistribution, rng: RngStream, n: int) -> np.ndarray:
    return dist.sample(rng.generator, n)


def characteristic_function(dist: IncrementDistribution, t):
    return dist.characteristic_function(t)


def symmetrize(dist: IncrementDistribution) -> IncrementDistribution:
    """Law of X - X' for an independent copy X'.

    Small tables are convolved exactly; larger (truncated) laws go through a
    dense FFT convolution, which is refused beyond ``SYMMETRIZE_MAX_CELLS``.
    """
    support, probs = dist.table()
    params = {"of": dist.spec}
    if support.shape[0] ** 2 <= 10**6:
        acc: dict[tuple, float] = {}
        for x, p in zip(support.tolist(), probs):
            for y, q in zip(support.tolist(), probs):
                key = tuple(a - b for a, b in zip(x, y))
                acc[key] = acc.get(key, 0.0) + p * q
        keys = sorted(acc)
        return _table_law("symmetrized", params, keys, [acc[k] for k in keys],
                          finite_variance=dist.finite_variance)
    lo = support.min(axis=0)
    widths = support.max(axis=0) - lo + 1
    shape = tuple(int(2 * w - 1) for w in widths)
    if math.prod(shape) > SYMMETRIZE_MAX_CELLS:
        raise DistributionError(
            f"symmetrized support grid {shape} too large; lower the truncation radius"
        )
    from scipy.signal import fftconvolve

    grid = np.zeros(tuple(int(w) for w in widths))
    np.add.at(grid, tuple((support - lo).T), probs)
    conv = fftconvolve(grid, grid[tuple(slice(None, None, -1) for _ in widths)])
    conv[conv < 1e-300] = 0.0
    idx = np.argwhere(conv > 0)
    vals = conv[tuple(idx.T)]
    sites = idx - (widths - 1)
    return _table_law("symmetrized", params, sites, vals, finite_variance=dist.finite_variance)
