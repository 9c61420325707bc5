"""Monte Carlo moments of L_n(alpha) and Z_n, exact enumeration, scaling studies.

Replica r of every experiment draws its walk from ``RngStream(seed, r)`` and
its scenery from that stream's ``substream(1)``.  Replicas are processed in
batches that may run on a thread pool, but all statistics are computed from
per-replica arrays in replica order, so results do not depend on the number
of threads or the batch layout.

Because increment sampling has the prefix property, a replica's walk at
horizon n is the first n steps of its walk at any larger horizon.  Multi-n
experiments therefore simulate n_max once per replica and read every smaller
n off the prefix; the numbers equal separate runs at each n.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import bounds
from .constants import v_growth
from .occupation import batch_self_intersections
from .walks import IncrementDistribution, RngStream, make_distribution

BATCHES = 20
ENUMERATION_BUDGET = 10**8
BATCH_STEPS = 2**22  # replica-steps per simulation batch


class BudgetExceeded(ValueError):
    pass


def spec_hash(spec) -> str:
    blob = json.dumps(spec, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# --- statistics ----------------------------------------------------------------

@dataclass
class MomentAccumulator:
    """(count, mean, M2) with the pairwise merge of Chan et al."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def from_values(cls, values) -> "MomentAccumulator":
        x = np.asarray(values, dtype=float)
        if x.size == 0:
            return cls()
        mean = math.fsum(x) / x.size
        return cls(int(x.size), mean, math.fsum((x - mean) ** 2))

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if other.count == 0:
            return MomentAccumulator(self.count, self.mean, self.m2)
        if self.count == 0:
            return MomentAccumulator(other.count, other.mean, other.m2)
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return MomentAccumulator(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else float("nan")


def _sample_var(x: np.ndarray) -> float:
    mean = math.fsum(x) / x.size
    return math.fsum((x - mean) ** 2) / (x.size - 1)


def batch_means(values, batches: int = BATCHES) -> tuple[float, float, float, float]:
    """(mean, variance, stderr of mean, stderr of variance) with contiguous batches."""
    x = np.asarray(values, dtype=float)
    R = x.size
    if R < 2:
        raise ValueError("need at least 2 replicas")
    mean = math.fsum(x) / R
    var = math.fsum((x - mean) ** 2) / (R - 1)
    B = min(batches, R // 2)
    if B < 2:
        return mean, var, math.sqrt(var / R), float("nan")
    parts = np.array_split(x, B)
    bm = np.array([math.fsum(p) / p.size for p in parts])
    bv = np.array([_sample_var(p) for p in parts])
    return mean, var, math.sqrt(_sample_var(bm) / B), math.sqrt(_sample_var(bv) / B)


@dataclass
class ExperimentResult:
    spec: dict
    n: int
    alpha: int
    replicas: int
    mean: float
    variance: float
    stderr: float  # of the variance, by batch means
    seed: int
    mean_stderr: float = 0.0
    seconds: float = 0.0
    experiment_id: str = ""

    def __post_init__(self):
        if self.replicas < 2:
            raise ValueError("replicas must be >= 2")

    def row(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "spec_hash": spec_hash(self.spec),
            "d": _spec_dim(self.spec),
            "alpha": self.alpha,
            "n": self.n,
            "replicas": self.replicas,
            "mean_L": self.mean,
            "var_L": self.variance,
            "stderr": self.stderr,
            "seed": self.seed,
            "seconds": self.seconds,
        }


def _spec_dim(spec) -> int:
    return make_distribution(spec).dim


# --- replica simulation ------------------------------------------------------------

def _replica_paths(dist: IncrementDistribution, n: int, seed: int, lo: int, hi: int) -> np.ndarray:
    out = np.empty((hi - lo, n, dist.dim), dtype=np.int64)
    for b, r in enumerate(range(lo, hi)):
        out[b] = np.cumsum(dist.sample(RngStream(seed, r).generator, n), axis=0)
    return out


def _batches(R: int, n: int) -> list[tuple[int, int]]:
    size = max(1, BATCH_STEPS // max(n, 1))
    return [(lo, min(R, lo + size)) for lo in range(0, R, size)]


def _run_batches(work, ranges, threads: int):
    if threads <= 1:
        return [work(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda b: work(*b), ranges))


def simulate_L(dist, n_list: Sequence[int], alphas: Sequence[int], R: int, seed: int,
               threads: int = 1) -> dict[int, dict[int, np.ndarray]]:
    """{n: {alpha: L values of replicas 0..R-1}} from prefixes of n_max-step walks."""
    dist = make_distribution(dist)
    n_list = sorted({int(n) for n in n_list})
    alphas = sorted({int(a) for a in alphas})
    if n_list[0] < 1:
        raise ValueError("n must be >= 1")
    n_max = n_list[-1]

    def work(lo: int, hi: int):
        paths = _replica_paths(dist, n_max, seed, lo, hi)
        return {n: batch_self_intersections(paths[:, :n], alphas)[0] for n in n_list}

    parts = _run_batches(work, _batches(R, n_max), threads)
    out: dict[int, dict[int, np.ndarray]] = {}
    for n in n_list:
        out[n] = {}
        for a in alphas:
            vals = [v for part in parts for v in part[n][a]]
            big = any(v >= 2**53 for v in vals)
            out[n][a] = np.array(vals, dtype=object if big else np.int64)
    return out


def _results(dist, L: dict, R: int, seed: int, seconds: float, experiment_id: str) -> dict:
    res = {}
    for n, per_alpha in L.items():
        for a, vals in per_alpha.items():
            mean, var, se_mean, se_var = batch_means(np.asarray(vals, dtype=float))
            res[(n, a)] = ExperimentResult(dist.spec, n, a, R, mean, var, se_var, seed,
                                           se_mean, seconds, experiment_id)
    return res


def estimate_moments(dist, n: int, alphas: Iterable[int], R: int, seed: int,
                     threads: int = 1, experiment_id: str = "") -> dict[int, ExperimentResult]:
    """Sample mean and variance of L_n(alpha) over R replicas, per alpha."""
    dist = make_distribution(dist)
    if R < 2:
        raise ValueError("replicas must be >= 2")
    t0 = time.perf_counter()
    L = simulate_L(dist, [n], alphas, R, seed, threads)
    res = _results(dist, L, R, seed, time.perf_counter() - t0, experiment_id)
    return {a: r for (_, a), r in res.items()}


# --- exact enumeration ---------------------------------------------------------

def exact_enumeration_variance(dist, n: int, alpha: int,
                               budget: int = ENUMERATION_BUDGET) -> tuple[float, float]:
    """Exact (mean, variance) of L_n(alpha) summed over all K^n step sequences.

    L is computed as sum_i c_i^(alpha-1) where c_i = #{j : S_j = S_i}, from
    pairwise equalities, independently of the sorting kernel used elsewhere.
    """
    dist = make_distribution(dist)
    if not dist.is_table:
        raise ValueError("exact enumeration needs a finite-support law")
    K = dist.support.shape[0]
    if n < 1:
        raise ValueError("n must be >= 1")
    if K**n > budget:
        raise BudgetExceeded(f"{K}^{n} paths exceed the enumeration budget {budget}")
    total = K**n
    chunk = max(1, min(total, 2**22 // (n * n)))
    radix = K ** np.arange(n - 1, -1, -1, dtype=np.int64)
    logp = np.log(dist.probs)
    s1, s2 = [], []
    for lo in range(0, total, chunk):
        idx = np.arange(lo, min(total, lo + chunk), dtype=np.int64)
        digits = (idx[:, None] // radix[None, :]) % K
        paths = np.cumsum(dist.support[digits], axis=1)
        eq = np.all(paths[:, :, None, :] == paths[:, None, :, :], axis=-1)
        c = eq.sum(axis=2).astype(np.int64)
        L = (c ** (alpha - 1)).sum(axis=1).astype(float)
        w = np.exp(logp[digits].sum(axis=1)) if not np.all(dist.probs == dist.probs[0]) \
            else np.full(idx.size, dist.probs[0] ** n)
        s1.append(math.fsum(w * L))
        s2.append(math.fsum(w * L * L))
    mean = math.fsum(s1)
    return mean, math.fsum(s2) - mean * mean


# --- scaling and comparison -----------------------------------------------------

@dataclass
class ScalingResult:
    results: list[ExperimentResult]
    ratios: list[float]  # Var / v_growth(d, alpha, n)
    fit: bounds.RateFit


def _fit_variances(results: Sequence[ExperimentResult], min_points: int) -> bounds.RateFit:
    pts = [(r.n, r.variance) for r in results]
    sigma = [r.stderr / r.variance for r in results]
    return bounds.rate_fit(pts, "pure-power", sigma=sigma, min_points=min_points)


def scaling_experiment(dist, alpha: int, n_list: Sequence[int], R: int, seed: int,
                       threads: int = 1, experiment_id: str = "scaling",
                       min_points: int = 5) -> ScalingResult:
    """Var-hat(L_n(alpha)) over dyadic n, its ratio to v_growth and a power-law fit."""
    dist = make_distribution(dist)
    n_list = sorted({int(n) for n in n_list})
    if len(n_list) < min_points:
        raise ValueError(f"need at least {min_points} values of n")
    t0 = time.perf_counter()
    L = simulate_L(dist, n_list, [alpha], R, seed, threads)
    res = _results(dist, L, R, seed, time.perf_counter() - t0, experiment_id)
    results = [res[(n, alpha)] for n in n_list]
    ratios = [r.variance / v_growth(dist.dim, alpha, r.n) for r in results]
    return ScalingResult(results, ratios, _fit_variances(results, min_points))


@dataclass
class ComparisonResult:
    target: list[ExperimentResult]
    reference: list[ExperimentResult]
    ratios: list[float]
    ratio_stderr: list[float]
    slope: float  # of log ratio against log n
    slope_stderr: float

    @property
    def bounded(self) -> bool:
        """No upward log-log trend beyond two standard errors."""
        return self.slope <= 2 * self.slope_stderr


def comparison_experiment(dist, alpha: int, n_list: Sequence[int], R: int, seed: int,
                          threads: int = 1, experiment_id: str = "compare") -> ComparisonResult:
    """Var(L_n(alpha)) for ``dist`` against the simple walk of the same dimension."""
    dist = make_distribution(dist)
    if not dist.genuinely_d_dimensional:
        raise ValueError("comparison needs a genuinely d-dimensional law")
    ref = make_distribution({"kind": "simple-symmetric", "params": {"d": dist.dim}})
    n_list = sorted({int(n) for n in n_list})
    target = scaling_experiment(dist, alpha, n_list, R, seed, threads, experiment_id, 2).results
    reference = scaling_experiment(ref, alpha, n_list, R, seed, threads, experiment_id, 2).results
    ratios, rse = [], []
    for t, r in zip(target, reference):
        q = t.variance / r.variance
        ratios.append(q)
        rse.append(q * math.hypot(t.stderr / t.variance, r.stderr / r.variance))
    x = np.log(np.array(n_list, dtype=float))
    y = np.log(ratios)
    sig = np.array(rse) / np.array(ratios)
    w = 1 / sig**2
    xbar = np.sum(w * x) / np.sum(w)
    sxx = np.sum(w * (x - xbar) ** 2)
    slope = float(np.sum(w * (x - xbar) * y) / sxx)
    return ComparisonResult(target, reference, ratios, rse, slope, float(math.sqrt(1 / sxx)))


# --- scenery ------------------------------------------------------------------

@dataclass(frozen=True)
class SceneryLaw:
    """Centered i.i.d. scenery.  variance = 0 gives xi = 0 (a test hook)."""

    kind: str = "rademacher"
    variance: float = 1.0

    def __post_init__(self):
        if self.kind not in ("rademacher", "gaussian"):
            raise ValueError(f"unknown scenery kind {self.kind!r}")
        if not (self.variance >= 0 and math.isfinite(self.variance)):
            raise ValueError("scenery variance must be finite and >= 0")

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        scale = math.sqrt(self.variance)
        if self.kind == "rademacher":
            return scale * np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return scale * rng.standard_normal(size)


def _first_visit_ranks(paths: np.ndarray) -> np.ndarray:
    """rank[b, i] = index of site S_i among row b's sites in first-visit order."""
    B, n, d = paths.shape
    keys = np.zeros((B, n), dtype=np.int64)
    for i in range(d):
        col = paths[:, :, i]
        keys = keys * (int(col.max() - col.min()) + 1) + (col - col.min())
    order = np.argsort(keys, axis=1, kind="stable")
    sk = np.take_along_axis(keys, order, axis=1)
    new = np.ones((B, n), dtype=bool)
    new[:, 1:] = sk[:, 1:] != sk[:, :-1]
    # stable sort: the head of each run of equal keys is that site's first visit
    run_start = np.maximum.accumulate(np.where(new, np.arange(n), 0), axis=1)
    first = np.empty_like(order)
    np.put_along_axis(first, order, np.take_along_axis(order, run_start, axis=1), axis=1)
    ranks = np.cumsum(first == np.arange(n)[None, :], axis=1) - 1
    return np.take_along_axis(ranks, first, axis=1)


@dataclass
class SceneryResult:
    n: int
    replicas: int
    var_z: float
    var_z_stderr: float
    mean_L2: float
    var_L2: float
    scenery_variance: float
    candidates: dict = field(default_factory=dict)  # name -> (predicted, z-score)
    supported: str = ""

    def report(self) -> str:
        lines = [f"Var-hat(Z_{self.n}) = {self.var_z:.6g} +- {self.var_z_stderr:.2g}"]
        for name, (pred, z) in self.candidates.items():
            lines.append(f"  {name}: predicted {pred:.6g}, z = {z:+.2f}")
        lines.append(f"  data supports: {self.supported}")
        return "\n".join(lines)


IDENTITY_TOTAL_VARIANCE = "Var(xi) E[L_n(2)]"
IDENTITY_VARIANCE_PRODUCT = "Var(xi) Var[L_n(2)]"


def scenery_experiment(dist, scenery: SceneryLaw, n: int, R: int, seed: int,
                       threads: int = 1, k: float = 3.0) -> SceneryResult:
    """Var(Z_n) over walk and scenery randomness, tested against both candidate identities."""
    dist = make_distribution(dist)
    n = int(n)

    def work(lo: int, hi: int):
        paths = np.empty((hi - lo, n, dist.dim), dtype=np.int64)
        xi = np.empty((hi - lo, n))
        for b, r in enumerate(range(lo, hi)):
            stream = RngStream(seed, r)
            paths[b] = np.cumsum(dist.sample(stream.generator, n), axis=0)
            xi[b] = scenery.draw(stream.substream(1).generator, n)
        ranks = _first_visit_ranks(paths)
        z = np.take_along_axis(xi, ranks, axis=1).sum(axis=1)
        L2 = batch_self_intersections(paths, [2])[0][2]
        return z, L2

    parts = _run_batches(work, _batches(R, n), threads)
    z = np.concatenate([p[0] for p in parts])
    L2 = np.array([v for p in parts for v in p[1]], dtype=float)
    _, var_z, _, se_var_z = batch_means(z)
    mean_L2, var_L2, _, _ = batch_means(L2)
    v = scenery.variance
    cands = {}
    for name, pred in ((IDENTITY_TOTAL_VARIANCE, v * mean_L2), (IDENTITY_VARIANCE_PRODUCT, v * var_L2)):
        zscore = (var_z - pred) / se_var_z if se_var_z > 0 else (0.0 if var_z == pred else math.inf)
        cands[name] = (pred, zscore)
    ok = [name for name, (_, zs) in cands.items() if abs(zs) <= k]
    supported = ok[0] if len(ok) == 1 else ("both" if ok else "neither")
    return SceneryResult(n, R, var_z, se_var_z, mean_L2, var_L2, v, cands, supported)
