"""Local times l(n, x) and self-intersection local times L_n(alpha).

Counting convention: the walk starts at S_0 = 0 and visits are counted for
j = 1..n only, so the origin's initial occupation is *not* included.  With this
convention L_n(1) = n and, e.g., the path S = (1, 0, 1) has l(3, 1) = 2,
l(3, 0) = 1 and L_3(2) = 5.

Two independent routes compute L:

* :class:`OccupationMap` is the incremental hash map (packed 64-bit keys for
  d <= 3), updated one step at a time;
* :func:`local_time_counts` / :func:`batch_self_intersections` sort packed
  site keys and count runs, which is what the simulation hot path uses.

:func:`brute_force_L` groups tuples with a Counter and is used as the oracle.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .walks import IncrementDistribution, RngStream

PACK_BITS = 21
PACK_OFFSET = 1 << (PACK_BITS - 1)
_INT64_LIMIT = 2**63


class LocalTimeOverflow(OverflowError):
    """A running L value or a packed coordinate exceeded its word size."""


def pack_site(site: Sequence[int]) -> int | tuple:
    """Offset-binary 21-bit packing for d <= 3; tuples beyond that."""
    if len(site) > 3:
        return tuple(int(v) for v in site)
    key = 0
    for i, v in enumerate(site):
        u = int(v) + PACK_OFFSET
        if not 0 <= u < (1 << PACK_BITS):
            raise LocalTimeOverflow(f"coordinate {v} does not fit in {PACK_BITS} bits")
        key |= u << (PACK_BITS * i)
    return key


def unpack_site(key, dim: int) -> tuple[int, ...]:
    if isinstance(key, tuple):
        return key
    mask = (1 << PACK_BITS) - 1
    return tuple(((key >> (PACK_BITS * i)) & mask) - PACK_OFFSET for i in range(dim))


class OccupationMap:
    """Sparse site -> visit count map carrying running L_n(alpha).

    ``word_bits`` is the signed word size L values must fit in; exceeding it
    raises :class:`LocalTimeOverflow` instead of wrapping.
    """

    def __init__(self, dim: int, alphas: Iterable[int], word_bits: int = 128):
        self.dim = int(dim)
        self.alphas = tuple(sorted({int(a) for a in alphas}))
        if not self.alphas or self.alphas[0] < 1:
            raise ValueError("alphas must be a nonempty set of integers >= 1")
        self.counts: dict = {}
        self.steps_taken = 0
        self.running_L = {a: 0 for a in self.alphas}
        self._limit = 2 ** (word_bits - 1)

    def record_step(self, site: Sequence[int]) -> dict[int, int]:
        if len(site) != self.dim:
            raise ValueError(f"site has dimension {len(site)}, map has {self.dim}")
        key = pack_site(site)
        c = self.counts.get(key, 0)
        delta = {a: (c + 1) ** a - c**a for a in self.alphas}
        for a, dl in delta.items():
            value = self.running_L[a] + dl
            if value >= self._limit:
                raise LocalTimeOverflow(f"L(alpha={a}) exceeds the {self._limit.bit_length()}-bit word")
            self.running_L[a] = value
        self.counts[key] = c + 1
        self.steps_taken += 1
        return delta

    @property
    def range(self) -> int:
        return len(self.counts)

    def local_time(self, site: Sequence[int]) -> int:
        return self.counts.get(pack_site(site), 0)

    def sites(self) -> dict[tuple[int, ...], int]:
        return {unpack_site(k, self.dim): c for k, c in self.counts.items()}


@dataclass
class WalkSummary:
    n: int
    L: dict[int, int]
    range: int
    endpoint: tuple[int, ...]
    scenery_value: float | None = None


def brute_force_L(path: Sequence[Sequence[int]], alpha: int) -> int:
    """sum_x l(n, x)^alpha recomputed from the visited sites S_1..S_n."""
    if len(path) == 0:
        raise ValueError("path must be nonempty")
    counts = Counter(tuple(int(v) for v in np.atleast_1d(s)) for s in path)
    return sum(c**alpha for c in counts.values())


def scenery_value(occ: OccupationMap, scenery: Mapping[tuple[int, ...], float]) -> float:
    """Z_n = sum_x l(n, x) xi_x."""
    total = []
    for site, c in occ.sites().items():
        if site not in scenery:
            raise KeyError(f"no scenery value at visited site {site}")
        total.append(c * scenery[site])
    return math.fsum(total)


def path_from_increments(increments: np.ndarray) -> np.ndarray:
    inc = np.asarray(increments, dtype=np.int64)
    if inc.ndim == 1:
        inc = inc[:, None]
    return np.cumsum(inc, axis=0)


# --- vectorized counting --------------------------------------------------------

def _packed_keys(paths: np.ndarray) -> np.ndarray | None:
    """Pack (..., n, d) integer sites into int64 keys, strides adapted to the range.

    Returns None when the coordinate box does not fit in 62 bits.
    """
    lo = paths.min(axis=tuple(range(paths.ndim - 1)))
    width = paths.max(axis=tuple(range(paths.ndim - 1))) - lo + 1
    if sum(math.log2(int(w)) for w in width) > 62:
        return None
    keys = np.zeros(paths.shape[:-1], dtype=np.int64)
    stride = 1
    for i in range(paths.shape[-1]):
        keys += (paths[..., i] - lo[i]) * stride
        stride *= int(width[i])
    return keys


def local_time_counts(path: np.ndarray) -> np.ndarray:
    """Visit counts of the distinct sites of one path (order unspecified)."""
    path = np.asarray(path, dtype=np.int64)
    if path.ndim == 1:
        path = path[:, None]
    keys = _packed_keys(path)
    if keys is None:
        _, counts = np.unique(path, axis=0, return_counts=True)
        return counts
    _, counts = np.unique(keys, return_counts=True)
    return counts


def L_from_counts(counts: np.ndarray, alpha: int) -> int:
    """Exact sum c^alpha; falls back to Python integers when int64 could overflow."""
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size == 0:
        return 0
    n = int(counts.sum())
    if n**alpha < _INT64_LIMIT:
        return int(np.sum(counts**alpha))
    values, mult = np.unique(counts, return_counts=True)
    return sum(int(m) * int(v) ** alpha for v, m in zip(values, mult))


def batch_self_intersections(paths: np.ndarray, alphas: Sequence[int]) -> tuple[dict[int, list], np.ndarray]:
    """L_n(alpha) for every row of ``paths`` (shape (B, n, d)).

    Returns ({alpha: list of B ints}, ranges).  Each row is sorted by packed key
    and run lengths are the local times.
    """
    paths = np.asarray(paths, dtype=np.int64)
    B, n = paths.shape[:2]
    keys = _packed_keys(paths)
    if keys is None:
        rows = [local_time_counts(p) for p in paths]
        return ({a: [L_from_counts(c, a) for c in rows] for a in alphas},
                np.array([c.size for c in rows]))
    s = np.sort(keys, axis=1).ravel()
    starts_mask = np.ones(s.size, dtype=bool)
    starts_mask[1:] = s[1:] != s[:-1]
    starts_mask[::n] = True
    starts = np.flatnonzero(starts_mask)
    lengths = np.diff(np.append(starts, s.size))
    row_first = np.searchsorted(starts, np.arange(B) * n)
    ranges = np.diff(np.append(row_first, starts.size))
    out: dict[int, list] = {}
    for a in alphas:
        if n**a < _INT64_LIMIT:
            out[a] = np.add.reduceat(lengths.astype(np.int64) ** a, row_first).tolist()
        else:
            out[a] = [
                L_from_counts(lengths[row_first[b]:row_first[b] + ranges[b]], a)
                for b in range(B)
            ]
    return out, ranges


def first_visit_counts(path: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(distinct sites in first-visit order, their visit counts)."""
    path = np.asarray(path, dtype=np.int64)
    uniq, first, counts = np.unique(path, axis=0, return_index=True, return_counts=True)
    order = np.argsort(first, kind="stable")
    return uniq[order], counts[order]


# --- walks ----------------------------------------------------------------------

def summarize_path(path: np.ndarray, alphas: Iterable[int],
                   scenery: Callable[[np.random.Generator, int], np.ndarray] | None = None,
                   scenery_rng: np.random.Generator | None = None) -> WalkSummary:
    """WalkSummary of an explicit path S_1..S_n (vectorized route)."""
    path = np.asarray(path, dtype=np.int64)
    if path.ndim == 1:
        path = path[:, None]
    alphas = sorted({int(a) for a in alphas})
    z = None
    if scenery is not None:
        _, counts = first_visit_counts(path)
        xi = scenery(scenery_rng, counts.size)
        z = math.fsum(counts * xi)
    else:
        counts = local_time_counts(path)
    return WalkSummary(
        n=int(path.shape[0]),
        L={a: L_from_counts(counts, a) for a in alphas},
        range=int(counts.size),
        endpoint=tuple(int(v) for v in path[-1]),
        scenery_value=z,
    )


def run_walk(dist: IncrementDistribution, n: int, alphas: Iterable[int], rng: RngStream,
             scenery=None, engine: str = "vectorized", word_bits: int = 128) -> WalkSummary:
    """Simulate S_1..S_n and return its local-time summary.

    ``scenery`` is an object with ``draw(generator, size)``; values xi_x are
    drawn lazily in first-visit order from ``rng.substream(1)``.  ``engine``
    selects the sorted-key route ("vectorized") or the step-by-step
    :class:`OccupationMap` ("incremental"); both give identical results.
    """
    n = int(n)
    alphas = sorted({int(a) for a in alphas})
    if n < 1:
        raise ValueError("n must be >= 1")
    if not alphas:
        raise ValueError("alphas must be nonempty")
    path = path_from_increments(dist.sample(rng.generator, n))
    draw = scenery.draw if scenery is not None else None
    srng = rng.substream(1).generator if scenery is not None else None
    if engine == "vectorized":
        summary = summarize_path(path, alphas, draw, srng)
        for a, v in summary.L.items():
            if v >= 2 ** (word_bits - 1):
                raise LocalTimeOverflow(f"L(alpha={a}) exceeds the {word_bits}-bit word")
        return summary
    if engine != "incremental":
        raise ValueError(f"unknown engine {engine!r}")
    occ = OccupationMap(dist.dim, alphas, word_bits=word_bits)
    xi: dict[tuple, float] = {}
    for site in path.tolist():
        if draw is not None and tuple(site) not in xi:
            xi[tuple(site)] = float(draw(srng, 1)[0])
        occ.record_step(site)
    return WalkSummary(
        n=n,
        L=dict(occ.running_L),
        range=occ.range,
        endpoint=tuple(path[-1].tolist()),
        scenery_value=scenery_value(occ, xi) if draw is not None else None,
    )


def write_path_csv(path: np.ndarray, fh) -> None:
    """Debug dump: one row per step, ``step,x1,...,xd`` (step 1..n)."""
    path = np.asarray(path)
    if path.ndim == 1:
        path = path[:, None]
    fh.write("step," + ",".join(f"x{i + 1}" for i in range(path.shape[1])) + "\r\n")
    for j, row in enumerate(path.tolist(), start=1):
        fh.write(f"{j}," + ",".join(str(v) for v in row) + "\r\n")
