"""Streaming summary kernels.

TopNSketch keeps the n slices with the largest upper bound while guaranteeing,
for non-negative streams, that every tracked slice's true total lies inside
its [lo, hi] range and that any slice whose true total exceeds the running
pruned maximum is still tracked at stream end.

DistinctSummary is a k-minimum-values cardinality summary; QuantileSummary is
a compactor-based mergeable rank summary.  Both use a fixed, published hash
seed so estimates reproduce across runs and implementations.
"""

from __future__ import annotations

import random
from bisect import bisect_left
from math import ceil
from typing import Callable, Iterable, Optional

from .errors import CapacityMismatch, EmptySummary

_MASK64 = (1 << 64) - 1

# Published seed: change it and every stored distinct estimate changes.
HASH_SEED = 0x5EEDC0DE2024F00D

_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def hash64(data: bytes, seed: int = HASH_SEED) -> int:
    """64-bit splittable hash over bytes (splitmix64 absorption), uniform on
    [0, 2^64)."""
    h = seed & _MASK64
    for i in range(0, len(data), 8):
        chunk = int.from_bytes(data[i : i + 8], "little")
        h = _mix64((h + _GOLDEN + chunk) & _MASK64)
    return _mix64(h ^ len(data))


def hash64_text(text: str, seed: int = HASH_SEED) -> int:
    return hash64(text.encode("utf-8"), seed)


class BoundedValue:
    """A [lo, hi] interval guaranteed (for non-negative streams) to contain a
    slice's true aggregate.  ``exact`` is set once a refinement pass has
    replaced the range with the true value."""

    __slots__ = ("lo", "hi", "exact")

    def __init__(self, lo: float, hi: float, exact: bool = False):
        if hi < lo:
            raise ValueError(f"hi {hi} < lo {lo}")
        if exact and lo != hi:
            raise ValueError("exact value must have lo == hi")
        self.lo = lo
        self.hi = hi
        self.exact = exact

    @property
    def midpoint(self) -> float:
        return (self.lo + self.hi) / 2.0

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BoundedValue)
            and self.lo == other.lo
            and self.hi == other.hi
            and self.exact == other.exact
        )

    def __hash__(self):
        return hash((self.lo, self.hi, self.exact))

    def __repr__(self) -> str:
        tag = ", exact" if self.exact else ""
        return f"BoundedValue({self.lo!r}, {self.hi!r}{tag})"


def _default_text_key(s) -> str:
    return repr(s)


class TopNSketch:
    """Capacity-bounded map from slice to running aggregate with sound ranges.

    Entries are stored as [observed, floor]: ``observed`` is the aggregate
    since (re-)insertion, ``floor`` the pruned maximum at that moment, so the
    estimate is [observed, observed + floor].  Pruning keeps the n entries
    with the largest upper bound, ties broken by canonical slice text
    ascending, and folds the largest evicted upper bound into pruned_max.

    The empty slice is never an entry: its exact aggregate is ``total``.
    """

    __slots__ = ("n", "overflow_factor", "entries", "pruned_max", "total",
                 "_cap", "_text_key", "_text_cache", "prune_count")

    def __init__(
        self,
        n: int,
        overflow_factor: float = 2.0,
        text_key: Optional[Callable] = None,
    ):
        if n < 1:
            raise ValueError("capacity n must be >= 1")
        if overflow_factor < 1.0:
            raise ValueError("overflow_factor must be >= 1.0")
        self.n = n
        self.overflow_factor = overflow_factor
        self._cap = int(n * overflow_factor)
        self.entries: dict = {}  # slice -> [observed, floor]
        self.pruned_max = 0.0
        self.total = 0.0
        self._text_key = text_key or _default_text_key
        self._text_cache: dict = {}
        self.prune_count = 0

    # -- updates ------------------------------------------------------------

    def update(self, s, v: float) -> None:
        """Add v (>= 0) to slice s.  The empty slice routes to ``total``; call
        it exactly once per record."""
        if v < 0:
            raise ValueError("negative update; route through sign splitting")
        if not s:
            self.total += v
            return
        entry = self.entries.get(s)
        if entry is not None:
            entry[0] += v
        else:
            self.entries[s] = [v, self.pruned_max]
            if len(self.entries) > self._cap:
                self.prune()

    def add_total(self, v: float) -> None:
        self.total += v

    # -- pruning ------------------------------------------------------------

    def _key(self, s) -> str:
        t = self._text_cache.get(s)
        if t is None:
            t = self._text_key(s)
            self._text_cache[s] = t
        return t

    def prune(self) -> None:
        """Cut back to the top n entries by upper bound; no-op at or below n."""
        if len(self.entries) <= self.n:
            return
        cache = self._text_cache
        text_key = self._text_key
        items = sorted(
            self.entries.items(),
            key=lambda kv: (
                -(kv[1][0] + kv[1][1]),
                cache.get(kv[0]) or cache.setdefault(kv[0], text_key(kv[0])),
            ),
        )
        evicted_top = items[self.n]
        evicted_hi = evicted_top[1][0] + evicted_top[1][1]
        if evicted_hi > self.pruned_max:
            self.pruned_max = evicted_hi
        self.entries = dict(items[: self.n])
        self.prune_count += 1

    # -- queries ------------------------------------------------------------

    def estimate(self, s) -> Optional[BoundedValue]:
        """BoundedValue for a tracked slice, the exact total for the empty
        slice, or None (absent; callers may read that as [0, pruned_max])."""
        if not s:
            return BoundedValue(self.total, self.total, exact=True)
        entry = self.entries.get(s)
        if entry is None:
            return None
        return BoundedValue(entry[0], entry[0] + entry[1])

    def bounds(self) -> Iterable[tuple]:
        """(slice, BoundedValue) for every tracked entry, unordered."""
        for s, (obs, floor) in self.entries.items():
            yield s, BoundedValue(obs, obs + floor)

    def __len__(self) -> int:
        return len(self.entries)

    # -- merging ------------------------------------------------------------

    @staticmethod
    def merge(a: "TopNSketch", b: "TopNSketch") -> "TopNSketch":
        """Combine sketches built over disjoint streams.

        A slice absent from one side contributes [0, that side's pruned_max];
        pruned maxima and totals add; the result is pruned back to n.
        """
        if a.n != b.n:
            raise CapacityMismatch(f"cannot merge sketches with n={a.n} and n={b.n}")
        out = TopNSketch(a.n, a.overflow_factor, text_key=a._text_key)
        out.total = a.total + b.total
        merged: dict = {}
        for s, (obs, floor) in a.entries.items():
            other = b.entries.get(s)
            if other is None:
                merged[s] = [obs, floor + b.pruned_max]
            else:
                merged[s] = [obs + other[0], floor + other[1]]
        for s, (obs, floor) in b.entries.items():
            if s not in merged:
                merged[s] = [obs, floor + a.pruned_max]
        out.entries = merged
        out.pruned_max = a.pruned_max + b.pruned_max
        out.prune()
        return out


class DistinctSummary:
    """K-minimum-values distinct-count summary.

    Keeps the k smallest 64-bit hashes seen, de-duplicated.  Below saturation
    the count is exact; past it the estimate is (k-1)/theta with theta the
    k-th smallest hash scaled to (0, 1].  Merge is the union of hash sets
    trimmed back to k, which makes it commutative and associative.
    """

    __slots__ = ("k", "hashes")

    def __init__(self, k: int = 1024):
        if k < 2:
            raise ValueError("summary size k must be >= 2")
        self.k = k
        self.hashes: list[int] = []  # strictly increasing

    def update(self, item: bytes) -> None:
        self.update_hash(hash64(item))

    def update_hash(self, h: int) -> None:
        hs = self.hashes
        if len(hs) >= self.k and h >= hs[-1]:
            return
        i = bisect_left(hs, h)
        if i < len(hs) and hs[i] == h:
            return
        hs.insert(i, h)
        if len(hs) > self.k:
            hs.pop()

    def estimate(self) -> float:
        hs = self.hashes
        if len(hs) < self.k:
            return float(len(hs))
        theta = hs[self.k - 1] / 2.0**64
        return (self.k - 1) / theta

    @staticmethod
    def merge(a: "DistinctSummary", b: "DistinctSummary") -> "DistinctSummary":
        if a.k != b.k:
            raise CapacityMismatch(f"cannot merge summaries with k={a.k} and k={b.k}")
        out = DistinctSummary(a.k)
        merged = sorted(set(a.hashes) | set(b.hashes))
        out.hashes = merged[: a.k]
        return out

    def __len__(self) -> int:
        return len(self.hashes)


class QuantileSummary:
    """Mergeable rank/quantile summary built from compactors.

    Level h holds items of weight 2^h; a full level sorts itself and promotes
    every other item upward.  Memory stays O(k log(count/k)) and rank error
    is proportional to 1/k.  Compaction randomness comes from a dedicated,
    fixed-seed generator so builds are reproducible.
    """

    C = 2.0 / 3.0  # capacity decay per level below the top

    __slots__ = ("k", "levels", "count", "_max_size", "_size", "_rng")

    def __init__(self, k: int = 200, seed: int = HASH_SEED):
        if k < 4:
            raise ValueError("compactor size k must be >= 4")
        self.k = k
        self.levels: list[list[float]] = [[]]
        self.count = 0
        self._size = 0
        self._rng = random.Random(seed)
        self._max_size = self._capacity_total()

    def _capacity(self, height: int) -> int:
        depth = len(self.levels) - height - 1
        return int(ceil(self.C**depth * self.k)) + 1

    def _capacity_total(self) -> int:
        return sum(self._capacity(h) for h in range(len(self.levels)))

    def update(self, value: float) -> None:
        self.levels[0].append(value)
        self.count += 1
        self._size += 1
        if self._size >= self._max_size:
            self._compress()

    def _grow(self) -> None:
        self.levels.append([])
        self._max_size = self._capacity_total()

    def _compress(self) -> None:
        for h in range(len(self.levels)):
            level = self.levels[h]
            if len(level) >= self._capacity(h):
                if h + 1 >= len(self.levels):
                    self._grow()
                level.sort()
                offset = self._rng.randrange(2)
                if len(level) % 2 == 1:
                    # unpaired extremum keeps its weight at this level
                    if offset == 0:
                        promoted, keep = level[0:-1:2], [level[-1]]
                    else:
                        promoted, keep = level[1::2], [level[0]]
                else:
                    promoted, keep = level[offset::2], []
                self.levels[h] = keep
                self.levels[h + 1].extend(promoted)
                self._size = sum(len(lv) for lv in self.levels)
                break

    @staticmethod
    def merge(a: "QuantileSummary", b: "QuantileSummary") -> "QuantileSummary":
        out = QuantileSummary(a.k)
        out.count = a.count + b.count
        for h in range(max(len(a.levels), len(b.levels))):
            while h >= len(out.levels):
                out._grow()
            if h < len(a.levels):
                out.levels[h].extend(a.levels[h])
            if h < len(b.levels):
                out.levels[h].extend(b.levels[h])
        out._size = sum(len(lv) for lv in out.levels)
        while out._size >= out._max_size:
            out._compress()
        return out

    def query(self, q: float) -> float:
        """A value whose rank is within the summary's error of q * count."""
        if self.count == 0:
            raise EmptySummary("quantile query on empty summary")
        if not (0.0 < q < 1.0):
            raise ValueError("quantile rank must be in (0, 1)")
        weighted: list[tuple[float, int]] = []
        for h, level in enumerate(self.levels):
            w = 1 << h
            weighted.extend((item, w) for item in level)
        weighted.sort(key=lambda iw: iw[0])
        total = sum(w for _, w in weighted)
        target = max(1, ceil(q * total))
        cum = 0
        for item, w in weighted:
            cum += w
            if cum >= target:
                return item
        return weighted[-1][0]

    def __len__(self) -> int:
        return self._size
