"""Independent brute-force oracles used by the test suite.

Everything here recomputes expected results from first principles (plain
dict accumulation over itertools.combinations) so the checks stay
independent of the library's own enumeration and sketching code paths.
"""

from __future__ import annotations

from collections import defaultdict
from itertools import combinations


def all_subsets(pairs, max_depth):
    """Every attribute-value combination of size 0..max_depth, no FD logic."""
    out = [()]
    for k in range(1, min(max_depth, len(pairs)) + 1):
        out.extend(combinations(sorted(pairs), k))
    return out


def exact_slice_totals(rows, max_depth, value=lambda row: 1.0):
    """Exhaustive per-slice aggregation: rows are sequences of (attr, val)
    pairs (NULLs already removed); returns {slice: exact_total}."""
    totals = defaultdict(float)
    for row in rows:
        v = value(row)
        for s in all_subsets(row, max_depth):
            totals[s] += v
    return dict(totals)


def exact_bucketed_totals(records, max_depth, bucket_of, value):
    """{bucket: {slice: exact_total}} over an iterable of records, where
    ``bucket_of`` and ``value`` extract the grouping key and the metric
    contribution and a record's non-NULL pairs come from ``record.pairs``."""
    out = defaultdict(lambda: defaultdict(float))
    for rec in records:
        b = bucket_of(rec)
        v = value(rec)
        pairs = [(a, x) for a, x in enumerate(rec.attrs) if x >= 0]
        for s in all_subsets(pairs, max_depth):
            out[b][s] += v
    return {b: dict(d) for b, d in out.items()}


def exact_distinct(rows_items):
    """Exact distinct count of an iterable of hashable items."""
    return len(set(rows_items))


def exact_quantile(values, q):
    """Rank-based quantile on the sorted values: the item at rank
    ceil(q * n) (1-based)."""
    import math

    xs = sorted(values)
    target = max(1, math.ceil(q * len(xs)))
    return xs[target - 1]
