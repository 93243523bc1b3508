"""Core domain types and slice algebra.

A slice is a canonical, immutable tuple of ``(attribute_id, value_id)`` pairs
sorted by attribute id; the empty tuple is the top-level slice selecting all
rows.  Attribute and value ids index into per-cube dictionaries so slice keys
stay compact integer tuples.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Iterable, Iterator, NamedTuple, Optional, Sequence

from .errors import ConflictingAttribute

# A slice: ((attr_id, value_id), ...) strictly ascending by attr_id.
Slice = tuple  # tuple[tuple[int, int], ...]

TOP = ()  # the empty slice, selects everything

# Sentinel value id for a missing attribute value.  NULL never appears in a
# slice pair: absence of a value is not a value.
NULL_VALUE = -1


class Record(NamedTuple):
    """One ingested row: epoch-seconds timestamp, dictionary-encoded attribute
    values (NULL_VALUE where missing), numeric measures, and pre-hashed keys
    for distinct-count fields."""

    ts: int
    attrs: tuple
    measures: tuple
    keys: tuple = ()


class Interner:
    """Dense text -> id dictionary.  Interning is stable within a build:
    identical text always maps to the same id."""

    __slots__ = ("texts", "_index")

    def __init__(self, texts: Optional[Iterable[str]] = None):
        self.texts: list[str] = list(texts) if texts else []
        self._index: dict[str, int] = {t: i for i, t in enumerate(self.texts)}

    def intern(self, text: str) -> int:
        idx = self._index.get(text)
        if idx is None:
            idx = len(self.texts)
            self.texts.append(text)
            self._index[text] = idx
        return idx

    def lookup(self, text: str) -> Optional[int]:
        return self._index.get(text)

    def __getitem__(self, idx: int) -> str:
        return self.texts[idx]

    def __len__(self) -> int:
        return len(self.texts)

    def __eq__(self, other) -> bool:
        return isinstance(other, Interner) and self.texts == other.texts


# ---------------------------------------------------------------------------
# Slice algebra
# ---------------------------------------------------------------------------


def canonicalize_slice(pairs: Iterable[tuple]) -> Slice:
    """Sort pairs by attribute id and collapse duplicates.

    Raises ConflictingAttribute if one attribute appears with two different
    values (such a slice would select no rows and is always a caller bug).
    """
    seen: dict[int, int] = {}
    for attr, value in pairs:
        prev = seen.get(attr)
        if prev is None:
            seen[attr] = value
        elif prev != value:
            raise ConflictingAttribute(
                f"attribute {attr} given two values: {prev} and {value}"
            )
    return tuple(sorted(seen.items()))


def slice_depth(s: Slice) -> int:
    return len(s)


def parents_of(s: Slice) -> list:
    """All slices obtained by removing exactly one pair.  The empty slice has
    no parents and yields []."""
    return [s[:i] + s[i + 1 :] for i in range(len(s))]


def is_ancestor(a: Slice, b: Slice) -> bool:
    """True iff a's pairs are a strict subset of b's pairs."""
    if len(a) >= len(b):
        return False
    bs = set(b)
    return all(p in bs for p in a)


# ---------------------------------------------------------------------------
# Functional dependencies
# ---------------------------------------------------------------------------


@dataclass
class FDGraph:
    """Directed functional dependencies between attributes.

    An edge (a, b) asserts every observed value of a co-occurs with exactly
    one value of b, so a slice constraining both a and b is redundant: it
    selects the same rows as the slice constraining a alone.
    """

    edges: frozenset = frozenset()  # frozenset[tuple[int, int]]

    def closure_pairs(self) -> frozenset:
        """Transitive closure of the edge set, as (determiner, determined)
        pairs.  Slice filtering uses the closure: with city -> state -> country
        the pair (city, country) is redundant too."""
        adj: dict[int, set[int]] = {}
        for a, b in self.edges:
            adj.setdefault(a, set()).add(b)
        out = set()
        for start in adj:
            stack = list(adj[start])
            seen: set[int] = set()
            while stack:
                node = stack.pop()
                if node in seen or node == start:
                    continue
                seen.add(node)
                stack.extend(adj.get(node, ()))
            out.update((start, d) for d in seen)
        return frozenset(out)

    def determined_masks(self, num_attrs: int) -> list:
        """Per-attribute bitmask of all attributes it (transitively)
        determines; used for fast combination filtering."""
        masks = [0] * num_attrs
        for a, b in self.closure_pairs():
            if a < num_attrs and b < num_attrs:
                masks[a] |= 1 << b
        return masks

    def __bool__(self) -> bool:
        return bool(self.edges)


def enumerate_slices(
    record_attrs: Sequence[int],
    max_depth: int,
    fds: Optional[FDGraph] = None,
) -> list:
    """All slices of depth 0..max_depth a record belongs to.

    NULL attribute values generate no pairs.  Any combination containing a
    determiner together with one of its (transitively) determined attributes
    is dropped: the smaller slice selects the identical row set.
    """
    pairs = [(a, v) for a, v in enumerate(record_attrs) if v != NULL_VALUE]
    masks = fds.determined_masks(len(record_attrs)) if fds else None
    out: list = [TOP]
    top = min(max_depth, len(pairs))
    for k in range(1, top + 1):
        if masks is None:
            out.extend(combinations(pairs, k))
        else:
            out.extend(_fd_filtered(pairs, k, masks))
    return out


def _fd_filtered(pairs: list, k: int, masks: list) -> Iterator:
    for combo in combinations(pairs, k):
        bits = 0
        for attr, _ in combo:
            bits |= 1 << attr
        for attr, _ in combo:
            if masks[attr] & bits:
                break
        else:
            yield combo


# ---------------------------------------------------------------------------
# Metric specifications
# ---------------------------------------------------------------------------


class MetricKind(str, Enum):
    COUNT = "count"
    SUM = "sum"
    DISTINCT_COUNT = "distinct_count"
    PERCENTILE = "percentile"
    AVERAGE = "average"
    RATIO = "ratio"
    DIFFERENCE = "difference"
    SIGNED_SUM = "signed_sum"


BASE_KINDS = {MetricKind.COUNT, MetricKind.SUM, MetricKind.DISTINCT_COUNT, MetricKind.PERCENTILE}
COMPOSITE_KINDS = {MetricKind.AVERAGE, MetricKind.RATIO, MetricKind.DIFFERENCE, MetricKind.SIGNED_SUM}


@dataclass(frozen=True)
class MetricSpec:
    """Declarative description of one metric.

    Base kinds aggregate a field directly (count, sum, distinct_count,
    percentile).  Composite kinds are computed at query time from base
    metrics: average = sum/count over ``field``; ratio and difference
    reference two declared metrics by name; signed_sum splits ``field``
    into non-negative positive and negative parts.
    """

    name: str
    kind: MetricKind
    field: Optional[str] = None
    p: Optional[float] = None  # percentile rank in (0, 1)
    sign_split: bool = False
    numerator: Optional[str] = None  # ratio
    denominator: Optional[str] = None
    a: Optional[str] = None  # difference: a - b
    b: Optional[str] = None

    def __post_init__(self):
        k = self.kind
        if k in (MetricKind.SUM, MetricKind.DISTINCT_COUNT, MetricKind.PERCENTILE,
                 MetricKind.AVERAGE, MetricKind.SIGNED_SUM) and not self.field:
            raise ValueError(f"metric {self.name!r}: kind {k.value} requires a field")
        if k == MetricKind.PERCENTILE:
            if self.p is None or not (0.0 < self.p < 1.0):
                raise ValueError(f"metric {self.name!r}: percentile rank must be in (0, 1)")
        if k == MetricKind.RATIO and not (self.numerator and self.denominator):
            raise ValueError(f"metric {self.name!r}: ratio requires numerator and denominator")
        if k == MetricKind.DIFFERENCE and not (self.a and self.b):
            raise ValueError(f"metric {self.name!r}: difference requires a and b")
        if k == MetricKind.SIGNED_SUM:
            object.__setattr__(self, "sign_split", True)

    @property
    def is_composite(self) -> bool:
        return self.kind in COMPOSITE_KINDS or (self.kind == MetricKind.SUM and self.sign_split)

    @staticmethod
    def from_dict(d: dict) -> "MetricSpec":
        kind = MetricKind(str(d["kind"]).lower())
        return MetricSpec(
            name=d["name"],
            kind=kind,
            field=d.get("field"),
            p=d.get("p"),
            sign_split=bool(d.get("sign_split", False)),
            numerator=d.get("numerator"),
            denominator=d.get("denominator"),
            a=d.get("a"),
            b=d.get("b"),
        )

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind.value}
        for key in ("field", "p", "numerator", "denominator", "a", "b"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        if self.sign_split:
            out["sign_split"] = True
        return out


# ---------------------------------------------------------------------------
# Canonical text rendering
# ---------------------------------------------------------------------------


def slice_text(s: Slice, attr_names: Sequence[str], value_dicts: Sequence[Interner]) -> str:
    """Canonical human-readable form: ``[attr=value, attr=value]`` sorted by
    attribute name; the empty slice renders ``[]``."""
    if not s:
        return "[]"
    parts = sorted(
        (attr_names[a], value_dicts[a][v]) for a, v in s
    )
    return "[" + ", ".join(f"{n}={v}" for n, v in parts) + "]"


_SLICE_RE = re.compile(r"^\s*\[(.*)\]\s*$", re.DOTALL)


def parse_slice_text(
    text: str, attr_names: Sequence[str], value_dicts: Sequence[Interner]
) -> Slice:
    """Inverse of slice_text for API/CLI input.

    Splits on ", " and then the first "="; a part whose attribute is unknown
    is re-joined onto the previous part, so values containing ", " survive as
    long as the next token does not itself look like a known attribute.
    """
    m = _SLICE_RE.match(text)
    if m is None:
        raise ValueError(f"not a slice: {text!r} (expected [attr=value, ...])")
    body = m.group(1).strip()
    if not body:
        return TOP
    name_to_id = {n: i for i, n in enumerate(attr_names)}
    raw_parts = body.split(", ")
    merged: list[str] = []
    for part in raw_parts:
        attr = part.split("=", 1)[0]
        if attr in name_to_id or not merged:
            merged.append(part)
        else:
            merged[-1] += ", " + part
    pairs = []
    for part in merged:
        if "=" not in part:
            raise ValueError(f"bad slice component {part!r} in {text!r}")
        attr, value = part.split("=", 1)
        aid = name_to_id.get(attr)
        if aid is None:
            raise ValueError(f"unknown attribute {attr!r} in {text!r}")
        vid = value_dicts[aid].lookup(value)
        if vid is None:
            raise ValueError(f"unknown value {value!r} for attribute {attr!r}")
        pairs.append((aid, vid))
    return canonicalize_slice(pairs)
