"""The materialized cube: configuration, time buckets, metric resolution and
the per-(metric, granularity, bucket) segments the engine builds and serves.

Buckets are UTC-aligned; weeks start Monday, months are calendar months.  The
pseudo-granularity ``all`` holds a single bucket covering the whole stream.
"""

from __future__ import annotations

import hashlib
import json
import uuid
from dataclasses import dataclass, field as dc_field
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, NamedTuple, Optional, Sequence

from .errors import UnknownBucket, UnknownMetric
from .model import (
    Interner,
    MetricKind,
    MetricSpec,
    Slice,
    parse_slice_text,
    slice_text,
)
from .sketch import BoundedValue


class Granularity(str, Enum):
    MINUTE = "minute"
    HOUR = "hour"
    DAY = "day"
    WEEK = "week"
    MONTH = "month"
    ALL = "all"


_FIXED_SECONDS = {
    Granularity.MINUTE: 60,
    Granularity.HOUR: 3600,
    Granularity.DAY: 86400,
}

# coarser-than ordering for rollup ladders
GRAN_ORDER = [
    Granularity.MINUTE,
    Granularity.HOUR,
    Granularity.DAY,
    Granularity.WEEK,
    Granularity.MONTH,
]


class TimeBucket(NamedTuple):
    granularity: Granularity
    start: int  # epoch seconds UTC, aligned


ALL_BUCKET = TimeBucket(Granularity.ALL, 0)


def bucketize(ts: float, g: Granularity) -> TimeBucket:
    """Floor a timestamp to its granularity boundary in UTC."""
    t = int(ts // 1)
    if g in _FIXED_SECONDS:
        step = _FIXED_SECONDS[g]
        return TimeBucket(g, t - t % step)
    if g == Granularity.WEEK:
        days = t // 86400
        dow = (days + 3) % 7  # 1970-01-01 was a Thursday; Monday = 0
        return TimeBucket(g, (days - dow) * 86400)
    if g == Granularity.MONTH:
        dt = datetime.fromtimestamp(t, tz=timezone.utc)
        start = datetime(dt.year, dt.month, 1, tzinfo=timezone.utc)
        return TimeBucket(g, int(start.timestamp()))
    raise ValueError(f"cannot bucketize to granularity {g.value!r}")


def next_bucket_start(g: Granularity, start: int) -> int:
    """Start of the bucket after the one beginning at ``start``."""
    if g in _FIXED_SECONDS:
        return start + _FIXED_SECONDS[g]
    if g == Granularity.WEEK:
        return start + 7 * 86400
    if g == Granularity.MONTH:
        dt = datetime.fromtimestamp(start, tz=timezone.utc)
        year, month = (dt.year + 1, 1) if dt.month == 12 else (dt.year, dt.month + 1)
        return int(datetime(year, month, 1, tzinfo=timezone.utc).timestamp())
    raise ValueError(f"granularity {g.value!r} has no successor buckets")


def bucket_range(g: Granularity, ts_from: float, ts_to: float) -> list:
    """Aligned bucket starts covering [ts_from, ts_to]; empty when from > to."""
    if ts_from > ts_to:
        return []
    out = []
    start = bucketize(ts_from, g).start
    end = bucketize(ts_to, g).start
    while start <= end:
        out.append(start)
        start = next_bucket_start(g, start)
    return out


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

MULTIPASS_MODES = ("auto", "single", "multi")

# crossover observed for the pass strategy: many columns or deep slices
AUTO_MULTIPASS_ATTRS = 20
AUTO_MULTIPASS_DEPTH = 3


@dataclass
class CubeConfig:
    """Declarative description of a cube build.

    ``n`` caps tracked slices per (metric, bucket) segment; typical values run
    from 100k up to 1M for very wide tables.  ``max_depth`` caps how many
    attributes a slice may constrain.
    """

    attributes: list
    metrics: list
    time_column: str = "ts"
    granularity: Granularity = Granularity.DAY
    n: int = 100_000
    max_depth: int = 3
    overflow_factor: float = 2.0
    multipass: str = "auto"
    fd_sample_size: int = 100_000
    fd_violation_tolerance: float = 0.0
    refine: bool = True
    rollups: bool = True
    distinct_k: int = 1024
    quantile_k: int = 200

    def __post_init__(self):
        if isinstance(self.granularity, str):
            self.granularity = Granularity(self.granularity)
        self.metrics = [
            m if isinstance(m, MetricSpec) else MetricSpec.from_dict(m)
            for m in self.metrics
        ]
        if not self.attributes:
            raise ValueError("at least one attribute required")
        if len(set(self.attributes)) != len(self.attributes):
            raise ValueError("duplicate attribute names")
        if not self.metrics:
            raise ValueError("at least one metric required")
        names = [m.name for m in self.metrics]
        if len(set(names)) != len(names):
            raise ValueError("duplicate metric names")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not (1 <= self.max_depth <= len(self.attributes)):
            raise ValueError("max_depth must be in [1, number of attributes]")
        if self.overflow_factor < 1.0:
            raise ValueError("overflow_factor must be >= 1.0")
        if self.multipass not in MULTIPASS_MODES:
            raise ValueError(f"multipass must be one of {MULTIPASS_MODES}")
        if self.granularity == Granularity.ALL:
            raise ValueError("base granularity cannot be 'all'")

    def use_multipass(self) -> bool:
        if self.multipass == "single":
            return False
        if self.multipass == "multi":
            return True
        return (
            len(self.attributes) > AUTO_MULTIPASS_ATTRS
            or self.max_depth >= AUTO_MULTIPASS_DEPTH
        )

    def measure_fields(self) -> list:
        """Numeric columns the configured metrics read, in first-use order."""
        out: list[str] = []
        for m in self.metrics:
            if m.kind in (
                MetricKind.SUM,
                MetricKind.PERCENTILE,
                MetricKind.AVERAGE,
                MetricKind.SIGNED_SUM,
            ) and m.field and m.field not in out:
                out.append(m.field)
        return out

    def key_fields(self) -> list:
        """Columns hashed for distinct counting, in first-use order."""
        out: list[str] = []
        for m in self.metrics:
            if m.kind == MetricKind.DISTINCT_COUNT and m.field and m.field not in out:
                out.append(m.field)
        return out

    @staticmethod
    def from_dict(d: dict) -> "CubeConfig":
        d = dict(d)
        d.pop("source", None)  # ingestion binding handled separately
        allowed = set(CubeConfig.__dataclass_fields__)
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return CubeConfig(**d)

    @staticmethod
    def from_file(path) -> "CubeConfig":
        import yaml

        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
        if not isinstance(doc, dict):
            raise ValueError(f"config file {path} must hold a mapping")
        return CubeConfig.from_dict(doc)

    def to_dict(self) -> dict:
        return {
            "attributes": list(self.attributes),
            "metrics": [m.to_dict() for m in self.metrics],
            "time_column": self.time_column,
            "granularity": self.granularity.value,
            "n": self.n,
            "max_depth": self.max_depth,
            "overflow_factor": self.overflow_factor,
            "multipass": self.multipass,
            "fd_sample_size": self.fd_sample_size,
            "fd_violation_tolerance": self.fd_violation_tolerance,
            "refine": self.refine,
            "rollups": self.rollups,
            "distinct_k": self.distinct_k,
            "quantile_k": self.quantile_k,
        }


# ---------------------------------------------------------------------------
# Metric resolution: user metrics -> physical (sketched) bases + composites
# ---------------------------------------------------------------------------


class Transform(str, Enum):
    NONE = "none"
    POS = "pos"  # max(x, 0)
    NEG = "neg"  # max(-x, 0)


@dataclass(frozen=True)
class PhysicalMetric:
    """A directly sketched base aggregation."""

    id: int
    name: str
    kind: MetricKind
    field: Optional[str] = None
    p: Optional[float] = None
    transform: Transform = Transform.NONE
    internal: bool = False


@dataclass(frozen=True)
class CompositeDef:
    """A metric computed at query time from physical bases."""

    id: int
    name: str
    kind: MetricKind
    parts: tuple  # ((role, physical_id), ...)

    def part(self, role: str) -> int:
        for r, pid in self.parts:
            if r == role:
                return pid
        raise KeyError(role)


_RATIO_OPERAND_KINDS = {MetricKind.COUNT, MetricKind.SUM, MetricKind.DISTINCT_COUNT}


def resolve_metrics(cfg: CubeConfig):
    """Expand configured metrics into physical bases and composites.

    Sign-split sums become a pos/neg base pair combined as pos - neg; average
    becomes sum/count.  Identical bases are shared between metrics so a
    composite's operands always reference one canonical physical metric.

    Returns (physical list, composite list, name -> ("physical"|"composite", id)).
    """
    physical: list[PhysicalMetric] = []
    composites: list[CompositeDef] = []
    phys_index: dict[tuple, int] = {}
    by_name: dict[str, tuple] = {}

    def get_phys(kind, field=None, p=None, transform=Transform.NONE, name=None):
        key = (kind, field, p, transform)
        pid = phys_index.get(key)
        if pid is None:
            pid = len(physical)
            physical.append(
                PhysicalMetric(
                    id=pid,
                    name=name or f"__{kind.value}_{field or 'rows'}_{transform.value}",
                    kind=kind,
                    field=field,
                    p=p,
                    transform=transform,
                    internal=name is None,
                )
            )
            phys_index[key] = pid
        return pid

    deferred = []
    for spec in cfg.metrics:
        k = spec.kind
        if k == MetricKind.COUNT:
            by_name[spec.name] = ("physical", get_phys(k, name=spec.name))
        elif k == MetricKind.SUM and not spec.sign_split:
            by_name[spec.name] = ("physical", get_phys(k, spec.field, name=spec.name))
        elif k in (MetricKind.DISTINCT_COUNT, MetricKind.PERCENTILE):
            by_name[spec.name] = (
                "physical",
                get_phys(k, spec.field, p=spec.p, name=spec.name),
            )
        else:
            deferred.append(spec)

    for spec in deferred:
        k = spec.kind
        cid = len(cfg.metrics) * 2 + len(composites)  # stable, disjoint from phys ids
        if k in (MetricKind.SIGNED_SUM,) or (k == MetricKind.SUM and spec.sign_split):
            pos = get_phys(MetricKind.SUM, spec.field, transform=Transform.POS)
            neg = get_phys(MetricKind.SUM, spec.field, transform=Transform.NEG)
            comp = CompositeDef(cid, spec.name, MetricKind.SIGNED_SUM, (("pos", pos), ("neg", neg)))
        elif k == MetricKind.AVERAGE:
            s = get_phys(MetricKind.SUM, spec.field)
            c = get_phys(MetricKind.COUNT)
            comp = CompositeDef(cid, spec.name, k, (("sum", s), ("count", c)))
        elif k in (MetricKind.RATIO, MetricKind.DIFFERENCE):
            if k == MetricKind.RATIO:
                roles = (("num", spec.numerator), ("den", spec.denominator))
            else:
                roles = (("a", spec.a), ("b", spec.b))
            parts = []
            for role, ref in roles:
                target = by_name.get(ref)
                if target is None or target[0] != "physical":
                    raise ValueError(
                        f"metric {spec.name!r}: operand {ref!r} must name a base "
                        "metric declared in the same config"
                    )
                pm = physical[target[1]]
                if pm.kind not in _RATIO_OPERAND_KINDS:
                    raise ValueError(
                        f"metric {spec.name!r}: operand {ref!r} has kind "
                        f"{pm.kind.value}, which cannot be combined"
                    )
                parts.append((role, pm.id))
            comp = CompositeDef(cid, spec.name, k, tuple(parts))
        else:  # pragma: no cover - exhaustive above
            raise ValueError(f"unhandled metric kind {k}")
        composites.append(comp)
        by_name[spec.name] = ("composite", comp.id)

    return physical, composites, by_name


# ---------------------------------------------------------------------------
# Segments and the assembled cube
# ---------------------------------------------------------------------------


@dataclass
class CubeSegment:
    """All tracked slices for one (metric, bucket): the persisted unit.

    ``entries`` are (slice, BoundedValue) sorted by upper bound descending,
    ties by canonical slice text, so top-k queries read a prefix.  ``aux``
    carries per-slice distinct/quantile summaries during a build; it is
    dropped on serialization.
    """

    metric_id: int
    bucket: TimeBucket
    entries: list
    pruned_max: float
    total: float
    aux: Optional[dict] = None
    total_aux: object = None
    _index: Optional[dict] = None

    def index(self) -> dict:
        if self._index is None or len(self._index) != len(self.entries):
            self._index = {s: bv for s, bv in self.entries}
        return self._index

    def value(self, s: Slice) -> Optional[BoundedValue]:
        if not s:
            return BoundedValue(self.total, self.total, exact=True)
        return self.index().get(s)

    @property
    def exact(self) -> bool:
        return all(bv.exact for _, bv in self.entries)

    def same_data(self, other: "CubeSegment") -> bool:
        """Field-by-field equality over the persisted fields."""
        return (
            self.metric_id == other.metric_id
            and self.bucket == other.bucket
            and self.pruned_max == other.pruned_max
            and self.total == other.total
            and self.entries == other.entries
        )


@dataclass
class Cube:
    """An assembled (or loaded) cube: dictionaries, metrics and segments."""

    config: CubeConfig
    attr_names: list
    value_dicts: list
    physical: list
    composites: list
    metric_names: dict
    segments: dict  # (metric_id, Granularity, start) -> CubeSegment
    cube_id: str = ""
    created_at: str = ""

    def __post_init__(self):
        if not self.created_at:
            self.created_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
        if not self.cube_id:
            self.cube_id = self._derive_id()

    def _derive_id(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.config.to_dict(), sort_keys=True).encode())
        for key in sorted(self.segments):
            seg = self.segments[key]
            h.update(
                f"{key[0]}:{key[1].value}:{key[2]}:{len(seg.entries)}:{seg.total!r}:{seg.pruned_max!r}".encode()
            )
        return str(uuid.uuid5(uuid.NAMESPACE_URL, "slicecube:" + h.hexdigest()))

    # -- metric lookup ------------------------------------------------------

    def resolve_metric(self, name: str):
        """('physical'|'composite', PhysicalMetric|CompositeDef) for a name."""
        target = self.metric_names.get(name)
        if target is None:
            raise UnknownMetric(f"unknown metric {name!r}")
        kind, mid = target
        if kind == "physical":
            return kind, self.physical[mid]
        return kind, self._composite_by_id(mid)

    def _composite_by_id(self, cid: int) -> CompositeDef:
        for c in self.composites:
            if c.id == cid:
                return c
        raise UnknownMetric(f"composite id {cid} missing")

    def public_metric_names(self) -> list:
        return [name for name in self.metric_names]

    # -- segment access -----------------------------------------------------

    def segment(self, metric_id: int, bucket: TimeBucket) -> CubeSegment:
        seg = self.segments.get((metric_id, bucket.granularity, bucket.start))
        if seg is None:
            raise UnknownBucket(
                f"no segment for metric {metric_id} at "
                f"{bucket.granularity.value}/{bucket.start}"
            )
        return seg

    def segment_or_none(self, metric_id: int, bucket: TimeBucket):
        return self.segments.get((metric_id, bucket.granularity, bucket.start))

    def bucket_starts(self, metric_id: int, g: Granularity) -> list:
        return sorted(
            start for mid, gran, start in self.segments if mid == metric_id and gran == g
        )

    def granularities(self) -> list:
        return sorted({gran.value for _, gran, _ in self.segments})

    # -- rendering ----------------------------------------------------------

    def slice_text(self, s: Slice) -> str:
        return slice_text(s, self.attr_names, self.value_dicts)

    def parse_slice(self, text: str) -> Slice:
        return parse_slice_text(text, self.attr_names, self.value_dicts)

    def text_key(self) -> Callable:
        return lambda s: slice_text(s, self.attr_names, self.value_dicts)
