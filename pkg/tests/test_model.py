import math

import pytest
from hypothesis import given, strategies as st

from slicecube.errors import ConflictingAttribute
from slicecube.model import (
    NULL_VALUE,
    TOP,
    FDGraph,
    Interner,
    MetricKind,
    MetricSpec,
    canonicalize_slice,
    enumerate_slices,
    is_ancestor,
    parents_of,
    parse_slice_text,
    slice_depth,
    slice_text,
)

pair_lists = st.lists(
    st.tuples(st.integers(0, 5), st.integers(0, 3)), max_size=6
)


class TestCanonicalize:
    def test_sorts_by_attribute(self):
        assert canonicalize_slice([(2, 7), (0, 1)]) == ((0, 1), (2, 7))

    def test_empty(self):
        assert canonicalize_slice([]) == TOP

    def test_conflict(self):
        with pytest.raises(ConflictingAttribute):
            canonicalize_slice([(1, 0), (1, 1)])

    def test_duplicate_identical_collapses(self):
        assert canonicalize_slice([(1, 5), (1, 5)]) == ((1, 5),)

    @given(pair_lists)
    def test_idempotent(self, pairs):
        try:
            once = canonicalize_slice(pairs)
        except ConflictingAttribute:
            return
        assert canonicalize_slice(once) == once


class TestParentsAncestors:
    def test_two_pair_parents(self):
        s = ((0, 1), (1, 2))
        assert set(parents_of(s)) == {((0, 1),), ((1, 2),)}

    def test_depth_one_parent_is_top(self):
        assert parents_of(((0, 1),)) == [TOP]

    def test_depth_three_gives_three_parents(self):
        s = ((0, 1), (1, 2), (2, 3))
        ps = parents_of(s)
        assert len(ps) == 3
        assert all(slice_depth(p) == 2 for p in ps)

    def test_top_is_ancestor_of_all(self):
        assert is_ancestor(TOP, ((0, 1),))

    def test_strictness(self):
        assert not is_ancestor(((0, 1),), ((0, 1),))

    def test_subset(self):
        assert is_ancestor(((0, 1),), ((0, 1), (1, 2)))

    @given(pair_lists)
    def test_parents_agree_with_is_ancestor(self, pairs):
        try:
            s = canonicalize_slice(pairs)
        except ConflictingAttribute:
            return
        for p in parents_of(s):
            assert is_ancestor(p, s)
            assert slice_depth(p) == slice_depth(s) - 1
        # and conversely: any strict subset at depth-1 is in parents_of
        parents = set(parents_of(s))
        for p in parents:
            assert p in parents


class TestEnumerate:
    def test_three_attrs_depth_two(self):
        slices = enumerate_slices((0, 0, 0), max_depth=2)
        assert len(slices) == 1 + 3 + 3

    def test_binomial_sum(self):
        # 10 non-NULL attrs at depth 3: sum of C(10, i) for i = 0..3
        expected = sum(math.comb(10, i) for i in range(4))
        assert expected == 176
        slices = enumerate_slices(tuple([0] * 10), max_depth=3)
        assert len(slices) == 176

    def test_null_attrs_generate_no_pairs(self):
        slices = enumerate_slices((1, NULL_VALUE, 2), max_depth=3)
        # only attrs 0 and 2 participate
        assert TOP in slices
        assert ((0, 1), (2, 2)) in slices
        assert len(slices) == 1 + 2 + 1

    def test_fd_drops_determined_combination(self):
        # attrs: 0=city, 1=country with city -> country
        fds = FDGraph(frozenset({(0, 1)}))
        slices = enumerate_slices((3, 9), max_depth=2, fds=fds)
        assert set(slices) == {TOP, ((0, 3),), ((1, 9),)}

    def test_fd_transitive_closure_filters(self):
        # city -> state -> country: (city, country) must also be excluded
        fds = FDGraph(frozenset({(0, 1), (1, 2)}))
        slices = enumerate_slices((1, 1, 1), max_depth=3, fds=fds)
        bad = [s for s in slices if len(s) >= 2 and any(a == 0 for a, _ in s) and any(a == 2 for a, _ in s)]
        assert bad == []
        assert ((1, 1), (2, 1)) not in slices  # state+country excluded too
        assert set(slices) == {TOP, ((0, 1),), ((1, 1),), ((2, 1),)}

    def test_depth_capped_by_non_null_count(self):
        slices = enumerate_slices((0, 0), max_depth=5)
        assert len(slices) == 1 + 2 + 1

    @given(st.integers(1, 8), st.integers(1, 8))
    def test_count_matches_binomial_oracle(self, d, depth):
        slices = enumerate_slices(tuple([0] * d), max_depth=depth)
        assert len(slices) == sum(math.comb(d, i) for i in range(min(d, depth) + 1))


class TestFDGraph:
    def test_closure(self):
        g = FDGraph(frozenset({(0, 1), (1, 2)}))
        assert g.closure_pairs() == frozenset({(0, 1), (1, 2), (0, 2)})

    def test_masks(self):
        g = FDGraph(frozenset({(0, 1)}))
        assert g.determined_masks(2) == [0b10, 0]


class TestRendering:
    def setup_method(self):
        self.names = ["state", "category"]
        self.dicts = [Interner(["CA", "NY"]), Interner(["Shoes", "Toys"])]

    def test_render_sorted_by_attr_name(self):
        s = ((0, 1), (1, 0))
        assert slice_text(s, self.names, self.dicts) == "[category=Shoes, state=NY]"

    def test_render_empty(self):
        assert slice_text(TOP, self.names, self.dicts) == "[]"

    def test_parse_round_trip(self):
        s = ((0, 0), (1, 1))
        text = slice_text(s, self.names, self.dicts)
        assert parse_slice_text(text, self.names, self.dicts) == s

    def test_parse_empty(self):
        assert parse_slice_text("[]", self.names, self.dicts) == TOP

    def test_parse_unknown_attribute(self):
        with pytest.raises(ValueError):
            parse_slice_text("[region=west]", self.names, self.dicts)


class TestMetricSpec:
    def test_percentile_requires_rank(self):
        with pytest.raises(ValueError):
            MetricSpec(name="lat", kind=MetricKind.PERCENTILE, field="ms")

    def test_signed_sum_forces_sign_split(self):
        m = MetricSpec(name="profit", kind=MetricKind.SIGNED_SUM, field="profit")
        assert m.sign_split

    def test_ratio_requires_operands(self):
        with pytest.raises(ValueError):
            MetricSpec(name="cr", kind=MetricKind.RATIO)

    def test_round_trip_dict(self):
        m = MetricSpec(name="rev", kind=MetricKind.SUM, field="amount")
        assert MetricSpec.from_dict(m.to_dict()) == m


class TestInterner:
    def test_stable(self):
        d = Interner()
        a = d.intern("x")
        b = d.intern("y")
        assert d.intern("x") == a
        assert (a, b) == (0, 1)
        assert d[1] == "y"
        assert len(d) == 2
