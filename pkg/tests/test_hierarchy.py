import random

import pytest

from fewtype.errors import DataError
from fewtype.hierarchy import (
    LabelPath,
    build_hierarchy,
    default_names,
    parse_label_path,
)


def p(s: str) -> LabelPath:
    return parse_label_path(s)


class TestParseLabelPath:
    def test_two_segments(self):
        assert parse_label_path("/organization/company").segments == ("organization", "company")

    def test_single_segment(self):
        assert parse_label_path("/person").segments == ("person",)

    def test_empty_segment_rejected(self):
        with pytest.raises(DataError, match="empty segment"):
            parse_label_path("//company")

    def test_missing_leading_slash_rejected(self):
        with pytest.raises(DataError, match="must start with '/'"):
            parse_label_path("person")

    def test_roundtrip_lowercases(self):
        assert str(parse_label_path("/Organization/Company")) == "/organization/company"

    def test_roundtrip_random_paths(self):
        rng = random.Random(7)
        alphabet = "abcdefgh_0123"
        for _ in range(200):
            segs = [
                "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 6)))
                for _ in range(rng.randint(1, 4))
            ]
            s = "/" + "/".join(segs)
            assert str(parse_label_path(s)) == s.lower()


class TestBuildHierarchy:
    def test_parent_and_siblings(self):
        h = build_hierarchy({p("/org"), p("/org/company"), p("/org/media")})
        assert h.parent_of(p("/org/company")) == p("/org")
        assert h.siblings(p("/org/company")) == {p("/org/media")}

    def test_singleton_root(self):
        h = build_hierarchy({p("/person")})
        assert h.parent_of(p("/person")) is None
        assert h.siblings(p("/person")) == set()

    def test_missing_prefix_becomes_root(self):
        h = build_hierarchy({p("/a/b")})
        assert h.parent_of(p("/a/b")) is None

    def test_duplicates_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            build_hierarchy([p("/a"), p("/a")])

    def test_unknown_label_queries_fail(self):
        h = build_hierarchy({p("/a")})
        with pytest.raises(DataError, match="unknown label"):
            h.parent_of(p("/zzz"))

    def test_construction_is_order_independent(self):
        paths = [p("/a"), p("/a/b"), p("/a/c"), p("/d"), p("/d/e/f"), p("/d/e")]
        rng = random.Random(3)
        reference = build_hierarchy(paths)
        for _ in range(10):
            shuffled = list(paths)
            rng.shuffle(shuffled)
            h = build_hierarchy(shuffled)
            assert h.labels == reference.labels
            for label in h.labels:
                assert h.parent_of(label) == reference.parent_of(label)
                assert h.names_of(label) == reference.names_of(label)

    def test_extra_names_merge_with_defaults(self):
        h = build_hierarchy({p("/org/company")}, {"/org/company": ["firm", "Business"]})
        assert h.names_of(p("/org/company")) == ("company", "firm", "business")

    def test_extra_names_for_unknown_label_rejected(self):
        with pytest.raises(DataError, match="unknown label"):
            build_hierarchy({p("/a")}, {"/b": ["x"]})

    def test_extra_names_file(self, tmp_path):
        import json

        from fewtype.hierarchy import load_extra_names

        path = tmp_path / "names.json"
        path.write_text(json.dumps({"/org/company": ["firm", "venture"]}))
        names = load_extra_names(path)
        h = build_hierarchy({p("/org/company")}, names)
        assert h.names_of(p("/org/company")) == ("company", "firm", "venture")

    def test_extra_names_file_validation(self, tmp_path):
        path = tmp_path / "names.json"
        path.write_text('{"/a": "not-a-list"}')
        from fewtype.hierarchy import load_extra_names

        with pytest.raises(DataError, match="array of strings"):
            load_extra_names(path)


class TestNames:
    def test_composite_segment_splits(self):
        assert default_names(p("/org/sports_team")) == ("sports", "team")

    def test_plain_segment(self):
        assert default_names(p("/person")) == ("person",)


class TestClosureAndSiblingProperties:
    def test_closure_two_levels(self):
        h = build_hierarchy({p("/org"), p("/org/company")})
        assert h.ancestor_closure(p("/org/company")) == {p("/org"), p("/org/company")}

    def test_closure_root(self):
        h = build_hierarchy({p("/person")})
        assert h.ancestor_closure(p("/person")) == {p("/person")}

    def test_closure_three_levels(self):
        h = build_hierarchy({p("/a"), p("/a/b"), p("/a/b/c")})
        assert len(h.ancestor_closure(p("/a/b/c"))) == 3

    def _random_hierarchy(self, rng):
        paths = set()
        for _ in range(rng.randint(2, 15)):
            depth = rng.randint(1, 4)
            segs = tuple(rng.choice("abcde") for _ in range(depth))
            paths.add(LabelPath(segs))
            # sometimes include the prefix chain, sometimes leave gaps
            if rng.random() < 0.6:
                for d in range(1, depth):
                    paths.add(LabelPath(segs[:d]))
        return build_hierarchy(paths)

    def test_sibling_symmetry_and_exclusion(self):
        rng = random.Random(11)
        for _ in range(50):
            h = self._random_hierarchy(rng)
            for label in h.labels:
                sibs = h.siblings(label)
                assert label not in sibs
                for s in sibs:
                    assert h.parent_of(s) == h.parent_of(label)
                    assert label in h.siblings(s)

    def test_closure_monotone(self):
        rng = random.Random(13)
        for _ in range(50):
            h = self._random_hierarchy(rng)
            for label in h.labels:
                closure = h.ancestor_closure(label)
                for anc in closure:
                    assert h.ancestor_closure(anc) <= closure

    def test_sibling_pairs_counted_once(self):
        h = build_hierarchy({p("/a"), p("/a/x"), p("/a/y"), p("/a/z")})
        pairs = h.sibling_pairs()
        assert len(pairs) == 3
        assert len({frozenset(pair) for pair in pairs}) == 3
