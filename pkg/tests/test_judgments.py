import json

import numpy as np
import pytest

from iidtools import judgments as judg


def write_judgments(tmp_path, points, comparisons, name="1234.json"):
    doc = {"intrinsic_points": points, "intrinsic_comparisons": comparisons}
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def point(pid, x=0.5, y=0.5, opaque=True):
    return {"id": pid, "x": x, "y": y, "opaque": opaque}


def comparison(p1, p2, darker, score=1.0):
    return {"point1": p1, "point2": p2, "darker": darker, "darker_score": score}


class TestLoad:
    def test_direct_field_mapping(self, tmp_path):
        path = write_judgments(
            tmp_path,
            [point(1, 0.25, 0.75), point(2, 0.5, 0.5)],
            [comparison(1, 2, "E", 1.2)],
        )
        jset = judg.load_iiw_judgments(path)
        assert jset.image_id == "1234"
        assert jset.points[1] == (0.25, 0.75)
        assert len(jset.comparisons) == 1
        c = jset.comparisons[0]
        assert (c.point1, c.point2, c.label, c.weight) == (1, 2, "E", 1.2)
        assert jset.dropped == 0

    def test_unknown_point_dropped_with_warning(self, tmp_path):
        path = write_judgments(
            tmp_path, [point(1), point(2)],
            [comparison(1, 99, "1"), comparison(1, 2, "2")],
        )
        jset = judg.load_iiw_judgments(path)
        assert len(jset.comparisons) == 1
        assert jset.dropped == 1

    def test_null_darker_and_score_dropped(self, tmp_path):
        path = write_judgments(
            tmp_path, [point(1), point(2)],
            [comparison(1, 2, None), comparison(1, 2, "1", None)],
        )
        jset = judg.load_iiw_judgments(path)
        assert jset.comparisons == []
        assert jset.dropped == 2

    def test_non_opaque_point_dropped(self, tmp_path):
        path = write_judgments(
            tmp_path, [point(1, opaque=False), point(2)],
            [comparison(1, 2, "1")],
        )
        jset = judg.load_iiw_judgments(path)
        assert jset.comparisons == []
        assert jset.dropped == 1

    def test_empty_comparisons(self, tmp_path):
        jset = judg.load_iiw_judgments(write_judgments(tmp_path, [point(1)], []))
        assert jset.comparisons == []
        assert jset.total_weight == 0.0

    def test_parse_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(judg.IngestionError, match="line"):
            judg.load_iiw_judgments(path)


class TestResolve:
    def test_floor_rule(self):
        jset = judg.JudgmentSet("x", {1: (0.5, 0.5), 2: (0.0, 0.0)},
                                [judg.Comparison(1, 2, "E", 1.0)])
        [(_, p1, p2)] = judg.resolve_points(jset, 256, 256)
        assert p1 == (128, 128)
        assert p2 == (0, 0)

    def test_boundary_clamp(self):
        jset = judg.JudgmentSet("x", {1: (1.0, 1.0), 2: (0.999, 0.0)},
                                [judg.Comparison(1, 2, "1", 1.0)])
        [(_, p1, p2)] = judg.resolve_points(jset, 256, 256)
        assert p1 == (255, 255)
        assert p2 == (255, 0)

    def test_invalid_raster(self):
        jset = judg.JudgmentSet("x", {}, [])
        with pytest.raises(ValueError):
            judg.resolve_points(jset, 0, 4)


class TestSplit:
    def test_first_ten(self):
        split = judg.split_narihira([f"{i:02d}" for i in range(10)])
        assert split.test == ["00", "05"]
        assert split.validation == ["06"]
        assert split.train == ["01", "02", "03", "04", "07", "08", "09"]

    def test_single_id(self):
        split = judg.split_narihira(["only"])
        assert split.test == ["only"]
        assert split.validation == [] and split.train == []

    def test_twenty_ids_sizes(self):
        split = judg.split_narihira([f"{i:02d}" for i in range(20)])
        assert (len(split.test), len(split.validation), len(split.train)) == (4, 2, 14)

    def test_partition_property(self):
        ids = [f"img{i:03d}" for i in range(137)]
        split = judg.split_narihira(ids)
        parts = [set(split.train), set(split.validation), set(split.test)]
        assert parts[0] | parts[1] | parts[2] == set(ids)
        assert not (parts[0] & parts[1]) and not (parts[0] & parts[2]) and not (parts[1] & parts[2])

    def test_test_set_independent_of_validation_carveout(self):
        ids = [f"{i:03d}" for i in range(50)]
        split = judg.split_narihira(ids)
        assert split.test == [ids[i] for i in range(50) if i % 5 == 0]


def make_set(comparisons):
    points = {}
    for c in comparisons:
        points.setdefault(c.point1, (0.1, 0.1))
        points.setdefault(c.point2, (0.9, 0.9))
    return judg.JudgmentSet("t", points, list(comparisons))


def relations(jset):
    return {
        tuple(sorted((c.point1, c.point2))): (c.label if c.point1 < c.point2 else
                                              {"1": "2", "2": "1", "E": "E"}[c.label],
                                              c.weight)
        for c in jset.comparisons
    }


class TestTransitiveClosure:
    def test_darker_chain(self):
        jset = make_set([judg.Comparison(1, 2, "1", 0.8), judg.Comparison(2, 3, "1", 0.6)])
        out = judg.augment_transitive(jset)
        rel = relations(out)
        assert rel[(1, 3)] == ("1", 0.6)
        assert len(out.comparisons) == 3

    def test_equality_substitution(self):
        jset = make_set([judg.Comparison(1, 2, "E", 0.9), judg.Comparison(2, 3, "1", 0.5)])
        out = judg.augment_transitive(jset)
        assert relations(out)[(1, 3)] == ("1", 0.5)

    def test_contradiction_discards_lower_confidence(self):
        # 1 < 2 (strong); 2 = 3 and 3 < 1 derive 2 < 1 weakly -> dropped
        jset = make_set([
            judg.Comparison(1, 2, "1", 0.8),
            judg.Comparison(2, 3, "E", 0.3),
            judg.Comparison(3, 1, "2", 0.3),
        ])
        out = judg.augment_transitive(jset)
        rel = relations(out)
        assert rel[(1, 2)] == ("1", 0.8)

    def test_contradicting_original_removed(self):
        # strong chain derives 1 < 3; weak original says 3 < 1 and is discarded
        jset = make_set([
            judg.Comparison(1, 2, "1", 0.9),
            judg.Comparison(2, 3, "1", 0.9),
            judg.Comparison(1, 3, "2", 0.1),
        ])
        out = judg.augment_transitive(jset)
        rel = relations(out)
        assert rel[(1, 3)] == ("1", 0.9)
        assert all(not (c.point1 == 1 and c.point2 == 3 and c.label == "2")
                   for c in out.comparisons)

    def test_equality_classes(self):
        jset = make_set([judg.Comparison(1, 2, "E", 0.7), judg.Comparison(2, 3, "E", 0.4)])
        out = judg.augment_transitive(jset)
        assert relations(out)[(1, 3)] == ("E", 0.4)

    def test_idempotent(self):
        rng = np.random.default_rng(7)
        comparisons = []
        for _ in range(30):
            a, b = rng.choice(12, size=2, replace=False)
            label = rng.choice(["1", "2", "E"])
            comparisons.append(judg.Comparison(int(a), int(b), str(label),
                                               float(rng.uniform(0.1, 1.0))))
        once = judg.augment_transitive(make_set(comparisons))
        twice = judg.augment_transitive(once)
        assert once.comparisons == twice.comparisons

    def test_never_decreases_consistent_count(self):
        rng = np.random.default_rng(11)
        for trial in range(10):
            comparisons = []
            for _ in range(15):
                a, b = rng.choice(8, size=2, replace=False)
                comparisons.append(judg.Comparison(int(a), int(b),
                                                   str(rng.choice(["1", "2", "E"])),
                                                   float(rng.uniform(0.1, 1.0))))
            jset = make_set(comparisons)
            out = judg.augment_transitive(jset)
            assert len(out.comparisons) >= len(_consistent(comparisons))

    def test_no_contradicting_pairs_in_output(self):
        rng = np.random.default_rng(13)
        for trial in range(10):
            comparisons = []
            for _ in range(20):
                a, b = rng.choice(9, size=2, replace=False)
                comparisons.append(judg.Comparison(int(a), int(b),
                                                   str(rng.choice(["1", "2", "E"])),
                                                   float(rng.uniform(0.1, 1.0))))
            out = judg.augment_transitive(make_set(comparisons))
            seen = {}
            for c in out.comparisons:
                pair = tuple(sorted((c.point1, c.point2)))
                label = c.label if c.point1 < c.point2 else {"1": "2", "2": "1", "E": "E"}[c.label]
                assert seen.setdefault(pair, label) == label


def _consistent(comparisons):
    best = {}
    for c in comparisons:
        pair = tuple(sorted((c.point1, c.point2)))
        label = c.label if c.point1 < c.point2 else {"1": "2", "2": "1", "E": "E"}[c.label]
        if pair not in best or c.weight > best[pair][1]:
            best[pair] = (label, c.weight)
    return [c for c in comparisons
            if best[tuple(sorted((c.point1, c.point2)))][0]
            == (c.label if c.point1 < c.point2 else {"1": "2", "2": "1", "E": "E"}[c.label])]


class TestSubsample:
    def base(self, n=10):
        return make_set([judg.Comparison(i, i + 100, "E", 1.0) for i in range(n)])

    def test_keep_all(self):
        jset = self.base()
        out = judg.subsample_pairs(jset, 1.0, seed=0)
        assert out.comparisons == jset.comparisons

    def test_keep_none(self):
        assert judg.subsample_pairs(self.base(), 0.0, seed=0).comparisons == []

    def test_half_deterministic(self):
        a = judg.subsample_pairs(self.base(), 0.5, seed=7)
        b = judg.subsample_pairs(self.base(), 0.5, seed=7)
        assert len(a.comparisons) == 5
        assert a.comparisons == b.comparisons
        c = judg.subsample_pairs(self.base(), 0.5, seed=8)
        assert len(c.comparisons) == 5

    def test_fraction_out_of_range(self):
        with pytest.raises(ValueError):
            judg.subsample_pairs(self.base(), 1.5, seed=0)
