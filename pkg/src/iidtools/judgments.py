"""Sparse pairwise reflectance judgments: ingestion, resolution, and splits.

Judgment files follow the public IIW JSON schema: ``intrinsic_points``
(id, x, y, opaque) with normalized coordinates, and
``intrinsic_comparisons`` (point1, point2, darker in {"1","2","E"},
darker_score). Label "1" means point 1 has the darker reflectance, "2"
the reverse, "E" about equal.
"""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

DARKER_1 = "1"
DARKER_2 = "2"
EQUAL = "E"
LABELS = (DARKER_1, DARKER_2, EQUAL)


class IngestionError(ValueError):
    """Raised when a judgment file cannot be parsed."""


@dataclass(frozen=True)
class Comparison:
    point1: int
    point2: int
    label: str
    weight: float


@dataclass
class JudgmentSet:
    """All pairwise judgments for one image.

    ``points`` maps point id to normalized (x, y) in [0, 1]^2.
    ``dropped`` counts comparisons discarded during ingestion (missing
    endpoints, null label/score, or non-opaque endpoints).
    """

    image_id: str
    points: dict
    comparisons: list = field(default_factory=list)
    dropped: int = 0

    @property
    def total_weight(self):
        return sum(c.weight for c in self.comparisons)


@dataclass
class DatasetSplit:
    train: list
    validation: list
    test: list


def load_iiw_judgments(path):
    """Load one IIW-format judgment file.

    Comparisons referencing missing points, with a null ``darker`` or
    ``darker_score``, or touching a non-opaque point are dropped and
    counted in ``dropped``.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IngestionError(f"cannot read '{path}': {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IngestionError(f"invalid JSON in '{path}' at line {exc.lineno}: {exc.msg}") from exc

    image_id = str(doc.get("photo") or _stem(path))
    points = {}
    opaque = {}
    for entry in doc.get("intrinsic_points", []):
        try:
            pid = entry["id"]
            points[pid] = (float(entry["x"]), float(entry["y"]))
        except (KeyError, TypeError) as exc:
            raise IngestionError(f"malformed intrinsic_points entry in '{path}': {exc}") from exc
        opaque[pid] = bool(entry.get("opaque", True))

    comparisons = []
    dropped = 0
    for entry in doc.get("intrinsic_comparisons", []):
        p1 = entry.get("point1")
        p2 = entry.get("point2")
        label = entry.get("darker")
        score = entry.get("darker_score")
        if (
            p1 not in points
            or p2 not in points
            or label not in LABELS
            or score is None
            or not math.isfinite(score)
            or score < 0
            or not (opaque[p1] and opaque[p2])
        ):
            dropped += 1
            continue
        comparisons.append(Comparison(p1, p2, label, float(score)))

    return JudgmentSet(image_id, points, comparisons, dropped)


def _stem(path):
    name = str(path).replace("\\", "/").rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[0]


def resolve_points(jset, width, height):
    """Map normalized point coordinates onto a width x height raster.

    Returns a list of (comparison, (x1, y1), (x2, y2)) with pixel
    coordinates computed as floor(coord * size) clamped into the raster.
    """
    if width < 1 or height < 1:
        raise ValueError(f"raster size must be >= 1, got {width}x{height}")

    def to_pixel(xy):
        x = min(max(int(math.floor(xy[0] * width)), 0), width - 1)
        y = min(max(int(math.floor(xy[1] * height)), 0), height - 1)
        return (x, y)

    return [
        (c, to_pixel(jset.points[c.point1]), to_pixel(jset.points[c.point2]))
        for c in jset.comparisons
    ]


def split_narihira(image_ids):
    """Deterministic train/validation/test split over filename-sorted ids.

    With ids sorted ascending, index i goes to the test set when
    i % 5 == 0, to the validation set when i % 10 == 6, and to the
    training set otherwise (ratios approach 70/10/20).
    """
    ordered = sorted(image_ids)
    split = DatasetSplit([], [], [])
    for i, image_id in enumerate(ordered):
        if i % 5 == 0:
            split.test.append(image_id)
        elif i % 10 == 6:
            split.validation.append(image_id)
        else:
            split.train.append(image_id)
    return split


# ---------------------------------------------------------------------------
# transitive-closure augmentation
#
# Relations are kept per unordered point pair as (label, weight) where the
# label is normalized to the pair's canonical (sorted) orientation. EQUAL
# identifies the two points; DARKER orders them. Chains mixing EQUAL and
# DARKER yield DARKER; derived weights are the minimum over the generating
# pair. When two relations arise for one pair the higher-confidence one
# wins, and the final set keeps only comparisons consistent with it.


def _canonical(p1, p2, label):
    if p1 <= p2:
        return (p1, p2), label
    flipped = {DARKER_1: DARKER_2, DARKER_2: DARKER_1, EQUAL: EQUAL}[label]
    return (p2, p1), flipped


def _oriented(pair, label, a, b):
    # label of (a, b) given the canonical relation on pair = (min, max)
    if (a, b) == pair:
        return label
    return {DARKER_1: DARKER_2, DARKER_2: DARKER_1, EQUAL: EQUAL}[label]


def _combine(label_ab, label_bc):
    # relation between a and c implied by a~b and b~c; None if inconsistent
    if label_ab == EQUAL:
        return label_bc
    if label_bc == EQUAL:
        return label_ab
    if label_ab == label_bc:
        return label_ab
    return None


def augment_transitive(jset):
    """Close the judgment set under transitivity.

    Original comparisons are retained unless they contradict a
    higher-confidence relation; derived comparisons are appended for
    point pairs not present in the input.
    """
    facts = {}
    for c in jset.comparisons:
        pair, label = _canonical(c.point1, c.point2, c.label)
        cur = facts.get(pair)
        if cur is None or c.weight > cur[0]:
            facts[pair] = (c.weight, label)

    # adjacency: point -> pairs touching it (dict used as an ordered set so
    # traversal order, and therefore tie-breaking, is deterministic)
    adj = {}
    for pair in facts:
        adj.setdefault(pair[0], {})[pair] = True
        adj.setdefault(pair[1], {})[pair] = True

    frontier = list(facts.keys())
    while frontier:
        pair = frontier.pop()
        weight, label = facts[pair]
        a, b = pair
        for mid, far_end in ((a, b), (b, a)):
            for other in list(adj.get(mid, ())):
                if other == pair:
                    continue
                w2, l2 = facts[other]
                c_end = other[0] if other[1] == mid else other[1]
                # chain far_end ~ mid ~ c_end
                lab1 = _oriented(pair, label, far_end, mid)
                lab2 = _oriented(other, l2, mid, c_end)
                new_label = _combine(lab1, lab2)
                if new_label is None:
                    continue
                new_pair, new_canon = _canonical(far_end, c_end, new_label)
                new_weight = min(weight, w2)
                # higher confidence wins, both for duplicates and for
                # contradictions; ties keep the incumbent (terminates)
                cur = facts.get(new_pair)
                if cur is not None and cur[0] >= new_weight:
                    continue
                facts[new_pair] = (new_weight, new_canon)
                adj.setdefault(new_pair[0], {})[new_pair] = True
                adj.setdefault(new_pair[1], {})[new_pair] = True
                frontier.append(new_pair)

    consistent_pairs = set()
    kept = []
    for c in jset.comparisons:
        pair, label = _canonical(c.point1, c.point2, c.label)
        if facts[pair][1] == label:
            kept.append(c)
            consistent_pairs.add(pair)
    # emit the winning relation for every pair not already represented,
    # including pairs whose originals were all contradicted
    for pair in sorted(facts):
        if pair in consistent_pairs:
            continue
        weight, label = facts[pair]
        p1, p2 = pair
        kept.append(Comparison(p1, p2, label, weight))

    return JudgmentSet(jset.image_id, dict(jset.points), kept, jset.dropped)


def subsample_pairs(jset, keep_fraction, seed):
    """Keep a uniformly random subset of round(keep_fraction * N) comparisons."""
    if not 0.0 <= keep_fraction <= 1.0:
        raise ValueError(f"keep_fraction must be in [0, 1], got {keep_fraction}")
    n = len(jset.comparisons)
    k = int(round(keep_fraction * n))
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(n, size=k, replace=False)) if k else []
    return replace(jset, comparisons=[jset.comparisons[i] for i in chosen])
