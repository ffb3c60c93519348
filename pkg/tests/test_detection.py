import itertools

import numpy as np
import pytest

from platerec.data import PlateSample
from platerec.detection import (
    BoundingBox,
    Detection,
    ExternalBoxDetector,
    MatchReport,
    OracleDetector,
    average_precision,
    iou,
    jitter_iou_bound,
    match_detections,
    nms,
    normalized_to_box,
    oracle_detect,
    parse_annotation_lines,
    read_annotations,
    write_annotations,
)
from platerec.errors import InvalidBox, MissingAnnotations, NoGroundTruth


def box(*v):
    return BoundingBox(*v)


def random_box(rng, size=100):
    x, y = rng.uniform(0, size, 2)
    w, h = rng.uniform(5, 40, 2)
    return BoundingBox(x, y, x + w, y + h)


# -- IoU --------------------------------------------------------------------
def test_iou_examples():
    a = box(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, box(20, 20, 30, 30)) == 0.0
    assert abs(iou(a, box(5, 0, 15, 10)) - 1 / 3) <= 1e-12


def test_iou_touching_edges_is_zero():
    assert iou(box(0, 0, 10, 10), box(10, 0, 20, 10)) == 0.0


def test_invalid_box():
    with pytest.raises(InvalidBox):
        box(5, 0, 5, 10)
    with pytest.raises(InvalidBox):
        box(0, 10, 5, 0)


def test_iou_symmetric_and_one_iff_identical(rng):
    for _ in range(500):
        a, b = random_box(rng), random_box(rng)
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) < 1.0
        assert iou(a, a) == 1.0


# -- NMS --------------------------------------------------------------------
def test_nms_single():
    d = [Detection(box(0, 0, 5, 5), 0.3)]
    assert nms(d, 0.5) == d


def test_nms_identical_boxes():
    d = [Detection(box(0, 0, 10, 10), 0.8), Detection(box(0, 0, 10, 10), 0.9)]
    assert nms(d, 0.5) == [d[1]]


def brute_force_nms(dets, thr):
    """The unique subset S with: d in S iff no higher-ranked member of S overlaps it."""
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    rank = {i: r for r, i in enumerate(order)}
    found = []
    for size in range(len(dets) + 1):
        for subset in itertools.combinations(range(len(dets)), size):
            s = set(subset)
            ok = all(
                (i in s) == all(not (rank[j] < rank[i] and iou(dets[i].box, dets[j].box) >= thr) for j in s)
                for i in range(len(dets))
            )
            if ok:
                found.append(s)
    assert len(found) == 1
    return found[0]


def test_nms_chain_matches_exhaustive_oracle():
    # a overlaps b, b overlaps c, a and c disjoint
    dets = [
        Detection(box(0, 0, 10, 10), 0.9),
        Detection(box(4, 0, 14, 10), 0.8),
        Detection(box(8, 0, 18, 10), 0.7),
    ]
    kept = nms(dets, 0.3)
    assert {dets.index(d) for d in kept} == brute_force_nms(dets, 0.3) == {0, 2}


def test_nms_random_matches_oracle(rng):
    for _ in range(100):
        n = int(rng.integers(1, 6))
        dets = [Detection(random_box(rng, 30), float(rng.random())) for _ in range(n)]
        thr = float(rng.uniform(0.1, 0.9))
        kept = nms(dets, thr)
        assert {dets.index(d) for d in kept} == brute_force_nms(dets, thr)
        assert max(dets, key=lambda d: d.score) in kept


# -- matching ---------------------------------------------------------------
def test_match_perfect():
    truths = [box(0, 0, 10, 10), box(20, 20, 30, 30)]
    dets = [Detection(t, 0.9) for t in truths]
    assert match_detections(dets, truths) == MatchReport(2, 0, 0)


def test_match_no_detections():
    assert match_detections([], [box(0, 0, 1, 1), box(2, 2, 3, 3)]) == MatchReport(0, 0, 2)


def test_match_two_detections_one_truth():
    t = box(0, 0, 10, 10)
    dets = [Detection(box(0, 0, 10, 9), 0.9), Detection(box(0, 1, 10, 10), 0.8)]
    assert match_detections(dets, [t]) == MatchReport(1, 1, 0)


def test_match_score_threshold():
    t = box(0, 0, 10, 10)
    assert match_detections([Detection(t, 0.2)], [t], score_threshold=0.5) == MatchReport(0, 0, 1)


def brute_force_match(dets, truths, thr=0.5):
    m = np.array([[iou(d.box, t) for t in truths] for d in dets]).reshape(len(dets), len(truths))
    free = np.ones(len(truths), dtype=bool)
    tp = 0
    for i in sorted(range(len(dets)), key=lambda i: -dets[i].score):
        row = np.where(free & (m[i] >= thr), m[i], -1.0)
        if len(truths) and row.max() >= thr:
            free[int(np.argmax(row))] = False
            tp += 1
    return MatchReport(tp, len(dets) - tp, len(truths) - tp)


def test_match_counts_random_scenes(rng):
    for _ in range(1000):
        truths = [random_box(rng, 60) for _ in range(int(rng.integers(0, 4)))]
        dets = [Detection(random_box(rng, 60), float(rng.random())) for _ in range(int(rng.integers(0, 5)))]
        # some near-copies so matches actually happen
        dets += [Detection(BoundingBox(t.left + 1, t.top, t.right + 1, t.bottom), float(rng.random())) for t in truths[:2]]
        r = match_detections(dets, truths)
        assert r.tp + r.fn == len(truths)
        assert r.tp + r.fp == len(dets)
        assert r == brute_force_match(dets, truths)


# -- AP ---------------------------------------------------------------------
def test_ap_perfect():
    truths = [box(0, 0, 10, 10), box(20, 0, 30, 10)]
    assert average_precision([([Detection(t, 0.9) for t in truths], truths)]) == 1.0


def test_ap_zero():
    truths = [box(0, 0, 10, 10)]
    assert average_precision([([Detection(box(50, 50, 60, 60), 0.9)], truths)]) == 0.0
    assert average_precision([([], truths)]) == 0.0


def test_ap_hand_built_curve():
    t1, t2 = box(0, 0, 10, 10), box(20, 0, 30, 10)
    dets = [Detection(t1, 0.9), Detection(box(50, 50, 60, 60), 0.8), Detection(t2, 0.7)]
    assert abs(average_precision([(dets, [t1, t2])]) - 5 / 6) <= 1e-9


def test_ap_across_images():
    t1, t2 = box(0, 0, 10, 10), box(20, 0, 30, 10)
    images = [([Detection(t1, 0.9)], [t1]), ([Detection(box(50, 50, 60, 60), 0.8), Detection(t2, 0.7)], [t2])]
    assert abs(average_precision(images) - 5 / 6) <= 1e-9


def test_ap_needs_truth():
    with pytest.raises(NoGroundTruth):
        average_precision([([Detection(box(0, 0, 1, 1), 0.5)], [])])


def test_ap_rank_invariance(rng):
    for _ in range(50):
        images = []
        for _ in range(3):
            truths = [random_box(rng, 40) for _ in range(int(rng.integers(1, 3)))]
            dets = [Detection(random_box(rng, 40), float(rng.random())) for _ in range(3)]
            dets += [Detection(t, float(rng.random())) for t in truths[:1]]
            images.append((dets, truths))
        squashed = [([Detection(d.box, d.score**3) for d in dets], t) for dets, t in images]
        assert average_precision(images) == pytest.approx(average_precision(squashed), abs=1e-12)


# -- annotations ------------------------------------------------------------
def test_normalized_to_pixels():
    assert normalized_to_box(0.5, 0.5, 0.2, 0.1, 1000, 500) == BoundingBox(400, 225, 600, 275)
    assert parse_annotation_lines(["0 0.5 0.5 0.2 0.1"], 1000, 500) == [BoundingBox(400, 225, 600, 275)]


def test_annotation_file_round_trip(tmp_path):
    boxes = [BoundingBox(10, 20, 110, 70), BoundingBox(200, 30, 300, 80)]
    p = tmp_path / "a.txt"
    write_annotations(p, boxes, 400, 200)
    assert read_annotations(p, 400, 200) == boxes


def test_annotation_with_scores(tmp_path):
    p = tmp_path / "d.txt"
    write_annotations(p, [Detection(BoundingBox(0, 0, 100, 50), 0.75)], 400, 200)
    (det,) = read_annotations(p, 400, 200, with_scores=True)
    assert det.score == 0.75 and det.box == BoundingBox(0, 0, 100, 50)


# -- detectors --------------------------------------------------------------
def _sample(boxes):
    return PlateSample(np.zeros((200, 400, 1)), [], "img.png", boxes)


def test_oracle_zero_jitter():
    truths = [BoundingBox(10, 10, 210, 60)]
    dets = oracle_detect(_sample(truths))
    assert [d.box for d in dets] == truths and dets[0].score == 1.0
    assert iou(dets[0].box, truths[0]) == 1.0


def test_oracle_jitter_respects_geometric_bound():
    bound = jitter_iou_bound(0.05)
    assert bound >= 0.5
    truths = [BoundingBox(10, 10, 210, 60)]
    for seed in range(300):
        (d,) = oracle_detect(_sample(truths), jitter=0.05, seed=seed)
        assert iou(d.box, truths[0]) >= bound


def test_oracle_jitter_deterministic():
    s = _sample([BoundingBox(10, 10, 210, 60)])
    assert oracle_detect(s, 0.05, seed=4) == oracle_detect(s, 0.05, seed=4)
    assert OracleDetector(0.05, seed=1).detect(s) == OracleDetector(0.05, seed=1).detect(s)


def test_oracle_needs_annotations():
    with pytest.raises(MissingAnnotations):
        oracle_detect(_sample([]))


def test_external_detector(tmp_path):
    write_annotations(tmp_path / "img.txt", [Detection(BoundingBox(40, 20, 240, 70), 0.6)], 400, 200)
    dets = ExternalBoxDetector(tmp_path).detect(_sample([]))
    assert dets == [Detection(BoundingBox(40, 20, 240, 70), 0.6)]
    with pytest.raises(MissingAnnotations):
        ExternalBoxDetector(tmp_path / "missing").detect(_sample([]))
