"""Plate-detection evaluation: IoU, NMS, matching, AP and stand-in detectors."""

import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidBox, MissingAnnotations, NoGroundTruth

PLATE_CLASS = "License Plate"
IOU_THRESHOLD = 0.5


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel rectangle; ``right > left`` and ``bottom > top``."""

    left: float
    top: float
    right: float
    bottom: float

    def __post_init__(self):
        vals = (self.left, self.top, self.right, self.bottom)
        if not all(np.isfinite(vals)) or self.right <= self.left or self.bottom <= self.top:
            raise InvalidBox(f"degenerate box {vals}")

    @property
    def width(self):
        return self.right - self.left

    @property
    def height(self):
        return self.bottom - self.top

    @property
    def area(self):
        return self.width * self.height

    def intersection(self, other):
        w = min(self.right, other.right) - max(self.left, other.left)
        h = min(self.bottom, other.bottom) - max(self.top, other.top)
        return w * h if w > 0 and h > 0 else 0.0

    def clipped(self, width, height):
        return BoundingBox(max(0, self.left), max(0, self.top), min(width, self.right), min(height, self.bottom))

    def as_tuple(self):
        return (self.left, self.top, self.right, self.bottom)


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    score: float = 1.0
    label: str = PLATE_CLASS

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class MatchReport:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other):
        return MatchReport(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def iou(a, b):
    """Intersection over union; 0 for disjoint boxes."""
    inter = a.intersection(b)
    if inter == 0:
        return 0.0
    return inter / (a.area + b.area - inter)


def _by_score(dets):
    # stable: equal scores keep input order
    return sorted(range(len(dets)), key=lambda i: -dets[i].score)


def nms(dets, iou_threshold=IOU_THRESHOLD):
    """Greedy non-maximum suppression, highest score first."""
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError("iou_threshold must lie in (0, 1]")
    kept = []
    for i in _by_score(dets):
        if all(iou(dets[i].box, k.box) < iou_threshold for k in kept):
            kept.append(dets[i])
    return kept


def _greedy_match(dets, truths, iou_threshold):
    """Per detection (score order): index of the matched truth or None."""
    taken = [False] * len(truths)
    result = []
    for i in _by_score(dets):
        best, best_iou = None, iou_threshold
        for j, truth in enumerate(truths):
            if taken[j]:
                continue
            v = iou(dets[i].box, truth)
            if v >= best_iou and (best is None or v > best_iou):
                best, best_iou = j, v
        if best is not None:
            taken[best] = True
        result.append((i, best))
    return result


def match_detections(dets, truths, iou_threshold=IOU_THRESHOLD, score_threshold=0.0):
    """One-to-one TP/FP/FN tally for a single image.

    Detections scoring below ``score_threshold`` are discarded first.
    """
    dets = [d for d in dets if d.score >= score_threshold]
    matches = _greedy_match(dets, truths, iou_threshold)
    tp = sum(1 for _, j in matches if j is not None)
    return MatchReport(tp=tp, fp=len(dets) - tp, fn=len(truths) - tp)


def average_precision(images, iou_threshold=IOU_THRESHOLD):
    """All-point interpolated AP over ``[(detections, truths), ...]`` per image."""
    n_truth = sum(len(truths) for _, truths in images)
    if n_truth == 0:
        raise NoGroundTruth("average precision needs at least one ground-truth box")
    flags = []  # (score, image index, order within image, is_tp)
    for k, (dets, truths) in enumerate(images):
        for rank, (i, j) in enumerate(_greedy_match(dets, truths, iou_threshold)):
            flags.append((-dets[i].score, k, rank, j is not None))
    if not flags:
        return 0.0
    flags.sort()
    hits = np.array([f[3] for f in flags], dtype=float)
    tp = np.cumsum(hits)
    fp = np.cumsum(1.0 - hits)
    recall = tp / n_truth
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.concatenate([[0.0], recall]))
    return float(np.sum(steps * envelope))


# ----------------------------------------------------------------------------
# annotation files: one "class cx cy w h [score]" line per box, normalised
# ----------------------------------------------------------------------------
def normalized_to_box(cx, cy, w, h, img_w, img_h):
    left = round((cx - w / 2.0) * img_w)
    top = round((cy - h / 2.0) * img_h)
    right = round((cx + w / 2.0) * img_w)
    bottom = round((cy + h / 2.0) * img_h)
    return BoundingBox(left, top, right, bottom)


def box_to_normalized(box, img_w, img_h):
    return (
        (box.left + box.right) / 2.0 / img_w,
        (box.top + box.bottom) / 2.0 / img_h,
        box.width / img_w,
        box.height / img_h,
    )


def parse_annotation_lines(lines, img_w, img_h, with_scores=False):
    out = []
    for lineno, line in enumerate(lines, 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) not in (5, 6):
            raise ValueError(f"line {lineno}: expected 'class cx cy w h [score]', got {line!r}")
        cx, cy, w, h = (float(v) for v in parts[1:5])
        box = normalized_to_box(cx, cy, w, h, img_w, img_h)
        if with_scores:
            out.append(Detection(box, float(parts[5]) if len(parts) == 6 else 1.0))
        else:
            out.append(box)
    return out


def read_annotations(path, img_w, img_h, with_scores=False):
    text = Path(path).read_text(encoding="utf-8")
    return parse_annotation_lines(text.splitlines(), img_w, img_h, with_scores)


def write_annotations(path, boxes, img_w, img_h, class_id=0):
    lines = []
    for b in boxes:
        score = None
        if isinstance(b, Detection):
            b, score = b.box, b.score
        cx, cy, w, h = box_to_normalized(b, img_w, img_h)
        line = f"{class_id} {cx:.6f} {cy:.6f} {w:.6f} {h:.6f}"
        if score is not None:
            line += f" {score:.6f}"
        lines.append(line)
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


# ----------------------------------------------------------------------------
# detectors
# ----------------------------------------------------------------------------
def jitter_box(box, jitter, rng):
    """Shift the centre by up to ``jitter`` x size and scale each side by 1 +/- ``jitter``."""
    cx = (box.left + box.right) / 2.0 + rng.uniform(-jitter, jitter) * box.width
    cy = (box.top + box.bottom) / 2.0 + rng.uniform(-jitter, jitter) * box.height
    w = box.width * (1.0 + rng.uniform(-jitter, jitter))
    h = box.height * (1.0 + rng.uniform(-jitter, jitter))
    return BoundingBox(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


def jitter_iou_bound(jitter):
    """Worst-case IoU between a box and its jittered copy (see :func:`jitter_box`).

    Per axis the overlap is at least ``1 - 2j`` of the side and the jittered side
    at most ``1 + j``, giving ``(1-2j)^2 / (1 + (1+j)^2 - (1-2j)^2)``.
    """
    inter = (1.0 - 2.0 * jitter) ** 2
    return inter / (1.0 + (1.0 + jitter) ** 2 - inter)


def oracle_detect(sample, jitter=0.0, seed=0):
    """Ground-truth boxes as score-1 detections, optionally jittered."""
    if not sample.boxes:
        raise MissingAnnotations(f"sample {sample.source!r} carries no ground-truth boxes")
    if jitter == 0.0:
        return [Detection(b, 1.0) for b in sample.boxes]
    rng = np.random.default_rng(seed)
    return [Detection(jitter_box(b, jitter, rng), 1.0) for b in sample.boxes]


class OracleDetector:
    """Stand-in detector returning (optionally jittered) annotated boxes."""

    name = "oracle"

    def __init__(self, jitter=0.0, seed=0):
        self.jitter = jitter
        self.seed = seed

    def detect(self, sample):
        # per-sample seed keeps jitter independent of evaluation order
        seed = (self.seed, zlib.crc32(sample.source.encode("utf-8"))) if self.jitter else self.seed
        return oracle_detect(sample, self.jitter, np.random.SeedSequence(seed).generate_state(1)[0])


class ExternalBoxDetector:
    """Reads precomputed detections from ``<dir>/<image stem>.txt``."""

    name = "external"

    def __init__(self, directory):
        self.directory = Path(directory)

    def detect(self, sample):
        path = self.directory / (Path(sample.source).stem + ".txt")
        if not path.exists():
            raise MissingAnnotations(f"no detection file {path}")
        h, w = sample.image.shape[:2]
        return read_annotations(path, w, h, with_scores=True)
