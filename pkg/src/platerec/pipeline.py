"""End-to-end plate reading (detect -> crop -> recognize -> decode) and reports."""

import logging
import re
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from . import ctc, kernels
from .data import PAD, PLATE_LENGTH, SYMBOLS, decode_label, resize_gray, to_persian
from .detection import BoundingBox, Detection, average_precision, iou, match_detections
from .errors import DatasetEmpty, PlateRecError, TooFewSamples

log = logging.getLogger(__name__)

OK = "ok"
NOT_KNOWN = "not_known"
STAGES = ("detect", "crop_resize", "recognize", "decode", "end_to_end")


@dataclass
class PlateReading:
    box: BoundingBox
    tokens: str
    padded: str
    persian: str
    status: str
    error: str = None


def pad_tokens(tokens, length=PLATE_LENGTH):
    """Right-pad with ``X`` to exactly ``length`` characters (extra tokens dropped)."""
    return tokens[:length] + PAD * max(0, length - len(tokens))


def make_reading(box, tokens, error=None):
    tokens = tokens[:PLATE_LENGTH]
    status = OK if len(tokens) == PLATE_LENGTH and error is None else NOT_KNOWN
    return PlateReading(box, tokens, pad_tokens(tokens), to_persian(tokens), status, error)


class WholeImageDetector:
    """Treats the full image as a single plate (input is already a crop)."""

    name = "whole"

    def detect(self, sample):
        h, w = sample.image.shape[:2]
        return [Detection(BoundingBox(0, 0, w, h), 1.0)]


def crop(image, box, margin=0):
    """Crop ``box`` (expanded by ``margin`` px, clipped to the image) from an (H, W[, 1]) array."""
    h, w = image.shape[:2]
    left = max(0, int(round(box.left)) - margin)
    top = max(0, int(round(box.top)) - margin)
    right = min(w, int(round(box.right)) + margin)
    bottom = min(h, int(round(box.bottom)) + margin)
    if right <= left or bottom <= top:
        raise PlateRecError(f"box {box.as_tuple()} lies outside the {w}x{h} image")
    return image[top:bottom, left:right]


def decode(probs, beam=0):
    return ctc.beam_decode(probs, beam) if beam and beam > 1 else ctc.greedy_decode(probs)


def recognize_image(model, detector, sample, beam=0, margin=0, timings=None):
    """Read every plate the detector finds in ``sample``.

    Errors for one box are logged and reported as a ``not_known`` reading with
    ``error`` set; the remaining boxes are still processed.
    """
    alphabet = model.alphabet or SYMBOLS
    cfg = model.config
    clock = time.perf_counter
    t0 = clock()
    dets = detector.detect(sample)
    t1 = clock()
    if timings is not None:
        timings.setdefault("detect", []).append(t1 - t0)
    readings = []
    for det in dets:
        try:
            a = clock()
            plate = resize_gray(crop(sample.image, det.box, margin), cfg.input_width, cfg.input_height)
            b = clock()
            probs = model.forward(plate)
            c = clock()
            tokens = decode_label(decode(probs, beam), alphabet)
            d = clock()
            if timings is not None:
                timings.setdefault("crop_resize", []).append(b - a)
                timings.setdefault("recognize", []).append(c - b)
                timings.setdefault("decode", []).append(d - c)
            readings.append(make_reading(det.box, tokens))
        except PlateRecError as exc:
            log.warning("box %s in %s failed: %s", det.box.as_tuple(), sample.source, exc)
            readings.append(make_reading(det.box, "", error=str(exc)))
    if timings is not None:
        timings.setdefault("end_to_end", []).append(clock() - t0)
    return readings


# ----------------------------------------------------------------------------
# accuracy
# ----------------------------------------------------------------------------
def char_accuracy(pred, truth):
    """1 - Levenshtein(pred, truth) / 8 on the X-padded strings."""
    a, b = pad_tokens(pred), pad_tokens(truth)
    dist = kernels.levenshtein([ord(c) for c in a], [ord(c) for c in b])
    return 1.0 - dist / max(len(a), len(b))


def sequence_match(pred, truth):
    return pad_tokens(pred) == pad_tokens(truth)


def predict_plates(model, images, beam=0, batch_size=64):
    """Decode a stack of already-cropped plates; returns token strings."""
    alphabet = model.alphabet or SYMBOLS
    out = []
    for i in range(0, len(images), batch_size):
        probs = model.forward(np.stack(images[i : i + batch_size]))
        out.extend(decode_label(decode(p, beam), alphabet) for p in probs)
    return out


def accuracy_figures(preds, truths):
    if not truths:
        raise DatasetEmpty("no samples to score")
    seq = float(np.mean([sequence_match(p, t) for p, t in zip(preds, truths)]))
    chars = float(np.mean([char_accuracy(p, t) for p, t in zip(preds, truths)]))
    return seq, chars


# ----------------------------------------------------------------------------
# reports
# ----------------------------------------------------------------------------
_KEY = re.compile(r"^[A-Za-z0-9_.\-]+$")


@dataclass
class RunReport:
    """Ordered ``key=value`` pairs plus free-form per-image rows."""

    values: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    def set(self, key, value):
        if not _KEY.match(key):
            raise ValueError(f"report key {key!r} must match {_KEY.pattern}")
        self.values[key] = value

    def to_kv(self):
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.values.items())

    def to_text(self, title="report"):
        width = max((len(k) for k in self.values), default=0)
        lines = [title, "-" * max(len(title), 20)]
        lines += [f"{k.ljust(width)}  {_fmt(v)}" for k, v in self.values.items()]
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return repr(round(v, 10))
    return str(v)


def parse_kv(text):
    """Inverse of :meth:`RunReport.to_kv` (values come back as strings)."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep or not _KEY.match(key):
            raise ValueError(f"line {lineno}: not a key=value pair: {line!r}")
        out[key] = value
    return out


def evaluate(model, samples, detector=None, beam=0, score_threshold=0.0, margin=0):
    """Sequence/character accuracy and, when boxes exist, TP/FP/FN and AP."""
    if not samples:
        raise DatasetEmpty("evaluation split is empty")
    report = RunReport()
    report.set("n_samples", len(samples))
    truths = [decode_label(s.label, model.alphabet or SYMBOLS) for s in samples]
    if all(s.boxes for s in samples):
        detector = detector or WholeImageDetector()
        preds, per_image, counts = [], [], None
        for s in samples:
            readings = recognize_image(model, detector, s, beam=beam, margin=margin)
            dets = [Detection(r.box, 1.0) for r in readings]
            kept = [d for d in dets if d.score >= score_threshold]
            m = match_detections(kept, s.boxes, score_threshold=score_threshold)
            counts = m if counts is None else counts + m
            per_image.append((kept, s.boxes))
            # the sample label belongs to its first annotated box
            best = max(readings, key=lambda r: iou(r.box, s.boxes[0]), default=None)
            hit = best is not None and iou(best.box, s.boxes[0]) >= 0.5
            preds.append(best.tokens if hit else "")
            report.rows.append((s.source, best.padded if hit else pad_tokens(""), truths[len(preds) - 1]))
        report.set("detection.tp", counts.tp)
        report.set("detection.fp", counts.fp)
        report.set("detection.fn", counts.fn)
        report.set("detection.ap", average_precision(per_image))
    else:
        preds = predict_plates(model, [s.image for s in samples], beam=beam)
        report.rows.extend((s.source, pad_tokens(p), t) for s, p, t in zip(samples, preds, truths))
    seq, chars = accuracy_figures(preds, truths)
    report.set("accuracy.sequence", seq)
    report.set("accuracy.char", chars)
    return report


def benchmark(model, samples, detector=None, beam=0, min_samples=30):
    """Median/mean wall-clock per stage; never compared to reference hardware."""
    if len(samples) < min_samples:
        raise TooFewSamples(f"benchmark needs at least {min_samples} samples, got {len(samples)}")
    detector = detector or (WholeImageDetector() if not samples[0].boxes else None)
    if detector is None:
        from .detection import OracleDetector

        detector = OracleDetector()
    timings = {}
    n_plates = 0
    start = time.perf_counter()
    for s in samples:
        n_plates += len(recognize_image(model, detector, s, beam=beam, timings=timings))
    wall = time.perf_counter() - start
    report = RunReport()
    report.set("n_images", len(samples))
    report.set("n_plates", n_plates)
    report.set("backend", kernels.BACKEND)
    for stage in STAGES:
        vals = timings.get(stage, [0.0])
        report.set(f"time.{stage}.median", statistics.median(vals))
        report.set(f"time.{stage}.mean", statistics.fmean(vals))
    report.set("fps", len(samples) / wall if wall > 0 else float("inf"))
    return report
