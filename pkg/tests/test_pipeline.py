import numpy as np
import pytest
from hypothesis import given, strategies as st

from platerec import ctc
from platerec.data import DIGITS, PlateSample, SYMBOLS, decode_label, synth_scene, to_persian
from platerec.detection import BoundingBox, OracleDetector
from platerec.errors import DatasetEmpty, TooFewSamples
from platerec.pipeline import (
    NOT_KNOWN,
    OK,
    STAGES,
    RunReport,
    WholeImageDetector,
    benchmark,
    char_accuracy,
    crop,
    evaluate,
    make_reading,
    pad_tokens,
    parse_kv,
    predict_plates,
    recognize_image,
    sequence_match,
)


class NoDetections:
    def detect(self, sample):
        return []


# -- padding and status -----------------------------------------------------
def test_six_tokens_pad_and_flag():
    r = make_reading(BoundingBox(0, 0, 1, 1), "12B456")
    assert r.padded == "12B456XX"
    assert r.status == NOT_KNOWN
    assert r.persian == to_persian("12B456")


def test_full_plate_ok():
    r = make_reading(BoundingBox(0, 0, 1, 1), "12B45678")
    assert r.status == OK and r.padded == "12B45678"


def test_empty_decode_not_known():
    assert make_reading(BoundingBox(0, 0, 1, 1), "").status == NOT_KNOWN


@given(st.text(alphabet=SYMBOLS, max_size=12))
def test_padded_always_eight_with_suffix_pad(tokens):
    p = pad_tokens(tokens)
    assert len(p) == 8
    stripped = p.rstrip("X")
    assert "X" not in stripped


# -- accuracy ---------------------------------------------------------------
def test_char_accuracy_example():
    assert not sequence_match("12B4567X", "12B45678")
    assert char_accuracy("12B4567", "12B45678") == pytest.approx(7 / 8, abs=1e-12)
    assert char_accuracy("12B45678", "12B45678") == 1.0


@given(st.text(alphabet=SYMBOLS, max_size=8), st.text(alphabet=SYMBOLS, max_size=8))
def test_char_accuracy_bounds(a, b):
    v = char_accuracy(a, b)
    assert 0.0 <= v <= 1.0
    assert (v == 1.0) == sequence_match(a, b)


def test_empty_split_is_an_error(overfit):
    model, _ = overfit
    with pytest.raises(DatasetEmpty):
        evaluate(model, [])


# -- reports ----------------------------------------------------------------
def test_kv_round_trip():
    r = RunReport()
    r.set("accuracy.sequence", 0.75)
    r.set("n_samples", 12)
    r.set("backend", "numpy")
    text = r.to_kv()
    parsed = parse_kv(text)
    assert parsed == {"accuracy.sequence": "0.75", "n_samples": "12", "backend": "numpy"}
    again = RunReport(dict(parsed))
    assert again.to_kv() == text


def test_kv_rejects_spaces():
    with pytest.raises(ValueError):
        RunReport().set("bad key", 1)
    with pytest.raises(ValueError):
        parse_kv("no equals sign\n")


# -- crop -------------------------------------------------------------------
def test_crop_margin_clips():
    img = np.arange(100.0).reshape(10, 10, 1)
    assert crop(img, BoundingBox(2, 3, 5, 7)).shape == (4, 3, 1)
    assert crop(img, BoundingBox(0, 0, 5, 5), margin=2).shape == (7, 7, 1)


# -- recognition ------------------------------------------------------------
def test_zero_detections(overfit):
    model, samples = overfit
    assert recognize_image(model, NoDetections(), samples[0]) == []


def test_whole_image_reading(overfit):
    model, samples = overfit
    (r,) = recognize_image(model, WholeImageDetector(), samples[0])
    assert r.tokens == decode_label(samples[0].label, DIGITS)
    assert r.status == OK


def test_bad_box_does_not_abort_others(overfit):
    model, samples = overfit

    class Mixed:
        def detect(self, sample):
            from platerec.detection import Detection

            return [Detection(BoundingBox(500, 500, 600, 600), 0.9), Detection(BoundingBox(0, 0, 200, 50), 0.8)]

    bad, good = recognize_image(model, Mixed(), samples[0])
    assert bad.status == NOT_KNOWN and bad.error
    assert good.status == OK


def test_beam_never_worse_than_greedy(overfit):
    model, samples = overfit
    rng = np.random.default_rng(0)
    for s in samples[:4]:
        noisy = np.clip(s.image + rng.normal(0, 0.15, s.image.shape), 0, 1)
        probs = model.forward(noisy)
        g = ctc.greedy_decode(probs)
        b = ctc.beam_decode(probs, 10)
        assert ctc.label_probability(probs, b) >= ctc.label_probability(probs, g) * (1 - 1e-12)


def _scenes(samples):
    return [synth_scene([s], seed=i) for i, s in enumerate(samples)]


def test_pipeline_adds_no_error(overfit):
    model, samples = overfit
    standalone = evaluate(model, samples)
    end_to_end = evaluate(model, _scenes(samples), OracleDetector(0.0))
    assert standalone.values["accuracy.sequence"] == 1.0
    assert end_to_end.values["accuracy.sequence"] == standalone.values["accuracy.sequence"]
    assert end_to_end.values["detection.tp"] == len(samples)
    assert end_to_end.values["detection.fp"] == end_to_end.values["detection.fn"] == 0
    assert end_to_end.values["detection.ap"] == 1.0


# -- benchmark --------------------------------------------------------------
def test_benchmark_schema(overfit):
    model, samples = overfit
    data = (samples * 4)[:30]
    a = benchmark(model, data)
    b = benchmark(model, data)
    expected = {f"time.{s}.{k}" for s in STAGES for k in ("median", "mean")}
    expected |= {"fps", "n_images", "n_plates", "backend"}
    assert set(a.values) == expected
    assert list(a.values) == list(b.values)
    assert a.values["n_plates"] == b.values["n_plates"] == 30
    assert a.values["time.end_to_end.median"] >= a.values["time.recognize.median"]
    assert all(a.values[k] >= 0 for k in a.values if k.startswith("time."))
    with pytest.raises(TooFewSamples):
        benchmark(model, samples)


def test_predict_plates_matches_forward(overfit):
    model, samples = overfit
    preds = predict_plates(model, [s.image for s in samples], batch_size=3)
    assert preds == [decode_label(s.label, DIGITS) for s in samples]
