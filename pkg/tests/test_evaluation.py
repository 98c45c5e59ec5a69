from __future__ import annotations

import json
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crosswalk_vlm.dataset import PatchSample
from crosswalk_vlm.errors import EmptyInput, IdMismatch
from crosswalk_vlm.evaluation import (
    TABLE_COLUMNS,
    ConfusionMatrix,
    confusion,
    format_table,
    metrics,
    misclassification_report,
    round_half_up,
    to_jsonl,
)
from crosswalk_vlm.georaster import PixelWindow
from crosswalk_vlm.render import DatasetConfig
from crosswalk_vlm.roads import CROSSWALK, NOT_CROSSWALK
from crosswalk_vlm.verdict import EXCLUDED, parse_response

# Reference results per config: precision, recall, F1, accuracy (percent),
# as printed for the four preprocessing variants.
REFERENCE = {
    "plain": (68.03, 100.0, 80.97, 76.5),
    "separated": (83.33, 35.00, 49.29, 64.0),
    "overlaid": (80.65, 100.0, 89.3, 88.0),
    "blurred": (96.11, 99.00, 97.53, 97.5),
}


def reconstruct(precision: float, recall: float, accuracy: float, n_pos: int = 100, n_neg: int = 100):
    """All integer confusion matrices consistent with the printed ratios."""
    found = []
    for tp in range(n_pos + 1):
        for fp in range(n_neg + 1):
            if tp + fp == 0:
                continue
            p = 100 * tp / (tp + fp)
            r = 100 * tp / n_pos
            a = Fraction(100 * (tp + n_neg - fp), n_pos + n_neg)
            if abs(p - precision) < 0.05 and abs(r - recall) < 0.05 and a == Fraction(str(accuracy)):
                found.append(ConfusionMatrix(tp, fp, n_neg - fp, n_pos - tp))
    return found


# the matrices the search above yields, frozen
DERIVED = {
    "plain": ConfusionMatrix(100, 47, 53, 0),
    "separated": ConfusionMatrix(35, 7, 93, 65),
    "overlaid": ConfusionMatrix(100, 24, 76, 0),
    "blurred": ConfusionMatrix(99, 4, 96, 1),
}


@pytest.mark.parametrize("config", REFERENCE)
def test_integer_search_is_unique(config):
    p, r, _, a = REFERENCE[config]
    assert reconstruct(p, r, a) == [DERIVED[config]]


@pytest.mark.parametrize("config", REFERENCE)
def test_metrics_reproduce_reference(config):
    m = metrics(DERIVED[config], config=config)
    p, r, f1, a = REFERENCE[config]
    assert abs(m.precision - p) <= 0.05
    assert abs(m.recall - r) <= 0.05
    assert abs(m.f1 - f1) <= 0.05
    assert m.accuracy == a
    assert m.undefined == ()


def test_exact_reference_cells():
    assert metrics(DERIVED["plain"]).f1 == 80.97
    assert metrics(DERIVED["plain"]).precision == 68.03
    # printed 49.29, but rounded or unrounded inputs both round to 49.30
    assert metrics(DERIVED["separated"]).f1 == 49.3
    assert metrics(DERIVED["separated"]).precision == 83.33
    assert metrics(DERIVED["overlaid"]).precision == 80.65


@pytest.mark.parametrize("config", REFERENCE)
def test_printed_f1_consistent_with_printed_p_and_r(config):
    p, r, f1, _ = REFERENCE[config]
    assert abs(2 * p * r / (p + r) - f1) <= 0.05


def test_zero_denominator():
    m = metrics(ConfusionMatrix(tp=0, fp=0, tn=10, fn=0))
    assert (m.precision, m.recall, m.f1, m.accuracy) == (0.0, 0.0, 0.0, 100.0)
    assert set(m.undefined) == {"precision", "recall", "f1"}


def test_empty_input():
    with pytest.raises(EmptyInput):
        metrics(ConfusionMatrix())


def test_round_half_up():
    assert round_half_up(Fraction(12345, 1000)) == Fraction(1235, 100)
    assert round_half_up(Fraction(-1, 1000)) == 0
    assert round_half_up(Fraction(2, 3)) == Fraction(67, 100)


def test_confusion_examples():
    truths = {"a": CROSSWALK, "b": CROSSWALK, "c": NOT_CROSSWALK, "d": NOT_CROSSWALK}
    assert confusion(dict(truths), truths) == ConfusionMatrix(2, 0, 2, 0)
    truths = {f"s{k}": CROSSWALK if k < 100 else NOT_CROSSWALK for k in range(200)}
    assert confusion({k: CROSSWALK for k in truths}, truths) == ConfusionMatrix(100, 100, 0, 0)


def test_confusion_drops_excluded_and_checks_ids():
    truths = {"a": CROSSWALK, "b": NOT_CROSSWALK, "c": CROSSWALK}
    preds = {"a": CROSSWALK, "b": EXCLUDED, "c": NOT_CROSSWALK}
    cm = confusion(preds, truths)
    assert cm == ConfusionMatrix(tp=1, fp=0, tn=0, fn=1)
    assert cm.total == 2
    with pytest.raises(IdMismatch) as info:
        confusion({"a": CROSSWALK, "z": CROSSWALK}, truths)
    assert info.value.only_predicted == ["z"]
    assert info.value.only_truth == ["b", "c"]


def test_negative_counts_rejected():
    with pytest.raises(ValueError):
        ConfusionMatrix(tp=-1)


labels = st.sampled_from([CROSSWALK, NOT_CROSSWALK])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(labels, labels), min_size=20, max_size=20), st.randoms(use_true_random=False))
def test_confusion_matches_brute_force_tally(pairs, rnd):
    truths = {f"s{k}": t for k, (t, _) in enumerate(pairs)}
    preds = {f"s{k}": p for k, (_, p) in enumerate(pairs)}
    tally = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for t, p in pairs:
        key = ("t" if t == p else "f") + ("p" if p == CROSSWALK else "n")
        tally[key] += 1
    cm = confusion(preds, truths)
    assert cm == ConfusionMatrix(**tally)
    assert cm.total == 20

    # sample order does not matter
    items = list(preds.items())
    rnd.shuffle(items)
    shuffled = confusion(dict(items), dict(reversed(list(truths.items()))))
    assert shuffled == cm
    assert metrics(shuffled) == metrics(cm)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 60), st.integers(0, 60), st.integers(0, 60), st.integers(0, 60))
def test_metric_ranges(tp, fp, tn, fn):
    cm = ConfusionMatrix(tp, fp, tn, fn)
    if cm.total == 0:
        return
    m = metrics(cm)
    for v in (m.precision, m.recall, m.f1, m.accuracy):
        assert 0 <= v <= 100
    if m.precision + m.recall > 0:
        assert abs(m.f1 - 2 * m.precision * m.recall / (m.precision + m.recall)) <= 0.005 + 1e-9


def _samples(n: int) -> list[PatchSample]:
    return [
        PatchSample(
            sample_id=f"id{k:03d}",
            config=DatasetConfig.OVERLAID,
            window=PixelWindow(0, 0, 256),
            approach_key=f"1:{k}:2",
            node_id=1,
            way_id=k,
            lat=39.5,
            lon=-84.7,
            truth_label=CROSSWALK if k % 2 == 0 else NOT_CROSSWALK,
            truth_source="osm-tag",
            images=[f"overlaid/x/id{k:03d}.png"],
        )
        for k in range(n)
    ]


def test_misclassification_report():
    samples = _samples(6)
    verdicts = {
        s.sample_id: parse_response(f"CROSSWALK: {'Yes' if s.truth_label == CROSSWALK else 'No'}\nREASON: ok {s.sample_id}")
        for s in samples
    }
    preds = {s.sample_id: s.truth_label for s in samples}
    assert misclassification_report(samples, verdicts, preds) == []

    verdicts["id002"] = parse_response("RISKS: glare\nCROSSWALK: No\nREASON: bars are faded")
    preds["id002"] = NOT_CROSSWALK
    verdicts["id001"] = parse_response("CROSSWALK: Yes\nREASON: stripes")
    preds["id001"] = CROSSWALK
    errors = misclassification_report(list(reversed(samples)), verdicts, preds)
    assert [e["sample_id"] for e in errors] == ["id001", "id002"]
    fp, fn = errors
    assert fp["error"] == "fp" and fn["error"] == "fn"
    assert fn["reason"] == "bars are faded" and fn["risks"] == "glare"
    assert fn["images"] == ["overlaid/x/id002.png"]
    assert fn["truth"] == CROSSWALK and fn["label"] == "No"

    text = to_jsonl(errors)
    assert text == to_jsonl(misclassification_report(samples, verdicts, preds))
    assert [json.loads(line)["sample_id"] for line in text.splitlines()] == ["id001", "id002"]


def test_excluded_not_reported_as_error():
    samples = _samples(2)
    verdicts = {s.sample_id: parse_response("nothing") for s in samples}
    preds = {s.sample_id: EXCLUDED for s in samples}
    assert misclassification_report(samples, verdicts, preds) == []


def test_format_table():
    rows = [metrics(DERIVED[c], config=c) for c in REFERENCE]
    text = format_table(rows)
    lines = text.splitlines()
    for col in TABLE_COLUMNS:
        assert col in lines[1]
    assert "| plain " in text and "80.97" in text and "97.50" in text
    assert len({len(line) for line in lines}) == 1


def test_metrics_runtime_is_small():
    import time

    start = time.perf_counter()
    for _ in range(1000):
        for c in DERIVED.values():
            metrics(c)
    assert time.perf_counter() - start < 1.0


def test_random_permutation_of_samples_same_report():
    samples = _samples(30)
    rng = random.Random(4)
    preds = {s.sample_id: rng.choice([CROSSWALK, NOT_CROSSWALK]) for s in samples}
    truths = {s.sample_id: s.truth_label for s in samples}
    base = metrics(confusion(preds, truths))
    for _ in range(5):
        keys = list(preds)
        rng.shuffle(keys)
        assert metrics(confusion({k: preds[k] for k in keys}, truths)) == base
