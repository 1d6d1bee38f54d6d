import math

import pytest
from helpers import ref_mcc
from hypothesis import given, settings
from hypothesis import strategies as st

from handpd.errors import DataError
from handpd.metrics import (
    ConfusionMatrix,
    Undefined,
    accuracy,
    f1,
    format_row,
    is_defined,
    mcc,
    precision,
    recall,
    summarize,
    to_jsonable,
)


def test_worked_example():
    cm = ConfusionMatrix(tp=8, tn=5, fp=2, fn=1)
    assert accuracy(cm) == 13 / 16
    assert recall(cm) == 8 / 9
    assert precision(cm) == 8 / 10
    assert f1(cm) == pytest.approx(2 * 8 / (2 * 8 + 2 + 1), abs=1e-15)
    assert mcc(cm) == pytest.approx((8 * 5 - 2 * 1) / math.sqrt(10 * 9 * 7 * 6), abs=1e-15)


def test_perfect_and_inverted():
    cm = ConfusionMatrix(tp=4, tn=6)
    assert (accuracy(cm), recall(cm), f1(cm), mcc(cm)) == (1.0, 1.0, 1.0, 1.0)
    inv = cm.swapped_predictions()
    assert (inv.tp, inv.tn, inv.fp, inv.fn) == (0, 0, 6, 4)
    assert mcc(inv) == -1.0


counts = st.integers(0, 50)


@given(counts, counts, counts, counts)
@settings(max_examples=300)
def test_mcc_matches_reference_or_is_undefined(tp, tn, fp, fn):
    if tp + tn + fp + fn == 0:
        return
    cm = ConfusionMatrix(tp, tn, fp, fn)
    want = ref_mcc(tp, tn, fp, fn)
    got = mcc(cm)
    if want is None:
        assert isinstance(got, Undefined) and "zero marginal" in got.reason
    else:
        assert abs(got - want) <= 1e-12
        assert -1.0 <= got <= 1.0


def test_undefined_markers_name_the_marginal():
    cm = ConfusionMatrix(tn=5, fp=1)
    r = recall(cm)
    assert not is_defined(r) and "tp+fn" in r.reason
    assert not r
    assert "tp+fn" in str(mcc(cm))
    assert not is_defined(f1(cm))
    assert not is_defined(precision(ConfusionMatrix(tn=3, fn=2)))


def test_f1_zero_precision_and_recall():
    v = f1(ConfusionMatrix(fp=2, fn=3))
    assert isinstance(v, Undefined) and "both 0" in v.reason


def test_empty_and_negative():
    with pytest.raises(DataError):
        accuracy(ConfusionMatrix())
    with pytest.raises(DataError):
        ConfusionMatrix(tp=-1)


def test_from_labels_and_accumulate():
    cm = ConfusionMatrix.from_labels([1, 1, 0, 0, "PD"], [1, 0, 1, 0, "PD"])
    assert (cm.tp, cm.fn, cm.fp, cm.tn) == (2, 1, 1, 1)
    cm += ConfusionMatrix(1, 1, 1, 1)
    assert cm.total == 9


def test_report_formatting():
    s = summarize(ConfusionMatrix(tp=8, tn=5, fp=2, fn=1))
    assert format_row(s) == "recall 88.9%  accuracy 81.2%  f1 84.2%  mcc 0.62"
    j = to_jsonable(summarize(ConfusionMatrix(tn=3)))
    assert j["recall"].startswith("undefined")
    assert "undef" in format_row(summarize(ConfusionMatrix(tn=3)))
