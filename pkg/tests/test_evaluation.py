import json

import numpy as np
import pytest

from objdiscovery.evaluation import (EmptyEvaluationError, annotation, confusion_matrix, corloc,
                                     corloc_any, corret, evaluate, localized)

GT_BOX = (0, 0, 10, 10)
HIT = (1, 1, 10, 10)     # IoU 0.81
MISS = (50, 50, 60, 60)


def test_iou_boundary_is_strict():
    ann = annotation(["a"], [("a", GT_BOX)])
    assert not localized((0, 0, 10, 20), ann)  # IoU exactly 0.5
    assert localized((0, 0, 10, 19.99), ann)


def test_corloc_hand_values():
    gt = {
        "1": annotation(["a"], [("a", GT_BOX)]),
        "2": annotation(["a"], [("a", GT_BOX)]),
        "3": annotation(["b"], [("b", GT_BOX)]),
        "4": annotation([]),
    }
    preds = {"1": HIT, "2": MISS, "3": HIT, "4": HIT}
    assert corloc(preds, gt, "a") == 50.0
    assert corloc(preds, gt, "b") == 100.0
    assert corloc_any(preds, gt) == pytest.approx(200 / 3)
    with pytest.raises(KeyError):
        corloc({"1": HIT}, gt, "a")
    with pytest.raises(EmptyEvaluationError):
        corloc(preds, gt, "zebra")


def test_corloc_class_filter_uses_that_class():
    gt = {"1": annotation(["a", "b"], [("a", GT_BOX), ("b", MISS)])}
    assert corloc({"1": HIT}, gt, "a") == 100.0
    assert corloc({"1": HIT}, gt, "b") == 0.0
    with pytest.raises(ValueError):
        corloc({"1": HIT}, {"1": annotation(["a"])}, "a")


def test_corret_and_confusion_hand_values():
    gt = {
        "a1": annotation(["a"]), "a2": annotation(["a"]),
        "b1": annotation(["b"]), "o": annotation([]),
    }
    nbrs = {"a1": ["a2", "b1"], "a2": ["a1", "o"], "b1": ["a1", "a2"], "o": ["a1", "b1"]}
    assert corret(nbrs, gt, "a") == 50.0
    assert corret(nbrs, gt, "b") == 0.0
    assert corret(nbrs, gt) == pytest.approx(100 / 3)
    classes, m = confusion_matrix(nbrs, gt)
    assert classes == ["a", "b"]
    assert np.allclose(m, [[50.0, 25.0], [100.0, 0.0]])
    with pytest.raises(ValueError):
        corret({**nbrs, "a1": []}, gt)


def test_confusion_splits_multi_label_neighbors():
    gt = {"x": annotation(["a"]), "y": annotation(["a", "b"])}
    _, m = confusion_matrix({"x": ["y"], "y": ["x"]}, gt)
    assert np.allclose(m, [[75.0, 25.0], [100.0, 0.0]])


def _table_fixture(counts):
    gt, preds = {}, {}
    for cls, (good, total) in counts.items():
        for i in range(total):
            key = f"{cls}{i}"
            gt[key] = annotation([cls], [(cls, GT_BOX)])
            preds[key] = HIT if i < good else MISS
    return preds, gt


def test_table_averages_from_image_counts():
    # separate-class table: 68/82, 84/89, 70/93 images localized
    preds, gt = _table_fixture({"airplane": (68, 82), "car": (84, 89), "horse": (70, 93)})
    report = evaluate(preds, gt, mode="separate")
    assert [round(report.corloc[c], 2) for c in report.classes] == [82.93, 94.38, 75.27]
    assert round(report.corloc_average, 2) == 84.19
    # mixed-class table: 67/82, 84/89, 66/93
    preds, gt = _table_fixture({"airplane": (67, 82), "car": (84, 89), "horse": (66, 93)})
    assert round(evaluate(preds, gt, mode="mixed").corloc_average, 2) == 82.35


def test_report_outputs():
    gt = {"a1": annotation(["a"], [("a", GT_BOX)]), "b1": annotation(["b"], [("b", GT_BOX)]),
          "o": annotation([])}
    preds = {"a1": HIT, "b1": MISS, "o": HIT}
    nbrs = {"a1": ["b1"], "b1": ["a1"], "o": ["a1"]}
    report = evaluate(preds, gt, nbrs, mode="mixed")
    assert report.corloc == {"a": 100.0, "b": 0.0}
    assert report.corloc_any == 50.0
    assert report.corret_average == 0.0
    assert report.confusion == [[0.0, 100.0], [100.0, 0.0]]
    assert json.loads(report.to_json())["mode"] == "mixed"
    text = report.to_text()
    assert text.splitlines()[0].split() == ["Metric", "a", "b", "Average", "any"]
    assert "CorRet" in text
    assert report.confusion_csv().splitlines()[1] == "a,0.0000,100.0000"
    sep = evaluate(preds, gt, mode="separate")
    assert sep.confusion is None and sep.corloc_any is None and sep.confusion_csv() == ""
    with pytest.raises(ValueError):
        evaluate(preds, gt, mode="other")
    with pytest.raises(EmptyEvaluationError):
        evaluate(preds, {"o": annotation([])})


def test_annotation_rejects_unknown_box_label():
    with pytest.raises(ValueError):
        annotation(["a"], [("b", GT_BOX)])
