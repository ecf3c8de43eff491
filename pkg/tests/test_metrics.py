import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dygood.errors import ValidationError
from dygood.metrics import (
    aggregate_window_score,
    aupr,
    auroc,
    baseline_scores,
    curve_rows,
    detect,
    detection_report,
    f1,
    fpr95,
)


# ---- brute-force oracles: enumerate pairs / thresholds directly -----------

def auroc_pairs(a, b):
    total = 0.0
    for x in b:
        for y in a:
            total += 1.0 if x > y else 0.5 if x == y else 0.0
    return total / (len(a) * len(b))


def thresholds_table(a, b):
    rows = []
    for thr in sorted(set(a) | set(b), reverse=True):
        tp = sum(1 for x in b if x >= thr)
        fp = sum(1 for x in a if x >= thr)
        rows.append((thr, tp, fp))
    return rows


def aupr_enumerate(a, b):
    rows = thresholds_table(a, b)
    area, prev_recall = 0.0, 0.0
    for i, (_, tp, fp) in enumerate(rows):
        recall = tp / len(b)
        # interpolated precision: best precision at this recall or beyond
        best = max(t / (t + f) for _, t, f in rows[i:])
        area += (recall - prev_recall) * best
        prev_recall = recall
    return area


def fpr95_enumerate(a, b):
    return min(fp / len(a) for _, tp, fp in thresholds_table(a, b) if tp / len(b) >= 0.95)


def random_sets(rng):
    n, m = rng.integers(1, 51, size=2)
    # coarse grid forces ties
    if rng.random() < 0.5:
        return rng.integers(0, 6, n) / 5.0, rng.integers(0, 6, m) / 5.0
    return rng.random(n), rng.random(m)


def test_fast_metrics_equal_brute_force():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        a, b = random_sets(rng)
        al, bl = a.tolist(), b.tolist()
        assert abs(auroc(a, b) - auroc_pairs(al, bl)) <= 1e-12
        assert abs(aupr(a, b) - aupr_enumerate(al, bl)) <= 1e-12
        assert abs(fpr95(a, b) - fpr95_enumerate(al, bl)) <= 1e-12


def test_auroc_examples():
    assert auroc([0.1, 0.2], [0.8, 0.9]) == 1.0
    assert auroc([0.1, 0.4], [0.2, 0.9]) == 0.75
    assert auroc([0.3, 0.5, 0.5], [0.5, 0.3, 0.5]) == 0.5


def test_aupr_examples():
    assert aupr([0.1, 0.2], [0.8, 0.9]) == 1.0
    assert aupr([0.5, 0.6, 0.7], [0.1]) == 0.25


def test_fpr95_examples():
    assert fpr95([0.1, 0.2, 0.3, 0.95], [0.5]) == 0.25
    assert fpr95([0.1, 0.2], [0.8, 0.9]) == 0.0
    assert fpr95([0.8, 0.9], [0.1, 0.2]) == 1.0


def test_empty_class_rejected():
    for fn in (auroc, aupr, fpr95):
        with pytest.raises(ValidationError):
            fn([], [0.5])
        with pytest.raises(ValidationError):
            fn([0.5], [])


grid = st.lists(st.integers(-40, 40).map(lambda k: k / 8), min_size=1, max_size=30)


@given(grid, grid)
def test_auroc_invariant_under_monotone_transform(a, b):
    # grid values stay strictly ordered after each transform in floating point
    a, b = np.array(a), np.array(b)
    base = auroc(a, b)
    for fn in (np.exp, lambda x: x**3, lambda x: np.tanh(x / 10) * 3 + 1, lambda x: 2 * x - 7):
        assert auroc(fn(a), fn(b)) == pytest.approx(base, abs=1e-12)


@given(st.lists(st.floats(0.01, 50), min_size=2, max_size=20), st.floats(0.1, 10))
def test_uncertainty_ranking_preserved_under_shared_evidence_scale(totals, c):
    # u = K / (K + total evidence) is decreasing in total evidence, so scaling every
    # evidence vector by one constant keeps the score order
    K = 3
    u = K / (K + np.array(totals))
    u_scaled = K / (K + c * np.array(totals))
    assert np.array_equal(np.argsort(u, kind="stable"), np.argsort(u_scaled, kind="stable")) or len(set(totals)) < len(totals)


def test_detect_boundary_inclusive():
    assert detect(0.7, 0.5).flag == 1
    assert detect(0.3, 0.5).flag == 0
    assert detect(0.5, 0.5).flag == 1
    assert detect(0.5).threshold == 0.5


def test_aggregate_examples():
    assert aggregate_window_score([0.2, 0.4], "mean") == pytest.approx(0.3)
    assert aggregate_window_score([0.2, 0.4], "max") == 0.4
    for mode in ("mean", "max"):
        assert aggregate_window_score([0.37], mode) == 0.37
    with pytest.raises(ValidationError):
        aggregate_window_score([], "mean")


def test_f1_examples():
    assert f1([0, 1, 1, 0], [0, 1, 1, 0]) == 1.0
    assert f1([1, 0, 0, 1], [0, 1, 1, 0]) == 0.0
    # precision 0.5, recall 1.0
    assert f1([1, 1, 0, 0], [1, 0, 0, 0], num_classes=2) == pytest.approx(2 / 3)
    with pytest.raises(ValidationError):
        f1([0, 1], [0])


def test_f1_macro_for_many_classes():
    pred, lab = [0, 1, 2, 2], [0, 1, 1, 2]
    per_class = [1.0, 2 * 1 / (2 + 0 + 1), 2 * 1 / (2 + 1 + 0)]
    assert f1(pred, lab, num_classes=3) == pytest.approx(np.mean(per_class))


def test_baseline_examples():
    msp = baseline_scores([[0.0, 0.0, 0.0]], "msp")
    ent = baseline_scores([[0.0, 0.0, 0.0]], "entropy")
    assert msp[0] == pytest.approx(2 / 3, abs=1e-15) and ent[0] == pytest.approx(math.log(3), abs=1e-15)
    sharp = [[10.0, -10.0, -10.0]]
    assert baseline_scores(sharp, "msp")[0] < 1e-8 and baseline_scores(sharp, "entropy")[0] < 1e-6
    assert baseline_scores([[math.log(3), 0.0]], "msp")[0] == pytest.approx(0.25, abs=1e-15)
    h = -(0.75 * math.log(0.75) + 0.25 * math.log(0.25))
    assert baseline_scores([[math.log(3), 0.0]], "entropy")[0] == pytest.approx(h, abs=1e-15)
    assert round(h, 4) == 0.5623


def test_curve_rows_and_report():
    rows = curve_rows([0.1, 0.4], [0.2, 0.9])
    assert rows[0] == (0.9, 0.5, 0.0, 1.0, 0.5)
    assert rows[-1][1:3] == (1.0, 1.0)
    rep = detection_report([0.1, 0.2, 0.3, 0.95], [0.5])
    assert "fpr95=0.25" in rep.to_line() and rep.n_id == 4 and rep.n_ood == 1
