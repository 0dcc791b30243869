"""Metrics against brute-force oracles written with explicit loops."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from desamba.errors import ContractError, EvaluationError
from desamba.metrics import (EvalReport, binary_auc, bootstrap_ci, classification_metrics,
                             confusion_matrix, evaluate, macro_auc, render_report, topk_accuracy)


def oracle_confusion(preds, labels, c):
    cm = [[0] * c for _ in range(c)]
    for p, t in zip(preds, labels):
        cm[t][p] += 1
    return cm


def oracle_rates(preds, labels, c):
    out = {}
    for k in range(c):
        tp = sum(1 for p, t in zip(preds, labels) if p == k and t == k)
        fp = sum(1 for p, t in zip(preds, labels) if p == k and t != k)
        fn = sum(1 for p, t in zip(preds, labels) if p != k and t == k)
        tn = sum(1 for p, t in zip(preds, labels) if p != k and t != k)
        sen = 100 * tp / (tp + fn) if tp + fn else 0.0
        spe = 100 * tn / (tn + fp) if tn + fp else 0.0
        prec = 100 * tp / (tp + fp) if tp + fp else 0.0
        f1 = 2 * prec * sen / (prec + sen) if prec + sen else 0.0
        out[k] = {"sen": sen, "spe": spe, "prec": prec, "f1": f1}
    return out


def oracle_topk(scores, labels, k):
    hits = 0
    for row, t in zip(scores, labels):
        # rank = number of classes strictly better, plus equal ones with lower index
        rank = sum(1 for j, s in enumerate(row) if s > row[t] or (s == row[t] and j < t))
        hits += rank < k
    return 100 * hits / len(labels)


def oracle_auc(scores, positive):
    pos = [s for s, p in zip(scores, positive) if p]
    neg = [s for s, p in zip(scores, positive) if not p]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return 100 * wins / (len(pos) * len(neg))


def random_instance(rng):
    c = int(rng.integers(2, 7))
    n = int(rng.integers(2, 51))
    labels = rng.integers(0, c, size=n)
    # coarse scores so ties happen
    scores = rng.integers(0, 5, size=(n, c)) / 4.0
    return scores, labels, c


def close(a, b):
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12)


def test_metrics_match_oracles_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(100):
        scores, labels, c = random_instance(rng)
        preds = np.argmax(scores, axis=1)  # first maximum = lower index wins ties
        cm = confusion_matrix(preds, labels, c)
        assert cm.tolist() == oracle_confusion(preds, labels, c)
        m = classification_metrics(cm)
        ref = oracle_rates(preds, labels, c)
        for k in range(c):
            for key in ("sen", "spe", "prec", "f1"):
                assert close(m["per_class"][k][key], ref[k][key])
        for key in ("sen", "spe", "prec", "f1"):
            assert close(m["macro"][key], sum(ref[k][key] for k in range(c)) / c)
        assert close(m["acc"], 100 * float(np.mean(preds == labels)))
        for k in range(1, c + 1):
            assert close(topk_accuracy(scores, labels, k), oracle_topk(scores, labels, k))
        aucs = [oracle_auc(scores[:, k], labels == k) for k in range(c)
                if 0 < (labels == k).sum() < len(labels)]
        if aucs:
            assert close(macro_auc(scores, labels), sum(aucs) / len(aucs))
        rep = evaluate(scores, labels, c)
        assert close(rep.macro["acc"], m["acc"]) and rep.topk[c] == 100.0


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6).flatmap(lambda c: st.tuples(
    st.just(c),
    st.lists(st.tuples(st.lists(st.floats(-5, 5), min_size=c, max_size=c), st.integers(0, c - 1)),
             min_size=1, max_size=50))))
def test_topk_monotone_and_complete(data):
    c, rows = data
    scores = np.array([r for r, _ in rows])
    labels = np.array([t for _, t in rows])
    values = [topk_accuracy(scores, labels, k) for k in range(1, c + 1)]
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert values[-1] == 100.0


def test_auc_known_values():
    assert binary_auc([0.1, 0.4, 0.35, 0.8], [False, False, True, True]) == 75.0
    assert binary_auc([1, 1, 1, 1], [True, False, True, False]) == 50.0
    with pytest.raises(EvaluationError):
        binary_auc([0.1, 0.2], [True, True])


def test_degenerate_classes_are_reported():
    scores = np.array([[0.9, 0.1, 0.0], [0.8, 0.2, 0.0]])
    rep = evaluate(scores, np.array([0, 1]), 3)
    assert "auc[2]" in rep.degenerate and "sen[2]" in rep.degenerate
    assert math.isfinite(rep.macro["auc"])


def test_contracts():
    with pytest.raises(ContractError):
        confusion_matrix([0, 3], [0, 1], 3)
    with pytest.raises(ContractError):
        confusion_matrix([0], [0, 1], 2)
    with pytest.raises(ContractError):
        topk_accuracy(np.zeros((2, 3)), [0, 1], 4)
    with pytest.raises(ContractError):
        classification_metrics(np.zeros((2, 2)))
    with pytest.raises(ContractError):
        bootstrap_ci(np.zeros((2, 2)), [0, 1], macro_auc, B=10)


def test_bootstrap_ci_brackets_point_estimate_and_is_seeded():
    rng = np.random.default_rng(1)
    labels = rng.integers(0, 3, 60)
    scores = rng.random((60, 3)) + np.eye(3)[labels] * 0.5
    point = topk_accuracy(scores, labels, 1)
    lo, hi = bootstrap_ci(scores, labels, lambda s, l: topk_accuracy(s, l, 1), B=300, seed=4)
    assert lo <= point <= hi
    assert (lo, hi) == bootstrap_ci(scores, labels, lambda s, l: topk_accuracy(s, l, 1), B=300, seed=4)


def test_report_round_trip_and_rendering():
    rng = np.random.default_rng(2)
    labels = np.arange(12) % 3
    rep = evaluate(rng.random((12, 3)), labels, 3, ci_samples=100)
    again = EvalReport.from_json(rep.to_json())
    assert again == rep
    text = render_report(rep, "demo")
    assert "| demo |" in text and "Top-3: 100.00" in text
