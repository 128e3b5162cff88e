import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lmaemotion.classifiers import DecisionTreeClassifier, RandomForestClassifier
from lmaemotion.descriptors import ThresholdPolicy, extract_dataset
from lmaemotion.evaluation import (ConfusionMatrix, EvaluationError, TrainingConfig, cv_accuracy,
                                   out_of_fold_predictions, per_class_metrics, sequence_vote_accuracy,
                                   sweep_csv, sweep_svg, window_sweep)
from lmaemotion.synth import SynthConfig, generate, reversal_dataset


def test_diagonal_matrix():
    report = per_class_metrics(ConfusionMatrix(["a", "b", "c"], np.diag([4, 2, 7])))
    assert report.accuracy == 1.0
    assert all((m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0) for m in report.per_class.values())
    assert (report.macro_precision, report.macro_recall, report.macro_f1) == (1.0, 1.0, 1.0)


def test_two_class_hand_arithmetic():
    report = per_class_metrics(ConfusionMatrix(["A", "B"], [[8, 2], [3, 7]]))
    a, b = report.per_class["A"], report.per_class["B"]
    assert a.precision == 8 / 11 and a.recall == 0.8
    assert b.precision == 7 / 9 and b.recall == 0.7
    assert a.f1 == pytest.approx(2 * (8 / 11) * 0.8 / (8 / 11 + 0.8), rel=1e-15)
    assert report.accuracy == 15 / 20
    assert report.macro_recall == pytest.approx(0.75)


def test_never_predicted_and_absent_classes_are_flagged():
    cm = ConfusionMatrix.from_labels(["a", "a", "b", "b"], ["a", "a", "a", "c"], classes=["a", "b", "c"])
    report = per_class_metrics(cm)
    assert report.per_class["b"].precision == 0.0
    assert "never_predicted" in report.per_class["b"].flags
    assert "no_true_samples" in report.per_class["c"].flags
    assert report.per_class["c"].recall == 0.0


def test_empty_and_invalid_matrices():
    with pytest.raises(EvaluationError):
        per_class_metrics(ConfusionMatrix(["a"], [[0]]))
    with pytest.raises(EvaluationError):
        ConfusionMatrix(["a", "b"], [[1, -1], [0, 1]])
    with pytest.raises(EvaluationError):
        ConfusionMatrix(["a", "b"], [[1, 2, 3]])


labels = st.lists(st.tuples(st.sampled_from("abcd"), st.sampled_from("abcd")), min_size=1, max_size=60)


@settings(max_examples=80, deadline=None)
@given(labels)
def test_accuracy_is_trace_over_total_and_micro_identity(pairs):
    y_true, y_pred = zip(*pairs)
    cm = ConfusionMatrix.from_labels(y_true, y_pred, classes=list("abcd"))
    assert cm.total == len(pairs)
    assert cm.accuracy == np.trace(cm.counts) / cm.total
    tp = np.trace(cm.counts)
    fp = cm.counts.sum(axis=0).sum() - tp
    fn = cm.counts.sum(axis=1).sum() - tp
    assert tp / (tp + fp) == tp / (tp + fn) == cm.accuracy


@settings(max_examples=50, deadline=None)
@given(labels, st.randoms(use_true_random=False))
def test_metrics_ignore_sample_order(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    a = per_class_metrics(ConfusionMatrix.from_labels(*zip(*pairs), classes=list("abcd")))
    b = per_class_metrics(ConfusionMatrix.from_labels(*zip(*shuffled), classes=list("abcd")))
    assert a.to_csv() == b.to_csv()


def test_report_files(tmp_path):
    cm = ConfusionMatrix(["A", "B"], [[8, 2], [3, 7]])
    text = cm.to_csv(tmp_path / "confusion.csv")
    assert text.splitlines() == ["true\\pred,A,B", "A,8,2", "B,3,7"]
    rows = per_class_metrics(cm).to_csv(tmp_path / "metrics.csv").splitlines()
    assert rows[0] == "class,precision,recall,f1,support,flags"
    assert rows[-2].startswith("macro_average,") and rows[-1].startswith("accuracy,")
    assert cm.to_svg(tmp_path / "confusion.svg").count("<rect") == 4


def test_sequence_vote_accuracy():
    y_true = ["a"] * 3 + ["b"] * 3
    y_pred = ["a", "b", "a", "a", "a", "b"]
    groups = ["s1"] * 3 + ["s2"] * 3
    assert sequence_vote_accuracy(y_true, y_pred, groups) == 0.5


@pytest.fixture(scope="module")
def small_emotions():
    return generate(SynthConfig(sequences_per_class=3, frames=60, seed=1))[:12]


def test_sweep_single_length_equals_cv(small_emotions):
    config = TrainingConfig(estimator=DecisionTreeClassifier(max_depth=6), stride=5)
    rows = window_sweep(small_emotions, [25], config)
    table = extract_dataset(small_emotions, config.window_spec(25), ThresholdPolicy())
    direct = cv_accuracy(table.X, np.asarray(table.labels, dtype=object), table.groups, config)
    assert len(rows) == 1 and rows[0].feasible
    assert rows[0].accuracy == direct and rows[0].n_windows == len(table)


def test_sweep_dedupes_and_marks_infeasible(small_emotions, tmp_path):
    config = TrainingConfig(estimator=DecisionTreeClassifier(max_depth=4), stride=10)
    rows = window_sweep(small_emotions, [30, 20, 30, 500], config)
    assert [r.length for r in rows] == [20, 30, 500]
    assert rows[-1].feasible is False and np.isnan(rows[-1].accuracy)
    text = sweep_csv(rows, tmp_path / "sweep.csv")
    assert text.splitlines()[0] == "window_length,mean_cv_accuracy,n_windows,feasible"
    assert text.splitlines()[-1] == "500,,0,false"
    assert sweep_svg(rows, tmp_path / "sweep.svg").count("<circle") == 2


def test_sweep_short_windows_lose_long_horizon_signal():
    seqs = reversal_dataset(n_per_class=6, frames=80)
    config = TrainingConfig(estimator=RandomForestClassifier(n_trees=20), stride=3)
    rows = {r.length: r.accuracy for r in window_sweep(seqs, [5, 25], config)}
    assert rows[5] < rows[25]


def test_window_spec_clamps_sub_window():
    assert TrainingConfig(sub_window=5).window_spec(4).sub_window == 3


def test_out_of_fold_predictions_cover_every_row(small_emotions):
    table = extract_dataset(small_emotions, TrainingConfig(stride=10).window_spec(25))
    y = np.asarray(table.labels, dtype=object)
    pred = out_of_fold_predictions(table.X, y, table.groups, DecisionTreeClassifier(max_depth=3))
    assert pred.shape == y.shape and set(pred) <= set(y)
