import numpy as np
import pytest

from gemmesh.errors import ShapeMismatchError, ZeroLabelError
from gemmesh.nn.metrics import metrics, nmae_per_step, sample_metrics, split_normalizer


@pytest.fixture
def label():
    return np.array([[[1.0, 0.0, 0.0]], [[0.0, 2.0, 0.0]]])


@pytest.fixture
def pred():
    return np.array([[[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]]])


def test_hand_computed_errors(pred, label):
    row = sample_metrics(pred, label, normalizer=2.0)
    # Expected: per-vertex errors 0 and 1, label norm sqrt(5), normalizer 2
    assert row["eps"] == pytest.approx(1.0 / np.sqrt(5.0))
    assert row["nmae"] == pytest.approx(0.25)
    assert row["delta_max"] == 1.0
    assert row["delta_mean"] == 0.5
    assert row["label_max"] == 2.0
    assert row["label_median"] == 1.5
    assert row["magnitude_bias"] == -0.5


def test_perfect_and_zero_predictions(label):
    perfect = sample_metrics(label, label, normalizer=2.0)
    assert perfect["nmae"] == 0.0
    assert perfect["eps"] == 0.0
    silent = sample_metrics(np.zeros_like(label), label, normalizer=2.0)
    assert silent["eps"] == pytest.approx(1.0)


def test_zero_label_is_rejected(label):
    with pytest.raises(ZeroLabelError):
        sample_metrics(label, np.zeros_like(label), normalizer=1.0)
    with pytest.raises(ZeroLabelError):
        metrics([label], [np.zeros_like(label)])


def test_shape_mismatch(label):
    with pytest.raises(ShapeMismatchError, match="prediction shape"):
        sample_metrics(label[:1], label, normalizer=1.0)


def test_split_normalizer_spans_samples(label):
    assert split_normalizer([label, 3.0 * label]) == 6.0


def test_metrics_table_and_summary(pred, label):
    table, summary = metrics([pred, label], [label, label], names=["a", "b"], flows=[2.0, 3.0])
    assert table["sample"].tolist() == ["a", "b"]
    assert table["flow"].tolist() == [2.0, 3.0]
    assert table["nmae"].tolist() == pytest.approx([0.25, 0.0])
    assert summary["samples"] == 2
    assert summary["nmae"]["mean"] == pytest.approx(0.125)
    assert summary["nmae"]["median"] == pytest.approx(0.125)
    assert summary["eps"]["p75"] == pytest.approx(0.75 / np.sqrt(5.0))
    assert summary["label_max"] == 2.0
    assert "nmae_per_step" not in summary


def test_nmae_per_step():
    label = np.ones((3, 2, 1))
    pred = label.copy()
    pred[:, 1] = 0.5
    assert nmae_per_step([pred], [label]).tolist() == [0.0, 0.5]
    _, summary = metrics([pred], [label])
    assert summary["nmae_per_step"] == [0.0, 0.5]
