"""Metrics, result tables and figures."""

import numpy as np
import pandas as pd
import pytest

from src.errors import ArtifactError, UsageError, ValidationError
from src.evaluation import (
    ResultTable,
    accuracy_from_logits,
    class_subset,
    evaluate_accuracy,
    intra_class_discrepancy,
    mean_off_diagonal,
    pairwise_distances,
    read_source_rows,
    write_source_rows,
)
from src.visualizations import create_accuracy_chart, create_heatmap, export_heatmap, heatmap_pixels

CELLS = [
    ("tsl", "b", 0, 0.5),
    ("tsl", "b", 1, 0.7),
    ("tsl", "c", 0, 0.4),
    ("tsl", "c", 1, 0.6),
    ("vbkt", "b", 0, 0.8),
    ("vbkt", "b", 1, 0.8),
    ("vbkt", "c", 0, 0.6),
    ("vbkt", "c", 1, 0.7),
]


@pytest.fixture
def table():
    records = [dict(zip(["method", "device", "trial", "accuracy"], cell)) for cell in CELLS]
    return ResultTable.from_records(records, labels={"tsl": "TSL", "vbkt": "VBKT"})


class TestAccuracy:
    """Test classification accuracy."""

    def test_argmax_with_tie(self):
        """Ties resolve to the lowest class index."""
        logits = np.array([[2.0, 1.0], [0.0, 3.0], [1.0, 1.0]])
        assert accuracy_from_logits(logits, np.array([0, 1, 1])) == pytest.approx(2 / 3)

    def test_empty(self):
        with pytest.raises(UsageError):
            accuracy_from_logits(np.zeros((0, 3)), np.array([], dtype=int))

    def test_model_accuracy(self, tiny_model, tiny_dataset):
        tiny_model.train()
        accuracy = evaluate_accuracy(tiny_model, tiny_dataset.source_test)
        assert 0.0 <= accuracy <= 1.0
        assert tiny_model.training, "evaluation should restore train mode"

    def test_model_accuracy_empty(self, tiny_model):
        with pytest.raises(UsageError):
            evaluate_accuracy(tiny_model, [])


class TestDiscrepancy:
    """Test intra-class output distances."""

    def test_pairwise_distances(self):
        distances = pairwise_distances(np.array([[0.0, 0.0], [3.0, 4.0], [0.0, 4.0]]))
        assert distances[0, 1] == pytest.approx(5.0)
        assert distances[1, 2] == pytest.approx(3.0)
        np.testing.assert_array_equal(distances, distances.T)
        np.testing.assert_array_equal(np.diag(distances), 0.0)

    def test_mean_off_diagonal(self):
        assert mean_off_diagonal(np.array([[0.0, 5.0], [5.0, 0.0]])) == pytest.approx(5.0)
        assert mean_off_diagonal(np.zeros((1, 1))) == 0.0

    def test_model_discrepancy(self, frozen_source, tiny_dataset):
        subset = class_subset(tiny_dataset.target_tests["s6"], label=1, count=5)
        matrix = intra_class_discrepancy(frozen_source, subset)
        assert matrix.shape == (5, 5)
        np.testing.assert_allclose(matrix, matrix.T)
        np.testing.assert_array_equal(np.diag(matrix), 0.0)
        assert mean_off_diagonal(matrix) > 0

    def test_mixed_labels(self, frozen_source, tiny_dataset):
        with pytest.raises(ValidationError, match="one class"):
            intra_class_discrepancy(frozen_source, tiny_dataset.source_test[:3])

    def test_class_subset(self, tiny_dataset):
        first = class_subset(tiny_dataset.source_test, label=2, count=4, seed=1)
        second = class_subset(tiny_dataset.source_test, 2, 4, 1)
        assert [s.sample_id for s in first] == [s.sample_id for s in second]
        assert all(s.label == 2 for s in first)
        assert [s.sample_id for s in first] == sorted(s.sample_id for s in first)

    def test_class_subset_too_small(self, tiny_dataset):
        with pytest.raises(ValidationError, match="need 11"):
            class_subset(tiny_dataset.source_test, label=0, count=11)


class TestResultTable:
    """Test aggregation and rendering of result cells."""

    def test_grand_mean_is_mean_of_cells(self, table):
        means = table.grand_mean()
        assert means["tsl"] == pytest.approx(0.55)
        assert means["vbkt"] == pytest.approx(0.725)

    def test_per_device(self, table):
        per_device = table.per_device()
        assert list(per_device.columns) == ["b", "c"]
        assert per_device.loc["tsl", "b"] == pytest.approx(0.6)
        assert table.per_device_std().loc["tsl", "b"] == pytest.approx(0.1)
        assert table.summary().loc["vbkt", "mean"] == pytest.approx(0.725)

    def test_markdown(self, table):
        markdown = table.to_markdown(source_row=pd.Series({"b": 0.9, "c": 0.7}))
        lines = markdown.strip().splitlines()
        assert lines[0] == "| Method | b | c | mean |"
        assert lines[2] == "| Source model | 90.00 | 70.00 | 80.00 |"
        assert lines[4] == "| VBKT | 80.00 | 65.00 | 72.50 |"

    def test_duplicate_cells(self):
        with pytest.raises(ValidationError, match="duplicate"):
            record = {"method": "tsl", "device": "b", "trial": 0, "accuracy": 0.5}
            ResultTable.from_records([record] * 2)

    def test_missing_columns(self):
        with pytest.raises(ValidationError, match="missing columns"):
            ResultTable(pd.DataFrame({"method": ["tsl"], "accuracy": [0.5]}))

    def test_csv_is_sorted_with_header(self, table, tmp_path):
        path = table.to_csv(tmp_path / "results.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "method,device,trial,accuracy"
        assert lines[1].startswith("tsl,b,0,")
        assert len(ResultTable.from_csv(path)) == len(CELLS)

    def test_missing_csv(self, tmp_path):
        with pytest.raises(ArtifactError):
            ResultTable.from_csv(tmp_path / "nope.csv")

    def test_merge(self, table):
        extra = ResultTable.from_records(
            [{"method": "none", "device": "b", "trial": 0, "accuracy": 0.3}]
        )
        merged = table.merge(extra)
        assert len(merged) == len(CELLS) + 1
        assert merged.labels["vbkt"] == "VBKT"
        with pytest.raises(ValidationError):
            merged.merge(extra)

    def test_source_rows(self, tmp_path):
        path = write_source_rows({"a": 0.95, "b": 0.6}, tmp_path / "source_model.csv")
        rows = read_source_rows(path)
        assert rows["b"] == pytest.approx(0.6)
        with pytest.raises(ArtifactError):
            read_source_rows(tmp_path / "missing.csv")


class TestFigures:
    """Test heatmaps and the accuracy chart."""

    def test_heatmap_extremes(self):
        """The largest distance is black, zero is white."""
        pixels = heatmap_pixels(np.array([[0.0, 2.5], [2.5, 0.0]]))
        np.testing.assert_array_equal(pixels, [[255, 0], [0, 255]])

    def test_all_zero_heatmap_is_white(self):
        assert np.all(heatmap_pixels(np.zeros((3, 3))) == 255)

    def test_heatmap_is_monotone(self):
        matrix = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 3.0], [2.0, 3.0, 0.0]])
        pixels = heatmap_pixels(matrix).astype(int)
        order = np.argsort(matrix, axis=None, kind="stable")
        assert np.all(np.diff(pixels.ravel()[order]) <= 0), "larger distances must not be lighter"

    @pytest.mark.parametrize("matrix", [np.zeros((2, 3)), np.array([[0.0, -1.0], [-1.0, 0.0]])])
    def test_heatmap_validation(self, matrix):
        with pytest.raises(ValidationError):
            heatmap_pixels(matrix)

    def test_graymap_file(self, tmp_path):
        path = export_heatmap(np.array([[0.0, 1.0], [1.0, 0.0]]), tmp_path / "maps" / "h.pgm")
        assert path.read_bytes() == b"P5\n2 2\n255\n" + bytes([255, 0, 0, 255])

    def test_interactive_heatmap(self, tmp_path):
        fig = create_heatmap(np.array([[0.0, 4.0], [4.0, 0.0]]), output_path=tmp_path / "h.html")
        assert (tmp_path / "h.html").is_file()
        assert "4.0000" in fig.layout.title.text

    def test_accuracy_chart(self, table, tmp_path):
        fig = create_accuracy_chart(
            table.summary(), errors=table.per_device_std(), output_path=tmp_path / "acc.html"
        )
        assert len(fig.data) == 2
        assert list(fig.data[0].x) == ["b", "c", "mean"]
        assert (tmp_path / "acc.html").is_file()
