"""Tests for report tables and charts."""

from collections.abc import Callable
import math
from pathlib import Path

import pytest

from replaymem.errors import ConfigurationError
from replaymem.metrics import write_records_jsonl
from replaymem.models import ExperimentRecord, TaskInfo
from replaymem.reporting import (
    adaptation_frame,
    build_report,
    capacity_curve_frame,
    composition_frame,
    forgetting_frame,
    grouped_composition,
)

RecordFactory = Callable[..., ExperimentRecord]

STAIRCASE = [[0.9, 0.0, 0.0], [0.6, 0.9, 0.0], [0.5, 0.7, 0.9]]


def _grouped(record: ExperimentRecord) -> ExperimentRecord:
    record.tasks = [
        TaskInfo("yelp", 0, 5, "sentiment"),
        TaskInfo("agnews", 1, 4),
        TaskInfo("amazon", 2, 5, "sentiment"),
    ]
    return record


class TestFrames:
    def test_shared_groups_are_joined(self, make_record: RecordFactory) -> None:
        record = _grouped(make_record(STAIRCASE, counts=[10, 20, 30], class_counts=[5, 4, 5]))
        report, labels = grouped_composition(record)
        assert sorted(labels.values()) == ["agnews", "sentiment"]
        assert report.counts == {"sentiment": 40, 1: 20}
        assert report.raw["sentiment"] == pytest.approx(40 / 60)

    def test_composition_frame(self, make_record: RecordFactory) -> None:
        record = _grouped(make_record(STAIRCASE, counts=[10, 20, 30], class_counts=[5, 4, 5]))
        frame = composition_frame([record])
        assert len(frame) == 3 * 2
        final = frame[frame["checkpoint"] == 2].set_index("memory_key")
        assert final.loc["sentiment", "mem_count"] == 40
        assert final["mem_fraction_normalized"].sum() == pytest.approx(1.0)

    def test_forgetting_frame(self, make_record: RecordFactory) -> None:
        frame = forgetting_frame([make_record(STAIRCASE)]).set_index("task")
        assert frame.loc["task0", "forgetting_final"] == pytest.approx(0.4)
        assert frame.loc["task0", "forgetting_last_step"] == pytest.approx(0.1)
        assert math.isnan(frame.loc["task2", "forgetting_last_step"])

    def test_capacity_curve(self, make_record: RecordFactory) -> None:
        records = [
            make_record([[0.5]], capacity_fraction=0.1, seed=0),
            make_record([[0.7]], capacity_fraction=0.1, seed=1),
            make_record([[0.9]], capacity_fraction=0.5, seed=0),
        ]
        curve = capacity_curve_frame(records)
        assert curve["capacity_fraction"].tolist() == [0.1, 0.5]
        assert curve["mean"].tolist() == pytest.approx([0.6, 0.9])
        assert curve["std"].tolist() == pytest.approx([0.141421, 0.0], abs=1e-6)
        assert curve["n"].tolist() == [2, 1]

    def test_adaptation_frame(self, make_record: RecordFactory) -> None:
        plain = make_record([[0.5, 0.6]])
        adapted = make_record([[0.5, 0.6]], run_id="other")
        adapted.adapted_accuracy = [0.7, 0.8]
        frame = adaptation_frame([plain, adapted])
        assert frame["run_id"].unique().tolist() == ["other"]
        assert frame["accuracy_adapted"].tolist() == [0.7, 0.8]


class TestBuildReport:
    def test_writes_tables_and_charts(self, make_record: RecordFactory, tmp_path: Path) -> None:
        train_seconds = {"reservoir": 1.0, "mof": 2.0}
        records = [
            make_record(
                STAIRCASE,
                counts=[1, 2, 3],
                policy=policy,
                seed=seed,
                capacity_fraction=capacity,
                run_id=f"i-{policy}-c{capacity:g}-s{seed}",
                wall_clock={"train": train_seconds[policy]},
            )
            for policy in ("reservoir", "mof")
            for capacity in (0.1, 0.3)
            for seed in range(2)
        ]
        write_records_jsonl(records, tmp_path / "runs" / "records.jsonl")
        written = build_report(tmp_path / "runs", tmp_path / "report")
        names = {p.name for p in written}
        assert {"summary.csv", "composition.csv", "usage_forgetting.csv", "runtime.csv"} <= names
        assert {"composition.svg", "capacity_curve.svg", "usage_forgetting.svg"} <= names
        assert "adaptation.csv" not in names
        svg = (tmp_path / "report" / "capacity_curve.svg").read_text(encoding="utf-8")
        assert svg.lstrip().startswith("<?xml")

    def test_charts_are_byte_stable(self, make_record: RecordFactory, tmp_path: Path) -> None:
        write_records_jsonl([make_record(STAIRCASE, counts=[1, 2, 3])], tmp_path / "runs" / "records.jsonl")
        build_report(tmp_path / "runs", tmp_path / "a")
        build_report(tmp_path / "runs", tmp_path / "b")
        for name in ("composition.svg", "capacity_curve.svg", "summary.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_no_charts(self, make_record: RecordFactory, tmp_path: Path) -> None:
        write_records_jsonl([make_record([[0.5]])], tmp_path / "records.jsonl")
        written = build_report(tmp_path, tmp_path / "report", charts=False)
        assert not any(p.suffix == ".svg" for p in written)

    def test_empty_records(self, tmp_path: Path) -> None:
        (tmp_path / "records.jsonl").write_text("", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="no records"):
            build_report(tmp_path, tmp_path / "report")
