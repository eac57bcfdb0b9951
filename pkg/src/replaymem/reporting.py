"""Report tables and SVG charts from merged experiment records."""

from collections.abc import Sequence
import math
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from replaymem.errors import ConfigurationError
from replaymem.memory import composition
from replaymem.metrics import (
    forgetting,
    mean_train_seconds,
    read_records_jsonl,
    runtime_ordering_holds,
    summarize,
    summary_frame,
    usage_vs_forgetting,
    write_csv,
)
from replaymem.models import CompositionReport, ExperimentRecord
from replaymem.sweep import RECORDS_JSONL
from replaymem.utils.logger import get_logger

# Fixed ids and no timestamps so identical inputs give identical SVG bytes.
plt.rcParams["svg.hashsalt"] = "replaymem"
_SVG_METADATA = {"Date": None, "Creator": None}


def _key(record: ExperimentRecord) -> dict[str, Any]:
    return {
        "run_id": record.run_id,
        "seed": record.seed,
        "order": record.order,
        "policy": record.policy,
        "capacity_fraction": record.capacity_fraction,
    }


def grouped_composition(record: ExperimentRecord, checkpoint: int = -1) -> tuple[CompositionReport, dict[Any, str]]:
    """Composition with tasks of one shared-label group joined into a single key.

    Returns:
        The regrouped report and a label per key
    """
    snapshot = record.composition[checkpoint]
    group_of = {t.task_id: t.shared_label_group for t in record.tasks if t.shared_label_group is not None}
    class_counts: dict[Any, int] = {}
    labels: dict[Any, str] = {}
    for task in record.tasks:
        key = group_of.get(task.task_id, task.task_id)
        # tasks of a group share one label range
        class_counts[key] = max(class_counts.get(key, 0), task.class_count)
        labels[key] = task.shared_label_group or task.name
    return composition(snapshot.counts, class_counts, group_of or None), labels


def composition_frame(records: Sequence[ExperimentRecord]) -> pd.DataFrame:
    rows = []
    for record in records:
        for checkpoint in range(len(record.composition)):
            report, labels = grouped_composition(record, checkpoint)
            for key, label in labels.items():
                rows.append(
                    {
                        **_key(record),
                        "checkpoint": checkpoint,
                        "memory_key": label,
                        "mem_count": report.counts[key],
                        "mem_fraction_raw": report.raw[key],
                        "mem_fraction_normalized": report.normalized[key],
                    }
                )
    return pd.DataFrame(rows)


def forgetting_frame(records: Sequence[ExperimentRecord]) -> pd.DataFrame:
    """Per (run, task): both forgetting variants.

    ``forgetting_last_step`` is the drop between the last two checkpoints,
    blank for the final task of the order.
    """
    rows = []
    for record in records:
        for f in forgetting(record):
            rows.append(
                {
                    **_key(record),
                    "task": f.task,
                    "acc_initial": f.acc_initial,
                    "acc_final": f.acc_final,
                    "forgetting_final": f.forgetting_final,
                    "forgetting_last_step": f.forgetting_step[-1][1] if f.forgetting_step else math.nan,
                }
            )
    return pd.DataFrame(rows)


def usage_forgetting_frame(records: Sequence[ExperimentRecord]) -> pd.DataFrame:
    rows = []
    for record in records:
        result = usage_vs_forgetting(record)
        for task, usage, drop in zip(result.tasks, result.usage, result.forgetting, strict=True):
            rows.append(
                {
                    **_key(record),
                    "task": task,
                    "usage": usage,
                    "forgetting": drop,
                    "spearman": math.nan if result.spearman is None else result.spearman,
                    "flag": result.flag or "",
                }
            )
    return pd.DataFrame(rows)


def capacity_curve_frame(records: Sequence[ExperimentRecord]) -> pd.DataFrame:
    """Mean and sample std of final average accuracy per (policy, capacity), pooled over orders and seeds."""
    frame = pd.DataFrame(
        [
            {"policy": r.policy, "capacity_fraction": r.capacity_fraction, "accuracy": r.final_average_accuracy()}
            for r in records
        ]
    )
    if frame.empty:
        return pd.DataFrame(columns=["policy", "capacity_fraction", "mean", "std", "n"])
    curve = (
        frame.sort_values(["policy", "capacity_fraction", "accuracy"])
        .groupby(["policy", "capacity_fraction"], sort=True)["accuracy"]
        .agg(["mean", "std", "count"])
        .reset_index()
        .rename(columns={"count": "n"})
    )
    curve["std"] = curve["std"].fillna(0.0)
    return curve


def runtime_frame(records: Sequence[ExperimentRecord]) -> pd.DataFrame:
    counts = pd.Series([r.policy for r in records]).value_counts()
    return pd.DataFrame(
        [
            {"policy": policy, "mean_train_seconds": seconds, "n": int(counts[policy])}
            for policy, seconds in mean_train_seconds(records).items()
        ]
    )


def adaptation_frame(records: Sequence[ExperimentRecord]) -> pd.DataFrame:
    rows = []
    for record in records:
        if record.adapted_accuracy is None:
            continue
        for position, task in enumerate(record.tasks):
            rows.append(
                {
                    **_key(record),
                    "task": task.name,
                    "accuracy": record.acc_final(position),
                    "accuracy_adapted": record.adapted_accuracy[position],
                }
            )
    return pd.DataFrame(rows)


def plot_composition(frame: pd.DataFrame, path: Path) -> Path:
    """Grouped bars: mean final memory share per key, one bar group per policy."""
    final = frame[frame["checkpoint"] == frame.groupby("run_id")["checkpoint"].transform("max")]
    fig, axes = plt.subplots(1, 2, figsize=(12, 4.5), sharey=True)
    for ax, column, title in zip(
        axes, ("mem_fraction_raw", "mem_fraction_normalized"), ("raw share", "class-normalized share"), strict=True
    ):
        table = final.pivot_table(index="policy", columns="memory_key", values=column, aggfunc="mean", sort=True)
        width = 0.8 / max(len(table.columns), 1)
        x = np.arange(len(table.index))
        for i, key in enumerate(table.columns):
            ax.bar(x + i * width, table[key].to_numpy(), width, label=str(key))
        ax.set_xticks(x + 0.4 - width / 2, table.index, rotation=30, ha="right")
        ax.set_title(f"Memory per task ({title})")
        ax.set_ylim(0, 1)
    axes[0].set_ylabel("fraction of memory")
    axes[-1].legend(fontsize="small")
    return _save(fig, path)


def plot_capacity_curve(curve: pd.DataFrame, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for policy, group in curve.groupby("policy", sort=True):
        ax.errorbar(
            group["capacity_fraction"] * 100, group["mean"], yerr=group["std"], marker="o", capsize=3, label=policy
        )
    ax.set_xlabel("memory size (% of stream)")
    ax.set_ylabel("final average accuracy")
    ax.legend(fontsize="small")
    return _save(fig, path)


def plot_usage_forgetting(frame: pd.DataFrame, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for policy, group in frame.groupby("policy", sort=True):
        ax.scatter(group["usage"] * 100, group["forgetting"] * 100, label=policy, s=18)
    ax.axhline(0.0, color="grey", linewidth=0.5)
    ax.set_xlabel("memory usage (%)")
    ax.set_ylabel("forgetting (points)")
    ax.legend(fontsize="small")
    return _save(fig, path)


def _save(fig: Any, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)
    return path


def build_report(
    in_dir: str | Path,
    out_dir: str | Path,
    capacity_fraction: float | None = None,
    charts: bool = True,
) -> list[Path]:
    """Write every report table (and chart) for the records found in ``in_dir``.

    Args:
        in_dir: Directory holding ``records.jsonl`` from ``run`` or ``sweep``
        out_dir: Destination directory
        capacity_fraction: Capacity for the summary table; defaults to the smallest present
        charts: Also emit SVG charts

    Returns:
        Paths written

    Raises:
        ConfigurationError: If ``in_dir`` holds no records
    """
    logger = get_logger()
    source = Path(in_dir) / RECORDS_JSONL
    if not source.is_file():
        raise ConfigurationError(f"no {RECORDS_JSONL} in {in_dir}; run 'replaymem run' or 'replaymem sweep' first")
    records = read_records_jsonl(source)
    if not records:
        raise ConfigurationError(f"{source} holds no records")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    capacities = sorted({r.capacity_fraction for r in records})
    if capacity_fraction is None:
        capacity_fraction = capacities[0]
        if len(capacities) > 1:
            logger.info(f"records span capacities {capacities}; summary uses {capacity_fraction}")

    written: list[Path] = []
    with logger.section(f"Report over {len(records)} runs from {in_dir}"):
        written.append(write_csv(summary_frame(summarize(records, capacity_fraction)), out / "summary.csv"))
        comp = composition_frame(records)
        written.append(write_csv(comp, out / "composition.csv"))
        written.append(write_csv(forgetting_frame(records), out / "forgetting.csv"))
        usage = usage_forgetting_frame(records)
        written.append(write_csv(usage, out / "usage_forgetting.csv"))
        curve = capacity_curve_frame(records)
        written.append(write_csv(curve, out / "capacity_curve.csv"))
        written.append(write_csv(runtime_frame(records), out / "runtime.csv"))
        adaptation = adaptation_frame(records)
        if not adaptation.empty:
            written.append(write_csv(adaptation, out / "adaptation.csv"))

        policies = {r.policy for r in records}
        if "mof" in policies and policies & {"naive_random", "reservoir", "max_loss"}:
            runtime_ordering_holds(records)

        if charts:
            written.append(plot_composition(comp, out / "composition.svg"))
            written.append(plot_capacity_curve(curve, out / "capacity_curve.svg"))
            if not usage.empty:
                written.append(plot_usage_forgetting(usage, out / "usage_forgetting.svg"))
        for path in written:
            logger.info(f"wrote {path}")
    return written
