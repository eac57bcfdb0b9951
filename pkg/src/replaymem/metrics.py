"""Forgetting, summary and usage statistics over experiment records, plus CSV/JSONL emission."""

from collections import defaultdict
from collections.abc import Iterable, Sequence
import json
import math
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from scipy.stats import spearmanr

from replaymem.errors import ConfigurationError
from replaymem.models import ExperimentRecord, ForgettingRecord, SummaryRow, UsageForgetting
from replaymem.policies import POLICY_NAMES
from replaymem.utils.logger import get_logger

RECORD_COLUMNS = (
    "run_id",
    "seed",
    "order",
    "policy",
    "capacity_fraction",
    "task",
    "checkpoint",
    "accuracy",
    "forgetting_final",
    "forgetting_step",
    "mem_count",
    "mem_fraction_raw",
    "mem_fraction_normalized",
)
SUMMARY_COLUMNS = ("order", "policy", "mean", "std")
AVG_ORDER = "avg."

# Policies whose runtime MoF is expected not to undercut.
RUNTIME_BASELINES = ("naive_random", "reservoir", "max_loss")


def forgetting(record: ExperimentRecord) -> list[ForgettingRecord]:
    """Both forgetting variants for every task of a run.

    ``forgetting_final`` is accuracy right after the task was trained minus
    accuracy at the stream end. ``forgetting_step`` holds, for every later
    checkpoint, the drop relative to the checkpoint before it. Tasks without an
    initial or final accuracy are excluded with a warning.
    """
    logger = get_logger()
    results: list[ForgettingRecord] = []
    for position, task in enumerate(record.tasks):
        if position >= record.n_checkpoints:
            logger.warning(f"{record.run_id}: task {task.name} was never evaluated; excluded from forgetting")
            continue
        initial = record.acc_initial(position)
        final = record.acc_final(position)
        if math.isnan(initial) or math.isnan(final):
            logger.warning(f"{record.run_id}: task {task.name} has no test accuracy; excluded from forgetting")
            continue
        steps = tuple(
            (c, record.accuracy[c - 1][position] - record.accuracy[c][position])
            for c in range(position + 1, record.n_checkpoints)
        )
        results.append(
            ForgettingRecord(
                task_id=task.task_id,
                task=task.name,
                acc_initial=initial,
                acc_final=final,
                forgetting_final=initial - final,
                forgetting_step=steps,
            )
        )
    return results


def _policy_rank(policy: str) -> tuple[int, str]:
    return (POLICY_NAMES.index(policy) if policy in POLICY_NAMES else len(POLICY_NAMES), policy)


def _mean_std(values: Iterable[float]) -> tuple[float, float, int]:
    # sorted so the result does not depend on record order
    data = np.sort(np.asarray(list(values), dtype=np.float64))
    if len(data) == 0:
        return math.nan, math.nan, 0
    std = float(np.std(data, ddof=1)) if len(data) > 1 else 0.0
    return float(np.mean(data)), std, len(data)


def summarize(records: Sequence[ExperimentRecord], capacity_fraction: float | None = None) -> list[SummaryRow]:
    """Mean and sample std of final average accuracy per (order, policy).

    Rows come grouped by order (sorted), then policy, followed by one ``avg.``
    row per policy whose mean and std are the averages of the per-order values.

    Args:
        records: Runs, typically several seeds per cell
        capacity_fraction: Keep only runs at this capacity

    Raises:
        ConfigurationError: If runs at several capacities are mixed without a filter
    """
    if capacity_fraction is not None:
        records = [r for r in records if math.isclose(r.capacity_fraction, capacity_fraction)]
    capacities = {r.capacity_fraction for r in records}
    if len(capacities) > 1:
        raise ConfigurationError(f"records span capacities {sorted(capacities)}; pass capacity_fraction")

    cells: dict[tuple[str, str], list[float]] = defaultdict(list)
    for record in records:
        cells[(record.order, record.policy)].append(record.final_average_accuracy())

    rows: list[SummaryRow] = []
    per_policy: dict[str, list[SummaryRow]] = defaultdict(list)
    for order, policy in sorted(cells, key=lambda k: (k[0], _policy_rank(k[1]))):
        mean, std, n = _mean_std(cells[(order, policy)])
        row = SummaryRow(order=order, policy=policy, mean=mean, std=std, n=n)
        rows.append(row)
        per_policy[policy].append(row)

    for policy in sorted(per_policy, key=_policy_rank):
        cell_rows = per_policy[policy]
        mean = float(np.mean(np.sort([r.mean for r in cell_rows])))
        std = float(np.mean(np.sort([r.std for r in cell_rows])))
        rows.append(SummaryRow(order=AVG_ORDER, policy=policy, mean=mean, std=std, n=sum(r.n for r in cell_rows)))
    return rows


def usage_vs_forgetting(record: ExperimentRecord) -> UsageForgetting:
    """Final memory share and forgetting per task, with their Spearman correlation.

    The correlation is omitted (``None``) with a flag when fewer than three
    tasks are available or either series is constant.
    """
    if not record.composition:
        raise ConfigurationError(f"{record.run_id}: no composition snapshot to compare against")
    final = record.composition[-1]
    by_task = {f.task_id: f for f in forgetting(record)}
    tasks = [t for t in record.tasks if t.task_id in by_task]
    usage = tuple(float(final.raw.get(t.task_id, 0.0)) for t in tasks)
    drops = tuple(by_task[t.task_id].forgetting_final for t in tasks)

    spearman: float | None = None
    flag: str | None = None
    if len(tasks) < 3:
        flag = "too_few_tasks"
    elif np.ptp(usage) == 0 or np.ptp(drops) == 0:
        flag = "constant_input"
    else:
        value = float(spearmanr(usage, drops).statistic)
        if math.isnan(value):
            flag = "undefined"
        else:
            spearman = value
    if flag is not None:
        get_logger().debug(f"{record.run_id}: usage/forgetting correlation omitted ({flag})")
    return UsageForgetting(
        tasks=tuple(t.name for t in tasks), usage=usage, forgetting=drops, spearman=spearman, flag=flag
    )


def mean_train_seconds(records: Sequence[ExperimentRecord]) -> dict[str, float]:
    seconds: dict[str, list[float]] = defaultdict(list)
    for record in records:
        seconds[record.policy].append(record.wall_clock.get("train", math.nan))
    ranked = sorted(seconds, key=_policy_rank)
    return {policy: _mean_std(seconds[policy])[0] for policy in ranked}


def runtime_ordering_holds(records: Sequence[ExperimentRecord], floor: float = 1.0) -> bool:
    """Whether Mean of Features trains no faster than the cheap policies.

    Compares mean training wall-clock of ``mof`` against every policy of
    ``RUNTIME_BASELINES`` present in ``records``.

    Raises:
        ConfigurationError: If there is no ``mof`` run or no baseline run
    """
    means = mean_train_seconds(records)
    if "mof" not in means:
        raise ConfigurationError("runtime ordering needs at least one mof run")
    baselines = {p: means[p] for p in RUNTIME_BASELINES if p in means}
    if not baselines:
        raise ConfigurationError(f"runtime ordering needs a run of one of {', '.join(RUNTIME_BASELINES)}")
    holds = all(means["mof"] >= floor * seconds for seconds in baselines.values())
    get_logger().info(
        f"runtime ordering {'holds' if holds else 'violated'}: mof {means['mof']:.3f}s vs "
        + ", ".join(f"{p} {s:.3f}s" for p, s in baselines.items())
    )
    return holds


def record_rows(record: ExperimentRecord) -> list[dict[str, Any]]:
    """One row per (task, checkpoint), columns as in ``RECORD_COLUMNS``."""
    drops = {f.task_id: f for f in forgetting(record)}
    rows: list[dict[str, Any]] = []
    for checkpoint, accuracies in enumerate(record.accuracy):
        snapshot = record.composition[checkpoint]
        for position, task in enumerate(record.tasks):
            drop = drops.get(task.task_id)
            step = dict(drop.forgetting_step).get(checkpoint) if drop is not None else None
            rows.append(
                {
                    "run_id": record.run_id,
                    "seed": record.seed,
                    "order": record.order,
                    "policy": record.policy,
                    "capacity_fraction": record.capacity_fraction,
                    "task": task.name,
                    "checkpoint": checkpoint,
                    "accuracy": accuracies[position],
                    "forgetting_final": drop.forgetting_final if drop is not None else None,
                    "forgetting_step": step,
                    "mem_count": snapshot.counts.get(task.task_id, 0),
                    "mem_fraction_raw": snapshot.raw.get(task.task_id, 0.0),
                    "mem_fraction_normalized": snapshot.normalized.get(task.task_id, 0.0),
                }
            )
    return rows


def records_frame(records: Iterable[ExperimentRecord]) -> pd.DataFrame:
    rows = [row for record in records for row in record_rows(record)]
    return pd.DataFrame(rows, columns=list(RECORD_COLUMNS))


def summary_frame(rows: Sequence[SummaryRow]) -> pd.DataFrame:
    return pd.DataFrame([{c: getattr(r, c) for c in SUMMARY_COLUMNS} for r in rows], columns=list(SUMMARY_COLUMNS))


def write_csv(frame: pd.DataFrame, path: str | Path) -> Path:
    """Write a frame as UTF-8 CSV with a header, ``\\n`` line endings and blank NaN cells."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n", na_rep="")
    return path


def write_records_csv(records: Iterable[ExperimentRecord], path: str | Path) -> Path:
    return write_csv(records_frame(records), path)


def write_summary_csv(rows: Sequence[SummaryRow], path: str | Path) -> Path:
    return write_csv(summary_frame(rows), path)


def write_records_jsonl(records: Iterable[ExperimentRecord], path: str | Path) -> Path:
    """Full records, one JSON object per line, for later reporting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
    return path


def read_records_jsonl(path: str | Path) -> list[ExperimentRecord]:
    path = Path(path)
    records: list[ExperimentRecord] = []
    with path.open(encoding="utf-8") as f:
        for line in f:
            if line.strip():
                records.append(ExperimentRecord.from_dict(json.loads(line)))
    return records
