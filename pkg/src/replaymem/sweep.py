"""Cross-product sweeps of isolated experiment runs.

Every run gets its own config copy, loads its own corpora and builds its own
learner, memory and policy, so runs share no mutable state and can execute in
parallel worker processes. A failing run is recorded as a ``RunOutcome`` and
does not abort its siblings.
"""

from collections.abc import Sequence
from dataclasses import dataclass, replace
import itertools
from pathlib import Path
import traceback

from joblib import Parallel, delayed
import pandas as pd

from replaymem.config import ExperimentConfig, sweep_threads
from replaymem.data import load_tasks
from replaymem.errors import ConfigurationError
from replaymem.metrics import write_csv, write_records_csv, write_records_jsonl
from replaymem.models import RunOutcome
from replaymem.policies import POLICY_NAMES
from replaymem.trainer import make_run_id, run_experiment
from replaymem.utils.logger import get_logger

RECORDS_CSV = "records.csv"
RECORDS_JSONL = "records.jsonl"
FAILURES_CSV = "failures.csv"


@dataclass(frozen=True)
class SweepPlan:
    """The grid of a sweep: capacities x policies x orders x seeds."""

    capacities: tuple[float, ...]
    policies: tuple[str, ...]
    seeds: tuple[int, ...]
    orders: tuple[str | None, ...] = (None,)

    def configs(self, base: ExperimentConfig) -> list[ExperimentConfig]:
        """One config per grid point, sorted by run id."""
        configs = [
            replace(
                base,
                capacity_fraction=capacity,
                policy=replace(base.policy, name=policy),
                seed=seed,
                order=order if order is not None else base.order,
                task_order=None if order is not None else base.task_order,
            )
            for capacity, policy, order, seed in itertools.product(
                self.capacities, self.policies, self.orders, self.seeds
            )
        ]
        for config in configs:
            config.validate()
        return sorted(configs, key=run_id_of)

    def __len__(self) -> int:
        return len(self.capacities) * len(self.policies) * len(self.seeds) * len(self.orders)


def run_id_of(config: ExperimentConfig) -> str:
    return make_run_id(config.order_label, config.policy.name, config.capacity_fraction, config.seed)


def parse_capacities(text: str) -> tuple[float, ...]:
    """``"0.1,0.3"`` -> ``(0.1, 0.3)``."""
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as e:
        raise ConfigurationError(f"capacities must be comma-separated numbers, got {text!r}") from e
    if not values or any(not 0.0 < v <= 1.0 for v in values):
        raise ConfigurationError(f"capacities must lie in (0, 1], got {text!r}")
    return values


def parse_policies(text: str) -> tuple[str, ...]:
    """``"all"`` or a comma-separated list of registry names."""
    if text.strip() == "all":
        return POLICY_NAMES
    names = tuple(part.strip() for part in text.split(",") if part.strip())
    unknown = [n for n in names if n not in POLICY_NAMES]
    if not names or unknown:
        expected = ", ".join(POLICY_NAMES)
        raise ConfigurationError(f"unknown policies {unknown or text!r}; expected 'all' or any of {expected}")
    return names


def parse_seeds(text: str) -> tuple[int, ...]:
    """A count (``"5"`` -> seeds 0..4) or an explicit list (``"3,7"``)."""
    try:
        if "," in text:
            seeds = tuple(int(part) for part in text.split(",") if part.strip())
        else:
            seeds = tuple(range(int(text)))
    except ValueError as e:
        raise ConfigurationError(f"seeds must be a count or comma-separated integers, got {text!r}") from e
    if not seeds or any(s < 0 for s in seeds):
        raise ConfigurationError(f"seeds must be non-negative and non-empty, got {text!r}")
    return seeds


def parse_orders(text: str | None) -> tuple[str | None, ...]:
    if not text:
        return (None,)
    return tuple(part.strip() for part in text.split(",") if part.strip())


def execute_run(config: ExperimentConfig) -> RunOutcome:
    """Load corpora and run one experiment, capturing any failure."""
    run_id = run_id_of(config)
    logger = get_logger()
    try:
        tasks = load_tasks(config.manifests, test_fraction=config.test_fraction, split_seed=config.seed)
        record = run_experiment(config, tasks)
    except Exception as e:
        with logger.run_context(run_id):
            logger.error("failed: %s", e)
            logger.debug("Traceback: %s", traceback.format_exc())
        return RunOutcome(run_id=run_id, success=False, error=f"{type(e).__name__}: {e}")
    return RunOutcome(run_id=run_id, success=True, record=record)


def run_sweep(base: ExperimentConfig, plan: SweepPlan, n_jobs: int | None = None) -> list[RunOutcome]:
    """Execute every grid point; outcomes come back sorted by run id.

    Args:
        base: Config shared by all runs
        plan: Sweep grid
        n_jobs: Worker count; capped by REPLAYMEM_THREADS
    """
    logger = get_logger()
    configs = plan.configs(base)
    cap = sweep_threads()
    workers = max(1, min(n_jobs or cap, cap, len(configs)))
    with logger.section(f"Sweep {base.name}: {len(configs)} runs on {workers} workers"):
        if workers <= 1:
            outcomes = [execute_run(config) for config in configs]
        else:
            outcomes = Parallel(n_jobs=workers)(delayed(execute_run)(config) for config in configs)
        failed = [o for o in outcomes if not o.success]
        if failed:
            logger.warning(f"{len(failed)} of {len(outcomes)} runs failed")
        else:
            logger.success(f"all {len(outcomes)} runs finished")
    return sorted(outcomes, key=lambda o: o.run_id)


def write_outcomes(outcomes: Sequence[RunOutcome], out_dir: str | Path) -> list[Path]:
    """Merge successful records into one CSV and JSONL; list failures separately."""
    out = Path(out_dir)
    records = [o.record for o in sorted(outcomes, key=lambda o: o.run_id) if o.success and o.record is not None]
    written = [write_records_csv(records, out / RECORDS_CSV), write_records_jsonl(records, out / RECORDS_JSONL)]
    failures = [{"run_id": o.run_id, "error": o.error} for o in outcomes if not o.success]
    failures_path = out / FAILURES_CSV
    if failures:
        written.append(write_csv(pd.DataFrame(failures, columns=["run_id", "error"]), failures_path))
    elif failures_path.exists():
        failures_path.unlink()
    return written
