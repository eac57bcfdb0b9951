"""Seeded random streams.

Every run derives independent generators from one integer seed so that the
policy and replay sampling never share a stream. Adding a stream at the end of
``STREAMS`` leaves the existing ones unchanged.

Per-task draws (the train/test split and the within-task training order) come
from ``task_generator`` instead, keyed by ``(seed, task_id)``, so they do not
depend on the policy or on how many draws the run streams made.
"""

import numpy as np

STREAMS = ("policy", "replay")

# Salts for per-task generators; the split keeps the bare (seed, task_id) key.
SPLIT = ()
SHUFFLE = (1,)


def spawn_streams(seed: int) -> dict[str, np.random.Generator]:
    """Spawn one independent generator per named stream.

    Args:
        seed: Run seed

    Returns:
        Mapping from stream name (see ``STREAMS``) to generator
    """
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(STREAMS, children, strict=True)}


def task_generator(seed: int, task_id: int, salt: tuple[int, ...] = SPLIT) -> np.random.Generator:
    return np.random.default_rng([seed, task_id, *salt])
