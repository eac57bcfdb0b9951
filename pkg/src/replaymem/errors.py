"""Exception hierarchy for replaymem.

Configuration problems and corpus problems are distinguished so the CLI can map
them to exit codes 1 and 2 respectively.
"""

from pathlib import Path


class ReplayMemError(Exception):
    """Base class for all replaymem errors."""


class ConfigurationError(ReplayMemError, ValueError):
    """Invalid experiment, policy, learner or synthetic-data configuration."""


class CorpusError(ReplayMemError):
    """A corpus file is missing or malformed."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None) -> None:
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")
        self.path = str(path) if path is not None else None
        self.line = line


class BufferFullError(ReplayMemError):
    """Write rejected because the memory is at capacity; evict first."""


class EmptyMemoryError(ReplayMemError):
    """Nothing to replay or retrieve: the memory holds no entries."""


class MemoryIndexError(ReplayMemError, KeyError):
    """An entry reference does not point into the buffer."""


class FeatureDimensionError(ReplayMemError, ValueError):
    """A feature vector does not match the dimension fixed for the run."""


class UndefinedAccuracyError(ReplayMemError):
    """Accuracy requested over an empty test set."""
