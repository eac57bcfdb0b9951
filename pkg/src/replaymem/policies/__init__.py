"""Memory population policies and their registry."""

from replaymem.base_policy import BasePolicy, KeyMode
from replaymem.errors import ConfigurationError
from replaymem.policies.max_loss import MaxLossPolicy
from replaymem.policies.mean_of_features import MeanOfFeaturesPolicy
from replaymem.policies.min_margin import MinMarginPolicy
from replaymem.policies.naive_random import NaiveRandomPolicy
from replaymem.policies.reservoir import ReservoirPolicy
from replaymem.policies.ring_buffer import RingBufferPolicy
from replaymem.policies.surprise import SurprisePolicy

POLICIES: dict[str, type[BasePolicy]] = {
    cls.name: cls
    for cls in (
        NaiveRandomPolicy,
        ReservoirPolicy,
        RingBufferPolicy,
        SurprisePolicy,
        MinMarginPolicy,
        MaxLossPolicy,
        MeanOfFeaturesPolicy,
    )
}

POLICY_NAMES: tuple[str, ...] = tuple(POLICIES)


def build_policy(
    name: str,
    *,
    capacity_fraction: float,
    batch_size: int,
    key_mode: KeyMode = "class",
    store_probability: float | None = None,
) -> BasePolicy:
    """Instantiate a policy by registry name.

    Args:
        name: One of ``POLICY_NAMES``
        capacity_fraction: Memory size as a fraction of the stream (Naive Random's default p)
        batch_size: Training batch size (Maximum Loss slot size)
        key_mode: Grouping key for Ring Buffer and Mean of Features
        store_probability: Override for Naive Random's admission probability

    Raises:
        ConfigurationError: If the name is unknown
    """
    match name:
        case "naive_random":
            p = capacity_fraction if store_probability is None else store_probability
            return NaiveRandomPolicy(store_probability=p)
        case "reservoir":
            return ReservoirPolicy()
        case "ring_buffer":
            return RingBufferPolicy(key_mode=key_mode)
        case "surprise":
            return SurprisePolicy()
        case "min_margin":
            return MinMarginPolicy()
        case "max_loss":
            return MaxLossPolicy(batch_size=batch_size)
        case "mof":
            return MeanOfFeaturesPolicy(key_mode=key_mode)
    raise ConfigurationError(f"unknown policy {name!r}; expected one of {', '.join(POLICY_NAMES)}")


__all__ = [
    "POLICIES",
    "POLICY_NAMES",
    "BasePolicy",
    "MaxLossPolicy",
    "MeanOfFeaturesPolicy",
    "MinMarginPolicy",
    "NaiveRandomPolicy",
    "ReservoirPolicy",
    "RingBufferPolicy",
    "SurprisePolicy",
    "build_policy",
]
