"""
Utility functions for seeding, timestamps and numeric formatting.
"""

from datetime import datetime, timezone

import numpy as np
import torch

from app.exceptions import NonFiniteError

# One random stream per concern, all derived from the experiment seed.
RNG_STREAMS = (
    "init",
    "collocation",
    "neighbors",
    "noise",
    "boundary",
    "observation",
    "test",
    "initial",
)


def utc_now_iso():
    """
    Get current UTC time in ISO format with Z suffix.

    Returns:
        str: Current UTC time, e.g. "2024-01-01T12:00:00.123456Z"
    """
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


def stream_seed(seed: int, stream: str) -> int:
    """
    Derive the seed of one random stream from the experiment seed.

    Args:
        seed: Experiment seed
        stream: One of RNG_STREAMS

    Returns:
        int: 32-bit seed that is stable across runs and platforms
    """
    if stream not in RNG_STREAMS:
        raise ValueError(f"Unknown random stream: {stream}")
    sequence = np.random.SeedSequence(seed, spawn_key=(RNG_STREAMS.index(stream),))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def make_generator(seed: int, stream: str = None) -> torch.Generator:
    """Create a CPU torch generator, optionally for a named stream."""
    value = seed if stream is None else stream_seed(seed, stream)
    return torch.Generator().manual_seed(value)


def generator_state_to_ints(generator: torch.Generator) -> list:
    """Serialize a generator state as a list of decimal byte values."""
    return [int(b) for b in generator.get_state().tolist()]


def generator_from_ints(values: list) -> torch.Generator:
    """Restore a generator from generator_state_to_ints output."""
    generator = torch.Generator()
    generator.set_state(torch.tensor(values, dtype=torch.uint8))
    return generator


def format_float(value: float) -> str:
    """Shortest decimal text that round-trips a 64-bit float."""
    return repr(float(value))


def ensure_finite(tensor: torch.Tensor, what: str):
    """Raise NonFiniteError if the tensor holds NaN or infinity."""
    if not torch.isfinite(tensor).all():
        raise NonFiniteError(f"{what} contains non-finite values")
