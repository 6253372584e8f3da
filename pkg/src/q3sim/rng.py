"""Deterministic random-number streams.

Every stochastic routine in the package draws from a Philox 4x64
counter-based generator keyed through ``numpy.random.SeedSequence``.
Substreams are derived from ``(seed, *path)`` where ``path`` is a tuple of
small integers naming the consumer (source, circuit, detector channel,
configuration index, ...).  The derivation is platform independent, so a
scenario re-run with the same seed reproduces every draw bit for bit.
"""

from __future__ import annotations

import numpy as np

# Stream-id registry.  Runner code derives substreams as
# substream(seed, STREAM_X, ...) so no two consumers share a stream.
STREAM_FABRICATION = 0
STREAM_SOURCE = 1
STREAM_CIRCUIT = 2
STREAM_FILTER = 3
STREAM_DETECTOR = 4
STREAM_CALIBRATION = 5
STREAM_BOOTSTRAP = 6
STREAM_EXPERIMENT = 7


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return the Philox generator for ``(seed, *path)``.

    ``seed`` is the scenario seed (any non-negative integer up to 2**64-1);
    ``path`` selects an independent substream.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(seed_or_rng: int | np.random.Generator, *path: int) -> np.random.Generator:
    """Accept either a raw seed or an existing generator.

    Seeds are expanded through :func:`substream`; generators are passed
    through unchanged (the caller already owns a substream).
    """
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return substream(int(seed_or_rng), *path)
