"""Deterministic random streams.

All randomness in the package flows through named Philox (counter-based)
streams keyed by an explicit integer seed plus a sequence of stream labels.
The same (seed, labels) pair always yields the same stream, on every
platform, which is what makes dataset generators, trainers and the CLI
byte-reproducible.
"""

import hashlib

import numpy as np

__all__ = ["stream"]


def _key_from(seed: int, labels: tuple) -> np.ndarray:
    text = repr((int(seed),) + tuple(labels)).encode("utf-8")
    digest = hashlib.sha256(text).digest()
    return np.frombuffer(digest[:16], dtype=np.uint64)


def stream(seed: int, *labels) -> np.random.Generator:
    """Return a Generator for the (seed, labels) stream.

    Labels are arbitrary hashable tags (strings, ints) naming the consumer,
    e.g. ``stream(seed, "shuffle", epoch)``. Distinct labels give
    statistically independent streams for the same seed.
    """
    return np.random.Generator(np.random.Philox(key=_key_from(seed, labels)))
