"""Named, splittable random streams.

All randomness in the package flows from a single master seed through named
substreams, e.g. ``stream(seed, "design", rep)``.  Streams are backed by the
counter-based Philox generator keyed with a hash of the path, so

* the same ``(master_seed, *path)`` always yields the same stream,
* distinct paths yield statistically independent streams, and
* replications can be dispatched to worker threads in any order without
  changing any result (each replication owns its stream).
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key(parts: tuple) -> int:
    """Collapse a path of ints/strings into a 128-bit Philox key."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, str):
            h.update(b"s")
            h.update(part.encode("utf-8"))
        elif isinstance(part, (int, np.integer)):
            h.update(b"i")
            h.update(int(part).to_bytes(16, "little", signed=True))
        else:
            raise TypeError(f"stream path parts must be int or str, got {type(part)!r}")
    return int.from_bytes(h.digest()[:16], "little")


def stream(master_seed: int, *path: int | str) -> np.random.Generator:
    """Return the independent generator for ``(master_seed, *path)``."""
    return np.random.Generator(np.random.Philox(key=_key((master_seed,) + path)))


def as_generator(rng) -> np.random.Generator:
    """Accept either a seed or a Generator; return a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return stream(int(rng))
