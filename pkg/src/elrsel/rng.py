"""Counter-based random substreams.

Every random draw comes from ``Philox4x64-10`` keyed by the run seed plus a
tuple of integers (stream id, replication index, ...), so a given draw does
not depend on scheduling or on which other streams were consumed.
"""

from __future__ import annotations

import os

import numpy as np

GENERATOR = "Philox4x64-10 (numpy.random.Philox, SeedSequence-keyed)"

PARTITION = 1
PIVOT = 2
REPLICATION = 3


def substream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])
    return np.random.Generator(np.random.Philox(ss))


def thread_count(requested: int | None = None) -> int:
    """Resolve a parallelism cap; ``ELR_THREADS`` applies when nothing is requested. 0 means auto."""
    if requested is None:
        requested = int(os.environ.get("ELR_THREADS", "0") or 0)
    if requested <= 0:
        return os.cpu_count() or 1
    return requested
