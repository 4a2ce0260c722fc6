"""Counter-based random number streams.

Every Monte Carlo path owns an independent Philox stream keyed by
``(seed, path_index)``, so ensembles are reproducible under any degree of
parallelism and any block size.  Extra stream coordinates go into the high
words of the Philox counter, which keeps sub-streams disjoint.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream", "path_stream", "tree_reduce"]


def stream(seed: int, a: int = 0, b: int = 0, c: int = 0) -> np.random.Generator:
    """Independent generator for stream coordinates (seed, a, b, c)."""
    key = np.array([np.uint64(seed), np.uint64(a)], dtype=np.uint64)
    counter = np.array([0, 0, np.uint64(b), np.uint64(c)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def path_stream(seed: int, path_index: int) -> np.random.Generator:
    """The stream owned by one Monte Carlo path."""
    return stream(seed, path_index)


def tree_reduce(items, combine):
    """Reduce ``items`` with a fixed pairwise tree.

    The reduction order depends only on ``len(items)``, never on worker
    scheduling, so floating-point aggregates are bit-stable.
    """
    items = list(items)
    if not items:
        raise ValueError("tree_reduce needs at least one item")
    while len(items) > 1:
        nxt = []
        for i in range(0, len(items) - 1, 2):
            nxt.append(combine(items[i], items[i + 1]))
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]
