"""Set partitions of small index sets."""

from __future__ import annotations

from math import factorial
from typing import Iterator


def set_partitions(items) -> Iterator[list]:
    """Yield every partition of ``items`` as a list of lists (blocks)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def mobius_weight(partition) -> int:
    """Moebius function of the partition lattice from the bottom element."""
    w = 1
    for block in partition:
        k = len(block)
        w *= (-1) ** (k - 1) * factorial(k - 1)
    return w
