"""Instrumented multiply-accumulate counters, used to cross-check the analytic
cost model against what a forward pass actually executes."""
from __future__ import annotations

from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator


@dataclass
class MacCounter:
    macs: dict[str, int] = field(default_factory=lambda: defaultdict(int))
    elementwise: dict[str, int] = field(default_factory=lambda: defaultdict(int))

    def total(self, exclude: tuple[str, ...] = ()) -> int:
        return sum(v for k, v in self.macs.items() if k not in exclude)


_active: list[MacCounter] = []


@contextmanager
def count_macs() -> Iterator[MacCounter]:
    counter = MacCounter()
    _active.append(counter)
    try:
        yield counter
    finally:
        _active.remove(counter)


def tally(tag: str, macs: int) -> None:
    for c in _active:
        c.macs[tag] += macs


def tally_elementwise(tag: str, n: int) -> None:
    for c in _active:
        c.elementwise[tag] += n
