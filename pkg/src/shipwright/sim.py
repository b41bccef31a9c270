"""Deterministic discrete-event engine over exact virtual time.

Events fire in timestamp order; simultaneous events fire lower node id first,
then in scheduling order. Resources (a node's CPU, the link) serve requests
FIFO, one at a time, so concurrent transfers serialise.
"""

from __future__ import annotations

import heapq
import itertools
from fractions import Fraction
from typing import Callable


class Simulator:
    def __init__(self):
        self.now = Fraction(0)
        self._queue = []
        self._seq = itertools.count()

    def schedule(self, at: Fraction, node_id: int, fn: Callable, *args):
        if at < self.now:
            raise ValueError(f"cannot schedule at {at} before now={self.now}")
        heapq.heappush(self._queue, (at, node_id, next(self._seq), fn, args))

    def run(self) -> Fraction:
        while self._queue:
            at, _node, _seq, fn, args = heapq.heappop(self._queue)
            self.now = at
            fn(*args)
        return self.now


class Resource:
    """A server that handles one job at a time, in arrival order."""

    def __init__(self, sim: Simulator, name: str):
        self.sim = sim
        self.name = name
        self.free_at = Fraction(0)
        self.busy = Fraction(0)

    def occupy(self, duration: Fraction) -> tuple[Fraction, Fraction]:
        start = max(self.sim.now, self.free_at)
        self.free_at = start + duration
        self.busy += duration
        return start, self.free_at
