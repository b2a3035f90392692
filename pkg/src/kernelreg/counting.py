"""Black-box operator application counters.

Every forward model and denoiser owns an OpCounter. Solvers snapshot the
counts per iteration so that Krylov and PnP methods can be compared on the
number of heavy operator applications (F, F^T, W, W^T) consumed, counted
identically. Telemetry evaluations (objective, PSNR) run inside
``paused()`` so they never pollute the comparison.
"""

from __future__ import annotations

from contextlib import contextmanager


class OpCounter:
    __slots__ = ("applies", "adjoints", "_paused")

    def __init__(self):
        self.applies = 0
        self.adjoints = 0
        self._paused = 0

    def tick_apply(self):
        if not self._paused:
            self.applies += 1

    def tick_adjoint(self):
        if not self._paused:
            self.adjoints += 1

    @property
    def total(self) -> int:
        return self.applies + self.adjoints

    def reset(self):
        self.applies = 0
        self.adjoints = 0

    @contextmanager
    def paused(self):
        self._paused += 1
        try:
            yield
        finally:
            self._paused -= 1


@contextmanager
def paused_all(*counters: OpCounter):
    """Pause several counters at once (telemetry that touches F and W)."""
    if not counters:
        yield
        return
    for c in counters:
        c._paused += 1
    try:
        yield
    finally:
        for c in counters:
            c._paused -= 1


def total_ops(*counters: OpCounter) -> int:
    return sum(c.total for c in counters)
