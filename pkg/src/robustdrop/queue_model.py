"""Stochastic analysis of a single machine queue.

Completion times are chained down the queue with deadline-truncated
convolution. A pending task that cannot start before its deadline is
dropped, so on that branch it adds no execution time.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .pet import PetMatrix
from .pmf import DEFAULT_MAX_IMPULSES, Pmf

__all__ = [
    "DEFAULT_QUEUE_CAPACITY",
    "QueueEntry",
    "QueueSnapshot",
    "chain_with_drop",
    "completion_chain",
    "instantaneous_robustness",
    "residual_base",
    "robustness_after_drop",
]

DEFAULT_QUEUE_CAPACITY = 6

Chain = list[tuple[Pmf, float]]


@dataclass(frozen=True)
class QueueEntry:
    task_id: int
    task_type: int
    deadline: int


@dataclass(frozen=True, eq=False)
class QueueSnapshot:
    """Pending tasks of one machine, behind the machine's availability time.

    ``base`` is the PMF of when the machine can start the first pending
    entry. ``busy`` marks that a task is executing and occupies one of the
    ``capacity`` slots without being an entry.
    """

    machine_type: int
    base: Pmf
    entries: tuple[QueueEntry, ...]
    pet: PetMatrix
    capacity: int = DEFAULT_QUEUE_CAPACITY
    busy: bool = False
    max_impulses: int = DEFAULT_MAX_IMPULSES

    def __post_init__(self):
        entries = tuple(e if isinstance(e, QueueEntry) else QueueEntry(*e) for e in self.entries)
        object.__setattr__(self, "entries", entries)
        if len(entries) + int(self.busy) > self.capacity:
            raise ValueError(
                f"{len(entries)} entries exceed queue capacity {self.capacity}"
            )
        object.__setattr__(self, "_chain", None)

    @property
    def free_slots(self) -> int:
        return self.capacity - len(self.entries) - int(self.busy)

    def exec_pmf(self, entry: QueueEntry) -> Pmf:
        return self.pet.cells[entry.task_type][self.machine_type]

    def step(self, prev: Pmf, entry: QueueEntry) -> tuple[Pmf, float]:
        """Append one entry behind ``prev``: its completion PMF and chance."""
        e = self.exec_pmf(entry)
        t, m, p = _kernels.extend(
            prev.ticks, prev.masses, e.ticks, e.masses, entry.deadline, self.max_impulses
        )
        return Pmf(t, m, check=False), p

    def tail(self) -> Pmf:
        """Completion PMF of the last entry (the base if the queue is empty)."""
        chain = completion_chain(self)
        return chain[-1][0] if chain else self.base

    def with_entries(self, entries, chain: Chain | None = None) -> QueueSnapshot:
        snap = QueueSnapshot(
            self.machine_type, self.base, tuple(entries), self.pet,
            capacity=self.capacity, busy=self.busy, max_impulses=self.max_impulses,
        )
        if chain is not None:
            object.__setattr__(snap, "_chain", tuple(chain))
        return snap

    def appended(self, entry: QueueEntry, completion: Pmf, chance: float) -> QueueSnapshot:
        """Snapshot with ``entry`` added at the tail, reusing the cached chain."""
        chain = list(completion_chain(self)) + [(completion, chance)]
        return self.with_entries(self.entries + (entry,), chain)


def residual_base(exec_pmf: Pmf, start: int, now: int) -> Pmf:
    """Availability of a machine whose current task started at ``start``.

    The execution PMF is conditioned on having run longer than
    ``now - start`` and placed in absolute time.
    """
    absolute = exec_pmf.ticks + start
    cut = int(np.searchsorted(absolute, now, side="right"))
    if cut >= absolute.size:
        return Pmf.delta(now + 1)
    if cut == 0:
        return Pmf(absolute, exec_pmf.masses, check=False)
    masses = exec_pmf.masses[cut:]
    return Pmf(absolute[cut:], masses / masses.sum(), check=False)


def completion_chain(snap: QueueSnapshot) -> Chain:
    """Completion PMF and chance of success of every entry, head first."""
    cached = snap._chain
    if cached is None:
        cached = tuple(_chain(snap, snap.entries))
        object.__setattr__(snap, "_chain", cached)
    return list(cached)


def _chain(snap: QueueSnapshot, entries: Iterable[QueueEntry], prev: Pmf | None = None) -> Chain:
    prev = snap.base if prev is None else prev
    out = []
    for entry in entries:
        prev, p = snap.step(prev, entry)
        out.append((prev, p))
    return out


def instantaneous_robustness(snap: QueueSnapshot) -> float:
    return float(sum(p for _, p in completion_chain(snap)))


def chain_with_drop(snap: QueueSnapshot, dropped) -> Chain:
    """Chain over the surviving entries when ``dropped`` positions are removed.

    Entries ahead of the first dropped position keep their completion
    PMFs; the rest are re-chained from the last survivor before them.
    """
    dropped = set(dropped)
    n = len(snap.entries)
    bad = [i for i in dropped if not (0 <= i < n)]
    if bad:
        raise IndexError(f"drop positions {sorted(bad)} out of range [0, {n})")
    if not dropped:
        return completion_chain(snap)
    first = min(dropped)
    head = completion_chain(snap)[:first]
    prev = head[-1][0] if head else snap.base
    rest = [e for i, e in enumerate(snap.entries) if i > first and i not in dropped]
    return head + _chain(snap, rest, prev)


def robustness_after_drop(snap: QueueSnapshot, i: int) -> float:
    """Sum of chances over the queue with entry ``i`` provisionally dropped."""
    return float(sum(p for _, p in chain_with_drop(snap, {i})))
