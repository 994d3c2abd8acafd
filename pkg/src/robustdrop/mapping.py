"""Batch-mode mapping heuristics.

Two-phase heuristics (MM, MSD, PAM) pair every unmapped task with its
best machine, then let each machine with a free slot pick one of the
tasks paired with it; rounds repeat until slots or tasks run out. The
ordered heuristics (FCFS, SJF, EDF) walk a sorted batch and place each
task on the machine that frees up earliest.

Expected completion is the mean of the deadline-truncated completion PMF,
``E[prev] + E[exec] * P(prev < deadline)``; chance of success is
``P(prev + exec < deadline)``. Both follow from the truncated convolution
without materializing it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .pmf import Pmf
from .queue_model import QueueEntry, QueueSnapshot

__all__ = [
    "MAPPING_VARIANTS",
    "MappingAssignment",
    "TWO_PHASE",
    "ORDERED",
    "map_batch",
    "map_ordered",
    "map_two_phase",
]

TWO_PHASE = ("MM", "MSD", "PAM")
ORDERED = ("FCFS", "SJF", "EDF")
MAPPING_VARIANTS = TWO_PHASE + ORDERED


@dataclass(frozen=True)
class MappingAssignment:
    task_id: int
    machine: int
    completion: Pmf
    chance: float


class _Plan:
    """Tentative state of one machine during a mapping event."""

    def __init__(self, index: int, snap: QueueSnapshot):
        self.index = index
        self.snap = snap
        self._refresh()

    def _refresh(self):
        tail = self.snap.tail()
        self.tail = tail
        self.tail_mean = tail.mean
        self.free = self.snap.free_slots
        self._conv_cache = {}

    def cdf_before(self, deadlines: np.ndarray) -> np.ndarray:
        """P(tail < deadline) for each deadline."""
        idx = np.searchsorted(self.tail.ticks, deadlines, side="left")
        cum = np.concatenate(([0.0], self.tail.cumulative))
        return cum[idx]

    def expected_completion(self, types, deadlines, mean_exec) -> np.ndarray:
        mt = self.snap.machine_type
        return self.tail_mean + mean_exec[types, mt] * self.cdf_before(deadlines)

    def chances(self, types, deadlines) -> np.ndarray:
        out = np.empty(len(types))
        pet = self.snap.pet
        mt = self.snap.machine_type
        for tt in np.unique(types):
            sel = types == tt
            e = pet.cells[tt][mt]
            out[sel] = _kernels.success_probs(
                self.tail.ticks, self.tail.masses, e.ticks, e.cumulative, deadlines[sel]
            )
        return out

    def commit(self, task) -> MappingAssignment:
        entry = QueueEntry(task.id, task.task_type, task.deadline)
        completion, chance = self.snap.step(self.tail, entry)
        self.snap = self.snap.appended(entry, completion, chance)
        self._refresh()
        return MappingAssignment(task.id, self.index, completion, chance)


def _arrays(tasks):
    ids = np.array([t.id for t in tasks], dtype=np.int64)
    types = np.array([t.task_type for t in tasks], dtype=np.int64)
    deadlines = np.array([t.deadline for t in tasks], dtype=np.int64)
    return ids, types, deadlines


def map_two_phase(batch, machines, variant: str = "PAM") -> list[MappingAssignment]:
    """Assign batch tasks to free machine-queue slots.

    ``batch`` holds objects with ``id``, ``task_type``, ``arrival`` and
    ``deadline``; ``machines`` holds one :class:`QueueSnapshot` per
    machine, in machine-index order.
    """
    if variant not in TWO_PHASE:
        raise ValueError(f"unknown two-phase heuristic {variant!r}")
    plans = [_Plan(i, s) for i, s in enumerate(machines)]
    remaining = list(batch)
    out: list[MappingAssignment] = []
    while remaining:
        free = [p for p in plans if p.free > 0]
        if not free:
            break
        pet = free[0].snap.pet
        mean_exec = pet.mean_exec
        ids, types, deadlines = _arrays(remaining)
        ec = np.vstack([p.expected_completion(types, deadlines, mean_exec) for p in free])

        # phase 1: best machine per task
        if variant == "PAM":
            ch = np.vstack([p.chances(types, deadlines) for p in free])
            top = ch.max(axis=0)
            best = np.argmin(np.where(ch == top, ec, np.inf), axis=0)
        else:
            best = np.argmin(ec, axis=0)
        cols = np.arange(len(remaining))
        task_ec = ec[best, cols]

        # phase 2: one task per machine
        chosen = []
        for row, plan in enumerate(free):
            mine = np.flatnonzero(best == row)
            if mine.size == 0:
                continue
            if variant == "MM":
                keys = (ids[mine], deadlines[mine], task_ec[mine])
            elif variant == "MSD":
                keys = (ids[mine], task_ec[mine], deadlines[mine])
            else:
                exec_mean = mean_exec[types[mine], plan.snap.machine_type]
                keys = (ids[mine], exec_mean, task_ec[mine])
            pick = mine[np.lexsort(keys)[0]]
            chosen.append((plan, int(pick)))

        for plan, pick in chosen:
            out.append(plan.commit(remaining[pick]))
        taken = {pick for _, pick in chosen}
        remaining = [t for k, t in enumerate(remaining) if k not in taken]
    return out


def map_ordered(batch, machines, variant: str = "FCFS") -> list[MappingAssignment]:
    """Place tasks in arrival / shortest-mean / deadline order, each on the
    machine with the earliest expected availability."""
    if variant not in ORDERED:
        raise ValueError(f"unknown ordered heuristic {variant!r}")
    plans = [_Plan(i, s) for i, s in enumerate(machines)]
    if not batch or not plans:
        return []
    if variant == "FCFS":
        key = lambda t: (t.arrival, t.id)  # noqa: E731
    elif variant == "SJF":
        avg = plans[0].snap.pet.avg_per_type
        key = lambda t: (avg[t.task_type], t.id)  # noqa: E731
    else:
        key = lambda t: (t.deadline, t.id)  # noqa: E731
    out: list[MappingAssignment] = []
    for task in sorted(batch, key=key):
        free = [p for p in plans if p.free > 0]
        if not free:
            break
        plan = min(free, key=lambda p: (p.tail_mean, p.index))
        out.append(plan.commit(task))
    return out


def map_batch(batch, machines, variant: str) -> list[MappingAssignment]:
    if variant in TWO_PHASE:
        return map_two_phase(batch, machines, variant)
    if variant in ORDERED:
        return map_ordered(batch, machines, variant)
    raise ValueError(f"unknown mapping heuristic {variant!r}; choose one of {MAPPING_VARIANTS}")
