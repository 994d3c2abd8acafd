"""Task dropping mechanisms for machine queues.

* reactive: discard pending tasks whose deadline has passed
* threshold: discard tasks whose chance of success is below a fixed value
* heuristic: one head-to-tail pass that drops a task when the chances it
  frees up in the next ``eta`` tasks beat ``beta`` times what is lost
* optimal: exhaustive search over drop subsets
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .queue_model import Chain, QueueSnapshot, completion_chain

__all__ = [
    "DropDecision",
    "DropPolicyConfig",
    "OptimalResult",
    "POLICY_KINDS",
    "apply_policy",
    "heuristic_drop",
    "optimal_drop",
    "optimal_search",
    "reactive_sweep",
    "threshold_drop",
]

POLICY_KINDS = ("reactive_only", "threshold", "heuristic", "optimal")
MISSED_DEADLINE = "missed_deadline"
BELOW_THRESHOLD = "below_threshold"
PROACTIVE = "proactive"

OPTIMAL_MAX_POSITIONS = 16
# Robustness values closer than this are treated as equal.
_EPS = 1e-12


@dataclass(frozen=True)
class DropPolicyConfig:
    kind: str = "heuristic"
    beta: float = 1.0
    eta: int = 2
    threshold: float = 0.5

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown dropping policy {self.kind!r}; choose one of {POLICY_KINDS}")
        if not self.beta >= 1:
            raise ValueError(f"beta must be >= 1, got {self.beta!r}")
        if not (isinstance(self.eta, int) and self.eta >= 1):
            raise ValueError(f"eta must be a positive integer, got {self.eta!r}")
        if not (0.0 <= self.threshold <= 1.0):
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold!r}")


@dataclass(frozen=True)
class DropDecision:
    task_id: int
    reason: str
    position: int


@dataclass(frozen=True)
class OptimalResult:
    dropped: frozenset[int]
    robustness: float
    subsets_examined: int


def reactive_sweep(snap: QueueSnapshot, now: int) -> list[DropDecision]:
    """Pending entries that can no longer start before their deadline."""
    return [
        DropDecision(e.task_id, MISSED_DEADLINE, i)
        for i, e in enumerate(snap.entries)
        if e.deadline <= now
    ]


class _LiveQueue:
    """Queue being edited in place, with a lazily extended chain."""

    def __init__(self, snap: QueueSnapshot):
        self.snap = snap
        self.entries = list(snap.entries)
        self.chain: Chain = []
        if snap._chain is not None:
            self.chain = list(snap._chain)

    def prev(self, i: int):
        return self.chain[i - 1][0] if i > 0 else self.snap.base

    def ensure(self, upto: int) -> None:
        while len(self.chain) <= upto:
            k = len(self.chain)
            self.chain.append(self.snap.step(self.prev(k), self.entries[k]))

    def drop(self, i: int, replacement: Chain = ()) -> None:
        del self.entries[i]
        self.chain = self.chain[:i] + list(replacement)

    def result(self) -> QueueSnapshot:
        self.ensure(len(self.entries) - 1)
        return self.snap.with_entries(self.entries, self.chain)


def _heuristic_pass(snap: QueueSnapshot, beta: float, eta: int):
    live = _LiveQueue(snap)
    decisions: list[DropDecision] = []
    if math.isinf(beta):
        return decisions, live.result()
    i = 0
    while i < len(live.entries) - 1:
        last = min(i + eta, len(live.entries) - 1)
        live.ensure(last)
        kept = sum(p for _, p in live.chain[i:last + 1])
        provisional: Chain = []
        prev = live.prev(i)
        for n in range(i + 1, last + 1):
            prev, p = snap.step(prev, live.entries[n])
            provisional.append((prev, p))
        freed = sum(p for _, p in provisional)
        if freed > beta * kept + _EPS:
            decisions.append(DropDecision(live.entries[i].task_id, PROACTIVE, i))
            live.drop(i, provisional)
        else:
            i += 1
    return decisions, live.result()


def heuristic_drop(snap: QueueSnapshot, cfg: DropPolicyConfig) -> list[DropDecision]:
    """Proactive drops chosen in a single head-to-tail pass.

    Entry ``i`` is dropped when the summed chances of the next ``eta``
    entries with ``i`` removed exceed ``beta`` times the summed chances of
    ``i`` and those entries as queued. A drop takes effect immediately for
    the rest of the pass; the last entry is never dropped.
    """
    return _heuristic_pass(snap, cfg.beta, cfg.eta)[0]


def _threshold_pass(snap: QueueSnapshot, threshold: float):
    live = _LiveQueue(snap)
    decisions: list[DropDecision] = []
    i = 0
    while i < len(live.entries):
        live.ensure(i)
        if live.chain[i][1] < threshold:
            decisions.append(DropDecision(live.entries[i].task_id, BELOW_THRESHOLD, i))
            live.drop(i)
        else:
            i += 1
    return decisions, live.result()


def threshold_drop(snap: QueueSnapshot, cfg: DropPolicyConfig) -> list[DropDecision]:
    return _threshold_pass(snap, cfg.threshold)[0]


def optimal_search(snap: QueueSnapshot, max_positions: int = OPTIMAL_MAX_POSITIONS) -> OptimalResult:
    """Best subset of entries to drop, by exhaustive enumeration.

    The last entry is always kept, so ``2**(q-1)`` subsets are scored.
    Prefix chains are shared between subsets. Ties go to the smaller
    subset, then to the lexicographically smaller position list.
    """
    q = len(snap.entries)
    if q > max_positions:
        raise ValueError(f"optimal search too large: {q} entries (cap {max_positions})")
    if q == 0:
        return OptimalResult(frozenset(), 0.0, 1)

    best_key = None
    best = (frozenset(), 0.0)
    examined = 0

    def visit(pos, prev, score, dropped):
        nonlocal best_key, best, examined
        if pos == q - 1:
            _, p = snap.step(prev, snap.entries[pos])
            score += p
            examined += 1
            key = (len(dropped), tuple(dropped))
            if (
                best_key is None
                or score > best[1] + _EPS
                or (abs(score - best[1]) <= _EPS and key < best_key)
            ):
                best_key = key
                best = (frozenset(dropped), score)
            return
        nxt, p = snap.step(prev, snap.entries[pos])
        visit(pos + 1, nxt, score + p, dropped)
        visit(pos + 1, prev, score, dropped + [pos])

    visit(0, snap.base, 0.0, [])
    return OptimalResult(best[0], float(best[1]), examined)


def optimal_drop(snap: QueueSnapshot) -> tuple[frozenset[int], float]:
    res = optimal_search(snap)
    return res.dropped, res.robustness


def apply_policy(
    snap: QueueSnapshot, cfg: DropPolicyConfig
) -> tuple[list[DropDecision], QueueSnapshot]:
    """Run one policy pass; returns decisions and the surviving queue
    (with its completion chain already computed)."""
    if cfg.kind == "heuristic":
        return _heuristic_pass(snap, cfg.beta, cfg.eta)
    if cfg.kind == "threshold":
        return _threshold_pass(snap, cfg.threshold)
    if cfg.kind == "optimal":
        dropped, _ = optimal_drop(snap)
        decisions = [
            DropDecision(e.task_id, PROACTIVE, i)
            for i, e in enumerate(snap.entries)
            if i in dropped
        ]
        survivors = [e for i, e in enumerate(snap.entries) if i not in dropped]
        return decisions, snap.with_entries(survivors)
    completion_chain(snap)
    return [], snap
