"""Discrete-event simulation of a batch-mode heterogeneous cluster.

Tasks arrive into a batch queue. Every arrival or completion is a mapping
event: expired pending tasks are dropped, the dropping policy runs on
every machine queue, then the mapping heuristic fills free queue slots.
Machines run their queue head non-preemptively; the actual duration is
sampled once when the task starts.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .dropping import BELOW_THRESHOLD, PROACTIVE, DropPolicyConfig, apply_policy
from .mapping import MAPPING_VARIANTS, map_batch
from .pet import PetMatrix
from .pmf import DEFAULT_MAX_IMPULSES, Pmf
from .queue_model import DEFAULT_QUEUE_CAPACITY, QueueEntry, QueueSnapshot, residual_base
from .tasks import DROPPED_STATES, Task, TaskState

__all__ = [
    "MachineSpec",
    "SimulationLog",
    "TrialResult",
    "WorkloadSpec",
    "compute_cost",
    "expand_machines",
    "generate_workload",
    "measure_window",
    "run_trial",
    "simulate",
]

TICKS_PER_HOUR = 3_600_000
_COMPLETION, _ARRIVAL = 0, 1


@dataclass(frozen=True)
class MachineSpec:
    machine_type: int
    count: int = 1
    price_per_hour: float = 0.0
    queue_capacity: int = DEFAULT_QUEUE_CAPACITY

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("machine count must be >= 1")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")
        if self.price_per_hour < 0:
            raise ValueError("price_per_hour must be >= 0")


def expand_machines(specs) -> list[MachineSpec]:
    """One spec per machine instance, in declaration order."""
    out = []
    for s in specs:
        out.extend(MachineSpec(s.machine_type, 1, s.price_per_hour, s.queue_capacity)
                   for _ in range(s.count))
    return out


@dataclass(frozen=True)
class WorkloadSpec:
    n_tasks: int
    arrival_rate: float
    gamma_slack: float
    pet: PetMatrix
    seed: int = 0


def generate_workload(spec: WorkloadSpec) -> list[Task]:
    """Poisson arrivals, uniform task types, deadline
    ``arrival + avg_type + gamma * avg_all``."""
    if spec.n_tasks < 1:
        raise ValueError("n_tasks must be >= 1")
    if not spec.arrival_rate > 0:
        raise ValueError("arrival_rate must be > 0")
    if not spec.gamma_slack >= 0:
        raise ValueError("gamma_slack must be >= 0")
    rng = np.random.default_rng(spec.seed)
    gaps = np.maximum(1, np.ceil(rng.exponential(1.0 / spec.arrival_rate, spec.n_tasks)))
    arrivals = np.cumsum(gaps.astype(np.int64))
    types = rng.integers(0, spec.pet.shape[0], spec.n_tasks)
    slack = spec.pet.avg_per_type + spec.gamma_slack * spec.pet.avg_all
    return [
        Task(i, int(tt), int(arr), int(arr) + deadline_offset(slack[tt]))
        for i, (arr, tt) in enumerate(zip(arrivals, types))
    ]


def deadline_offset(slack: float) -> int:
    return max(1, int(round(slack)))


@dataclass
class TrialResult:
    on_time: int = 0
    missed: int = 0
    dropped_reactive: int = 0
    dropped_proactive: int = 0
    dropped_threshold: int = 0
    measured: int = 0
    robustness: float = 0.0
    reactive_fraction: float = 0.0
    busy_ticks: tuple[int, ...] = ()
    total_cost: float = 0.0
    normalized_cost: float = 0.0
    cost_unbounded: bool = False
    trace: list[str] | None = None

    @property
    def drops(self) -> int:
        return self.dropped_reactive + self.dropped_proactive + self.dropped_threshold

    def metrics(self) -> dict[str, float]:
        return {
            "robustness": self.robustness,
            "reactive_fraction": self.reactive_fraction,
            "total_cost": self.total_cost,
            "normalized_cost": self.normalized_cost,
        }


@dataclass
class SimulationLog:
    tasks: list[Task]
    machines: list[MachineSpec]
    busy_ticks: list[int]
    start_order: list[list[int]]
    enqueue_order: list[list[int]]
    trace: list[str] | None = None


def measure_window(log_or_tasks, warmup: int = 100, cooldown: int = 100) -> TrialResult:
    """Counters over tasks whose arrival rank lies in ``[warmup, n - cooldown)``."""
    if isinstance(log_or_tasks, SimulationLog):
        tasks, busy = log_or_tasks.tasks, tuple(log_or_tasks.busy_ticks)
    else:
        tasks, busy = list(log_or_tasks), ()
    n = len(tasks)
    if warmup < 0 or cooldown < 0 or warmup + cooldown >= n:
        raise ValueError(f"empty measurement window: {n} tasks, warmup {warmup}, cooldown {cooldown}")
    ordered = sorted(tasks, key=lambda t: (t.arrival, t.id))[warmup:n - cooldown]
    counts = dict.fromkeys(
        (TaskState.COMPLETED_ON_TIME, TaskState.MISSED) + DROPPED_STATES, 0
    )
    for t in ordered:
        if t.state not in counts:
            raise ValueError(f"task {t.id} is not in a terminal state ({t.state})")
        counts[t.state] += 1
    res = TrialResult(
        on_time=counts[TaskState.COMPLETED_ON_TIME],
        missed=counts[TaskState.MISSED],
        dropped_reactive=counts[TaskState.DROPPED_REACTIVE],
        dropped_proactive=counts[TaskState.DROPPED_PROACTIVE],
        dropped_threshold=counts[TaskState.DROPPED_THRESHOLD],
        measured=len(ordered),
        busy_ticks=busy,
    )
    res.robustness = 100.0 * res.on_time / res.measured
    res.reactive_fraction = res.dropped_reactive / res.drops if res.drops else 0.0
    return res


def compute_cost(result: TrialResult, machines) -> tuple[float, float]:
    """Total price of busy machine time, and that price per percent of
    tasks completed on time (``inf`` when nothing completed on time)."""
    machines = expand_machines(machines)
    if len(result.busy_ticks) not in (0, len(machines)):
        raise ValueError("busy_ticks does not match the machine list")
    total = sum(b * m.price_per_hour for b, m in zip(result.busy_ticks, machines)) / TICKS_PER_HOUR
    if total == 0:
        return 0.0, 0.0
    if result.robustness <= 0:
        return total, math.inf
    return total, total / result.robustness


class _Machine:
    __slots__ = (
        "index", "spec", "pending", "executing", "busy_ticks",
        "snap", "snap_key", "clean_key", "starts", "enqueued",
    )

    def __init__(self, index: int, spec: MachineSpec):
        self.index = index
        self.spec = spec
        self.pending: list[Task] = []
        self.executing: Task | None = None
        self.busy_ticks = 0
        self.snap = None
        self.snap_key = None
        self.clean_key = None
        self.starts: list[int] = []
        self.enqueued: list[int] = []

    @property
    def free_slots(self) -> int:
        return self.spec.queue_capacity - len(self.pending) - (self.executing is not None)


class _Simulator:
    def __init__(self, tasks, pet, machines, mapping, dropping, seed,
                 sample_from_gamma, trace, max_impulses):
        if mapping not in MAPPING_VARIANTS:
            raise ValueError(f"unknown mapping heuristic {mapping!r}")
        self.tasks = [t.fresh() for t in tasks]
        self.pet = pet
        self.specs = expand_machines(machines)
        for s in self.specs:
            if not 0 <= s.machine_type < pet.shape[1]:
                raise ValueError(f"machine type {s.machine_type} not in PET matrix")
        self.machines = [_Machine(i, s) for i, s in enumerate(self.specs)]
        self.mapping = mapping
        self.dropping = dropping
        self.rng = np.random.default_rng(seed)
        self.max_impulses = max_impulses
        self.trace = [] if trace else None
        self.batch: list[Task] = []
        self.events: list = []
        self.seq = 0
        self.gamma = None
        if sample_from_gamma:
            self.gamma = pet.generator_params.get("gamma")
            if self.gamma is None:
                raise ValueError("sample_from_gamma needs a generated PET with gamma parameters")

    def log(self, now, kind, task_id, machine, detail=""):
        if self.trace is not None:
            m = "" if machine is None else machine
            self.trace.append(f"{now},{kind},{task_id},{m},{detail}")

    def push(self, when, kind, payload):
        heapq.heappush(self.events, (when, kind, self.seq, payload))
        self.seq += 1

    def run(self) -> SimulationLog:
        for t in self.tasks:
            self.push(t.arrival, _ARRIVAL, t)
        while self.events:
            now, kind, _, payload = heapq.heappop(self.events)
            if kind == _COMPLETION:
                self.complete(now, payload)
            else:
                payload.state = TaskState.UNMAPPED
                self.batch.append(payload)
                self.log(now, "arrival", payload.id, None)
            self.mapping_event(now)
        stuck = [t.id for t in self.tasks if not t.terminal]
        if stuck:
            raise RuntimeError(f"tasks left unfinished: {stuck[:10]}")
        return SimulationLog(
            self.tasks, self.specs, [m.busy_ticks for m in self.machines],
            [m.starts for m in self.machines], [m.enqueued for m in self.machines],
            self.trace,
        )

    def complete(self, now, m: _Machine):
        t = m.executing
        t.finish = now
        t.state = TaskState.COMPLETED_ON_TIME if now < t.deadline else TaskState.MISSED
        m.busy_ticks += t.sampled_exec
        m.executing = None
        self.log(now, "complete", t.id, m.index, "on_time" if now < t.deadline else "missed")

    def drop(self, now, t: Task, state: str, machine=None):
        t.state = state
        self.log(now, state, t.id, machine)

    # snapshots are cached on a key that pins the base PMF and the entries
    def key(self, m: _Machine, now):
        ex = m.executing
        if ex is None:
            base_key = ("idle", now)
        else:
            cell = self.pet.cells[ex.task_type][m.spec.machine_type]
            cut = int(np.searchsorted(cell.ticks, now - ex.start, side="right"))
            base_key = (ex.id, cut) if cut < len(cell) else (ex.id, cut, now)
        return base_key, tuple(t.id for t in m.pending)

    def snapshot(self, m: _Machine, now) -> QueueSnapshot:
        key = self.key(m, now)
        if key == m.snap_key:
            return m.snap
        ex = m.executing
        if ex is None:
            base = Pmf.delta(now)
        else:
            base = residual_base(self.pet.cells[ex.task_type][m.spec.machine_type], ex.start, now)
        snap = QueueSnapshot(
            m.spec.machine_type, base,
            tuple(QueueEntry(t.id, t.task_type, t.deadline) for t in m.pending),
            self.pet, capacity=m.spec.queue_capacity, busy=ex is not None,
            max_impulses=self.max_impulses,
        )
        m.snap, m.snap_key = snap, key
        return snap

    def mapping_event(self, now):
        while True:
            self.reactive(now)
            if self.dropping.kind != "reactive_only":
                self.proactive(now)
            if self.batch and any(m.free_slots > 0 for m in self.machines):
                self.map(now)
            freed = self.start_idle(now)
            if not (freed and self.batch):
                return

    def reactive(self, now):
        for m in self.machines:
            if any(t.deadline <= now for t in m.pending):
                keep = []
                for t in m.pending:
                    if t.deadline <= now:
                        self.drop(now, t, TaskState.DROPPED_REACTIVE, m.index)
                    else:
                        keep.append(t)
                m.pending = keep
        if any(t.deadline <= now for t in self.batch):
            keep = []
            for t in self.batch:
                if t.deadline <= now:
                    self.drop(now, t, TaskState.DROPPED_REACTIVE)
                else:
                    keep.append(t)
            self.batch = keep

    def proactive(self, now):
        for m in self.machines:
            if not m.pending:
                continue
            snap = self.snapshot(m, now)
            if m.snap_key == m.clean_key:
                continue
            decisions, survivors = apply_policy(snap, self.dropping)
            if decisions:
                gone = {d.task_id for d in decisions}
                state = {
                    PROACTIVE: TaskState.DROPPED_PROACTIVE,
                    BELOW_THRESHOLD: TaskState.DROPPED_THRESHOLD,
                }
                for d in decisions:
                    t = next(t for t in m.pending if t.id == d.task_id)
                    self.drop(now, t, state[d.reason], m.index)
                m.pending = [t for t in m.pending if t.id not in gone]
                m.snap, m.snap_key = survivors, self.key(m, now)
            else:
                m.clean_key = m.snap_key

    def map(self, now):
        snaps = [self.snapshot(m, now) for m in self.machines]
        by_id = {t.id: t for t in self.batch}
        for a in map_batch(self.batch, snaps, self.mapping):
            t = by_id.pop(a.task_id)
            m = self.machines[a.machine]
            t.state = TaskState.QUEUED
            t.machine = m.index
            entry = QueueEntry(t.id, t.task_type, t.deadline)
            snap = m.snap.appended(entry, a.completion, a.chance)
            m.pending.append(t)
            m.enqueued.append(t.id)
            m.snap, m.snap_key = snap, self.key(m, now)
            self.log(now, "map", t.id, m.index)
        self.batch = [t for t in self.batch if t.id in by_id]

    def start_idle(self, now) -> bool:
        freed = False
        for m in self.machines:
            while m.executing is None and m.pending:
                t = m.pending.pop(0)
                if now >= t.deadline:
                    self.drop(now, t, TaskState.DROPPED_REACTIVE, m.index)
                    freed = True
                    continue
                d = self.sample(t.task_type, m.spec.machine_type)
                t.state = TaskState.EXECUTING
                t.start = now
                t.sampled_exec = d
                m.executing = t
                m.starts.append(t.id)
                self.push(now + d, _COMPLETION, m)
                self.log(now, "start", t.id, m.index, d)
        return freed

    def sample(self, task_type, machine_type) -> int:
        if self.gamma is not None:
            shape, scale = self.gamma[task_type][machine_type]
            return max(1, int(round(self.rng.gamma(shape, scale))))
        cell = self.pet.cells[task_type][machine_type]
        cum = cell.cumulative
        idx = int(np.searchsorted(cum, self.rng.random() * cum[-1], side="right"))
        return int(cell.ticks[min(idx, len(cell) - 1)])


def simulate(
    workload, pet: PetMatrix, machines, mapping: str = "PAM",
    dropping: DropPolicyConfig | None = None, seed: int = 0, *,
    sample_from_gamma: bool = False, trace: bool = False,
    max_impulses: int = DEFAULT_MAX_IMPULSES,
) -> SimulationLog:
    """Run the event loop and return every task's final state."""
    sim = _Simulator(
        workload, pet, machines, mapping, dropping or DropPolicyConfig(), seed,
        sample_from_gamma, trace, max_impulses,
    )
    return sim.run()


def run_trial(
    workload, pet: PetMatrix, machines, mapping: str = "PAM",
    dropping: DropPolicyConfig | None = None, seed: int = 0, *,
    warmup: int = 0, cooldown: int = 0, sample_from_gamma: bool = False,
    trace: bool = False, max_impulses: int = DEFAULT_MAX_IMPULSES,
) -> TrialResult:
    if not workload:
        return TrialResult(busy_ticks=tuple(0 for _ in expand_machines(machines)),
                           trace=[] if trace else None)
    log = simulate(
        workload, pet, machines, mapping, dropping, seed,
        sample_from_gamma=sample_from_gamma, trace=trace, max_impulses=max_impulses,
    )
    res = measure_window(log, warmup, cooldown)
    res.total_cost, res.normalized_cost = compute_cost(res, machines)
    res.cost_unbounded = math.isinf(res.normalized_cost)
    res.trace = log.trace
    return res
