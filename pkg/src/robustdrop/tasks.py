from __future__ import annotations

from dataclasses import dataclass

__all__ = ["Task", "TaskState", "TERMINAL_STATES", "DROPPED_STATES"]


class TaskState:
    UNMAPPED = "unmapped"
    QUEUED = "queued"
    EXECUTING = "executing"
    COMPLETED_ON_TIME = "completed_on_time"
    MISSED = "missed"
    DROPPED_REACTIVE = "dropped_reactive"
    DROPPED_PROACTIVE = "dropped_proactive"
    DROPPED_THRESHOLD = "dropped_threshold"


DROPPED_STATES = (
    TaskState.DROPPED_REACTIVE,
    TaskState.DROPPED_PROACTIVE,
    TaskState.DROPPED_THRESHOLD,
)
TERMINAL_STATES = (TaskState.COMPLETED_ON_TIME, TaskState.MISSED) + DROPPED_STATES


@dataclass(slots=True)
class Task:
    id: int
    task_type: int
    arrival: int
    deadline: int
    state: str = TaskState.UNMAPPED
    machine: int | None = None
    start: int | None = None
    finish: int | None = None
    sampled_exec: int | None = None

    def __post_init__(self):
        if self.deadline <= self.arrival:
            raise ValueError(f"task {self.id}: deadline {self.deadline} not after arrival {self.arrival}")

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL_STATES

    def fresh(self) -> Task:
        """Unmapped copy, for replaying a workload."""
        return Task(self.id, self.task_type, self.arrival, self.deadline)
