"""Probabilistic completion-time analysis and proactive task dropping for
oversubscribed heterogeneous computing systems."""

from .dropping import DropDecision, DropPolicyConfig, heuristic_drop, optimal_drop, reactive_sweep, threshold_drop
from .pet import PetMatrix, generate_synthetic
from .pmf import Pmf, chance_of_success, compact, convolve, convolve_truncated, from_samples
from .queue_model import QueueEntry, QueueSnapshot, completion_chain, instantaneous_robustness
from .sim import MachineSpec, TrialResult, WorkloadSpec, generate_workload, run_trial
from .tasks import Task, TaskState

__version__ = "0.1.0"
