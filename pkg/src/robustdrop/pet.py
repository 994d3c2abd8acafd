"""Probabilistic Execution Time (PET) matrix.

One execution-time :class:`~robustdrop.pmf.Pmf` per (task type, machine
type) pair, plus synthetic generation from Gamma distributions and a JSON
file format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .pmf import Pmf, PmfError, from_samples

__all__ = [
    "PetError",
    "PetMatrix",
    "generate_synthetic",
    "homogeneous",
    "load",
    "load_scenario",
    "lookup",
    "save",
    "SCENARIOS",
]

SCENARIOS = ("specint8x12", "video4x4")


class PetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PetMatrix:
    task_types: tuple[str, ...]
    machine_types: tuple[str, ...]
    cells: tuple[tuple[Pmf, ...], ...]
    bin_width: int = 1
    seed: int | None = None
    generator_params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "task_types", tuple(self.task_types))
        object.__setattr__(self, "machine_types", tuple(self.machine_types))
        cells = tuple(tuple(row) for row in self.cells)
        object.__setattr__(self, "cells", cells)
        if len(cells) != len(self.task_types) or any(
            len(row) != len(self.machine_types) for row in cells
        ):
            raise PetError("incomplete grid")
        means = np.array([[c.mean for c in row] for row in cells], dtype=float)
        means = means.reshape(len(self.task_types), len(self.machine_types))
        means.flags.writeable = False
        object.__setattr__(self, "mean_exec", means)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.task_types), len(self.machine_types)

    @property
    def avg_per_type(self) -> np.ndarray:
        """Mean execution time of each task type across machine types."""
        return self.mean_exec.mean(axis=1)

    @property
    def avg_all(self) -> float:
        return float(self.avg_per_type.mean())

    def lookup(self, task_type: int, machine_type: int) -> Pmf:
        return lookup(self, task_type, machine_type)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PetMatrix):
            return NotImplemented
        return (
            self.task_types == other.task_types
            and self.machine_types == other.machine_types
            and self.bin_width == other.bin_width
            and self.seed == other.seed
            and self.generator_params == other.generator_params
            and all(a == b for ra, rb in zip(self.cells, other.cells) for a, b in zip(ra, rb))
        )

    __hash__ = None


def lookup(pet: PetMatrix, task_type: int, machine_type: int) -> Pmf:
    n_t, n_m = pet.shape
    if not (0 <= task_type < n_t):
        raise IndexError(f"task type {task_type} out of range [0, {n_t})")
    if not (0 <= machine_type < n_m):
        raise IndexError(f"machine type {machine_type} out of range [0, {n_m})")
    return pet.cells[task_type][machine_type]


def generate_synthetic(
    means,
    scale_range=(1.0, 20.0),
    samples_per_cell: int = 500,
    bin_width: int = 10,
    seed: int = 0,
    task_types=None,
    machine_types=None,
) -> PetMatrix:
    """Sample a PET matrix from Gamma distributions with the given means.

    Each cell draws a scale uniformly from ``scale_range`` and uses
    shape = mean / scale, so the Gamma mean equals the configured mean.
    Samples are rounded to whole ticks (minimum 1) and histogrammed.
    """
    means = np.asarray(means, dtype=float)
    if means.ndim != 2 or means.size == 0:
        raise PetError("means must be a non-empty 2-d grid")
    if not np.all(np.isfinite(means)) or np.any(means <= 0):
        raise PetError("all mean execution times must be positive")
    low, high = (float(x) for x in scale_range)
    if not (0 < low <= high):
        raise PetError(f"invalid scale_range {scale_range!r}")
    if samples_per_cell < 1:
        raise PetError("samples_per_cell must be >= 1")
    if bin_width < 1:
        raise PetError("bin_width must be >= 1")

    n_t, n_m = means.shape
    rng = np.random.default_rng(seed)
    cells = []
    gamma = []
    for i in range(n_t):
        row, grow = [], []
        for j in range(n_m):
            scale = rng.uniform(low, high)
            shape = means[i, j] / scale
            draws = rng.gamma(shape, scale, size=samples_per_cell)
            ticks = np.maximum(1, np.rint(draws)).astype(np.int64)
            row.append(_min_one(from_samples(ticks, bin_width)))
            grow.append([shape, scale])
        cells.append(row)
        gamma.append(grow)

    params = {
        "means": means.tolist(),
        "scale_range": [low, high],
        "samples_per_cell": int(samples_per_cell),
        "gamma": gamma,
    }
    return PetMatrix(
        task_types or [f"t{i}" for i in range(n_t)],
        machine_types or [f"m{j}" for j in range(n_m)],
        cells,
        bin_width=int(bin_width),
        seed=int(seed),
        generator_params=params,
    )


def _min_one(p: Pmf) -> Pmf:
    # a bin at tick 0 would be a zero-length execution
    if p.ticks[0] != 0:
        return p
    if len(p) > 1 and p.ticks[1] == 1:
        masses = p.masses[1:].copy()
        masses[0] += p.masses[0]
        return Pmf(p.ticks[1:], masses, check=False)
    ticks = p.ticks.copy()
    ticks[0] = 1
    return Pmf(ticks, p.masses, check=False)


def homogeneous(pet: PetMatrix, machine_type: int = 0) -> PetMatrix:
    """Copy of ``pet`` where every machine column equals one column."""
    n_t, n_m = pet.shape
    if not (0 <= machine_type < n_m):
        raise IndexError(f"machine type {machine_type} out of range [0, {n_m})")
    cells = [[row[machine_type]] * n_m for row in pet.cells]
    params = dict(pet.generator_params)
    params["homogeneous_column"] = machine_type
    if "gamma" in params:
        params["gamma"] = [[g[machine_type]] * n_m for g in params["gamma"]]
    if "means" in params:
        params["means"] = [[m[machine_type]] * n_m for m in params["means"]]
    return PetMatrix(
        pet.task_types,
        pet.machine_types,
        cells,
        bin_width=pet.bin_width,
        seed=pet.seed,
        generator_params=params,
    )


def save(pet: PetMatrix, path) -> None:
    doc = {
        "task_types": list(pet.task_types),
        "machine_types": list(pet.machine_types),
        "cells": [[c.to_pairs() for c in row] for row in pet.cells],
        "bin_width": pet.bin_width,
        "seed": pet.seed,
        "generator_params": pet.generator_params,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load(path) -> PetMatrix:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PetError(f"malformed PET file {path}: {exc}") from exc
    return from_document(doc, source=str(path))


def from_document(doc: dict, source: str = "<document>") -> PetMatrix:
    if not isinstance(doc, dict):
        raise PetError(f"{source}: expected a JSON object")
    for key in ("task_types", "machine_types", "cells"):
        if key not in doc:
            raise PetError(f"{source}: missing field '{key}'")
    tasks, machines, rows = doc["task_types"], doc["machine_types"], doc["cells"]
    if not isinstance(rows, list) or len(rows) != len(tasks):
        raise PetError(
            f"{source}: incomplete grid ({len(tasks)} task types, "
            f"{len(rows) if isinstance(rows, list) else 0} rows)"
        )
    cells = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != len(machines):
            raise PetError(f"{source}: incomplete grid (row {i})")
        cells.append([_load_cell(pairs, source, i, j) for j, pairs in enumerate(row)])
    return PetMatrix(
        tasks,
        machines,
        cells,
        bin_width=int(doc.get("bin_width", 1)),
        seed=doc.get("seed"),
        generator_params=doc.get("generator_params") or {},
    )


def _load_cell(pairs, source, i, j) -> Pmf:
    where = f"{source}: cell [{i}][{j}]"
    try:
        ticks = np.array([int(t) for t, _ in pairs], dtype=np.int64)
        masses = np.array([float(m) for _, m in pairs], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise PetError(f"{where}: malformed impulse list") from exc
    total = float(masses.sum()) if masses.size else 0.0
    if not math.isclose(total, 1.0, rel_tol=0.0, abs_tol=1e-6):
        raise PetError(f"{where}: unnormalized PMF (total mass {total:.6g})")
    if abs(total - 1.0) > 1e-9:
        masses = masses / total
    try:
        return Pmf(ticks, masses)
    except PmfError as exc:
        raise PetError(f"{where}: {exc}") from exc


def load_scenario(name: str) -> dict:
    """Shipped synthetic scenario: means grid, names and machine prices."""
    if name not in SCENARIOS:
        raise PetError(f"unknown scenario {name!r}; choose one of {SCENARIOS}")
    text = resources.files("robustdrop").joinpath("data").joinpath(f"{name}.json").read_text("utf-8")
    return json.loads(text)
