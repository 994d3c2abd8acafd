"""Discrete probability mass functions over integer time ticks.

A tick is one millisecond. Values are immutable; every operation returns
a new :class:`Pmf`.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping

import numpy as np

from . import _kernels

__all__ = [
    "DEFAULT_MAX_IMPULSES",
    "INF_TICK",
    "MASS_TOL",
    "Pmf",
    "PmfError",
    "chance_of_success",
    "compact",
    "convolve",
    "convolve_truncated",
    "from_samples",
]

#: Deadline sentinel meaning "never": larger than any representable tick.
INF_TICK: int = int(_kernels.INF_TICK)
DEFAULT_MAX_IMPULSES = 256
MASS_TOL = 1e-9


class PmfError(ValueError):
    pass


class Pmf:
    """Sorted impulses ``(tick, mass)`` with total mass 1."""

    __slots__ = ("ticks", "masses", "_mean", "_cum")

    def __init__(self, ticks, masses, *, check: bool = True) -> None:
        ticks = np.ascontiguousarray(ticks, dtype=np.int64)
        masses = np.ascontiguousarray(masses, dtype=np.float64)
        if check:
            _validate(ticks, masses)
        ticks.flags.writeable = False
        masses.flags.writeable = False
        self.ticks = ticks
        self.masses = masses
        self._mean = None
        self._cum = None

    @classmethod
    def from_dict(cls, impulses: Mapping[int, float]) -> Pmf:
        items = sorted(impulses.items())
        return cls([t for t, _ in items], [m for _, m in items])

    @classmethod
    def from_pairs(cls, pairs: Iterable) -> Pmf:
        pairs = list(pairs)
        return cls([int(t) for t, _ in pairs], [float(m) for _, m in pairs])

    @classmethod
    def delta(cls, tick: int) -> Pmf:
        return cls(np.array([tick]), np.array([1.0]), check=False)

    def to_dict(self) -> dict[int, float]:
        return dict(zip(self.ticks.tolist(), self.masses.tolist()))

    def to_pairs(self) -> list[list]:
        return [[t, m] for t, m in zip(self.ticks.tolist(), self.masses.tolist())]

    def __len__(self) -> int:
        return self.ticks.size

    def __iter__(self):
        return iter(zip(self.ticks.tolist(), self.masses.tolist()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pmf):
            return NotImplemented
        return np.array_equal(self.ticks, other.ticks) and np.array_equal(
            self.masses, other.masses
        )

    __hash__ = None

    def __repr__(self) -> str:
        if len(self) > 8:
            head = ", ".join(f"{t}: {m:.6g}" for t, m in list(self)[:4])
            return f"Pmf({{{head}, ...}} n={len(self)})"
        return f"Pmf({self.to_dict()!r})"

    def isclose(self, other: Pmf, tol: float = MASS_TOL) -> bool:
        return np.array_equal(self.ticks, other.ticks) and bool(
            np.all(np.abs(self.masses - other.masses) <= tol)
        )

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    @property
    def mean(self) -> float:
        if self._mean is None:
            self._mean = float(np.dot(self.ticks.astype(np.float64), self.masses))
        return self._mean

    @property
    def cumulative(self) -> np.ndarray:
        """Running mass, ``cumulative[i] = P(X <= ticks[i])``."""
        if self._cum is None:
            cum = np.cumsum(self.masses)
            cum.flags.writeable = False
            self._cum = cum
        return self._cum

    def mass_before(self, tick: int) -> float:
        return _kernels.mass_before(self.ticks, self.masses, tick)

    def shift(self, offset: int) -> Pmf:
        return Pmf(self.ticks + offset, self.masses, check=False)


def _validate(ticks: np.ndarray, masses: np.ndarray) -> None:
    if ticks.ndim != 1 or ticks.shape != masses.shape:
        raise PmfError("ticks and masses must be 1-d arrays of equal length")
    if ticks.size == 0:
        raise PmfError("empty PMF")
    if ticks[0] < 0:
        raise PmfError("negative tick")
    if np.any(np.diff(ticks) <= 0):
        raise PmfError("ticks must be strictly increasing")
    if np.any(~(masses > 0)):
        raise PmfError("impulse masses must be positive")
    total = float(masses.sum())
    if abs(total - 1.0) > MASS_TOL:
        raise PmfError(f"unnormalized PMF (total mass {total!r})")


def convolve(a: Pmf, b: Pmf) -> Pmf:
    """Distribution of the sum of two independent variables."""
    t, m = _kernels.convolve_truncated(a.ticks, a.masses, b.ticks, b.masses, INF_TICK)
    return Pmf(t, m, check=False)


def convolve_truncated(prev_completion: Pmf, exec_time: Pmf, deadline: int) -> Pmf:
    """Completion time of a queued task that is dropped if it cannot start
    before ``deadline``.

    Predecessor mass below the deadline is convolved with the execution
    time; predecessor mass at or after the deadline is carried over as is
    (the task contributes zero execution time on that branch).
    """
    t, m = _kernels.convolve_truncated(
        prev_completion.ticks, prev_completion.masses,
        exec_time.ticks, exec_time.masses, deadline,
    )
    return Pmf(t, m, check=False)


def chance_of_success(completion: Pmf, deadline: int) -> float:
    """Probability mass strictly before the deadline."""
    return completion.mass_before(deadline)


def from_samples(samples, bin_width: int = 1) -> Pmf:
    """Histogram of duration samples; each bin sits at its left edge."""
    samples = np.asarray(samples)
    if samples.size == 0:
        raise PmfError("empty sample set")
    if bin_width < 1:
        raise PmfError("bin_width must be >= 1")
    if np.any(samples < 0):
        raise PmfError("negative sample")
    edges = (samples.astype(np.int64) // bin_width) * bin_width
    ticks, counts = np.unique(edges, return_counts=True)
    return Pmf(ticks, counts / counts.sum(), check=False)


def compact(p: Pmf, max_impulses: int = DEFAULT_MAX_IMPULSES) -> Pmf:
    """Bound the impulse count by merging neighbours onto the later tick.

    Mass is only ever moved later in time, so a compacted PMF never
    reports a higher chance of success than the original.
    """
    if max_impulses < 1:
        raise PmfError("max_impulses must be >= 1")
    if len(p) <= max_impulses:
        return p
    t, m = _kernels.compact(p.ticks, p.masses, max_impulses)
    return Pmf(t, m, check=False)
