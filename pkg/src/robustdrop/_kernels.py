"""Compiled inner loops for PMF arithmetic.

All kernels take and return sorted ``(ticks, masses)`` array pairs
(int64 / float64) and never mutate their inputs.
"""

import numpy as np
from numba import njit

INF_TICK = np.iinfo(np.int64).max

# Dense accumulation is used unless the output span is this much larger
# than the number of contributing terms.
_DENSE_FACTOR = 64
_DENSE_FLOOR = 1 << 16


@njit(cache=True)
def _collect(acc, lo):
    n = 0
    for k in range(acc.size):
        if acc[k] > 0.0:
            n += 1
    ticks = np.empty(n, np.int64)
    masses = np.empty(n, np.float64)
    n = 0
    for k in range(acc.size):
        if acc[k] > 0.0:
            ticks[n] = lo + k
            masses[n] = acc[k]
            n += 1
    return ticks, masses


@njit(cache=True)
def _merge_unsorted(ticks, masses):
    order = np.argsort(ticks, kind="mergesort")
    out_t = np.empty(ticks.size, np.int64)
    out_m = np.empty(ticks.size, np.float64)
    n = -1
    for idx in order:
        t = ticks[idx]
        if n >= 0 and out_t[n] == t:
            out_m[n] += masses[idx]
        else:
            n += 1
            out_t[n] = t
            out_m[n] = masses[idx]
    n += 1
    keep = out_m[:n] > 0.0
    return out_t[:n][keep], out_m[:n][keep]


@njit(cache=True)
def convolve_truncated(pt, pm, et, em, deadline):
    """Mass of ``prev`` below the deadline is convolved with ``exec``;
    mass at or after the deadline passes through unchanged."""
    cut = np.searchsorted(pt, deadline)
    n_pass = pt.size - cut
    lo = INF_TICK
    hi = -1
    if cut > 0:
        lo = pt[0] + et[0]
        hi = pt[cut - 1] + et[-1]
    if n_pass > 0:
        lo = min(lo, pt[cut])
        hi = max(hi, pt[-1])
    span = hi - lo + 1
    terms = cut * et.size + n_pass
    if span <= max(_DENSE_FLOOR, _DENSE_FACTOR * terms):
        acc = np.zeros(span, np.float64)
        for i in range(cut):
            base = pt[i] - lo
            w = pm[i]
            for j in range(et.size):
                acc[base + et[j]] += w * em[j]
        for i in range(cut, pt.size):
            acc[pt[i] - lo] += pm[i]
        return _collect(acc, lo)
    ticks = np.empty(terms, np.int64)
    masses = np.empty(terms, np.float64)
    n = 0
    for i in range(cut):
        for j in range(et.size):
            ticks[n] = pt[i] + et[j]
            masses[n] = pm[i] * em[j]
            n += 1
    for i in range(cut, pt.size):
        ticks[n] = pt[i]
        masses[n] = pm[i]
        n += 1
    return _merge_unsorted(ticks, masses)


@njit(cache=True)
def compact(ticks, masses, max_impulses):
    """Merge adjacent impulses until at most ``max_impulses`` remain.

    Each merge moves the left impulse's mass onto its right neighbour, so
    no mass ever moves to an earlier tick. Pairs are chosen cheapest
    first, cost = moved mass x tick gap.
    """
    t = ticks
    m = masses
    while t.size > max_impulses:
        n = t.size
        need = n - max_impulses
        cost = np.empty(n - 1, np.float64)
        for i in range(n - 1):
            cost[i] = m[i] * (t[i + 1] - t[i])
        order = np.argsort(cost, kind="mergesort")
        used = np.zeros(n, np.bool_)
        merge_next = np.zeros(n, np.bool_)
        done = 0
        for idx in order:
            if done >= need:
                break
            if not used[idx] and not used[idx + 1]:
                used[idx] = True
                used[idx + 1] = True
                merge_next[idx] = True
                done += 1
        new_t = np.empty(n - done, np.int64)
        new_m = np.empty(n - done, np.float64)
        i = 0
        k = 0
        while i < n:
            if merge_next[i]:
                new_t[k] = t[i + 1]
                new_m[k] = m[i] + m[i + 1]
                i += 2
            else:
                new_t[k] = t[i]
                new_m[k] = m[i]
                i += 1
            k += 1
        t = new_t
        m = new_m
    return t, m


@njit(cache=True)
def mass_before(ticks, masses, deadline):
    total = 0.0
    for i in range(ticks.size):
        if ticks[i] >= deadline:
            break
        total += masses[i]
    return min(total, 1.0)


@njit(cache=True)
def extend(pt, pm, et, em, deadline, max_impulses):
    """One queue step: truncated convolution, compaction, chance of success."""
    t, m = convolve_truncated(pt, pm, et, em, deadline)
    t, m = compact(t, m, max_impulses)
    return t, m, mass_before(t, m, deadline)


@njit(cache=True)
def success_probs(pt, pm, et, ecum, deadlines):
    """P(prev + exec < deadline) for many deadlines sharing one exec PMF.

    ``ecum`` is the cumulative mass of the exec PMF.
    """
    out = np.zeros(deadlines.size, np.float64)
    for d in range(deadlines.size):
        dl = deadlines[d]
        total = 0.0
        for i in range(pt.size):
            limit = dl - pt[i]  # exec must be < limit
            if limit <= et[0]:
                break
            j = np.searchsorted(et, limit)
            total += pm[i] * ecum[j - 1]
        out[d] = min(total, 1.0)
    return out
