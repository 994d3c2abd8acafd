import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from robustdrop.pet import PetMatrix
from robustdrop.pmf import Pmf
from robustdrop.queue_model import (
    QueueEntry,
    QueueSnapshot,
    chain_with_drop,
    completion_chain,
    instantaneous_robustness,
    residual_base,
    robustness_after_drop,
)


def P(d):
    return Pmf.from_dict(d)


def snap_of(base, cells, deadlines, **kw):
    pet = PetMatrix([f"t{i}" for i in range(len(cells))], ["m"], [[P(c)] for c in cells])
    entries = tuple(QueueEntry(100 + i, i, d) for i, d in enumerate(deadlines))
    return QueueSnapshot(0, P(base), entries, pet, **kw)


@pytest.fixture
def failing_pair():
    # A cannot make its deadline and pushes B past its own
    return snap_of({0: 1.0}, [{10: 1.0}, {2: 1.0}], [5, 5])


def test_empty_chain():
    s = snap_of({0: 1.0}, [{2: 1.0}], [])
    assert completion_chain(s) == []
    assert instantaneous_robustness(s) == 0.0


def test_single_certain_entry():
    s = snap_of({0: 1.0}, [{2: 1.0}], [5])
    [(c, p)] = completion_chain(s)
    assert c == P({2: 1.0}) and p == 1.0


def test_two_entry_chain():
    s = snap_of({0: 1.0}, [{1: 0.5, 5: 0.5}, {2: 1.0}], [10, 3])
    (c0, p0), (c1, p1) = completion_chain(s)
    assert c0 == P({1: 0.5, 5: 0.5}) and p0 == 1.0
    assert c1 == P({3: 0.5, 5: 0.5}) and p1 == 0.0
    assert instantaneous_robustness(s) == 1.0


def test_three_certain_entries():
    s = snap_of({0: 1.0}, [{2: 1.0}] * 3, [10, 10, 10])
    assert instantaneous_robustness(s) == 3.0


def test_drop_examples(failing_pair):
    assert chain_with_drop(failing_pair, set()) == completion_chain(failing_pair)
    [(c, p)] = chain_with_drop(failing_pair, {0})
    assert c == P({2: 1.0}) and p == 1.0
    assert completion_chain(failing_pair)[1][1] == 0.0
    assert robustness_after_drop(failing_pair, 0) == 1.0
    assert instantaneous_robustness(failing_pair) == 0.0


def test_drop_only_entry():
    s = snap_of({0: 1.0}, [{2: 1.0}], [5])
    assert robustness_after_drop(s, 0) == 0.0


def test_drop_out_of_range(failing_pair):
    with pytest.raises(IndexError):
        chain_with_drop(failing_pair, {2})


def test_capacity_enforced():
    with pytest.raises(ValueError):
        snap_of({0: 1.0}, [{2: 1.0}], [9] * 6, busy=True)
    s = snap_of({0: 1.0}, [{2: 1.0}], [9] * 5, busy=True)
    assert s.free_slots == 0


def test_residual_base():
    e = P({10: 0.2, 20: 0.3, 30: 0.5})
    assert residual_base(e, 100, 100) == P({110: 0.2, 120: 0.3, 130: 0.5})
    r = residual_base(e, 100, 115)
    assert r.isclose(P({120: 0.375, 130: 0.625}))
    # elapsed beyond the whole support: the machine frees up next tick
    assert residual_base(e, 100, 140) == P({141: 1.0})


rng_seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=150, deadline=None)
@given(rng_seeds)
def test_chain_matches_oracle(seed):
    s = O.random_snapshot(np.random.default_rng(seed))
    base, execs, deadlines = O.snapshot_parts(s)
    want = O.chain(base, execs, deadlines)
    got = completion_chain(s)
    assert len(got) == len(want)
    for (c, p), (wc, wp) in zip(got, want):
        assert c.isclose(Pmf.from_dict(wc), 1e-12)
        assert p == pytest.approx(wp, abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(rng_seeds, st.data())
def test_chain_with_drop_properties(seed, data):
    rng = np.random.default_rng(seed)
    s = O.random_snapshot(rng)
    q = len(s.entries)
    dropped = data.draw(st.sets(st.integers(0, q - 1), max_size=q))
    got = chain_with_drop(s, dropped)
    full = completion_chain(s)
    survivors = [i for i in range(q) if i not in dropped]
    assert len(got) == len(survivors)
    # identical to chaining only the survivors
    sub = s.with_entries([s.entries[i] for i in survivors])
    for (c, p), (wc, wp) in zip(got, completion_chain(sub)):
        assert c == wc and p == wp
    # dependence zone untouched
    first = min(dropped, default=q)
    for k in range(first):
        assert got[k][0] == full[k][0]
    # dropping only relieves the survivors behind
    for pos, (_, p) in zip(survivors, got):
        assert p >= full[pos][1] - 1e-12


@settings(max_examples=100, deadline=None)
@given(rng_seeds)
def test_all_but_one_dropped(seed):
    s = O.random_snapshot(np.random.default_rng(seed))
    q = len(s.entries)
    k = q - 1
    [(c, p)] = chain_with_drop(s, set(range(q)) - {k})
    e = s.entries[k]
    want = O.convolve_truncated(s.base.to_dict(), s.exec_pmf(e).to_dict(), e.deadline)
    assert c.isclose(Pmf.from_dict(want), 1e-12)


@settings(max_examples=100, deadline=None)
@given(rng_seeds)
def test_dropping_last_removes_only_its_chance(seed):
    s = O.random_snapshot(np.random.default_rng(seed))
    chain = completion_chain(s)
    want = instantaneous_robustness(s) - chain[-1][1]
    assert robustness_after_drop(s, len(s.entries) - 1) == pytest.approx(want, abs=1e-12)


def test_chain_performs_one_step_per_entry(monkeypatch):
    s = snap_of({0: 1.0}, [{2: 1.0}, {3: 1.0}, {1: 1.0}, {4: 1.0}], [10, 20, 30, 40])
    calls = []
    orig = QueueSnapshot.step
    monkeypatch.setattr(QueueSnapshot, "step", lambda self, prev, e: calls.append(e) or orig(self, prev, e))
    s2 = s.with_entries(list(s.entries))
    completion_chain(s2)
    completion_chain(s2)
    assert len(calls) == 4


def test_compaction_bounds_chain():
    cells = [{t: 1 / 40 for t in range(1, 41)}]
    s = snap_of({0: 1.0}, cells, [1000], max_impulses=32)
    s = s.with_entries([QueueEntry(i, 0, 1000) for i in range(4)])
    for c, _ in completion_chain(s):
        assert len(c) <= 32
        assert abs(c.total - 1.0) <= 1e-9
