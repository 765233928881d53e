import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afdetect import sampler
from afdetect.errors import NoPositives, TooFewNegatives


def dataset(n_neg, n_pos):
    ids = [f"n{i}" for i in range(n_neg)] + [f"p{i}" for i in range(n_pos)]
    return ids, [0] * n_neg + [1] * n_pos


def test_seventy_ten_seven_branches():
    ids, y = dataset(70, 10)
    s = sampler.partition(ids, y, 7, seed=3)
    assert s.n_branches == 7
    assert all(len(sub) == 10 for sub in s.negative_subsets)
    for b in range(7):
        d = s.branch_dataset(b)
        assert len(d) == 20 and Counter(i[0] for i in d) == {"n": 10, "p": 10}


def test_uneven_split_sizes():
    ids, y = dataset(10, 4)
    s = sampler.partition(ids, y, 3)
    assert sorted(len(x) for x in s.negative_subsets) == [3, 3, 4]


def test_single_branch_is_whole_set():
    ids, y = dataset(12, 5)
    s = sampler.partition(ids, y, 1)
    assert sorted(s.branch_dataset(0)) == sorted(ids)


def test_default_branch_count():
    assert sampler.default_branch_count(5050, 738) == 7
    assert sampler.default_branch_count(70, 10) == 7
    assert sampler.default_branch_count(65, 10) == 7  # half rounds up
    assert sampler.default_branch_count(64, 10) == 6
    assert sampler.default_branch_count(50, 50) == 1
    assert sampler.default_branch_count(3, 10) == 1
    assert sampler.default_branch_count(10_000, 10) == 16


def test_errors():
    with pytest.raises(NoPositives):
        sampler.partition(*dataset(10, 0), 2)
    with pytest.raises(TooFewNegatives):
        sampler.partition(*dataset(2, 3), 3)
    with pytest.raises(NoPositives):
        sampler.default_branch_count(10, 0)


def test_membership_matrix():
    ids, y = dataset(6, 2)
    s = sampler.partition(ids, y, 3)
    m = s.membership(ids + ["stranger"])
    assert m[-1].sum() == 0
    assert m[-3:-1].all()
    np.testing.assert_array_equal(m[:6].sum(axis=1), 1)


def test_partition_deterministic():
    ids, y = dataset(40, 6)
    assert sampler.partition(ids, y, 5, 11) == sampler.partition(ids, y, 5, 11)
    assert sampler.partition(ids, y, 5, 11) != sampler.partition(ids, y, 5, 12)


def test_batches_cover_each_branch_once():
    ids, y = dataset(70, 10)
    s = sampler.partition(ids, y, 7)
    seen = {b: [] for b in range(7)}
    count = 0
    for batch, b in sampler.branch_batches(s, 6, epoch_seed=2):
        seen[b].extend(batch)
        count += 1
        assert len(batch) >= 2
    for b in range(7):
        assert sorted(seen[b]) == sorted(s.branch_dataset(b))
    # 20 per branch at batch 6: 6+6+6+2
    assert count == 7 * math.ceil(20 / 6)


def test_trailing_singleton_merged():
    ids, y = dataset(7, 3)
    s = sampler.partition(ids, y, 1)
    sizes = [len(b) for b, _ in sampler.branch_batches(s, 3)]
    assert sizes == [3, 3, 4]


def test_batches_deterministic():
    s = sampler.partition(*dataset(30, 5), 4)
    a = list(sampler.branch_batches(s, 4, epoch_seed=9))
    assert a == list(sampler.branch_batches(s, 4, epoch_seed=9))
    assert a != list(sampler.branch_batches(s, 4, epoch_seed=10))


def test_partition_file_round_trip(tmp_path):
    s = sampler.partition(*dataset(23, 4), 5, seed=1)
    sampler.dump_partition(tmp_path / "p.csv", s)
    assert sampler.load_partition(tmp_path / "p.csv") == s
    rows = (tmp_path / "p.csv").read_text().splitlines()
    assert rows[0] == "sample_id,label,branch" and len(rows) == 1 + 23 + 5 * 4


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 300), st.integers(1, 60), st.integers(0, 2**31), st.data())
def test_partition_invariants(n_neg, n_pos, seed, data):
    n_b = data.draw(st.integers(1, min(16, n_neg)))
    ids, y = dataset(n_neg, n_pos)
    s = sampler.partition(ids, y, n_b, seed)
    negs = [i for sub in s.negative_subsets for i in sub]
    assert sorted(negs) == sorted(ids[:n_neg])  # disjoint cover
    sizes = [len(sub) for sub in s.negative_subsets]
    assert max(sizes) - min(sizes) <= 1
    assert set(s.positives) == set(ids[n_neg:])
    for b in range(n_b):
        assert set(s.positives) <= set(s.branch_dataset(b))
    if n_b == sampler.default_branch_count(n_neg, n_pos) and 0.5 <= n_neg / n_pos <= 16:
        assert all(0.5 <= k / n_pos <= 2 for k in sizes)
