import numpy as np
import pytest

from nashtsc.replay import Experience, NotEnoughSamples, ReplayBuffer


def exp(k):
    return Experience(np.array([k], dtype=float), 0, (), float(k), np.array([k + 1], dtype=float))


def test_fifo_eviction():
    buf = ReplayBuffer(20000)
    for k in range(20001):
        buf.push(exp(k))
    assert len(buf) == 20000
    assert buf.entries[0].reward == 1.0
    assert buf.entries[-1].reward == 20000.0


def test_single_unique_item_drawn_repeatedly():
    buf = ReplayBuffer(10)
    item = exp(5)
    for _ in range(3):
        buf.push(item)
    assert buf.sample(3, np.random.default_rng(0)) == [item] * 3


def test_seeded_sampling_is_reproducible_and_non_mutating():
    buf = ReplayBuffer(100)
    for k in range(50):
        buf.push(exp(k))
    before = list(buf.entries)
    a = [e.reward for e in buf.sample(20, np.random.default_rng(9))]
    b = [e.reward for e in buf.sample(20, np.random.default_rng(9))]
    assert a == b and list(buf.entries) == before


def test_too_few_samples():
    buf = ReplayBuffer(10)
    for k in range(3):
        buf.push(exp(k))
    with pytest.raises(NotEnoughSamples):
        buf.sample(4, np.random.default_rng(0))


def test_sampling_is_with_replacement():
    buf = ReplayBuffer(10)
    for k in range(3):
        buf.push(exp(k))
    batch = buf.sample(3, np.random.default_rng(1))
    assert len(batch) == 3
    draws = [e.reward for _ in range(50) for e in buf.sample(3, np.random.default_rng(_))]
    assert set(draws) == {0.0, 1.0, 2.0}
    assert any(len({e.reward for e in buf.sample(3, np.random.default_rng(s))}) < 3 for s in range(50))


def test_uniform_frequency_within_three_sigma():
    buf = ReplayBuffer(2)
    buf.push(exp(0))
    buf.push(exp(1))
    rng = np.random.default_rng(7)
    n = 10000
    hits = sum(buf.sample(1, rng)[0].reward == 0.0 for _ in range(n))
    assert abs(hits - n / 2) <= 3 * np.sqrt(n * 0.25)


def test_capacity_must_be_positive():
    with pytest.raises(ValueError):
        ReplayBuffer(0)
