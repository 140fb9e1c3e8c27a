"""Determinism and independence of the seeded stream hierarchy."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskql.streams import ACTIONS, BROWNIAN, RandomStream


def test_same_stream_reproduces_exactly():
    a = RandomStream(7).generator().standard_normal(100)
    b = RandomStream(7).generator().standard_normal(100)
    assert np.array_equal(a, b)


def test_distinct_seeds_differ():
    a = RandomStream(7).generator().standard_normal(10)
    b = RandomStream(8).generator().standard_normal(10)
    assert not np.array_equal(a, b)


@given(seed=st.integers(min_value=0, max_value=2**64 - 1), idx=st.integers(0, 2**32))
@settings(max_examples=50, deadline=None)
def test_child_is_deterministic(seed, idx):
    assert RandomStream(seed).child(idx) == RandomStream(seed).child(idx)


def test_children_of_distinct_indices_differ():
    root = RandomStream(3)
    keys = {root.child(i).substream for i in range(1000)}
    assert len(keys) == 1000


def test_grandchildren_do_not_collide_with_children():
    # child-of-child must not land on a sibling's substream; a plain additive
    # or xor scheme would fail this.
    root = RandomStream(3)
    flat = {root.child(i).substream for i in range(200)}
    nested = {root.child(i).child(j).substream for i in range(20) for j in range(10)}
    assert not (flat & nested)


def test_episode_purpose_separation():
    root = RandomStream(11)
    br = root.episode(5, BROWNIAN)
    ac = root.episode(5, ACTIONS)
    assert br != ac
    # purpose occupies the low bits, so consecutive episodes cannot alias
    assert root.episode(5, BROWNIAN) != root.episode(4, ACTIONS)


def test_episode_rejects_negative_index():
    with pytest.raises(ValueError):
        RandomStream(0).episode(-1, BROWNIAN)


def test_seed_type_checked():
    with pytest.raises(TypeError):
        RandomStream(1.5)  # type: ignore[arg-type]


def test_substream_independence_statistical():
    # 64 child streams, 1000 draws each: pairwise correlations of independent
    # Gaussians concentrate within ~4/sqrt(n).
    root = RandomStream(123)
    draws = np.stack([root.child(i).generator().standard_normal(1000) for i in range(64)])
    corr = np.corrcoef(draws)
    off_diag = corr[~np.eye(64, dtype=bool)]
    assert np.abs(off_diag).max() < 4.0 / np.sqrt(1000)
