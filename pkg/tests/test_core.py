import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from netucb.core import (
    ConfigError,
    Context,
    Dimensions,
    InvalidSample,
    RoundRecord,
    Topology,
    argmax_first,
    clamp_to_unit_ball,
    concat_context,
    split_context,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


@pytest.mark.parametrize(
    "common, specific, expected",
    [([0, 0], [0], [0, 0, 0]), ([1], [], [1]), ([0.3, 0.4], [0.5], [0.3, 0.4, 0.5])],
)
def test_concat_context(common, specific, expected):
    assert concat_context(Context(common, specific)).tolist() == expected


@pytest.mark.parametrize(
    "v, expected", [([0.3, 0.4], [0.3, 0.4]), ([3, 4], [0.6, 0.8]), ([0, 0], [0, 0])]
)
def test_clamp_examples(v, expected):
    np.testing.assert_allclose(clamp_to_unit_ball(v), expected, rtol=0, atol=1e-15)


def test_clamp_rejects_non_finite():
    with pytest.raises(InvalidSample):
        clamp_to_unit_ball([np.nan, 1.0])
    with pytest.raises(InvalidSample):
        clamp_to_unit_ball([np.inf])


@given(arrays(float, st.integers(1, 12), elements=finite))
def test_clamped_norm_at_most_one(v):
    out = clamp_to_unit_ball(v)
    assert np.linalg.norm(out) <= 1 + 1e-12
    if np.linalg.norm(v) <= 1:
        assert np.array_equal(out, v)


@given(arrays(float, st.integers(1, 6), elements=finite), arrays(float, st.integers(0, 6), elements=finite))
def test_concat_split_round_trip(common, specific):
    ctx = split_context(concat_context(Context(common, specific)), common.size)
    assert np.array_equal(ctx.common, common)
    assert np.array_equal(ctx.specific, specific)


def test_dimensions():
    dims = Dimensions(3, 4, 2, (1, 2, 3))
    assert dims.d_full(2) == 5
    assert dims.d_global == 8
    assert [dims.specific_offset(i) for i in range(3)] == [2, 3, 5]
    assert Dimensions.uniform(2, 3, 4, 1).d_specific == (1, 1)


@pytest.mark.parametrize(
    "args",
    [(0, 2, 1, ()), (1, 1, 1, (1,)), (1, 2, 0, (1,)), (2, 2, 1, (1,)), (1, 2, 1, (0,))],
)
def test_dimensions_validation(args):
    with pytest.raises(ConfigError):
        Dimensions(*args)


@pytest.mark.parametrize(
    "label, sizes",
    [("1x12", [1] * 12), ("6x2", [6, 6]), ("3x4", [3, 3, 3, 3]), ("12", [12]), ("2,3", [2, 3]), ("4*3", [4, 4, 4])],
)
def test_topology_parse(label, sizes):
    topo = Topology.parse(label)
    assert topo.component_sizes == sizes
    assert topo.label == label


def test_topology_keywords_need_size():
    assert Topology.parse("disjoint", 3).component_sizes == [1, 1, 1]
    assert Topology.parse("full", 3).component_sizes == [3]
    with pytest.raises(ConfigError):
        Topology.parse("full")


@pytest.mark.parametrize("label", ["", "ring", "0x3", "3x", "1,,2"])
def test_topology_parse_errors(label):
    with pytest.raises(ConfigError):
        Topology.parse(label)


def test_topology_size_mismatch():
    with pytest.raises(ConfigError, match="covers 10 nodes"):
        Topology.parse("5x2", 12)


def test_topology_members_and_mask():
    topo = Topology.parse("2,1")
    assert topo.members(0) == [0, 1]
    assert topo.members(2) == [2]
    assert topo.mask().tolist() == [[True, True, False], [True, True, False], [False, False, True]]
    assert Topology.singletons(3) == Topology.parse("1x3")
    assert Topology.fully_connected(3).label == "3"


def test_round_record_regret():
    rec = RoundRecord(1, 0, 1, 0, 0.2, 0.3, 0.5)
    assert rec.regret == pytest.approx(0.2)


def test_argmax_first_breaks_ties_low():
    assert argmax_first(np.array([1.0, 3.0, 3.0])) == 1
    assert argmax_first(np.zeros(4)) == 0
