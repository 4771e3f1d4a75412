import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dispatchlab.errors import InvalidInputError, UnsupportedTopologyError
from dispatchlab.network import Injection, Network, branch_flows, radial_shift_factors


def test_single_bus_has_no_flows():
    net = Network.single_bus()
    z = branch_flows(net, Injection([120.0], [120.0]))
    assert z.shape == (0,)
    assert not net.congestable


def test_two_bus_flows_by_hand():
    net = Network(np.array([[1.0, 0.0], [-1.0, 0.0]]), [60.0, 60.0])
    z = branch_flows(net, Injection([60.0, 40.0], [0.0, 100.0]))
    np.testing.assert_array_equal(z, [60.0, -60.0])


def test_balanced_injection_gives_zero_flow():
    net = Network.radial([("1", "2"), ("2", "3")], "2", [50.0, 50.0])
    q = np.array([10.0, 20.0, 30.0])
    np.testing.assert_array_equal(branch_flows(net, Injection(q, q)), 0.0)


def test_radial_two_bus():
    S = radial_shift_factors([("1", "2")], "2")
    np.testing.assert_array_equal(S, [[1.0, 0.0], [-1.0, 0.0]])


def test_radial_three_bus_chain():
    S = radial_shift_factors([("1", "2"), ("3", "2")], "2", ["1", "2", "3"])
    np.testing.assert_array_equal(S[:2], [[1, 0, 0], [-1, 0, 0]])
    np.testing.assert_array_equal(S[2:], [[0, 0, 1], [0, 0, -1]])


def test_line_toward_leaf_is_negative_of_leaf_injection():
    S = radial_shift_factors([("2", "1")], "2", ["1", "2"])
    np.testing.assert_array_equal(S, [[-1.0, 0.0], [1.0, 0.0]])


@pytest.mark.parametrize("lines", [
    [("1", "2"), ("2", "3"), ("3", "1")],
    [("1", "2")],
])
def test_non_tree_rejected(lines):
    with pytest.raises(UnsupportedTopologyError):
        radial_shift_factors(lines, "1", ["1", "2", "3"])


def test_dimension_mismatch():
    net = Network.radial([("1", "2")], "2", [60.0])
    with pytest.raises(InvalidInputError):
        branch_flows(net, Injection([1.0, 2.0, 3.0], [0.0, 0.0, 0.0]))
    with pytest.raises(InvalidInputError):
        Network(np.zeros((2, 2)), [1.0])


def test_negative_demand_rejected():
    with pytest.raises(InvalidInputError):
        Injection([0.0], [-1.0])


def test_with_line_limit_sets_both_directions():
    net = Network.radial([("1", "2"), ("3", "2")], "2", [60.0, 70.0]).with_line_limit(1, 5.0)
    np.testing.assert_array_equal(net.line_limits, [60.0, 60.0, 5.0, 5.0])


def _random_tree(draw, M):
    parents = [draw(st.integers(0, k - 1)) for k in range(1, M)]
    return [(str(p + 1), str(k + 1)) for k, p in zip(range(1, M), parents)]


@st.composite
def trees(draw):
    M = draw(st.integers(2, 7))
    lines = _random_tree(draw, M)
    ref = str(draw(st.integers(1, M)))
    return M, lines, ref


@given(trees())
def test_shift_factor_entries_and_reference_column(case):
    M, lines, ref = case
    buses = [str(m + 1) for m in range(M)]
    S = radial_shift_factors(lines, ref, buses)
    assert S.shape == (2 * len(lines), M)
    assert set(np.unique(S)) <= {-1.0, 0.0, 1.0}
    np.testing.assert_array_equal(S[0::2], -S[1::2])
    np.testing.assert_array_equal(S[:, buses.index(ref)], 0.0)


@given(trees(), st.data())
def test_flows_are_linear_and_conserve(case, data):
    M, lines, ref = case
    buses = [str(m + 1) for m in range(M)]
    net = Network.radial(lines, ref, [100.0] * len(lines), buses)
    vec = st.lists(st.floats(0, 500, allow_nan=False), min_size=M, max_size=M)
    q1, q2, d = (np.array(data.draw(vec)) for _ in range(3))
    z1 = branch_flows(net, Injection(q1, d))
    z2 = branch_flows(net, Injection(q2, d))
    z12 = branch_flows(net, Injection(q1 + q2, 2 * d))
    np.testing.assert_allclose(z12, z1 + z2, atol=1e-9)
    # leaf bus: its net injection flows entirely over its single line
    degree = {b: 0 for b in buses}
    for a, b in lines:
        degree[a] += 1
        degree[b] += 1
    for k, (a, b) in enumerate(lines):
        net_inj = q1 - d
        if degree[b] == 1 and b != ref:
            assert z1[2 * k] == pytest.approx(-net_inj[buses.index(b)], abs=1e-9)
        elif degree[a] == 1 and a != ref:
            assert z1[2 * k] == pytest.approx(net_inj[buses.index(a)], abs=1e-9)
