import random

import pytest
from hypothesis import given, settings, strategies as st

from qmpc.circuit.families import addition_tree, inner_product, layered, random_dag
from qmpc.circuit.graph import CycleDetected, FanInViolation, ParseError, load_circuit, parse_circuit

P = 2147483647


def test_two_player_add():
    g = parse_circuit("2 1 31\n1 ADD 1 2\n")
    assert g.nodes == [1, 2, 3]
    assert [g.height[v] for v in g.nodes] == [0, 0, 1]
    assert g.output == 3 and g.quorum(g.output) == 1
    assert g.output_value([3, 4]) == 7


def test_node_quorum_mod_n():
    g = addition_tree(16)
    assert g.quorum(16 + 5) == 5 and g.quorum(16) == 16


def test_constants_and_comments():
    g = parse_circuit("# product plus one\n2 2 101\n1 ADD 4 c1  # output\n2 MUL 1 2\n")
    assert g.output_value([5, 6]) == 31
    assert g.gates[3].b == ("const", 1)


def test_round_trip():
    g = random_dag(8, 20, seed=3)
    back = parse_circuit(g.to_text())
    assert back.gates == g.gates and back.height == g.height


@pytest.mark.parametrize(
    "text",
    [
        "",
        "2 1\n1 ADD 1 2\n",
        "2 x 31\n1 ADD 1 2\n",
        "2 1 31\n1 XOR 1 2\n",
        "2 1 31\n1 ADD 1 9\n",
        "2 1 31\n1 ADD 1 foo\n",
        "2 2 31\n1 ADD 1 2\n",
        "2 1 31\n2 ADD 1 2\n",
        "2 2 31\n1 ADD 1 2\n1 ADD 1 2\n",
        "2 1 31\nADD 1 2 3 4 5\n",
    ],
)
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_circuit(text)


def test_fan_in_must_be_two():
    with pytest.raises(FanInViolation):
        parse_circuit("2 1 31\n1 ADD 1\n")
    with pytest.raises(FanInViolation):
        parse_circuit("3 1 31\n1 ADD 1 2 3\n")


def test_fan_out_bounded():
    # gate node 6 feeds gates 1, 2 and 3
    with pytest.raises(FanInViolation):
        parse_circuit("2 4 31\n1 ADD 4 6\n2 ADD 6 2\n3 ADD 6 1\n4 MUL 1 2\n")
    # one parent using node 5 twice plus another parent is three uses
    with pytest.raises(FanInViolation):
        parse_circuit("2 3 31\n1 ADD 4 5\n2 ADD 5 5\n3 MUL 1 2\n")
    # inputs are exempt
    assert parse_circuit("2 2 31\n1 ADD 4 1\n2 MUL 1 1\n").output_value([3, 0]) == 12


def test_cycles_rejected():
    with pytest.raises(CycleDetected):
        parse_circuit("2 1 31\n1 ADD 3 1\n")
    with pytest.raises(CycleDetected):
        parse_circuit("2 2 31\n1 ADD 4 1\n2 ADD 3 2\n")


def test_load_circuit(tmp_path):
    f = tmp_path / "c.txt"
    f.write_text("3 2 101\n1 MUL 5 3\n2 ADD 1 2\n")
    g = load_circuit(f)
    assert g.output_value([1, 2, 10]) == 30


def fanout_ok(g):
    for v in range(g.n + 1, g.n + g.m + 1):
        assert len(g.parents[v]) <= 2
    for v, gate in g.gates.items():
        assert len([gate.a, gate.b]) == 2


@pytest.mark.parametrize("n", [4, 16, 32])
def test_families(n):
    at = addition_tree(n)
    assert at.m == n
    xs = list(range(1, n + 1))
    assert at.output_value(xs) == sum(xs) + 1
    ip = inner_product(n)
    assert ip.m == 2 * n - 1
    assert ip.output_value(xs) == sum(xs[i] * xs[(i + 1) % n] for i in range(n)) % P
    rd = random_dag(n, seed=1)
    assert rd.m == 4 * n
    for g in (at, ip, rd):
        fanout_ok(g)


@pytest.mark.parametrize("d", [2, 4, 8])
def test_layered_depth(d):
    g = layered(32, d)
    assert g.depth() == d
    fanout_ok(g)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(1, 40), st.integers(0, 10**6))
def test_random_dag_properties(n, m, seed):
    g = random_dag(n, m, seed=seed)
    assert g.m == m
    fanout_ok(g)
    order_pos = {v: i for i, v in enumerate(g.order)}
    for v in g.order:
        for c in g.gates[v].children():
            if c > n:
                assert order_pos[c] < order_pos[v]
            assert g.height[c] < g.height[v]
    xs = [random.Random(seed).randrange(P) for _ in range(n)]
    assert parse_circuit(g.to_text()).output_value(xs) == g.output_value(xs)


def test_evaluate_needs_all_inputs():
    with pytest.raises(ValueError):
        addition_tree(4).evaluate([1, 2])
