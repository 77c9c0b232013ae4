"""Circuit graphs and the text circuit format.

File format::

    # comment
    n m p
    gate_id op child_a child_b

Input nodes are ``1..n`` (node ``i`` belongs to player ``i``), gate ``g`` is
node ``n + g`` and gate 1 is the output. ``op`` is ``ADD`` or ``MUL``. A
child is a node id or a public constant written ``c<value>`` (``c7``).
Constants stay attached to the gate that uses them instead of becoming
nodes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

from ..field import MERSENNE_31
from ..quorum import quorum_of_node

OPS = ("ADD", "MUL")
MAX_FANOUT = 2


class ParseError(ValueError):
    pass


class FanInViolation(ValueError):
    pass


class CycleDetected(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    op: str
    a: tuple  # ("node", id) or ("const", value)
    b: tuple

    def children(self) -> list[int]:
        return [ref[1] for ref in (self.a, self.b) if ref[0] == "node"]


@dataclass
class CircuitGraph:
    n: int
    m: int
    p: int = MERSENNE_31
    gates: dict = field(default_factory=dict)  # node id -> Gate
    parents: dict = field(default_factory=dict)  # node id -> [(parent, side)]
    height: dict = field(default_factory=dict)
    order: list = field(default_factory=list)  # gate nodes, children first

    @property
    def output(self) -> int:
        return self.n + 1

    @property
    def nodes(self) -> list[int]:
        return list(range(1, self.n + self.m + 1))

    def is_input(self, v: int) -> bool:
        return 1 <= v <= self.n

    def quorum(self, v: int) -> int:
        return quorum_of_node(v, self.n)

    def depth(self) -> int:
        return self.height[self.output]

    def evaluate(self, inputs: Sequence[int]) -> dict:
        """Every node's value in the clear; ``inputs[i-1]`` is player i's input."""
        if len(inputs) != self.n:
            raise ValueError(f"need {self.n} inputs, got {len(inputs)}")
        p = self.p
        val = {i: inputs[i - 1] % p for i in range(1, self.n + 1)}

        def ref(r):
            return r[1] % p if r[0] == "const" else val[r[1]]

        for v in self.order:
            g = self.gates[v]
            a, b = ref(g.a), ref(g.b)
            val[v] = (a + b) % p if g.op == "ADD" else a * b % p
        return val

    def output_value(self, inputs: Sequence[int]) -> int:
        return self.evaluate(inputs)[self.output]

    def to_text(self) -> str:
        def tok(r):
            return f"c{r[1]}" if r[0] == "const" else str(r[1])

        lines = [f"{self.n} {self.m} {self.p}"]
        for g in range(1, self.m + 1):
            gate = self.gates[self.n + g]
            lines.append(f"{g} {gate.op} {tok(gate.a)} {tok(gate.b)}")
        return "\n".join(lines) + "\n"


_CONST = re.compile(r"^c(-?\d+)$")


def _child(token: str, n: int, m: int, lineno: int) -> tuple:
    mc = _CONST.match(token)
    if mc:
        return ("const", int(mc.group(1)))
    try:
        v = int(token)
    except ValueError:
        raise ParseError(f"line {lineno}: bad child reference {token!r}") from None
    if not 1 <= v <= n + m:
        raise ParseError(f"line {lineno}: node {v} out of range 1..{n + m}")
    return ("node", v)


def build_graph(n: int, m: int, p: int, gates: dict) -> CircuitGraph:
    """Validate fan-in/fan-out and acyclicity; compute heights and order."""
    if n < 1 or m < 1:
        raise ParseError("need at least one input and one gate")
    if set(gates) != set(range(n + 1, n + m + 1)):
        raise ParseError("gates must be numbered 1..m exactly once")
    g = CircuitGraph(n, m, p, dict(gates))
    parents: dict = {v: [] for v in g.nodes}
    for v, gate in gates.items():
        if gate.op not in OPS:
            raise ParseError(f"unknown op {gate.op!r}")
        for side, r in (("L", gate.a), ("R", gate.b)):
            if r[0] == "node":
                if r[1] == v:
                    raise CycleDetected(f"gate node {v} feeds itself")
                parents[r[1]].append((v, side))
    for v in range(n + 1, n + m + 1):
        if len({pv for pv, _ in parents[v]}) > MAX_FANOUT or len(parents[v]) > MAX_FANOUT:
            raise FanInViolation(f"node {v} has fan-out {len(parents[v])} > {MAX_FANOUT}")
    g.parents = parents
    # Kahn's algorithm over gate nodes
    pending = {v: len(gate.children()) for v, gate in gates.items()}
    height = {i: 0 for i in range(1, n + 1)}
    ready = []
    for v, gate in gates.items():
        pending[v] = sum(1 for c in gate.children() if c > n)
        if pending[v] == 0:
            ready.append(v)
    order = []
    ready.sort()
    while ready:
        v = ready.pop()
        gate = gates[v]
        height[v] = 1 + max((height[c] for c in gate.children()), default=0)
        order.append(v)
        for pv, _ in parents[v]:
            pending[pv] -= 1
            if pending[pv] == 0:
                ready.append(pv)
    if len(order) != m:
        raise CycleDetected("gate graph has a cycle")
    g.height = height
    g.order = order
    return g


def parse_circuit(text: str) -> CircuitGraph:
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append((lineno, line.split()))
    if not lines:
        raise ParseError("empty circuit file")
    lineno, head = lines[0]
    if len(head) != 3:
        raise ParseError(f"line {lineno}: header must be 'n m p'")
    try:
        n, m, p = (int(x) for x in head)
    except ValueError:
        raise ParseError(f"line {lineno}: header must be integers") from None
    gates = {}
    for lineno, parts in lines[1:]:
        if len(parts) != 4:
            raise FanInViolation(f"line {lineno}: a gate needs exactly two children") if len(parts) in (3, 5) \
                else ParseError(f"line {lineno}: expected 'gate_id op child_a child_b'")
        gid, op, a, b = parts
        try:
            gi = int(gid)
        except ValueError:
            raise ParseError(f"line {lineno}: bad gate id {gid!r}") from None
        if not 1 <= gi <= m:
            raise ParseError(f"line {lineno}: gate id {gi} out of range 1..{m}")
        if n + gi in gates:
            raise ParseError(f"line {lineno}: duplicate gate {gi}")
        op = op.upper()
        if op not in OPS:
            raise ParseError(f"line {lineno}: unknown op {op!r}")
        gates[n + gi] = Gate(op, _child(a, n, m, lineno), _child(b, n, m, lineno))
    if len(gates) != m:
        raise ParseError(f"header promises {m} gates, found {len(gates)}")
    return build_graph(n, m, p, gates)


def load_circuit(path) -> CircuitGraph:
    with open(path) as fh:
        return parse_circuit(fh.read())
