"""The tau-Counter: asynchronous threshold counting with O(log n) load.

Layout: a root (node 1) and ``D`` collection subtrees, subtree ``j`` being
a complete binary tree of depth ``D + 1 - j`` whose root is node ``j + 1``.
Remaining nodes are numbered level by level, left to right across the
subtrees, starting at ``D + 2``. Leaves are collection nodes; internal nodes
add their children's counts.

Players flag a random leaf of subtree 1. A leaf absorbs ``quota`` flags,
then reports a count to its parent and forwards up to ``cap`` further flags
to random leaves of the next subtree (the root for the last one). The root
credits ``tau / 2^j`` per count from subtree ``j`` and one per direct flag,
using integers scaled by ``2^D``, and starts the Done broadcast down the
binary tree ``k -> 2k, 2k+1`` once the total reaches ``tau``.

:class:`CounterNode` is a pure state machine returning actions so the same
logic drives both single-player actors and quorum actors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

from .simnet import Msg, Process, Simulation, make_scheduler

SID = ("tc",)


class ParamsTooSmall(ValueError):
    pass


class AuditFailure(AssertionError):
    """A trace violates an invariant; ``event`` is the first offending record."""

    def __init__(self, message: str, event=None):
        super().__init__(message)
        self.event = event


@dataclass
class CounterLayout:
    n: int
    tau: int
    D: int
    quota: int
    cap: int
    parent: dict = field(default_factory=dict)
    children: dict = field(default_factory=dict)
    subtree: dict = field(default_factory=dict)  # node -> j (root absent)
    leaves: dict = field(default_factory=dict)  # j -> leaf ids, left to right

    @property
    def nodes(self) -> list[int]:
        return [1] + sorted(self.subtree)

    @property
    def degenerate(self) -> bool:
        return self.D <= 0

    def is_leaf(self, node: int) -> bool:
        return node in self.subtree and not self.children.get(node)

    def credit(self, j: int) -> int:
        """Scaled root credit for a count from subtree ``j``."""
        return self.tau << (self.D - j)

    @property
    def target(self) -> int:
        return self.tau << max(self.D, 0)

    def down_children(self, k: int) -> list[int]:
        return [c for c in (2 * k, 2 * k + 1) if c <= self.n]


def log2n(n: int) -> float:
    return math.log2(n)


def counter_depth(n: int, tau: int) -> int:
    return math.ceil(math.log2(tau / (14 * math.log2(n))))


def build_layout(n: int, tau: int, allow_degenerate: bool = False) -> CounterLayout:
    if n < 2:
        raise ParamsTooSmall("need n >= 2")
    if not n / 2 <= tau <= n:
        raise ParamsTooSmall(f"need n/2 <= tau <= n, got tau={tau}")
    D = counter_depth(n, tau)
    cap = math.ceil(14 * log2n(n))
    if D <= 0:
        if not allow_degenerate:
            raise ParamsTooSmall(f"n={n}, tau={tau} gives D={D} < 1")
        return CounterLayout(n, tau, D, 0, cap)
    # quota * leaves(j) must cover tau / 2^j; 7 log n can exceed what is needed
    quota = min(math.ceil(7 * log2n(n)), math.ceil(tau / 2 ** (D + 1)))
    lay = CounterLayout(n, tau, D, quota, cap)
    # level-order numbering across subtrees
    levels = {j: [[j + 1]] for j in range(1, D + 1)}
    for j in range(1, D + 1):
        lay.subtree[j + 1] = j
        lay.parent[j + 1] = 1
    nxt = D + 2
    for depth in range(1, D + 1):
        for j in range(1, D + 1):
            if depth > D + 1 - j:
                continue
            row = []
            for par in levels[j][-1]:
                kids = [nxt, nxt + 1]
                nxt += 2
                lay.children[par] = kids
                for c in kids:
                    lay.parent[c] = par
                    lay.subtree[c] = j
                row.extend(kids)
            levels[j].append(row)
    for j in range(1, D + 1):
        lay.leaves[j] = levels[j][-1]
    if nxt - 1 > n:
        raise ParamsTooSmall(f"layout needs {nxt - 1} actors but n={n}")
    return lay


# ---------------------------------------------------------------------------
# node state machine


class CounterNode:
    """State of one tree node. Handlers return ``(kind, dest, payload)`` actions.

    Kinds: ``"flag"`` (dest is a node id or the string ``"random:j"`` meaning a
    random leaf of subtree ``j``), ``"count"`` (dest node, payload ``j``),
    ``"done"`` (start the down stage). Every handled flag also yields a
    ``"trace"`` action describing what happened to it.
    """

    def __init__(self, layout: CounterLayout, node: int):
        self.lay = layout
        self.node = node
        self.flags = 0
        self.forwarded = 0
        self.count_sent = False
        self.child_counts: set = set()
        self.sum = 0
        self.done = False

    def on_flag(self, origin) -> list:
        lay = self.lay
        if self.node == 1:
            if self.done:
                return [("trace", None, {"ev": "flag", "origin": origin, "node": 1, "action": "ignored"})]
            self.sum += 1 << max(lay.D, 0)
            acts = [("trace", None, {"ev": "flag", "origin": origin, "node": 1, "action": "credited"})]
            return acts + self._check_root()
        if not lay.is_leaf(self.node):
            return [("trace", None, {"ev": "flag", "origin": origin, "node": self.node, "action": "dropped"})]
        j = lay.subtree[self.node]
        self.flags += 1
        if self.flags <= lay.quota:
            acts = [("trace", None, {"ev": "flag", "origin": origin, "node": self.node, "action": "absorbed"})]
            if self.flags == lay.quota:
                self.count_sent = True
                acts.append(("count", lay.parent[self.node], j))
            return acts
        if self.forwarded < lay.cap:
            self.forwarded += 1
            dest = f"random:{j + 1}" if j < lay.D else 1
            return [
                ("trace", None, {"ev": "flag", "origin": origin, "node": self.node, "action": "forwarded"}),
                ("flag", dest, origin),
            ]
        return [("trace", None, {"ev": "flag", "origin": origin, "node": self.node, "action": "dropped"})]

    def on_count(self, child: int, j: int) -> list:
        lay = self.lay
        if self.node == 1:
            if self.done or child in self.child_counts or lay.parent.get(child) != 1:
                return []
            self.child_counts.add(child)
            self.sum += lay.credit(lay.subtree[child])
            acts = [("trace", None, {"ev": "credit", "node": 1, "from": child, "j": lay.subtree[child]})]
            return acts + self._check_root()
        kids = lay.children.get(self.node, [])
        if child not in kids or child in self.child_counts:
            return []
        self.child_counts.add(child)
        if len(self.child_counts) == 2 and not self.count_sent:
            self.count_sent = True
            return [("count", lay.parent[self.node], lay.subtree[self.node])]
        return []

    def _check_root(self) -> list:
        if not self.done and self.sum >= self.lay.target:
            self.done = True
            return [("trace", None, {"ev": "done", "sum_scaled": self.sum, "scale": 1 << max(self.lay.D, 0)}),
                    ("done", None, None)]
        return []


# ---------------------------------------------------------------------------
# single-player actors


class TCounterPlayer(Process):
    """Player ``pid`` acts for node ``pid`` (if it exists) and owns one input bit."""

    def __init__(self, layout: CounterLayout, pid: int, bit: bool, trace: list | None):
        self.lay = layout
        self.bit = bit
        self.trace = trace
        self.node = CounterNode(layout, pid) if pid == 1 or pid in layout.subtree else None
        self.done = False
        self.flag_sent = False
        self.rng = None

    def start(self):
        self.rng = self.sim.player_rng(self.pid, "tc")
        if self.bit:
            self.set_bit()

    def set_bit(self):
        if self.flag_sent:
            return
        self.flag_sent = True
        if self.trace is not None:
            self.trace.append({"ev": "input", "origin": self.pid})
        if self.lay.degenerate:
            self.send(1, SID, "FLAG", (self.pid,))
        else:
            self.send(self._random_leaf(1), SID, "FLAG", (self.pid,))

    def _random_leaf(self, j):
        leaves = self.lay.leaves[j]
        return leaves[self.rng.randrange(len(leaves))]

    def on_message(self, msg: Msg):
        tag = msg.tag
        if tag == "DONE":
            self._done()
            return
        if self.node is None:
            return
        if tag == "FLAG":
            acts = self.node.on_flag(msg.payload[0])
        elif tag == "COUNT":
            acts = self.node.on_count(msg.sender, msg.payload[0])
        else:
            return
        self._act(acts)

    def _act(self, acts):
        for kind, dest, payload in acts:
            if kind == "trace":
                if self.trace is not None:
                    self.trace.append(payload)
            elif kind == "flag":
                if isinstance(dest, str):
                    dest = self._random_leaf(int(dest.split(":")[1]))
                self.send(dest, SID, "FLAG", (payload,))
            elif kind == "count":
                self.send(dest, SID, "COUNT", (payload,))
            elif kind == "done":
                self._done()

    def _done(self):
        if self.done:
            return
        self.done = True
        if self.trace is not None:
            self.trace.append({"ev": "down", "player": self.pid})
        for c in self.lay.down_children(self.pid):
            self.send(c, SID, "DONE", ())


@dataclass
class CounterRun:
    layout: CounterLayout
    ones: int
    done_all: bool
    done_issued: bool
    metrics: object
    trace: list | None
    max_load: int

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.trace or [])


def run_counter(
    n: int,
    tau: int,
    ones: Iterable[int],
    strategy: str = "fifo",
    seed: int = 0,
    trace: bool = True,
    allow_degenerate: bool = False,
) -> CounterRun:
    """Player-mode run where players in ``ones`` set their bit at the start."""
    lay = build_layout(n, tau, allow_degenerate)
    ones = frozenset(ones)
    tr: list | None = [] if trace else None
    procs = {pid: TCounterPlayer(lay, pid, pid in ones, tr) for pid in range(1, n + 1)}
    sim = Simulation(procs, n, scheduler=make_scheduler(strategy, seed), seed=seed, step_budget=50 * n * 30)
    m = sim.run_until()
    root = procs[1].node
    load = max(max(m.msgs_sent[i], m.msgs_received[i]) for i in range(1, n + 1))
    return CounterRun(lay, len(ones), all(p.done for p in procs.values()), root.done, m, tr, load)


# ---------------------------------------------------------------------------
# lineage audit


def audit_trace(layout: CounterLayout, events: Iterable[dict]) -> dict:
    """Check flag lineage and root soundness; raises :class:`AuditFailure`."""
    inputs: set = set()
    terminal: dict = {}
    absorbed_by_subtree: dict = {}
    counted_sum = 0
    scale = 1 << max(layout.D, 0)
    for ev in events:
        kind = ev.get("ev")
        if kind == "input":
            if ev["origin"] in inputs:
                raise AuditFailure("player set its bit twice", ev)
            inputs.add(ev["origin"])
        elif kind == "flag":
            o = ev["origin"]
            if o not in inputs:
                raise AuditFailure("flag without a matching input", ev)
            if ev["action"] in ("absorbed", "credited"):
                if o in terminal:
                    raise AuditFailure("flag counted twice", ev)
                terminal[o] = ev
                if ev["action"] == "absorbed":
                    j = layout.subtree[ev["node"]]
                    absorbed_by_subtree[j] = absorbed_by_subtree.get(j, 0) + 1
                else:
                    counted_sum += scale
        elif kind == "credit":
            j = ev["j"]
            # a subtree-j count certifies at least tau / 2^j absorbed flags
            if absorbed_by_subtree.get(j, 0) * 2**j < layout.tau:
                raise AuditFailure(f"count from subtree {j} not backed by absorbed flags", ev)
            counted_sum += layout.credit(j)
        elif kind == "done":
            if ev["sum_scaled"] != counted_sum:
                raise AuditFailure("root sum does not match the credited events", ev)
            if counted_sum > len(inputs) * scale:
                raise AuditFailure("root sum exceeds the number of set bits", ev)
    return {"inputs": len(inputs), "counted": len(terminal), "soundness": True, "lineage": True}
