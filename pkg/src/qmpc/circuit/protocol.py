"""End-to-end quorum-based evaluation of a circuit.

Phases, all message driven and overlapping:

* input commitment: player ``i`` deals an AVSS of a mask ``r_i`` to quorum
  ``i`` and reliably broadcasts ``x_i + r_i``; the quorum agrees (BA) on
  whether the commitment stands and, if so, flags the threshold counter;
* threshold counting over quorums, then Done down the quorum tree, which
  makes quorums of uncommitted inputs vote to drop them;
* mask generation: each quorum agrees on a common subset of dealings that
  provide the bivariate mask of every gate node it owns (plus zero-sharing
  randomness for multiplications);
* gate evaluation: a child quorum hands its masked value and row points of
  its mask to the parent quorum, which derives shares of the child values,
  adds its own mask and opens the masked gate value;
* output reconstruction in quorum 1, the size of the input set summed up
  the quorum tree, and the result pushed back down to every player.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Sequence

from ..agreement import BaSession, RbcSession
from ..field import PrimeField
from ..hwmpc import AcsDealing, HwMpcSession, coin_program, random_quorum_choice
from ..node import Host
from ..quorum import QuorumInbox, QuorumTable, create_quorums
from ..sharing import AvssSession, OpenSession, avss_rec, decode_vectors
from ..simnet import BadFractionExceeded, bad_bound, derive_seed, make_scheduler, spawn
from ..tcounter import AuditFailure, CounterLayout, CounterNode, build_layout
from .graph import CircuitGraph


@dataclass
class Setup:
    """Public parameters every player knows."""

    graph: CircuitGraph
    table: QuorumTable
    d: int
    f: int
    tau: int
    layout: CounterLayout
    field: PrimeField
    default_input: int = 0
    slots: dict = field(default_factory=dict)  # quorum -> {node: first slot}
    slot_count: dict = field(default_factory=dict)

    def __post_init__(self):
        g = self.graph
        for k in range(1, g.n + 1):
            self.slots[k] = {}
            self.slot_count[k] = 0
        for v in range(g.n + 1, g.n + g.m + 1):
            k = g.quorum(v)
            self.slots[k][v] = self.slot_count[k]
            self.slot_count[k] += 3 if g.gates[v].op == "MUL" else 1

    def members(self, k: int) -> list[int]:
        return self.table.members(k)


class MpcPlayer(Host):
    def __init__(self, setup: Setup, pid: int, x: int, events: list | None = None):
        super().__init__()
        self.S = setup
        self.x = x % setup.field.p
        self.events = events
        self.pos: dict = {}  # quorum -> my abscissa there
        self.inboxes: dict = {}
        # commitment
        self.ic: dict = {}  # k -> dict(avss, rbc, ba, voted, b)
        self.b: dict = {}
        # node state, for nodes of my quorums
        self.yhat: dict = {}
        self.mask_row: dict = {}
        self.mask_share: dict = {}
        self.zero_shares: dict = {}
        self.gates: dict = {}
        self.mask_ready: set = set()
        # counter, done, size, output
        self.counter: dict = {}
        self.overflow: dict = {}
        self.done_q: set = set()
        self.sizes: dict = {}
        self.size_sent: set = set()
        self.S_size: int | None = None
        self.O: int | None = None
        self.out_sent: set = set()
        self.result: tuple | None = None
        for prefix in ("tc", "dn", "sz", "out", "res"):
            self.routers[prefix] = self._route

    # -- bookkeeping -------------------------------------------------------
    def log(self, **ev):
        if self.events is not None:
            ev["player"] = self.pid
            self.events.append(ev)

    def qsend(self, to_q: int, sid, tag: str, payload: tuple = ()) -> None:
        for pid in self.S.members(to_q):
            self.send(pid, sid, tag, payload)

    def _route(self, msg):
        sid = msg.sid
        kind = sid[0]
        if kind == "res":
            senders = self.S.members(sid[1])
        elif kind == "dn":
            senders = self.S.members(sid[1] // 2)
        elif kind == "sz":
            senders = self.S.members(sid[1])
        elif kind == "out":
            senders = self.S.members(sid[1] // 2)
        else:  # ("tc", what, from_q, ..., to_node)
            senders = self.S.members(sid[2])
        box = self.inboxes.get(sid)
        if box is None:
            box = self.inboxes[sid] = QuorumInbox(senders)
        got = box.offer(msg.sender, (msg.tag,) + tuple(msg.payload))
        if got is not None:
            self._accepted(sid, got[0], got[1:])

    def _accepted(self, sid, tag, payload):
        kind = sid[0]
        if kind == "res":
            if sid[1] == self.pid and self.result is None and len(payload) == 3:
                self.result = tuple(payload[:2])
                self.log(ev="result", output=payload[0], size=payload[1])
        elif kind == "dn":
            if sid[1] in self.pos:
                self._on_done(sid[1])
        elif kind == "sz":
            parent = sid[1] // 2
            if parent in self.pos and len(payload) == 1:
                self.sizes.setdefault(parent, {})[sid[1]] = payload[0]
                self._try_size(parent)
        elif kind == "out":
            if sid[1] in self.pos and len(payload) == 2:
                self._on_out(sid[1], payload[0], payload[1])
        elif kind == "tc":
            self._counter_msg(sid, tag, payload)

    # -- start ---------------------------------------------------------------
    def start(self):
        S = self.S
        my_q = S.table.quorums_of(self.pid)
        for k in my_q:
            self.pos[k] = S.members(k).index(self.pid) + 1
        for k in my_q:
            self._setup_commit(k)
        if self.pid not in self.ic:
            self._setup_commit(self.pid)
        self._deal_input()
        for k in my_q:
            self._setup_quorum(k)

    # -- input commitment ------------------------------------------------------
    def _setup_commit(self, k):
        S = self.S
        members = S.members(k)
        st = {"voted": False, "rbc": None}
        st["avss"] = self.add_session(
            AvssSession(self, ("ic", k, "avss"), k, members, S.d, S.f, 1, S.field,
                        on_complete=lambda sh, k=k: self._ic_progress(k),
                        on_complaint=lambda k=k: self._ic_vote(k, 0))
        )
        st["rbc_s"] = self.add_session(
            RbcSession(self, ("ic", k, "rbc"), k, members, S.f, on_deliver=lambda pl, k=k: self._ic_delivered(k, pl))
        )
        if k in self.pos:
            st["ba"] = self.add_session(
                BaSession(self, ("ic", k, "ba"), members, S.f, on_decide=lambda b, k=k: self._ic_decided(k, b))
            )
        self.ic[k] = st

    def _deal_input(self):
        st = self.ic[self.pid]
        rng = self.sim.player_rng(self.pid, "input")
        p = self.S.field.p
        r = rng.randrange(p)
        st["avss"].deal([r], rng)
        st["rbc_s"].broadcast(((self.x + r) % p,))
        self.log(ev="commit_sent", input=self.pid)

    def _ic_delivered(self, k, payload):
        if len(payload) == 1 and 0 <= payload[0] < self.S.field.p:
            self.ic[k]["rbc"] = payload[0]
        self._ic_progress(k)

    def _ic_progress(self, k):
        st = self.ic[k]
        if st["rbc"] is not None and st["avss"].result is not None:
            self._ic_vote(k, 1)
            if self.b.get(k) == 1:
                self._finalize_input(k)

    def _ic_vote(self, k, bit):
        st = self.ic[k]
        if k not in self.pos or st["voted"]:
            return
        st["voted"] = True
        st["ba"].propose(bit)

    def _ic_decided(self, k, bit):
        self.b[k] = bit
        self.log(ev="commit_decided", input=k, b=bit)
        if bit == 1:
            self._flag(k)
        self._finalize_input(k)
        self._try_size(k)

    def _finalize_input(self, k):
        if k in self.yhat:
            return
        st = self.ic[k]
        d = self.S.d
        if self.b[k] == 1:
            res = st["avss"].result
            if res is None or st["rbc"] is None:
                return  # committed; our copy is still on its way
            self.yhat[k] = st["rbc"]
            self.mask_row[k] = res.rows[0]
            self.mask_share[k] = res.cols[0][0]
        else:
            self.yhat[k] = self.S.default_input % self.S.field.p
            self.mask_row[k] = [0] * (d + 1)
            self.mask_share[k] = 0
        self._node_ready(k)

    # -- threshold counter over quorums ------------------------------------------
    def _flag(self, k):
        lay = self.S.layout
        if lay.degenerate:
            self.qsend(1, ("tc", "in", k, 1), "FLAG")
            return
        leaves = lay.leaves[1]
        if len(leaves) == 1:
            self.qsend(leaves[0], ("tc", "in", k, leaves[0]), "FLAG")
            return
        self._coin(("coin", "in", k), k, lambda c, k=k: self._flag_to(("tc", "in", k), leaves, c))

    def _flag_to(self, base, targets, coin):
        dest = random_quorum_choice(coin, targets)
        self.qsend(dest, base + (dest,), "FLAG")

    def _coin(self, sid, k, then):
        S = self.S
        sess = HwMpcSession(self, sid, S.members(k), S.d, S.f, coin_program(True), (), S.field,
                            on_output=lambda v: then(v[0]))
        sess.start(self.sim.player_rng(self.pid, *sid))

    def _counter_node(self, node):
        c = self.counter.get(node)
        if c is None:
            c = self.counter[node] = CounterNode(self.S.layout, node)
        return c

    def _counter_msg(self, sid, tag, payload):
        dest = sid[-1]
        if dest not in self.pos:
            return
        node = self._counter_node(dest)
        if tag == "FLAG":
            origin = sid[1:-1]
            acts = node.on_flag(origin)
        elif tag == "COUNT" and len(payload) == 1:
            acts = node.on_count(sid[2], payload[0])
        else:
            return
        for kind, to, pl in acts:
            if kind == "trace":
                self.log(what=pl["ev"], **{k: v for k, v in pl.items() if k != "ev"}, ev="counter")
            elif kind == "count":
                self.qsend(to, ("tc", "ct", dest, to), "COUNT", (pl,))
            elif kind == "flag":
                ix = self.overflow[dest] = self.overflow.get(dest, 0) + 1
                base = ("tc", "fw", dest, ix)
                if isinstance(to, str):
                    j = int(to.split(":")[1])
                    leaves = self.S.layout.leaves[j]
                    self._coin(("coin", "fw", dest, ix), dest, lambda c, b=base, l=leaves: self._flag_to(b, l, c))
                else:
                    self.qsend(to, base + (to,), "FLAG")
            elif kind == "done":
                self._on_done(1)

    def _on_done(self, k):
        if k in self.done_q:
            return
        self.done_q.add(k)
        self.log(ev="done", quorum=k)
        if k == 1 and self.events is not None:
            root = self.counter.get(1)
            if root is not None:
                self.log(ev="done_sum", flags=root.sum >> max(self.S.layout.D, 0))
        self._ic_vote(k, 0)
        for c in self.S.layout.down_children(k):
            self.qsend(c, ("dn", c), "DONE")

    # -- mask generation and gates ---------------------------------------------
    def _setup_quorum(self, k):
        S = self.S
        g = S.graph
        nodes = S.slots[k]
        if not nodes:
            return
        for v in nodes:
            self.gates[v] = self.add_session(GateSession(self, v, k))
        acs = AcsDealing(self, ("mg", k), S.members(k), S.d, S.f, S.slot_count[k], S.field,
                         on_done=lambda inc, sh, k=k: self._masks(k, inc, sh))
        rng = self.sim.player_rng(self.pid, "mask", k)
        acs.deal([rng.randrange(S.field.p) for _ in range(S.slot_count[k])], rng)

    def _masks(self, k, included, shares):
        S = self.S
        p = S.field.p
        d = S.d
        n_slots = S.slot_count[k]
        rows = [[0] * (d + 1) for _ in range(n_slots)]
        sh = [0] * n_slots
        for dl in included:
            b = shares[dl]
            for s in range(n_slots):
                r, acc = b.rows[s], rows[s]
                for u in range(d + 1):
                    acc[u] = (acc[u] + r[u]) % p
                sh[s] = (sh[s] + b.cols[s][0]) % p
        self.work(len(included) * n_slots * (d + 2))
        for v, s0 in S.slots[k].items():
            self.mask_row[v] = rows[s0]
            self.mask_share[v] = sh[s0]
            if S.graph.gates[v].op == "MUL":
                self.zero_shares[v] = (sh[s0 + 1], sh[s0 + 2])
            self.mask_ready.add(v)
            self.gates[v].progress()

    def _node_ready(self, c):
        """Masked value and mask row of node ``c`` are final here: hand them on."""
        S = self.S
        g = S.graph
        k = g.quorum(c)
        me = self.pos[k]
        yh = self.yhat[c]
        row = self.mask_row[c]
        self.log(ev="node", v=c, yhat=yh, x=me, share=self.mask_share[c])
        vals = S.field.eval_table([row], range(1, S.table.q + 1)) if g.parents[c] else None
        for v, side in g.parents[c]:
            kv = g.quorum(v)
            tag = "XFER_" + side
            for pid, val in zip(S.members(kv), vals):
                self.send(pid, ("ge", v), tag, (yh, val[0]))
        self.work(len(g.parents[c]) * S.table.q * (S.d + 1))
        if c == g.output:
            sess = self.add_session(
                OpenSession(self, ("or",), S.members(1), S.members(1), S.d, S.d + S.f + 1, S.field,
                            on_open=lambda v: self._output(v[0]), tag="OUT_REC")
            )
            sess.contribute([self.mask_share[c]])

    # -- output ------------------------------------------------------------------
    def _output(self, r):
        self.O = (self.yhat[self.S.graph.output] - r) % self.S.field.p
        self.log(ev="output_rec", output=self.O)
        self._try_out()

    def _try_size(self, k):
        if k not in self.pos or k in self.size_sent or k not in self.b:
            return
        kids = self.S.layout.down_children(k)
        got = self.sizes.get(k, {})
        if any(c not in got for c in kids):
            return
        self.size_sent.add(k)
        total = self.b[k] + sum(got[c] for c in kids)
        if k == 1:
            self.S_size = total
            self.log(ev="size", size=total)
            self._try_out()
        else:
            self.qsend(k // 2, ("sz", k), "SUM", (total,))

    def _try_out(self):
        if 1 in self.pos and self.O is not None and self.S_size is not None:
            self._on_out(1, self.O, self.S_size)

    def _on_out(self, k, O, size):
        if k in self.out_sent:
            return
        self.out_sent.add(k)
        for c in self.S.layout.down_children(k):
            self.qsend(c, ("out", c), "OUT", (O, size))
        self.send(k, ("res", k), "RESULT", (O, size, self.b.get(k, 0)))


class GateSession:
    """Member-side evaluation of gate node ``v`` in its quorum ``k``."""

    def __init__(self, host: MpcPlayer, v: int, k: int):
        self.host = host
        self.sid = ("ge", v)
        self.v = v
        S = host.S
        self.S = S
        self.gate = S.graph.gates[v]
        self.me = host.pos[k]
        self.k = k
        self.xs: dict = {}
        self.boxes: dict = {}
        self.points: dict = {}
        self.child_pos: dict = {}
        self.yh: dict = {}
        self.opened = False
        p = S.field.p
        for side, ref in (("L", self.gate.a), ("R", self.gate.b)):
            if ref[0] == "const":
                self.xs[side] = ref[1] % p
            else:
                members = S.members(S.graph.quorum(ref[1]))
                self.child_pos[side] = {pid: i + 1 for i, pid in enumerate(members)}
                self.boxes[side] = QuorumInbox(members)
                self.points[side] = {}

    def on_message(self, sender, tag, payload):
        if tag not in ("XFER_L", "XFER_R") or len(payload) != 2:
            return
        side = tag[-1]
        if side in self.xs or side not in self.boxes:
            return
        pos = self.child_pos[side].get(sender)
        if pos is None or sender in self.points[side]:
            return
        self.points[side][sender] = payload[1]
        got = self.boxes[side].offer(sender, payload[0])
        if got is not None:
            self.yh[side] = got
        self._try_side(side)

    def _try_side(self, side):
        S = self.S
        if side not in self.yh:
            return
        pts = self.points[side]
        need = S.d + S.f + 1
        if len(pts) < need:
            return
        cp = self.child_pos[side]
        val = decode_vectors(S.field, [(cp[s], (y,)) for s, y in pts.items()], S.d, need)
        self.host.work(len(pts) * (S.d + 1))
        if val is None:
            return
        self.xs[side] = (self.yh[side] - val[0]) % S.field.p
        self.progress()

    def progress(self):
        host, S = self.host, self.S
        if self.opened or len(self.xs) < 2 or self.v not in host.mask_ready:
            return
        self.opened = True
        p = S.field.p
        xl, xr = self.xs["L"], self.xs["R"]
        r = host.mask_share[self.v]
        if self.gate.op == "ADD":
            u, deg = (xl + xr + r) % p, S.d
        else:
            a, b = host.zero_shares[self.v]
            z = (self.me * a + pow(self.me, S.d, p) * b) % p if S.d else 0
            u, deg = (xl * xr + r + z) % p, 2 * S.d
        host.work(6)
        members = S.members(self.k)
        sess = host.add_session(
            OpenSession(host, ("go", self.v), members, members, deg, deg + S.f + 1, S.field,
                        on_open=self._opened, tag="GATE_OPEN")
        )
        sess.contribute([u])

    def _opened(self, vals):
        host = self.host
        host.yhat[self.v] = vals[0]
        host._node_ready(self.v)


# ---------------------------------------------------------------------------
# running and auditing


@dataclass
class MpcResult:
    setup: Setup
    inputs: list
    bad: frozenset
    outputs: dict  # good player -> (output, |S|) or None
    committed: dict  # input k -> agreed bit
    effective: dict  # input k -> effective input value
    expected: int
    metrics: object
    trace: list | None

    @property
    def good(self) -> list[int]:
        return [i for i in range(1, self.setup.graph.n + 1) if i not in self.bad]

    @property
    def all_terminated(self) -> bool:
        return all(self.outputs.get(i) is not None for i in self.good)

    @property
    def correct(self) -> bool:
        return self.all_terminated and all(self.outputs[i][0] == self.expected for i in self.good)

    @property
    def size(self) -> int:
        return sum(self.committed.values())

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True, default=list) + "\n" for e in self.trace or [])


def make_setup(graph: CircuitGraph, table: QuorumTable, t: int, default_input: int = 0) -> Setup:
    q = table.q
    d = math.ceil(q / 4) - 1
    layout = build_layout(graph.n, graph.n - t, allow_degenerate=True)
    return Setup(graph, table, d, d, graph.n - t, layout, PrimeField(graph.p), default_input)


def pick_bad(n: int, t: int, seed: int) -> frozenset:
    return frozenset(random.Random(derive_seed("bad", seed, n)).sample(range(1, n + 1), t))


def run_mpc(
    graph: CircuitGraph,
    inputs: Sequence[int],
    t: int | None = None,
    bad: Sequence[int] | None = None,
    adversary: str = "crash",
    strategy: str = "fifo",
    seed: int = 0,
    epsilon: float = 0.01,
    delta: float = 0.05,
    c: float = 2.0,
    c_lb: float = 4.0,
    default_input: int = 0,
    trace: bool = True,
    table: QuorumTable | None = None,
    step_budget: int = 50_000_000,
) -> MpcResult:
    """Evaluate ``graph`` on ``inputs`` with ``t`` bad players behaving as ``adversary``."""
    n = graph.n
    if len(inputs) != n:
        raise ValueError(f"need {n} inputs")
    if t is None:
        t = bad_bound(n, epsilon) if bad is None else len(bad)
    bad = pick_bad(n, t, seed) if bad is None else frozenset(bad)
    if len(bad) > t:
        raise BadFractionExceeded(f"{len(bad)} bad players exceeds t={t}")
    if table is None:
        table = create_quorums(n, bad, t, delta, c, seed, c_lb)
    setup = make_setup(graph, table, t, default_input)
    events: list | None = [] if trace else None
    # the audit needs node records even when the caller does not want a trace
    log = events if events is not None else []
    sim = spawn(
        n, bad, {b: adversary for b in bad},
        lambda pid: MpcPlayer(setup, pid, inputs[pid - 1], log),
        scheduler=make_scheduler(strategy, seed), seed=seed, step_budget=step_budget, p=graph.p,
    )
    metrics = sim.run_until()
    procs = sim.processes
    good = [i for i in range(1, n + 1) if i not in bad]
    committed = {}
    for k in range(1, n + 1):
        bits = {procs[pid].b.get(k) for pid in table.members(k) if pid not in bad}
        committed[k] = bits.pop() if len(bits) == 1 else None
    effective = effective_inputs(setup, log, bad)
    eff = [effective.get(k, default_input) for k in range(1, n + 1)]
    return MpcResult(
        setup, list(inputs), bad,
        {i: procs[i].result for i in good},
        committed, effective, graph.output_value(eff), metrics, events,
    )


def _node_records(events, bad) -> dict:
    recs: dict = {}
    for ev in events:
        if ev.get("ev") == "node" and ev["player"] not in bad:
            recs.setdefault(ev["v"], []).append(ev)
    return recs


def effective_inputs(setup: Setup, events, bad=()) -> dict:
    """Input k's value as fixed by the commitment: agreed masked value minus the mask."""
    recs = _node_records(events, frozenset(bad))
    p = setup.field.p
    out = {}
    for k in range(1, setup.graph.n + 1):
        rs = recs.get(k)
        if not rs:
            continue
        r = avss_rec([(e["x"], [e["share"]]) for e in rs], setup.d, setup.table.q, setup.field)[0]
        out[k] = (rs[0]["yhat"] - r) % p
    return out


def audit_masks(setup: Setup, events, bad=(), effective: dict | None = None) -> int:
    """Check avss_rec(r_v) + y_v == yhat_v for every node; returns nodes checked.

    Good members of one quorum must also agree on each node's masked value.
    """
    bad = frozenset(bad)
    g = setup.graph
    if effective is None:
        effective = effective_inputs(setup, events, bad)
    vals = g.evaluate([effective.get(k, setup.default_input) for k in range(1, g.n + 1)])
    p = setup.field.p
    checked = 0
    for v, rs in sorted(_node_records(events, bad).items()):
        yh = {e["yhat"] for e in rs}
        if len(yh) != 1:
            raise AuditFailure(f"members disagree on the masked value of node {v}", rs[0])
        r = avss_rec([(e["x"], [e["share"]]) for e in rs], setup.d, setup.table.q, setup.field)[0]
        if (r + vals[v]) % p != rs[0]["yhat"]:
            raise AuditFailure(f"mask invariant broken at node {v}", rs[0])
        checked += 1
    return checked
