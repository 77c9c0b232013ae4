"""Deterministic discrete-event asynchronous network.

Players are :class:`Process` objects that react to delivered messages. The
network holds every in-flight message and a :class:`Scheduler` decides which
one is delivered next, so "asynchrony" is just the scheduler's freedom to
reorder. Latency is the causal chain depth of delivered messages: a message
sent while handling a message of depth ``k`` has depth ``k + 1``; messages
sent from ``start`` (or by the harness) have depth 0.

Byzantine players run the honest code, but everything they send passes
through a :class:`Behavior` filter that may drop, equivocate on, or corrupt
the message.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import io
import json
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .field import MERSENNE_31


class BadFractionExceeded(ValueError):
    pass


class NonTermination(RuntimeError):
    pass


class Msg:
    __slots__ = ("sender", "receiver", "sid", "tag", "payload", "depth", "seq")

    def __init__(self, sender, receiver, sid, tag, payload, depth, seq):
        self.sender = sender
        self.receiver = receiver
        self.sid = sid
        self.tag = tag
        self.payload = payload
        self.depth = depth
        self.seq = seq

    def key(self) -> tuple:
        return (self.sender, self.receiver, self.sid, self.tag, self.payload, self.depth)

    def __repr__(self) -> str:
        return (
            f"Msg({self.sender}->{self.receiver} {self.sid} {self.tag} "
            f"{self.payload} d={self.depth})"
        )


def derive_seed(*parts) -> int:
    h = hashlib.blake2b(repr(parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


# ---------------------------------------------------------------------------
# schedulers


class Scheduler:
    """FIFO delivery."""

    name = "fifo"

    def __init__(self, rng: random.Random | None = None):
        self.rng = rng or random.Random(0)
        self._q: deque = deque()

    def push(self, msg: Msg) -> None:
        self._q.append(msg)

    def pop(self) -> Msg:
        return self._q.popleft()

    def __len__(self) -> int:
        return len(self._q)


class RandomDelay(Scheduler):
    """Each message gets an independent random delay in [0, 1)."""

    name = "random"

    def __init__(self, rng=None):
        super().__init__(rng)
        self._heap: list = []
        self._clock = 0.0

    def push(self, msg):
        heapq.heappush(self._heap, (self._clock + self.rng.random(), msg.seq, msg))

    def pop(self):
        t, _, msg = heapq.heappop(self._heap)
        self._clock = t
        return msg

    def __len__(self):
        return len(self._heap)


class MaxChain(Scheduler):
    """Always deliver the deepest in-flight message.

    Extending the current longest causal chain before anything else is the
    greedy way to inflate latency; shallower messages wait until deeper work
    runs dry, which is still fair for protocols that quiesce.
    """

    name = "maxchain"

    def __init__(self, rng=None):
        super().__init__(rng)
        self._heap: list = []

    def push(self, msg):
        heapq.heappush(self._heap, (-msg.depth, self.rng.random(), msg.seq, msg))

    def pop(self):
        return heapq.heappop(self._heap)[-1]

    def __len__(self):
        return len(self._heap)


class TargetedStall(Scheduler):
    """FIFO, except traffic from or to ``targets`` waits until nothing else is in flight."""

    name = "stall"

    def __init__(self, targets: Iterable[int] = (), rng=None):
        super().__init__(rng)
        self.targets = frozenset(targets)
        self._slow: deque = deque()

    def push(self, msg):
        if msg.sender in self.targets or msg.receiver in self.targets:
            self._slow.append(msg)
        else:
            self._q.append(msg)

    def pop(self):
        if self._q:
            return self._q.popleft()
        return self._slow.popleft()

    def __len__(self):
        return len(self._q) + len(self._slow)


class FavorSenders(Scheduler):
    """Wraps another scheduler; messages from ``favored`` senders jump the queue."""

    def __init__(self, inner: Scheduler, favored: Iterable[int]):
        super().__init__(inner.rng)
        self.inner = inner
        self.favored = frozenset(favored)
        self.name = inner.name + "+favor"

    def push(self, msg):
        if msg.sender in self.favored:
            self._q.append(msg)
        else:
            self.inner.push(msg)

    def pop(self):
        if self._q:
            return self._q.popleft()
        return self.inner.pop()

    def __len__(self):
        return len(self._q) + len(self.inner)


STRATEGIES = {"fifo": Scheduler, "random": RandomDelay, "maxchain": MaxChain, "stall": TargetedStall}


def make_scheduler(strategy: str, seed: int = 0, targets: Iterable[int] = ()) -> Scheduler:
    rng = random.Random(derive_seed("scheduler", seed))
    if strategy == "stall":
        return TargetedStall(targets, rng)
    try:
        return STRATEGIES[strategy](rng)
    except KeyError:
        raise ValueError(f"unknown scheduler strategy {strategy!r}") from None


# ---------------------------------------------------------------------------
# Byzantine behaviours


class Behavior:
    """Honest sending; subclasses rewrite outgoing traffic."""

    name = "honest"

    def __init__(self, p: int = MERSENNE_31, seed: int = 0):
        self.p = p
        self.rng = random.Random(derive_seed("behavior", self.name, seed))

    def outgoing(self, msg: Msg) -> list[Msg]:
        return [msg]


class Crash(Behavior):
    """Never sends anything; indistinguishable from infinite delay."""

    name = "crash"

    def outgoing(self, msg):
        return []


class Equivocate(Behavior):
    """Odd-numbered receivers get every payload element shifted by a fixed offset."""

    name = "equivocate"

    def outgoing(self, msg):
        if msg.receiver % 2 == 1 and msg.payload:
            p = self.p
            msg.payload = tuple((v + 1) % p for v in msg.payload)
        return [msg]


# tags carrying share material; WrongShare corrupts only these
SHARE_TAGS = frozenset(
    {"SHARE", "ECHO", "READY", "XFER_L", "XFER_R", "OPEN", "MPC_OPEN", "MPC_OUT", "GATE_OPEN", "OUT_REC"}
)


class WrongShare(Behavior):
    """Replaces share-bearing payloads with random field elements."""

    name = "wrongshare"

    def outgoing(self, msg):
        if msg.tag in SHARE_TAGS and msg.payload:
            p = self.p
            r = self.rng
            msg.payload = tuple((v + 1 + r.randrange(p - 1)) % p for v in msg.payload)
        return [msg]


BEHAVIORS = {"honest": Behavior, "crash": Crash, "equivocate": Equivocate, "wrongshare": WrongShare}


def make_behavior(name: str, p: int = MERSENNE_31, seed: int = 0) -> Behavior:
    try:
        return BEHAVIORS[name](p, seed)
    except KeyError:
        raise ValueError(f"unknown behavior {name!r}") from None


# ---------------------------------------------------------------------------
# processes and metrics


class Process:
    """A player state machine. Subclasses override ``start`` and ``on_message``."""

    pid: int
    sim: "Simulation"

    def start(self) -> None:
        pass

    def on_message(self, msg: Msg) -> None:
        pass

    def send(self, to: int, sid, tag: str, payload: tuple = ()) -> None:
        self.sim.send(self.pid, to, sid, tag, payload)

    def work(self, ops: int) -> None:
        self.sim.metrics.computation_steps[self.pid] += ops


@dataclass
class Metrics:
    n: int
    bad: frozenset = frozenset()
    msgs_sent: list = field(default_factory=list)
    field_elements_sent: list = field(default_factory=list)
    msgs_received: list = field(default_factory=list)
    computation_steps: list = field(default_factory=list)
    max_chain_depth_delivered: int = 0
    steps: int = 0
    fe_by_phase: dict = field(default_factory=dict)  # sid prefix -> per-player field elements

    def __post_init__(self):
        for name in ("msgs_sent", "field_elements_sent", "msgs_received", "computation_steps"):
            if not getattr(self, name):
                setattr(self, name, [0] * (self.n + 1))

    def good(self) -> list[int]:
        return [i for i in range(1, self.n + 1) if i not in self.bad]

    def max_over_good(self, name: str) -> int:
        vals = getattr(self, name)
        return max((vals[i] for i in self.good()), default=0)

    def snapshot(self) -> "Metrics":
        return Metrics(
            self.n,
            self.bad,
            list(self.msgs_sent),
            list(self.field_elements_sent),
            list(self.msgs_received),
            list(self.computation_steps),
            self.max_chain_depth_delivered,
            self.steps,
            {k: list(v) for k, v in self.fe_by_phase.items()},
        )

    def phase_max(self, phases) -> int:
        """Max over good players of field elements sent under the given sid prefixes."""
        rows = [self.fe_by_phase[ph] for ph in phases if ph in self.fe_by_phase]
        return max((sum(r[i] for r in rows) for i in self.good()), default=0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["id", "status", "msgs_sent", "field_elements_sent", "msgs_received", "computation_steps"])
        for i in range(1, self.n + 1):
            w.writerow(
                [
                    i,
                    "bad" if i in self.bad else "good",
                    self.msgs_sent[i],
                    self.field_elements_sent[i],
                    self.msgs_received[i],
                    self.computation_steps[i],
                ]
            )
        return buf.getvalue()

    def summary(self) -> dict:
        good = self.good()
        return {
            "n": self.n,
            "bad": sorted(self.bad),
            "steps": self.steps,
            "max_chain_depth": self.max_chain_depth_delivered,
            "total_msgs": sum(self.msgs_sent),
            "total_field_elements": sum(self.field_elements_sent),
            "max_good_msgs_sent": max((self.msgs_sent[i] for i in good), default=0),
            "max_good_field_elements_sent": max((self.field_elements_sent[i] for i in good), default=0),
            "max_good_msgs_received": max((self.msgs_received[i] for i in good), default=0),
            "max_good_computation_steps": max((self.computation_steps[i] for i in good), default=0),
            "computation_unit": "field operations",
            "max_good_field_elements_by_phase": {k: self.phase_max([k]) for k in sorted(self.fe_by_phase, key=str)},
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


class Simulation:
    """Event loop over ``n`` processes with ids ``1..n``."""

    def __init__(
        self,
        processes: dict[int, Process],
        n: int,
        bad: Iterable[int] = (),
        behaviors: dict[int, Behavior] | None = None,
        scheduler: Scheduler | None = None,
        seed: int = 0,
        step_budget: int = 10_000_000,
        record: bool = False,
    ):
        self.n = n
        self.seed = seed
        self.bad = frozenset(bad)
        self.behaviors = dict(behaviors or {})
        self.scheduler = scheduler if scheduler is not None else Scheduler(random.Random(seed))
        self.step_budget = step_budget
        self.metrics = Metrics(n, self.bad)
        self.transcript: list | None = [] if record else None
        self.processes = processes
        self._depth = 0
        self._seq = 0
        self._started = False
        for pid, proc in processes.items():
            proc.pid = pid
            proc.sim = self

    # -- randomness -----------------------------------------------------
    def beacon(self, *key) -> int:
        """Public shared randomness, a deterministic function of the seed."""
        return derive_seed("beacon", self.seed, *key)

    def player_rng(self, pid: int, *key) -> random.Random:
        return random.Random(derive_seed("player", self.seed, pid, *key))

    # -- sending --------------------------------------------------------
    def send(self, sender: int, receiver: int, sid, tag: str, payload: tuple = ()) -> None:
        self._seq += 1
        msg = Msg(sender, receiver, sid, tag, payload, self._depth, self._seq)
        beh = self.behaviors.get(sender)
        out = beh.outgoing(msg) if beh is not None else (msg,)
        m = self.metrics
        phase = sid[0] if type(sid) is tuple and sid else sid
        per = m.fe_by_phase.get(phase)
        if per is None:
            per = m.fe_by_phase[phase] = [0] * (self.n + 1)
        for mm in out:
            m.msgs_sent[sender] += 1
            m.field_elements_sent[sender] += len(mm.payload)
            per[sender] += len(mm.payload)
            self.scheduler.push(mm)

    def inject(self, sender: int, receiver: int, sid, tag: str, payload: tuple = ()) -> None:
        """Externally triggered send (depth 0), bypassing behaviours."""
        self._seq += 1
        self.scheduler.push(Msg(sender, receiver, sid, tag, payload, 0, self._seq))

    # -- running --------------------------------------------------------
    def start(self) -> None:
        if self._started:
            return
        self._started = True
        # a message sent at start is a chain of length one
        self._depth = 1
        for pid in sorted(self.processes):
            self.processes[pid].start()

    def in_flight(self) -> int:
        return len(self.scheduler)

    def step(self) -> Msg | None:
        """Deliver one message; ``None`` means quiescent."""
        if not self._started:
            self.start()
        if not len(self.scheduler):
            return None
        msg = self.scheduler.pop()
        m = self.metrics
        m.steps += 1
        m.msgs_received[msg.receiver] += 1
        if msg.depth > m.max_chain_depth_delivered:
            m.max_chain_depth_delivered = msg.depth
        if self.transcript is not None:
            self.transcript.append(msg.key())
        proc = self.processes.get(msg.receiver)
        if proc is not None:
            self._depth = msg.depth + 1
            proc.on_message(msg)
        return msg

    def run_until(self, predicate: Callable[[], bool] | None = None) -> Metrics:
        if not self._started:
            self.start()
        budget = self.step_budget
        sched = self.scheduler
        steps = 0
        while True:
            if predicate is not None and predicate():
                break
            if not len(sched):
                break
            if steps >= budget:
                raise NonTermination(f"step budget {budget} exhausted")
            self.step()
            steps += 1
        return self.metrics.snapshot()


def bad_bound(n: int, epsilon: float) -> int:
    """Largest tolerated number of bad players, floor((1/8 - eps) * n)."""
    return math.floor((0.125 - epsilon) * n + 1e-9)


def spawn(
    n: int,
    bad_set: Iterable[int],
    behaviors: dict[int, Behavior | str] | None,
    factory: Callable[[int], Process],
    t_bound: int | None = None,
    scheduler: Scheduler | None = None,
    seed: int = 0,
    step_budget: int = 10_000_000,
    record: bool = False,
    p: int = MERSENNE_31,
) -> Simulation:
    """Register ``n`` processes; bad ones get their behaviour filters."""
    bad = frozenset(bad_set)
    if t_bound is not None and len(bad) > t_bound:
        raise BadFractionExceeded(f"{len(bad)} bad players exceeds bound {t_bound}")
    if any(not 1 <= b <= n for b in bad):
        raise ValueError("bad player id out of range")
    behs: dict[int, Behavior] = {}
    for pid in bad:
        b = (behaviors or {}).get(pid, "crash")
        behs[pid] = make_behavior(b, p, derive_seed(seed, pid)) if isinstance(b, str) else b
    procs = {pid: factory(pid) for pid in range(1, n + 1)}
    return Simulation(procs, n, bad, behs, scheduler, seed, step_budget, record)
