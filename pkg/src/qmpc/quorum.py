"""Quorum tables and the quorum-to-quorum channel.

The table builder samples ``n`` quorums of size ``ceil(c * log2 n)`` from a
seeded beacon, resampling any quorum whose bad fraction is too high and
redrawing the whole table when some player ends up in too many quorums.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .hwmpc import random_quorum_choice
from .simnet import derive_seed

__all__ = [
    "GoodnessUnsatisfiable",
    "QuorumTable",
    "create_quorums",
    "quorum_size",
    "accept_threshold",
    "quorum_of_node",
    "QuorumInbox",
    "quorum_send",
    "random_quorum_choice",
]


class GoodnessUnsatisfiable(RuntimeError):
    pass


def quorum_size(n: int, c: float = 2.0) -> int:
    return math.ceil(c * math.log2(n))


def accept_threshold(q: int) -> int:
    """Distinct senders of one quorum needed to accept a quorum message."""
    return math.ceil(7 * q / 8)


def quorum_of_node(v: int, n: int) -> int:
    """Quorum responsible for circuit node ``v`` (``v mod n``, with 0 read as ``n``)."""
    return v % n or n


@dataclass
class QuorumTable:
    n: int
    c: float
    quorums: list  # quorums[k-1] = sorted member list of quorum k
    seed: int = 0
    delta: float = 0.05
    c_lb: float = 4.0
    attempts: int = 1
    membership: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.membership:
            mem: dict = {i: [] for i in range(1, self.n + 1)}
            for k, qm in enumerate(self.quorums, start=1):
                for pid in qm:
                    mem[pid].append(k)
            self.membership = mem

    @property
    def q(self) -> int:
        return len(self.quorums[0])

    def members(self, k: int) -> list[int]:
        return self.quorums[k - 1]

    def quorums_of(self, pid: int) -> list[int]:
        return self.membership.get(pid, [])

    def bad_count(self, k: int, bad: Iterable[int]) -> int:
        b = set(bad)
        return sum(1 for pid in self.quorums[k - 1] if pid in b)

    def max_bad_fraction(self, bad: Iterable[int]) -> float:
        b = set(bad)
        return max(sum(1 for pid in qm if pid in b) / len(qm) for qm in self.quorums)

    def max_membership(self) -> int:
        return max(len(v) for v in self.membership.values())

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "c": self.c,
                "q": self.q,
                "seed": self.seed,
                "delta": self.delta,
                "c_lb": self.c_lb,
                "attempts": self.attempts,
                "quorums": {str(k): qm for k, qm in enumerate(self.quorums, start=1)},
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "QuorumTable":
        obj = json.loads(text)
        quorums = [obj["quorums"][str(k)] for k in range(1, obj["n"] + 1)]
        return cls(obj["n"], obj["c"], quorums, obj["seed"], obj["delta"], obj["c_lb"], obj.get("attempts", 1))


def bad_limit(q: int, n: int, t: int, delta: float) -> int:
    """Most bad members a good quorum may hold: floor((t/n + delta) * q)."""
    return math.floor((t / n + delta) * q + 1e-9)


def create_quorums(
    n: int,
    bad: Iterable[int] = (),
    t: int | None = None,
    delta: float = 0.05,
    c: float = 2.0,
    seed: int = 0,
    c_lb: float = 4.0,
    max_retries: int = 200,
) -> QuorumTable:
    """Sample a table whose quorums are all good and load balanced.

    ``t`` is the corruption bound the goodness test uses; it defaults to
    the number of bad players.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    bad = frozenset(bad)
    t = len(bad) if t is None else t
    if t / n >= 0.25:
        raise ValueError("corruption bound must be below n/4")
    q = quorum_size(n, c)
    if q > n:
        raise GoodnessUnsatisfiable(f"quorum size {q} exceeds n={n}")
    # more than q - ceil(7q/8) bad members would stall every quorum message
    limit = min(bad_limit(q, n, t, delta), q - accept_threshold(q))
    load = c_lb * math.log2(n)
    rng = random.Random(derive_seed("quorums", seed, n, c))
    players = list(range(1, n + 1))
    for attempt in range(1, max_retries + 1):
        quorums = []
        for _ in range(n):
            for _ in range(max_retries):
                qm = rng.sample(players, q)
                if sum(1 for pid in qm if pid in bad) <= limit:
                    break
            else:
                raise GoodnessUnsatisfiable(f"could not sample a good quorum (limit {limit} of {q})")
            quorums.append(sorted(qm))
        table = QuorumTable(n, c, quorums, seed, delta, c_lb, attempt)
        if table.max_membership() <= load:
            return table
    raise GoodnessUnsatisfiable(f"no load-balanced table after {max_retries} attempts")


class QuorumInbox:
    """Per-receiver tally implementing the 7/8 acceptance rule.

    ``offer`` returns the payload the first time ``threshold`` distinct
    members of the sending quorum have sent the same payload, else None.
    """

    def __init__(self, senders: Sequence[int], threshold: int | None = None):
        self.senders = frozenset(senders)
        self.threshold = threshold if threshold is not None else accept_threshold(len(self.senders))
        self.seen: set = set()
        self.tally: dict = {}
        self.accepted = None
        self.done = False

    def offer(self, sender: int, payload):
        if self.done or sender not in self.senders or sender in self.seen:
            return None
        self.seen.add(sender)
        c = self.tally.get(payload, 0) + 1
        self.tally[payload] = c
        if c >= self.threshold:
            self.done = True
            self.accepted = payload
            return payload
        return None


def quorum_send(host, sid, to_members: Sequence[int], tag: str, payload: tuple = ()) -> None:
    """One member's part of a quorum message: send to every receiving member."""
    for pid in to_members:
        host.send(pid, sid, tag, payload)
