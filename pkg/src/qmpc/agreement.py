"""Quorum-scale reliable broadcast and binary Byzantine agreement.

``RbcSession`` is Bracha's echo/ready broadcast. ``BaSession`` is a
signature-free randomized binary agreement: a one-step fast path for
unanimous inputs (enabled when ``q > 5f``), falling back to rounds of
BV-broadcast + AUX votes with a common coin. The coin comes from the
simulation beacon, an idealisation of a threshold coin: its value depends
only on (seed, session, round), never on the schedule.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

from .node import Host, Session

MAX_ROUNDS = 10_000


def echo_threshold(q: int, f: int) -> int:
    return math.ceil((q + f + 1) / 2)


class RbcSession(Session):
    """Bracha reliable broadcast of a payload tuple from ``sender`` to ``members``."""

    def __init__(
        self,
        host: Host,
        sid,
        sender: int,
        members: Sequence[int],
        f: int,
        on_deliver: Callable[[tuple], None] | None = None,
    ):
        super().__init__(host, sid)
        self.sender = sender
        self.members = list(members)
        self.member_set = frozenset(members)
        self.q = len(self.members)
        self.f = f
        self.on_deliver = on_deliver
        self.echoes: dict[tuple, set] = {}
        self.readies: dict[tuple, set] = {}
        self.echo_seen: set = set()
        self.ready_seen: set = set()
        self.sent_echo = False
        self.sent_ready = False
        self.delivered: tuple | None = None

    def broadcast(self, payload: tuple) -> None:
        if self.host.pid != self.sender:
            raise ValueError("only the designated sender may broadcast")
        self.multicast(self.members, "RBC_INIT", tuple(payload))

    def on_message(self, sender, tag, payload):
        if tag == "RBC_INIT":
            if sender == self.sender and not self.sent_echo and self.host.pid in self.member_set:
                self.sent_echo = True
                self.multicast(self.members, "RBC_ECHO", payload)
        elif tag == "RBC_ECHO":
            if sender not in self.member_set or sender in self.echo_seen:
                return
            self.echo_seen.add(sender)
            s = self.echoes.setdefault(payload, set())
            s.add(sender)
            if len(s) >= echo_threshold(self.q, self.f):
                self._ready(payload)
        elif tag == "RBC_READY":
            if sender not in self.member_set or sender in self.ready_seen:
                return
            self.ready_seen.add(sender)
            s = self.readies.setdefault(payload, set())
            s.add(sender)
            if len(s) >= self.f + 1:
                self._ready(payload)
            if len(s) >= 2 * self.f + 1 and self.delivered is None:
                self.delivered = payload
                if self.on_deliver:
                    self.on_deliver(payload)

    def _ready(self, payload):
        if not self.sent_ready and self.host.pid in self.member_set:
            self.sent_ready = True
            self.multicast(self.members, "RBC_READY", payload)


class BaSession(Session):
    """Binary asynchronous Byzantine agreement among ``members``."""

    def __init__(
        self,
        host: Host,
        sid,
        members: Sequence[int],
        f: int,
        on_decide: Callable[[int], None] | None = None,
        coin: Callable[[int], int] | None = None,
    ):
        super().__init__(host, sid)
        self.members = list(members)
        self.member_set = frozenset(members)
        self.q = len(self.members)
        self.f = f
        self.on_decide = on_decide
        sim = host.sim
        self.coin = coin or (lambda r: sim.beacon("coin", sid, r) & 1)
        self.fast = self.q > 5 * f
        self.input: int | None = None
        self.decided: int | None = None
        self.decided_round = 0
        self.halted = False
        self.rounds = 0  # rounds of the coin-based phase actually entered
        # fast path
        self.votes: dict[int, int] = {}
        self.fast_done = False
        # coin phase
        self.in_mmr = False
        self.round = 0
        self.est: int | None = None
        self.est_recv: dict[tuple, set] = {}
        self.est_sent: set = set()
        self.bin_values: dict[int, set] = {}
        self.aux_recv: dict[int, dict] = {}
        self.aux_sent: set = set()
        self.decide_recv = ({}, {})
        self.sent_decide = False

    # -- driving ------------------------------------------------------------
    def propose(self, bit: int) -> None:
        if self.input is not None or bit not in (0, 1):
            return
        self.input = bit
        if self.halted:
            return
        if self.fast:
            self.multicast(self.members, "BA_VOTE", (bit,))
            self._check_fast()
        else:
            self._enter_mmr(bit)

    def on_message(self, sender, tag, payload):
        if sender not in self.member_set or self.halted:
            return
        if tag == "BA_DECIDE":
            if len(payload) != 1 or payload[0] not in (0, 1):
                return
            b = payload[0]
            if sender in self.decide_recv[0] or sender in self.decide_recv[1]:
                return
            self.decide_recv[b][sender] = True
            if len(self.decide_recv[b]) >= self.f + 1:
                self._decide(b)
            if len(self.decide_recv[b]) >= self.q - self.f:
                self.halted = True
            return
        if tag == "BA_VOTE":
            if len(payload) != 1 or payload[0] not in (0, 1) or sender in self.votes:
                return
            self.votes[sender] = payload[0]
            self._check_fast()
            return
        if len(payload) != 2:
            return
        r, b = payload
        if b not in (0, 1) or not 1 <= r <= MAX_ROUNDS:
            return
        if not self.in_mmr:
            if self.decided is None:
                # undecided members join once their own fast step finishes
                if tag == "BA_EST":
                    self._record_est(sender, r, b)
                elif tag == "BA_AUX":
                    self.aux_recv.setdefault(r, {}).setdefault(sender, b)
                return
            self._enter_mmr(self.decided)
        if tag == "BA_EST":
            self._record_est(sender, r, b)
        elif tag == "BA_AUX":
            self.aux_recv.setdefault(r, {}).setdefault(sender, b)
        self._progress()

    # -- fast path -----------------------------------------------------------
    def _check_fast(self):
        if self.fast_done or self.input is None or len(self.votes) < self.q - self.f:
            return
        self.fast_done = True
        ones = sum(self.votes.values())
        counts = (len(self.votes) - ones, ones)
        est = self.input
        for v in (0, 1):
            if counts[v] > (self.q + 3 * self.f) / 2:
                self._decide(v)
                est = v
            elif counts[v] > (self.q - self.f) / 2:
                est = v
        self.est = est
        if self.decided is None:
            self._enter_mmr(est)
        elif self.est_recv or self.aux_recv:
            # somebody already needs help in the coin phase
            self._enter_mmr(self.decided)

    # -- coin phase ------------------------------------------------------------
    def _enter_mmr(self, est):
        if self.in_mmr:
            return
        self.in_mmr = True
        self.est = est
        self._new_round(1)
        # relay anything buffered before we joined
        for (r, b), senders in list(self.est_recv.items()):
            self._est_thresholds(r, b, senders)
        self._progress()

    def _new_round(self, r):
        self.round = r
        self.rounds = r
        self._send_est(r, self.est)

    def _send_est(self, r, b):
        if (r, b) in self.est_sent:
            return
        self.est_sent.add((r, b))
        self.multicast(self.members, "BA_EST", (r, b))

    def _record_est(self, sender, r, b):
        s = self.est_recv.setdefault((r, b), set())
        if sender in s:
            return
        s.add(sender)
        if self.in_mmr:
            self._est_thresholds(r, b, s)

    def _est_thresholds(self, r, b, s):
        if len(s) >= self.f + 1:
            self._send_est(r, b)
        if len(s) >= 2 * self.f + 1:
            bv = self.bin_values.setdefault(r, set())
            if b not in bv:
                bv.add(b)
                if r == self.round and r not in self.aux_sent:
                    self.aux_sent.add(r)
                    self.multicast(self.members, "BA_AUX", (r, b))

    def _progress(self):
        while not self.halted:
            r = self.round
            bv = self.bin_values.get(r)
            if not bv:
                return
            if r not in self.aux_sent:
                self.aux_sent.add(r)
                self.multicast(self.members, "BA_AUX", (r, next(iter(bv))))
            aux = self.aux_recv.get(r, {})
            good = [b for b in aux.values() if b in bv]
            if len(good) < self.q - self.f:
                return
            vals = set(good)
            s = self.coin(r)
            if len(vals) == 1:
                v = vals.pop()
                if v == s:
                    self._decide(v)
                self.est = v
            else:
                self.est = s
            if r >= MAX_ROUNDS:
                return
            if self.decided is not None and s == self.decided and r > self.decided_round:
                # every good member holds est = decided here and finishes this round deciding
                return
            self._new_round(r + 1)

    def _decide(self, b):
        if self.decided is not None:
            return
        self.decided = b
        self.decided_round = self.round
        if not self.sent_decide:
            self.sent_decide = True
            self.multicast(self.members, "BA_DECIDE", (b,))
        if self.on_decide:
            self.on_decide(b)
