"""Heavyweight MPC inside one quorum.

BGW-style evaluation of a small arithmetic program on degree-``d`` sharings
held by the ``q`` quorum members, tolerating fewer than ``q/4`` bad members.

Inputs and randomness come from an :class:`AcsDealing`: every member deals a
batched AVSS of its own inputs plus fresh random values, and one BA per
dealer agrees on the set of dealings that count. Dealers left out contribute
default inputs and zero randomness.

A multiplication ``x * y`` consumes three summed random sharings ``rho``,
``A``, ``B``. Members open ``x*y + rho + Z`` at degree ``2d`` where
``Z(X) = X*A(X) + X^d*B(X)`` is a random sharing of zero (``Z = 0`` when
``d = 0``), then set
``[xy] = opened - [rho]``. Multiplications and reveals at the same
interactive depth are opened together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

from .agreement import BaSession
from .field import DEFAULT_FIELD, PrimeField
from .node import Host
from .sharing import AvssSession, BivariateShare, OpenSession


# ---------------------------------------------------------------------------
# agreement on a common subset of dealings


class AcsDealing:
    """Every member deals ``k[dealer]`` values; all good members agree on who counts.

    ``on_done(included, shares)`` gets the sorted included dealers and, for
    each, this member's :class:`BivariateShare` of that dealing.
    """

    def __init__(
        self,
        host: Host,
        sid,
        members: Sequence[int],
        d: int,
        f: int,
        k: dict | int,
        field: PrimeField = DEFAULT_FIELD,
        on_done: Callable[[list, dict], None] | None = None,
    ):
        self.host = host
        self.sid = sid
        self.members = list(members)
        self.q = len(self.members)
        self.f = f
        self.on_done = on_done
        self.ks = k if isinstance(k, dict) else {m: k for m in self.members}
        self.decided: dict[int, int] = {}
        self.voted: set = set()
        self.ones = 0
        self.done = False
        self.avss: dict[int, AvssSession] = {}
        self.bas: dict[int, BaSession] = {}
        for dealer in self.members:
            self.bas[dealer] = host.add_session(
                BaSession(host, sid + ("ba", dealer), self.members, f,
                          on_decide=lambda b, dl=dealer: self._decided(dl, b))
            )
            self.avss[dealer] = host.add_session(
                AvssSession(host, sid + ("avss", dealer), dealer, self.members, d, f, self.ks[dealer], field,
                            on_complete=lambda sh, dl=dealer: self._completed(dl),
                            on_complaint=lambda dl=dealer: self._vote(dl, 0))
            )

    def deal(self, values: Sequence[int], rng) -> None:
        self.avss[self.host.pid].deal(values, rng)

    def _vote(self, dealer, b):
        if dealer in self.voted:
            return
        self.voted.add(dealer)
        self.bas[dealer].propose(b)

    def _completed(self, dealer):
        self._vote(dealer, 1)
        self._check()

    def _decided(self, dealer, b):
        self.decided[dealer] = b
        if b == 1:
            self.ones += 1
            if self.ones == self.q - self.f:
                for dl in self.members:
                    self._vote(dl, 0)
        self._check()

    def _check(self):
        if self.done or len(self.decided) < self.q:
            return
        included = sorted(dl for dl, b in self.decided.items() if b == 1)
        if any(self.avss[dl].result is None for dl in included):
            return
        self.done = True
        if self.on_done:
            self.on_done(included, {dl: self.avss[dl].result for dl in included})


# ---------------------------------------------------------------------------
# programs


@dataclass
class Program:
    """A straight-line arithmetic program over quorum members' shared wires.

    Wire-producing ops (each returns a wire index):
    ``inp(owner)``, ``const(c)``, ``random()``, ``add``, ``sub``, ``cmul``,
    ``mul``, ``reveal`` (wire becomes public), ``zero_if(a, pub)`` (0 where the
    public wire ``pub`` is non-zero, else ``a``). ``output(a, keep=False)``
    marks a result; kept outputs stay shared instead of being opened.
    """

    ops: list = dc_field(default_factory=list)
    outputs: list = dc_field(default_factory=list)

    def _op(self, *op) -> int:
        self.ops.append(op)
        return len(self.ops) - 1

    def inp(self, owner: int) -> int:
        return self._op("in", owner)

    def const(self, c: int) -> int:
        return self._op("const", c)

    def random(self) -> int:
        return self._op("random")

    def add(self, a: int, b: int) -> int:
        return self._op("add", a, b)

    def sub(self, a: int, b: int) -> int:
        return self._op("sub", a, b)

    def cmul(self, a: int, c: int) -> int:
        return self._op("cmul", a, c)

    def mul(self, a: int, b: int) -> int:
        return self._op("mul", a, b)

    def reveal(self, a: int) -> int:
        return self._op("reveal", a)

    def zero_if(self, a: int, pub: int) -> int:
        return self._op("zero_if", a, pub)

    def output(self, a: int, keep: bool = False) -> None:
        self.outputs.append((a, keep))

    # -- static analysis ----------------------------------------------------
    def input_owners(self) -> dict:
        out: dict = {}
        for i, op in enumerate(self.ops):
            if op[0] == "in":
                out.setdefault(op[1], []).append(i)
        return out

    def randomness(self) -> int:
        return sum(3 if op[0] == "mul" else 1 if op[0] == "random" else 0 for op in self.ops)

    def rounds(self) -> list[int]:
        rnd = []
        for op in self.ops:
            kind = op[0]
            if kind in ("in", "const", "random"):
                r = 0
            elif kind in ("add", "sub", "mul", "zero_if"):
                r = max(rnd[op[1]], rnd[op[2]])
            else:  # cmul, reveal
                r = rnd[op[1]]
            if kind in ("mul", "reveal"):
                r += 1
            rnd.append(r)
        return rnd

    def evaluate(self, inputs: dict, randoms: Sequence[int] | None = None, field: PrimeField = DEFAULT_FIELD) -> list[int]:
        """In-the-clear oracle; ``inputs[owner]`` lists that owner's inputs in order."""
        p = field.p
        vals: list[int] = []
        cursor: dict = {}
        rand = iter(randoms or [])
        for op in self.ops:
            kind = op[0]
            if kind == "in":
                k = cursor.get(op[1], 0)
                cursor[op[1]] = k + 1
                seq = inputs.get(op[1])
                v = seq[k] if seq is not None else 0
            elif kind == "const":
                v = op[1]
            elif kind == "random":
                v = next(rand, 0)
            elif kind == "add":
                v = vals[op[1]] + vals[op[2]]
            elif kind == "sub":
                v = vals[op[1]] - vals[op[2]]
            elif kind == "cmul":
                v = vals[op[1]] * op[2]
            elif kind == "mul":
                v = vals[op[1]] * vals[op[2]]
            elif kind == "reveal":
                v = vals[op[1]]
            elif kind == "zero_if":
                v = 0 if vals[op[2]] % p else vals[op[1]]
            else:
                raise ValueError(f"unknown op {kind!r}")
            vals.append(v % p)
        return [vals[a] for a, _ in self.outputs]


def add_program(a_owner: int, b_owner: int) -> Program:
    pr = Program()
    pr.output(pr.add(pr.inp(a_owner), pr.inp(b_owner)))
    return pr


def mul_program(a_owner: int, b_owner: int) -> Program:
    pr = Program()
    pr.output(pr.mul(pr.inp(a_owner), pr.inp(b_owner)))
    return pr


def _threshold_poly(R: int, T: int, p: int) -> list[int]:
    """Coefficients of the degree-R polynomial equal to [s >= T] on s = 0..R."""
    fld = PrimeField(p) if p != DEFAULT_FIELD.p else DEFAULT_FIELD
    return fld.interpolate([(s, 1 if s >= T else 0) for s in range(R + 1)])


def majority_program(owners: Sequence[int], num: int = 5, den: int = 8, p: int = DEFAULT_FIELD.p) -> Program:
    """1 iff at least ``ceil(num*R/den)`` of the owners' input bits are 1.

    Inputs that are not bits are replaced by 0 after a public check of
    ``b*(b-1)``, which reveals nothing about a genuine bit.
    """
    R = len(owners)
    T = math.ceil(num * R / den)
    pr = Program()
    one = pr.const(1)
    bits = []
    for o in owners:
        b = pr.inp(o)
        check = pr.reveal(pr.mul(b, pr.sub(b, one)))
        bits.append(pr.zero_if(b, check))
    s = bits[0]
    for b in bits[1:]:
        s = pr.add(s, b)
    # powers s^1..s^R with logarithmic multiplicative depth
    powers = {1: s}
    for e in range(2, R + 1):
        hi = 1 << (e.bit_length() - 1)
        if hi == e:
            powers[e] = pr.mul(powers[hi // 2], powers[hi // 2])
        else:
            powers[e] = pr.mul(powers[hi], powers[e - hi])
    coeffs = _threshold_poly(R, T, p)
    acc = pr.const(coeffs[0])
    for e in range(1, R + 1):
        if coeffs[e]:
            acc = pr.add(acc, pr.cmul(powers[e], coeffs[e]))
    pr.output(acc)
    return pr


def coin_program(reveal: bool = True) -> Program:
    pr = Program()
    pr.output(pr.random(), keep=not reveal)
    return pr


# ---------------------------------------------------------------------------
# evaluation


class HwMpcSession:
    """Evaluate ``program`` among ``members``; ``on_output(values)`` fires once.

    ``my_inputs`` lists this member's inputs in program order. Values of kept
    outputs are this member's shares; others are opened field elements.
    """

    def __init__(
        self,
        host: Host,
        sid,
        members: Sequence[int],
        d: int,
        f: int,
        program: Program,
        my_inputs: Sequence[int] = (),
        field: PrimeField = DEFAULT_FIELD,
        on_output: Callable[[list[int]], None] | None = None,
    ):
        self.host = host
        self.sid = sid
        self.members = list(members)
        self.pos = {pid: i + 1 for i, pid in enumerate(self.members)}
        self.me = self.pos[host.pid]
        self.d, self.f = d, f
        self.field = field
        self.program = program
        self.on_output = on_output
        self.owners = program.input_owners()
        self.n_rand = program.randomness()
        self.my_inputs = list(my_inputs)
        if len(self.my_inputs) != len(self.owners.get(host.pid, [])):
            raise ValueError("input count does not match the program")
        self.rounds = program.rounds()
        self.max_round = max(self.rounds, default=0)
        self.vals: list = [None] * len(program.ops)
        self.public: set = set()
        self.round = 0
        self.result: list | None = None
        ks = {m: len(self.owners.get(m, [])) + self.n_rand for m in self.members}
        self.acs = AcsDealing(host, sid + ("acs",), self.members, d, f, ks, field, on_done=self._dealt)

    def start(self, rng) -> None:
        p = self.field.p
        secrets = list(self.my_inputs) + [rng.randrange(p) for _ in range(self.n_rand)]
        self.acs.deal(secrets, rng)

    # -- local computation -------------------------------------------------
    def _dealt(self, included, shares: dict[int, BivariateShare]):
        p = self.field.p
        rand = [0] * self.n_rand
        inputs: dict = {}
        for dl in self.members:
            n_in = len(self.owners.get(dl, []))
            sh = shares.get(dl)
            if sh is None:
                inputs[dl] = [0] * n_in
                continue
            s = sh.shares
            inputs[dl] = s[:n_in]
            for i in range(self.n_rand):
                rand[i] = (rand[i] + s[n_in + i]) % p
        self.host.work(len(shares) * self.n_rand)
        self._inputs = inputs
        self._rand = rand
        self._advance()

    def _local(self, r):
        """Compute every non-interactive wire of round ``r``."""
        p = self.field.p
        vals = self.vals
        cursor: dict = {}
        rcur = 0
        for i, op in enumerate(self.program.ops):
            kind = op[0]
            if kind == "in":
                k = cursor.get(op[1], 0)
                cursor[op[1]] = k + 1
            elif kind == "random":
                pass
            if kind == "mul":
                rcur += 3
            elif kind == "random":
                rcur += 1
            if self.rounds[i] != r or vals[i] is not None:
                continue
            if kind == "in":
                vals[i] = self._inputs[op[1]][cursor[op[1]] - 1]
            elif kind == "const":
                vals[i] = op[1] % p
                self.public.add(i)
            elif kind == "random":
                vals[i] = self._rand[rcur - 1]
            elif kind in ("add", "sub"):
                a, b = vals[op[1]], vals[op[2]]
                pa, pb = op[1] in self.public, op[2] in self.public
                sign = 1 if kind == "add" else -1
                vals[i] = (a + sign * b) % p
                if pa and pb:
                    self.public.add(i)
            elif kind == "cmul":
                vals[i] = vals[op[1]] * op[2] % p
                if op[1] in self.public:
                    self.public.add(i)
            elif kind == "zero_if":
                vals[i] = 0 if vals[op[2]] else vals[op[1]]
                if op[1] in self.public:
                    self.public.add(i)
        self.host.work(len(self.program.ops))

    def _advance(self):
        while True:
            r = self.round
            self._local(r)
            if r == self.max_round:
                self._finish()
                return
            if not self._open_round(r + 1):
                return

    def _open_round(self, r) -> bool:
        """Start the openings that produce round ``r``; True if they completed at once."""
        ops = self.program.ops
        p, me, d = self.field.p, self.me, self.d
        muls, reveals = [], []
        rcur = 0
        for i, op in enumerate(ops):
            if op[0] == "mul":
                rcur += 3
                if self.rounds[i] == r:
                    muls.append((i, rcur - 3))
            elif op[0] == "random":
                rcur += 1
            elif op[0] == "reveal" and self.rounds[i] == r:
                reveals.append(i)
        # state first: buffered shares may complete an opening inside add_session
        self.round = r
        self._pending = {"m": muls, "v": reveals}
        self._waiting = set()
        if muls:
            self._waiting.add("m")
        if reveals:
            self._waiting.add("v")
        self._opening = True
        host, vals, rnd = self.host, self.vals, self._rand
        if muls:
            u = []
            # at degree 0 the only sharing of zero is zero itself
            ma, md = (me, pow(me, d, p)) if d else (0, 0)
            for i, ro in muls:
                a, b = ops[i][1], ops[i][2]
                u.append((vals[a] * vals[b] + rnd[ro] + ma * rnd[ro + 1] + md * rnd[ro + 2]) % p)
            sess = OpenSession(host, self.sid + ("m", r), self.members, self.members, 2 * d, 2 * d + self.f + 1,
                               self.field, on_open=lambda v, r=r: self._opened(r, "m", v), tag="MPC_OPEN")
            host.add_session(sess)
            sess.contribute(u)
            host.work(5 * len(muls))
        if reveals:
            sess = OpenSession(host, self.sid + ("v", r), self.members, self.members, d, d + self.f + 1,
                               self.field, on_open=lambda v, r=r: self._opened(r, "v", v), tag="MPC_OPEN")
            host.add_session(sess)
            sess.contribute([vals[ops[i][1]] for i in reveals])
        self._opening = False
        return not self._waiting

    def _opened(self, r, kind, values):
        if r != self.round or kind not in self._waiting:
            return
        p = self.field.p
        self._waiting.discard(kind)
        if kind == "m":
            for (i, ro), w in zip(self._pending["m"], values):
                self.vals[i] = (w - self._rand[ro]) % p
        else:
            for i, w in zip(self._pending["v"], values):
                self.vals[i] = w
                self.public.add(i)
        if not self._waiting and not self._opening:
            self._advance()

    def _finish(self):
        opened = [(a, keep) for a, keep in self.program.outputs]
        to_open = [a for a, keep in opened if not keep and a not in self.public]
        if not to_open:
            self._deliver({})
            return
        sess = OpenSession(self.host, self.sid + ("out",), self.members, self.members, self.d,
                           self.d + self.f + 1, self.field, on_open=lambda v: self._deliver(dict(zip(to_open, v))),
                           tag="MPC_OUT")
        self.host.add_session(sess)
        sess.contribute([self.vals[a] for a in to_open])

    def _deliver(self, opened: dict):
        if self.result is not None:
            return
        out = []
        for a, keep in self.program.outputs:
            out.append(opened.get(a, self.vals[a]))
        self.result = out
        if self.on_output:
            self.on_output(out)


def shared_coin_in_quorum(host: Host, sid, members, d, f, reveal=True, field=DEFAULT_FIELD, on_output=None) -> HwMpcSession:
    """Uniform field element from the sum of all included dealers' randomness."""
    return HwMpcSession(host, sid, members, d, f, coin_program(reveal), (), field, on_output)


def random_quorum_choice(coin: int, targets: Sequence[int]) -> int:
    if not targets:
        raise ValueError("no targets")
    return targets[coin % len(targets)]
