"""Secret sharing: plain Shamir, batched bivariate AVSS, robust openings.

Within a quorum, member ``members[i-1]`` uses abscissa ``i``. A dealing of
``k`` secrets picks bivariate polynomials ``S_l(x, y)`` of degree ``d`` in each
variable with ``S_l(0, 0)`` the secret. Member ``i`` receives its row
``S_l(x, i)`` and column ``S_l(i, y)``; its share of the secret is
``S_l(i, 0)``. Rows and columns are kept after completion because masks are
transferred between quorums row by row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .agreement import BaSession
from .field import DEFAULT_FIELD, PrimeField
from .node import Host, Session


class ReconstructFailed(ValueError):
    """Not enough consistent shares to certify a value."""


class DegreeTooHigh(ValueError):
    """Sharing degree must be below the number of recipients."""


class DealFailed(RuntimeError):
    """The dealing was aborted by agreement."""


@dataclass(frozen=True)
class ShamirShare:
    x: int
    y: int


@dataclass
class BivariateShare:
    """What one member holds after a completed dealing of ``k`` secrets."""

    x: int
    rows: list  # rows[l] = coeffs of S_l(X, x)
    cols: list  # cols[l] = coeffs of S_l(x, Y)
    field: PrimeField = DEFAULT_FIELD

    @property
    def shares(self) -> list[int]:
        return [c[0] for c in self.cols]

    def row_at(self, at: int) -> list[int]:
        ev = self.field.eval
        return [ev(r, at) for r in self.rows]


def shamir_share(secret: int, n: int, d: int, rng, field: PrimeField = DEFAULT_FIELD) -> list[ShamirShare]:
    if not 0 <= d < n:
        raise DegreeTooHigh(f"degree {d} needs more than {n} recipients")
    poly = field.random_poly(rng, d, secret)
    return [ShamirShare(i, field.eval(poly, i)) for i in range(1, n + 1)]


def reconstruct(
    shares: Sequence[ShamirShare], d: int, field: PrimeField = DEFAULT_FIELD, min_agree: int | None = None
) -> int:
    """Robustly recover the secret; ``min_agree`` defaults to all given shares minus the correctable errors."""
    pts = [(s.x, s.y) for s in shares]
    if min_agree is None:
        min_agree = d + 1 + (len(pts) - d - 1) // 2
    poly = field.robust_decode(pts, d, min_agree)
    if poly is None:
        raise ReconstructFailed(f"no degree-{d} polynomial agrees with {min_agree} of {len(pts)} shares")
    return poly[0]


def decode_vectors(
    field: PrimeField, points: Sequence[tuple[int, Sequence[int]]], degree: int, min_agree: int, at: int = 0
) -> list[int] | None:
    """Decode a vector of polynomials sharing abscissas, returning their values at ``at``.

    Fast path: interpolate every coordinate from the first ``degree + 1``
    points and count senders that agree on all coordinates. Falls back to
    per-coordinate Berlekamp-Welch.
    """
    n = len(points)
    if n < min_agree or n < degree + 1:
        return None
    p = field.p
    width = len(points[0][1])
    if any(len(v) != width for _, v in points):
        points = [(x, v) for x, v in points if len(v) == width]
        n = len(points)
        if n < min_agree:
            return None
    def attempt(pts):
        base = pts[: degree + 1]
        xs = [x for x, _ in base]
        agree = degree + 1
        for x, vec in pts[degree + 1 :]:
            w = field.lagrange_coeffs(xs, x)
            if all(sum(wi * v[1][c] for wi, v in zip(w, base)) % p == vec[c] % p for c in range(width)):
                agree += 1
        if agree < min_agree:
            return None
        w_at = field.lagrange_coeffs(xs, at)
        return [sum(wi * v[1][c] for wi, v in zip(w_at, base)) % p for c in range(width)]

    got = attempt(points)
    if got is not None:
        return got
    # move senders that agree on the first coordinate to the front and retry
    poly = field.robust_decode([(x, v[0]) for x, v in points], degree, min_agree)
    if poly is None:
        return None
    good = [pt for pt in points if field.eval(poly, pt[0]) == pt[1][0] % p]
    got = attempt(good + [pt for pt in points if pt not in good])
    if got is not None or width == 1:
        return got
    out = []
    for c in range(width):
        poly = field.robust_decode([(x, v[c]) for x, v in points], degree, min_agree)
        if poly is None:
            return None
        out.append(field.eval(poly, at))
    return out


def _eval_many(field: PrimeField, polys, x: int) -> list[int]:
    ev = field.eval
    return [ev(c, x) for c in polys]


class AvssSession(Session):
    """Sharing phase of a batched bivariate AVSS.

    ``on_complete(share)`` fires once with a :class:`BivariateShare`.
    ``on_complaint()`` fires once ``f + 1`` members have complained.
    Completion is only guaranteed for good dealers; callers pair this with
    agreement (see :class:`VerifiedDeal` and the ACS dealing) to bound waits.
    """

    def __init__(
        self,
        host: Host,
        sid,
        dealer: int,
        members: Sequence[int],
        d: int,
        f: int,
        k: int,
        field: PrimeField = DEFAULT_FIELD,
        on_complete: Callable[[BivariateShare], None] | None = None,
        on_complaint: Callable[[], None] | None = None,
    ):
        super().__init__(host, sid)
        self.dealer = dealer
        self.members = list(members)
        self.pos = {pid: i + 1 for i, pid in enumerate(self.members)}
        self.q = len(self.members)
        self.d, self.f, self.k = d, f, k
        self.field = field
        self.on_complete = on_complete
        self.on_complaint = on_complaint
        self.me = self.pos.get(host.pid)
        self.rows: list | None = None
        self.ready_ok: set = set()
        self.cols: list | None = None
        self.confirmed = False
        self.echo_pts: dict[int, tuple] = {}
        self.ready_pts: dict[int, tuple] = {}
        self.consistent: set = set()
        self.inconsistent: set = set()
        self.complainers: set = set()
        self.sent_echo = False
        self.sent_ready = False
        self.sent_complaint = False
        self.complaint_fired = False
        self.result: BivariateShare | None = None
        self._echo_try = 0
        self._ready_try = 0

    # -- dealer -----------------------------------------------------------------
    def deal(self, secrets: Sequence[int], rng) -> None:
        if self.host.pid != self.dealer:
            raise ValueError("only the dealer may deal")
        if len(secrets) != self.k:
            raise ValueError(f"expected {self.k} secrets, got {len(secrets)}")
        fld, d, p = self.field, self.d, self.field.p
        mats = []
        for s in secrets:
            a = [[rng.randrange(p) for _ in range(d + 1)] for _ in range(d + 1)]
            a[0][0] = s % p
            mats.append(a)
        for pid, i in self.pos.items():
            powers = [pow(i, e, p) for e in range(d + 1)]
            payload = []
            for a in mats:  # row S(x, i): coefficient of x^u is sum_v a[u][v] i^v
                payload.extend(sum(a[u][v] * powers[v] for v in range(d + 1)) % p for u in range(d + 1))
            for a in mats:  # column S(i, y): coefficient of y^v is sum_u a[u][v] i^u
                payload.extend(sum(a[u][v] * powers[u] for u in range(d + 1)) % p for v in range(d + 1))
            self.work(2 * self.k * (d + 1) ** 2)
            self.send(pid, "SHARE", tuple(payload))

    # -- members ----------------------------------------------------------------
    def on_message(self, sender, tag, payload):
        if self.me is None:
            return
        if tag == "SHARE":
            if sender != self.dealer or self.rows is not None:
                return
            n = self.k * (self.d + 1)
            if len(payload) != 2 * n:
                return
            w = self.d + 1
            self._fix([list(payload[l * w : (l + 1) * w]) for l in range(self.k)],
                      [list(payload[n + l * w : n + (l + 1) * w]) for l in range(self.k)])
            return
        x = self.pos.get(sender)
        if x is None:
            return
        if tag == "ECHO":
            if sender in self.echo_pts or len(payload) != 2 * self.k:
                return
            self.echo_pts[sender] = payload
            if self.rows is not None:
                self._check_echo(sender, payload)
            else:
                self._try_fix_from(self.echo_pts, self.q - self.f, "_echo_try")
        elif tag == "READY":
            if sender in self.ready_pts or len(payload) != 2 * self.k:
                return
            self.ready_pts[sender] = payload
            if self.rows is not None and payload == self.expect[x]:
                self.ready_ok.add(sender)
            self._after_ready()
        elif tag == "COMPLAINT":
            self.complainers.add(sender)
            if len(self.complainers) >= self.f + 1 and not self.complaint_fired:
                self.complaint_fired = True
                if self.on_complaint:
                    self.on_complaint()

    def _fix(self, rows, cols):
        self.rows, self.cols = rows, cols
        fld, k = self.field, self.k
        # out[x]: what I send to member x; expect[x]: what an honest x sends me
        self.out, self.expect = {}, {}
        xs = list(self.pos.values())
        for x, r, c in zip(xs, fld.eval_table(rows, xs), fld.eval_table(cols, xs)):
            self.out[x] = tuple(r + c)
            self.expect[x] = tuple(c + r)
        self.work(2 * k * (self.d + 1) * self.q)
        self.ready_ok = {s for s, pl in self.ready_pts.items() if pl == self.expect[self.pos[s]]}
        if not self.sent_echo:
            self.sent_echo = True
            for pid, j in self.pos.items():
                self.send(pid, "ECHO", self.out[j])
        for s, pl in self.echo_pts.items():
            self._check_echo(s, pl)
        self._after_ready()

    def _check_echo(self, sender, payload):
        if sender in self.consistent or sender in self.inconsistent:
            return
        ok = payload == self.expect[self.pos[sender]]
        (self.consistent if ok else self.inconsistent).add(sender)
        if len(self.consistent) >= self.q - self.f:
            self._send_ready()
        if len(self.inconsistent) >= self.f + 1 and not self.sent_complaint:
            self.sent_complaint = True
            self.multicast(self.members, "COMPLAINT", ())

    def _send_ready(self):
        if self.sent_ready or self.rows is None:
            return
        self.sent_ready = True
        for pid, j in self.pos.items():
            self.send(pid, "READY", self.out[j])

    def _try_fix_from(self, pts: dict, min_agree: int, counter: str):
        """Recover own row and column from points others sent about them."""
        if self.rows is not None or len(pts) < min_agree or len(pts) == getattr(self, counter):
            return False
        setattr(self, counter, len(pts))
        k, d = self.k, self.d
        # sender x's first half is S(me, x) = col(x); second half S(x, me) = row(x)
        items = [(self.pos[s], pl) for s, pl in pts.items()]
        cols = self._decode_polys([(x, pl[:k]) for x, pl in items], min_agree)
        rows = self._decode_polys([(x, pl[k:]) for x, pl in items], min_agree) if cols else None
        if cols is None or rows is None:
            return False
        self._fix(rows, cols)
        return True

    def _decode_polys(self, points, min_agree):
        fld, d = self.field, self.d
        out = []
        self.work(len(points) * self.k * (d + 1))
        for l in range(self.k):
            poly = fld.robust_decode([(x, v[l]) for x, v in points], d, min_agree)
            if poly is None:
                return None
            out.append((poly + [0] * (d + 1))[: d + 1])
        return out

    def _after_ready(self):
        f, d = self.f, self.d
        if len(self.ready_pts) < f + 1:
            return
        if self.rows is None:
            self._try_fix_from(self.ready_pts, d + f + 1, "_ready_try")
            if self.rows is None:
                return
        if not self.confirmed:
            if len(self.ready_ok) >= d + f + 1:
                self.confirmed = True
            elif len(self.ready_pts) >= 2 * f + 1 and len(self.ready_pts) != self._ready_try:
                # my dealt polynomials disagree with the readied sharing; adopt the latter
                saved = self.rows, self.cols
                self.rows = None
                if self._try_fix_from(self.ready_pts, d + f + 1, "_ready_try"):
                    self.confirmed = True
                else:
                    self.rows, self.cols = saved
            if not self.confirmed:
                return
        self._send_ready()
        if len(self.ready_pts) >= 2 * f + 1 and self.result is None:
            self.result = BivariateShare(self.me, self.rows, self.cols, self.field)
            if self.on_complete:
                self.on_complete(self.result)


class VerifiedDeal:
    """AVSS plus a BA deciding accept (1) or abort (0) consistently.

    Members vote 1 on completion, 0 on ``f + 1`` complaints or when
    :meth:`vote_abort` is called. ``on_done(share_or_None)`` fires after the
    BA decides, with the share once it is available.
    """

    def __init__(self, host: Host, sid, dealer, members, d, f, k, field=DEFAULT_FIELD, on_done=None):
        self.host = host
        self.on_done = on_done
        self.decision: int | None = None
        self.fired = False
        self.avss = AvssSession(host, sid + ("avss",), dealer, members, d, f, k, field,
                                on_complete=self._completed, on_complaint=self.vote_abort)
        self.ba = None
        if host.pid in self.avss.pos:
            self.ba = BaSession(host, sid + ("ba",), members, f, on_decide=self._decided)
            host.add_session(self.ba)
        host.add_session(self.avss)

    def vote_abort(self):
        if self.ba is not None:
            self.ba.propose(0)

    def _completed(self, share):
        if self.ba is not None:
            self.ba.propose(1)
        self._maybe_fire()

    def _decided(self, b):
        self.decision = b
        self._maybe_fire()

    def _maybe_fire(self):
        if self.fired or self.decision is None:
            return
        if self.decision == 1 and self.avss.result is None:
            return
        self.fired = True
        if self.on_done:
            self.on_done(self.avss.result if self.decision == 1 else None)

    def share(self) -> BivariateShare:
        if self.decision == 0:
            raise DealFailed("dealing aborted")
        if self.avss.result is None:
            raise DealFailed("dealing not complete")
        return self.avss.result


def avss_rec(
    shares: Sequence[tuple[int, Sequence[int]]], d: int, q: int, field: PrimeField = DEFAULT_FIELD
) -> list[int]:
    """Reconstruct the ``k`` secrets of a dealing from ``(x, [share_l])`` pairs.

    Tolerates up to ``ceil(q/4) - 1`` wrong shares among those given.
    """
    bad = math.ceil(q / 4) - 1
    min_agree = max(d + 1, len(shares) - bad)
    out = decode_vectors(field, list(shares), d, min_agree)
    if out is None:
        raise ReconstructFailed(f"{len(shares)} shares do not certify a degree-{d} sharing")
    return out


class OpenSession(Session):
    """Robust opening of a vector of degree-``degree`` sharings to ``targets``.

    Each member calls :meth:`contribute` with its share vector. A target
    decodes once ``min_agree`` senders agree and calls ``on_open(values)``.
    """

    def __init__(
        self,
        host: Host,
        sid,
        members: Sequence[int],
        targets: Sequence[int],
        degree: int,
        min_agree: int,
        field: PrimeField = DEFAULT_FIELD,
        on_open: Callable[[list[int]], None] | None = None,
        tag: str = "OPEN",
        positions: dict | None = None,
    ):
        super().__init__(host, sid)
        self.members = list(members)
        self.pos = positions or {pid: i + 1 for i, pid in enumerate(self.members)}
        self.targets = list(targets)
        self.degree = degree
        self.min_agree = min_agree
        self.field = field
        self.on_open = on_open
        self.tag = tag
        self.points: dict[int, tuple] = {}
        self.value: list[int] | None = None
        self.contributed = False

    def contribute(self, shares: Sequence[int]) -> None:
        if self.contributed:
            return
        self.contributed = True
        self.multicast(self.targets, self.tag, tuple(shares))

    def on_message(self, sender, tag, payload):
        if tag != self.tag or self.value is not None or sender in self.points:
            return
        x = self.pos.get(sender)
        if x is None:
            return
        self.points[sender] = payload
        if len(self.points) < self.min_agree:
            return
        pts = [(self.pos[s], v) for s, v in self.points.items()]
        self.work(len(pts) * len(payload) * (self.degree + 1))
        val = decode_vectors(self.field, pts, self.degree, self.min_agree)
        if val is not None:
            self.value = val
            if self.on_open:
                self.on_open(val)
