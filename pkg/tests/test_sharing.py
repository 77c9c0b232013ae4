import itertools
import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from qmpc.field import DEFAULT_FIELD as F, PrimeField
from qmpc.node import Host
from qmpc.sharing import (
    DealFailed,
    DegreeTooHigh,
    OpenSession,
    ReconstructFailed,
    ShamirShare,
    VerifiedDeal,
    avss_rec,
    decode_vectors,
    reconstruct,
    shamir_share,
)
from qmpc.simnet import Behavior, make_scheduler, spawn

F11 = PrimeField(11)
Q, FB, D = 16, 3, 3  # quorum size, bad bound, degree ceil(q/4) - 1
elems = st.integers(0, F.p - 1)


def test_degree_zero_shares_are_the_secret():
    assert {s.y for s in shamir_share(77, 5, 0, random.Random(1))} == {77}


def test_degree_too_high():
    with pytest.raises(DegreeTooHigh):
        shamir_share(1, 4, 4, random.Random(0))


@settings(max_examples=50)
@given(elems, st.integers(0, 5), st.randoms(use_true_random=False))
def test_any_d_plus_one_shares_reconstruct(secret, d, rnd):
    shares = shamir_share(secret, 12, d, rnd)
    subset = rnd.sample(shares, d + 1)
    assert F.interpolate_at([(s.x, s.y) for s in subset], 0) == secret
    assert reconstruct(shares, d) == secret


def test_single_share_secrecy_f11():
    # enumerate every degree-1 polynomial: each share value must be equally
    # likely under every secret
    for x in range(1, 11):
        views = [Counter(F11.eval([s, a], x) for a in range(11)) for s in range(11)]
        assert all(v == views[0] for v in views)
        assert views[0] == Counter(range(11))


def bivariate_view(a, i, p):
    """Member i's row S(x, i) and column S(i, y) for a 2x2 coefficient matrix."""
    row = tuple(sum(a[u][v] * i**v for v in range(2)) % p for u in range(2))
    col = tuple(sum(a[u][v] * i**u for u in range(2)) % p for v in range(2))
    return row, col


def test_bivariate_secrecy_f11_q4_d1():
    p = 11
    for i in range(1, 5):
        per_secret = []
        for s in range(p):
            c = Counter()
            for a01, a10, a11 in itertools.product(range(p), repeat=3):
                c[bivariate_view(((s, a01), (a10, a11)), i, p)] += 1
            per_secret.append(c)
        assert all(c == per_secret[0] for c in per_secret)


def brute_force_decode(pts, d, need):
    for sub in itertools.combinations(pts, d + 1):
        poly = F.interpolate(list(sub))
        if sum(F.eval(poly, x) == y for x, y in pts) >= need:
            return poly[0]
    return None


@pytest.mark.parametrize("seed", range(10))
def test_three_corrupt_shares_recovered(seed):
    rng = random.Random(seed)
    secret = rng.randrange(F.p)
    shares = shamir_share(secret, Q, D, rng)
    for i in rng.sample(range(Q), 3):
        shares[i] = ShamirShare(shares[i].x, rng.randrange(F.p))
    pts = [(s.x, s.y) for s in shares]
    assert brute_force_decode(pts, D, Q - 3) == secret
    assert avss_rec([(x, [y]) for x, y in pts], D, Q) == [secret]


def test_mixed_sessions_fail():
    rng = random.Random(5)
    a = shamir_share(10, Q, D, rng)
    b = shamir_share(20, Q, D, rng)
    mixed = [(s.x, [s.y]) for s in a[:8]] + [(s.x, [s.y]) for s in b[8:]]
    assert brute_force_decode([(x, v[0]) for x, v in mixed], D, Q - 3) is None
    with pytest.raises(ReconstructFailed):
        avss_rec(mixed, D, Q)
    with pytest.raises(ReconstructFailed):
        reconstruct(a[:8] + b[8:], D)


@settings(max_examples=40)
@given(elems, elems, st.randoms(use_true_random=False))
def test_additivity(s1, s2, rnd):
    a, b = shamir_share(s1, 8, 2, rnd), shamir_share(s2, 8, 2, rnd)
    summed = [ShamirShare(x.x, F.add(x.y, y.y)) for x, y in zip(a, b)]
    assert reconstruct(summed, 2) == F.add(s1, s2)


def test_decode_vectors_width_mismatch_dropped():
    pts = [(x, [F.eval([4, 1], x), F.eval([9, 2], x)]) for x in range(1, 6)]
    pts.append((6, [1]))
    assert decode_vectors(F, pts, 1, 5) == [4, 9]


# -- AVSS ----------------------------------------------------------------------


class ShiftVictims(Behavior):
    """A dealer whose rows and columns to ``victims`` come from S + 1."""

    def __init__(self, victims):
        super().__init__()
        self.victims = set(victims)

    def outgoing(self, msg):
        if msg.tag == "SHARE" and msg.receiver in self.victims:
            pl = list(msg.payload)
            pl[0] = (pl[0] + 1) % F.p
            pl[D + 1] = (pl[D + 1] + 1) % F.p
            msg.payload = tuple(pl)
        return [msg]


def deal(secrets, dealer=1, bad=(), behaviors=None, strategy="random", seed=0):
    class P(Host):
        def start(self):
            self.out = "unset"
            self.vd = VerifiedDeal(self, ("v",), dealer, range(1, Q + 1), D, FB, len(secrets),
                                   on_done=lambda sh: setattr(self, "out", sh))
            if self.pid == dealer:
                self.vd.avss.deal(secrets, self.sim.player_rng(self.pid))

    sim = spawn(Q, bad, behaviors, lambda pid: P(), scheduler=make_scheduler(strategy, seed), seed=seed)
    sim.run_until()
    good = [sim.processes[i] for i in range(1, Q + 1) if i not in bad]
    if any(p.out == "unset" for p in good):
        # the caller's timeout: every good member votes abort
        for p in good:
            p.vd.vote_abort()
        sim.run_until()
    outs = [p.out for p in good]
    assert "unset" not in outs
    return good, outs


@pytest.mark.parametrize("strategy", ["fifo", "random", "maxchain", "stall"])
def test_honest_dealer_all_complete(strategy):
    good, outs = deal([42, 7], strategy=strategy, seed=3)
    assert len(outs) == Q and all(o is not None for o in outs)
    assert avss_rec([(o.x, o.shares) for o in outs], D, Q) == [42, 7]
    for o in outs:
        assert len(o.rows[0]) == len(o.cols[0]) == D + 1


@pytest.mark.parametrize("beh", ["equivocate", "wrongshare", "crash"])
def test_honest_dealer_survives_three_bad(beh):
    bad = [4, 9, 13]
    for seed in range(5):
        good, outs = deal([5], bad=bad, behaviors={b: beh for b in bad}, seed=seed)
        assert all(o is not None for o in outs)
        assert avss_rec([(o.x, o.shares) for o in outs], D, Q) == [5]


@pytest.mark.parametrize("strategy", ["fifo", "random", "maxchain"])
def test_inconsistent_rows_to_five_abort(strategy):
    # 11 consistent members see at most 11 < q - f = 13 matching echoes, so
    # nobody readies; every good member sees >= f + 1 mismatches and complains
    victims = [2, 3, 4, 5, 6]
    good, outs = deal([9], bad=[1], behaviors={1: ShiftVictims(victims)}, strategy=strategy)
    assert outs == [None] * 15
    with pytest.raises(DealFailed):
        good[0].vd.share()


def test_crashed_dealer_aborts():
    _, outs = deal([9], bad=[1])
    assert outs == [None] * 15


@pytest.mark.parametrize("beh", ["equivocate", "wrongshare"])
@pytest.mark.parametrize("strategy", ["random", "maxchain"])
def test_binding_bad_dealer(beh, strategy):
    for seed in range(8):
        rng = random.Random(seed)
        bad = rng.sample(range(1, Q + 1), 3)
        good, outs = deal([11], dealer=bad[0], bad=bad, behaviors={b: beh for b in bad},
                          strategy=strategy, seed=seed)
        if outs[0] is None:
            assert all(o is None for o in outs)
            continue
        pts = [(o.x, o.shares[0]) for o in outs]
        poly = F.interpolate(pts[: D + 1])
        assert all(F.eval(poly, x) == y for x, y in pts)


def test_open_session_tolerates_wrong_contribution():
    rng = random.Random(2)
    shares = shamir_share(99, Q, D, rng)

    class P(Host):
        def start(self):
            self.val = None
            s = self.add_session(OpenSession(self, ("o",), range(1, Q + 1), range(1, Q + 1), D, Q - 3,
                                             on_open=lambda v: setattr(self, "val", v)))
            s.contribute([shares[self.pid - 1].y])

    bad = [1, 2, 3]
    sim = spawn(Q, bad, {b: "wrongshare" for b in bad}, lambda pid: P(), scheduler=make_scheduler("random", 1))
    sim.run_until()
    assert all(sim.processes[i].val == [99] for i in range(4, Q + 1))
