"""Acceptance criteria 1-9, one test each.

Every test records a single ``PASS``/``FAIL`` line; ``conftest.py`` prints
them at the end of the session. Run directly (``python3
tests/test_acceptance.py``) to print the lines without pytest. Set
``QMPC_ACCEPT_SCALE`` to a fraction below 1 for a quick dry run with fewer
seeds; the thresholds stay the same.
"""

from __future__ import annotations

import itertools
import math
import os
import random
import sys
import time
from collections import Counter

import numpy as np
import pytest

from qmpc.agreement import BaSession
from qmpc.circuit.families import addition_tree, inner_product, layered, random_dag
from qmpc.circuit.protocol import audit_masks, run_mpc
from qmpc.field import DEFAULT_FIELD as F
from qmpc.harness import fit_slope
from qmpc.hwmpc import HwMpcSession, add_program, majority_program, mul_program
from qmpc.node import Host
from qmpc.quorum import GoodnessUnsatisfiable, create_quorums
from qmpc.sharing import VerifiedDeal, avss_rec
from qmpc.simnet import Behavior, bad_bound, make_scheduler, spawn
from qmpc.tcounter import AuditFailure, audit_trace, run_counter

SCALE = float(os.environ.get("QMPC_ACCEPT_SCALE", "1"))
STRATEGIES = ("fifo", "random", "maxchain")
BEHAVIORS = ("crash", "equivocate", "wrongshare")
RESULTS: dict = {}


def seeds(k: int) -> range:
    return range(max(1, round(k * SCALE)))


def record(num: int, ok: bool, detail: str) -> None:
    RESULTS[num] = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}"


# ---------------------------------------------------------------------------
# 1 and 2: threshold counter


_counter_runs: list = []


def counter_runs() -> list:
    if not _counter_runs:
        for n in (256, 1024):
            tau = math.ceil(7 * n / 8)
            for strategy in STRATEGIES:
                for seed in seeds(200):
                    run = run_counter(n, tau, range(1, tau + 1), strategy, seed)
                    try:
                        audit_trace(run.layout, run.trace)
                        sound = True
                    except AuditFailure:
                        sound = False
                    m = run.metrics
                    load = max(max(m.msgs_sent[i], m.msgs_received[i]) for i in range(1, n + 1))
                    _counter_runs.append(dict(n=n, done=run.done_all, sound=sound, load=load,
                                              depth=m.max_chain_depth_delivered))
                    run.trace = None
    return _counter_runs


def test_criterion_1_counter_correctness():
    t0 = time.perf_counter()
    runs = counter_runs()
    elapsed = time.perf_counter() - t0
    misses = sum(not r["done"] for r in runs)
    unsound = sum(not r["sound"] for r in runs)
    ok = misses < 0.01 * len(runs) and unsound == 0 and elapsed < 300
    record(1, ok, f"{len(runs)} runs, completeness failures {misses} (<1%), soundness failures {unsound}, "
                  f"{elapsed:.0f}s (<300s)")
    assert ok


def test_criterion_2_counter_load_and_latency():
    runs = counter_runs()
    worst_load = max(r["load"] / math.log2(r["n"]) for r in runs)
    worst_depth = max(r["depth"] / math.log2(r["n"]) for r in runs)
    ok = worst_load <= 30 and worst_depth <= 10
    record(2, ok, f"max load {worst_load:.2f}*log2 n (<=30), max chain depth {worst_depth:.2f}*log2 n (<=10)")
    assert ok


# ---------------------------------------------------------------------------
# 3 and 4: end-to-end MPC


_mpc_runs: list = []


def mpc_runs() -> list:
    if not _mpc_runs:
        for n in (16, 32, 64):
            t = bad_bound(n, 0.01)
            circuits = {"addition_tree": addition_tree(n), "inner_product": inner_product(n)}
            for beh in BEHAVIORS:
                for fam in ("addition_tree", "inner_product", "random_dag"):
                    for seed in seeds(50):
                        g = random_dag(n, 4 * n, seed=seed) if fam == "random_dag" else circuits[fam]
                        rng = random.Random(seed * 7919 + n)
                        xs = [rng.randrange(F.p) for _ in range(n)]
                        strategy = STRATEGIES[seed % 3]
                        row = dict(n=n, beh=beh, fam=fam, seed=seed, strategy=strategy)
                        try:
                            r = run_mpc(g, xs, t=t, adversary=beh, strategy=strategy, seed=seed)
                            row.update(correct=r.correct, terminated=r.all_terminated,
                                       size_ok=r.size >= n - t and all(o[1] >= n - t for o in r.outputs.values()
                                                                       if o is not None))
                            try:
                                audit_masks(r.setup, r.trace, r.bad)
                                row["mask"] = True
                            except (AuditFailure, ValueError):
                                row["mask"] = False
                        except Exception as exc:  # recorded as a failed run
                            row.update(correct=False, terminated=False, size_ok=False, mask=False, error=repr(exc))
                        _mpc_runs.append(row)
    return _mpc_runs


def _first_bad(runs, key):
    bad = [r for r in runs if not r[key]]
    return f"; first failure n={bad[0]['n']} {bad[0]['fam']} {bad[0]['beh']} seed {bad[0]['seed']}" if bad else ""


def test_criterion_3_mpc_correctness():
    runs = mpc_runs()
    c = sum(r["correct"] for r in runs)
    s = sum(r["size_ok"] for r in runs)
    term = sum(r["terminated"] for r in runs)
    ok = c == s == term == len(runs)
    record(3, ok, f"{len(runs)} runs: correct {c}, |S|>=n-t {s}, all good terminated {term}"
                  + _first_bad(runs, "correct"))
    assert ok


def test_criterion_4_mask_invariant():
    runs = mpc_runs()
    good = sum(r["mask"] for r in runs)
    ok = good == len(runs)
    record(4, ok, f"mask invariant held on {good}/{len(runs)} runs" + _first_bad(runs, "mask"))
    assert ok


# ---------------------------------------------------------------------------
# 5: AVSS binding and secrecy


class ShiftSome(Behavior):
    """Bad dealer: rows and columns to ``victims`` come from a shifted polynomial."""

    name = "shift"

    def __init__(self, victims, d, seed):
        super().__init__(seed=seed)
        self.victims = set(victims)
        self.d = d

    def outgoing(self, msg):
        if msg.tag == "SHARE" and msg.receiver in self.victims:
            pl = list(msg.payload)
            pl[0] = (pl[0] + 1) % F.p
            pl[self.d + 1] = (pl[self.d + 1] + 1) % F.p
            msg.payload = tuple(pl)
        elif msg.tag in ("ECHO", "READY") and self.rng.random() < 0.5:
            msg.payload = tuple((v + 1) % F.p for v in msg.payload)
        return [msg]


def avss_session(seed, q=16, f=3, d=3):
    rng = random.Random(seed)
    bad = rng.sample(range(1, q + 1), 3)
    good = [i for i in range(1, q + 1) if i not in bad]
    dealer = bad[0] if seed % 2 else good[0]
    kind = ["crash", "equivocate", "wrongshare", "shift"][seed % 4]
    if kind == "shift":
        victims = rng.sample(good, rng.randint(0, 5))
        behs = {b: ShiftSome(victims, d, seed * 31 + b) for b in bad}
    else:
        behs = {b: kind for b in bad}
    secret = rng.randrange(F.p)

    class P(Host):
        def start(self):
            self.out = "unset"
            self.vd = VerifiedDeal(self, ("v",), dealer, range(1, q + 1), d, f, 1,
                                   on_done=lambda sh: setattr(self, "out", sh))
            if self.pid == dealer:
                self.vd.avss.deal([secret], self.sim.player_rng(self.pid))

    sim = spawn(q, bad, behs, lambda pid: P(), scheduler=make_scheduler(STRATEGIES[seed % 3], seed), seed=seed)
    sim.run_until()
    procs = [sim.processes[i] for i in good]
    if any(p.out == "unset" for p in procs):
        for p in procs:
            p.vd.vote_abort()
        sim.run_until()
    outs = [p.out for p in procs]
    if "unset" in outs:
        return False, "undecided"
    if all(o is None for o in outs):
        return dealer in bad, "abort"
    if any(o is None for o in outs):
        return False, "split"
    # any d + 1 good shares must open to one value
    pts = [(o.x, [o.shares[0]]) for o in outs]
    subsets = itertools.islice(itertools.combinations(pts, d + 1), 0, None, 7)
    vals = {avss_rec(list(sub), d, q)[0] for sub in subsets}
    vals.add(avss_rec(pts, d, q)[0])
    if len(vals) != 1:
        return False, "two values"
    if dealer not in bad and vals != {secret}:
        return False, "wrong value"
    return True, "accept"


def bivariate_secrecy_f11() -> bool:
    p = 11
    for i in range(1, 5):
        views = []
        for s in range(p):
            c = Counter()
            for a01, a10, a11 in itertools.product(range(p), repeat=3):
                row = ((s + a01 * i) % p, (a10 + a11 * i) % p)
                col = ((s + a10 * i) % p, (a01 + a11 * i) % p)
                c[row, col] += 1
            views.append(c)
        if any(v != views[0] for v in views):
            return False
    # single Shamir share: every value is consistent with every secret
    return all({(s + a * x) % p for a in range(p)} == set(range(p)) for s in range(p) for x in range(1, 5))


def test_criterion_5_avss_binding_and_secrecy():
    outcomes = Counter()
    failures = 0
    for seed in seeds(500):
        ok, what = avss_session(seed)
        outcomes[what] += 1
        failures += not ok
    secrecy = bivariate_secrecy_f11()
    ok = failures == 0 and secrecy
    record(5, ok, f"binding on {sum(outcomes.values()) - failures}/{sum(outcomes.values())} sessions "
                  f"({dict(outcomes)}), F_11 q=4 d=1 secrecy {'exhaustive OK' if secrecy else 'BROKEN'}")
    assert ok


# ---------------------------------------------------------------------------
# 6: HW-MPC and BA


def hw_session(seed, q=16, f=3, d=3):
    rng = random.Random(seed)
    bad = rng.sample(range(1, q + 1), rng.randint(0, 3))
    beh = rng.choice(BEHAVIORS)
    kind = seed % 3
    if kind == 0:
        prog, inputs = add_program(1, 2), {1: [rng.randrange(F.p)], 2: [rng.randrange(F.p)]}
    elif kind == 1:
        prog, inputs = mul_program(1, 2), {1: [rng.randrange(F.p)], 2: [rng.randrange(F.p)]}
    else:
        ones = rng.randrange(q + 1)
        prog = majority_program(list(range(1, q + 1)))
        inputs = {i: [1 if i <= ones else 0] for i in range(1, q + 1)}

    class P(Host):
        def start(self):
            self.out = None
            owned = len(prog.input_owners().get(self.pid, []))
            self.h = HwMpcSession(self, ("hw",), range(1, q + 1), d, f, prog, inputs.get(self.pid, [0] * owned),
                                  on_output=lambda v: setattr(self, "out", v))
            self.h.start(self.sim.player_rng(self.pid))

    sim = spawn(q, bad, {b: beh for b in bad}, lambda pid: P(), scheduler=make_scheduler(STRATEGIES[seed % 3], seed),
                seed=seed)
    sim.run_until()
    good = [sim.processes[i] for i in range(1, q + 1) if i not in bad]
    inc = good[0].h.acs.decided
    eff = {o: (v if inc.get(o) == 1 else [0] * len(v)) for o, v in inputs.items()}
    want = tuple(prog.evaluate(eff))
    return all(p.out is not None and tuple(p.out) == want for p in good)


def ba_run(seed, q=16, f=3):
    rng = random.Random(seed)
    inputs = {i: rng.randrange(2) for i in range(1, q + 1)}
    bad = rng.sample(range(1, q + 1), f)
    beh = BEHAVIORS[seed % 3]

    class P(Host):
        def start(self):
            self.dec = None
            self.ba = self.add_session(BaSession(self, ("ba",), range(1, q + 1), f,
                                                 on_decide=lambda b: setattr(self, "dec", b)))
            self.ba.propose(inputs[self.pid])

    sim = spawn(q, bad, {b: beh for b in bad}, lambda pid: P(),
                scheduler=make_scheduler(("random", "maxchain", "stall")[seed % 3], seed), seed=seed)
    sim.run_until()
    good = [sim.processes[i] for i in range(1, q + 1) if i not in bad]
    decs = {p.dec for p in good}
    ok = len(decs) == 1 and None not in decs and decs <= {inputs[p.pid] for p in good}
    return ok, max(p.ba.rounds for p in good)


def test_criterion_6_hwmpc_and_ba():
    hw_ok = sum(hw_session(seed) for seed in seeds(1000))
    hw_n = len(seeds(1000))
    ba = [ba_run(seed) for seed in seeds(1000)]
    ba_ok = sum(ok for ok, _ in ba)
    rounds = [r for _, r in ba]
    p99 = float(np.percentile(rounds, 99))
    ok = hw_ok == hw_n and ba_ok == len(ba) and p99 <= 40
    record(6, ok, f"HW-MPC matched oracle {hw_ok}/{hw_n}; BA agreement+validity {ba_ok}/{len(ba)}, "
                  f"p99 coin rounds {p99:.0f} (<=40)")
    assert ok


# ---------------------------------------------------------------------------
# 7: scaling in m


def test_criterion_7_scaling_in_m():
    n, ms = 32, (64, 128, 256, 512)
    means = []
    for m in ms:
        vals = []
        for seed in seeds(10):
            r = run_mpc(random_dag(n, m, seed=seed), [seed + i for i in range(n)], strategy="random", seed=seed)
            assert r.correct
            # quorum formation is not simulated, so none of its cost is in here
            vals.append(r.metrics.max_over_good("field_elements_sent"))
        means.append(float(np.mean(vals)))
    ratios = [b / a for a, b in zip(means, means[1:])]
    slope = fit_slope(ms, means)
    ok = all(1.6 <= x <= 2.6 for x in ratios)
    record(7, ok, "max field elements per player " + "/".join(f"{v:.0f}" for v in means)
           + f" for m={'/'.join(map(str, ms))}; per-doubling ratios "
           + ", ".join(f"{x:.2f}" for x in ratios) + f" (each in [1.6, 2.6]); log-log slope {slope:.2f}")
    assert ok


# ---------------------------------------------------------------------------
# 8: latency against circuit depth


def test_criterion_8_depth_latency():
    n, depths = 32, (2, 4, 8)
    mean = {}
    for d in depths:
        g = layered(n, d)
        assert g.depth() == d
        vals = []
        for seed in seeds(100):
            r = run_mpc(g, [(seed * 13 + i) % 101 for i in range(n)], strategy="random", seed=seed)
            assert r.correct
            vals.append(r.metrics.max_chain_depth_delivered)
        mean[d] = float(np.mean(vals))
    rel = {d: mean[d] / mean[2] for d in depths}
    ok = all(rel[d] <= 1.5 * d / 2 for d in depths)
    record(8, ok, "mean max chain depth " + ", ".join(f"d={d}: {mean[d]:.1f}" for d in depths)
           + "; ratio to d=2 " + ", ".join(f"{rel[d]:.2f} (<= {1.5 * d / 2:.1f})" for d in depths))
    assert ok


# ---------------------------------------------------------------------------
# 9: quorum goodness


def test_criterion_9_quorum_goodness():
    n, t = 64, 7
    accepted = rejected = good = 0
    for seed in seeds(1000):
        bad = random.Random(seed).sample(range(1, n + 1), t)
        try:
            tab = create_quorums(n, bad, seed=seed)
        except GoodnessUnsatisfiable:
            rejected += 1
            continue
        accepted += 1
        frac_ok = tab.max_bad_fraction(bad) <= t / n + tab.delta
        load_ok = tab.max_membership() <= tab.c_lb * math.log2(n)
        good += frac_ok and load_ok
    ok = accepted > 0 and good == accepted
    record(9, ok, f"{good}/{accepted} accepted tables good and load balanced ({rejected} rejected), "
                  f"bound t/n+delta = {t / n + 0.05:.3f}, membership <= {4 * math.log2(n):.0f}")
    assert ok


if __name__ == "__main__":
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]
    for fn in tests:
        try:
            fn()
        except AssertionError:
            pass
    for k in sorted(RESULTS):
        print(RESULTS[k])
    sys.exit(0 if all("PASS" in v for v in RESULTS.values()) else 1)
