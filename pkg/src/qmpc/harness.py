"""Parameter sweeps, trend fits and trace audits.

Grid file (JSON)::

    {
      "n": [32],
      "m": [64, 128, 256, 512],
      "family": ["random_dag"],      # addition_tree | inner_product | random_dag | layered | tcounter
      "depth": [4],                  # layered only
      "adversary": ["crash"],
      "scheduler": ["fifo"],
      "seeds": [0, 1, 2],
      "epsilon": 0.01
    }

Every combination of the list-valued axes is a cell; a cell runs once per
seed. Output directory gets ``cells.csv`` (one row per cell with mean, max
and p99 of each metric), ``fits.csv`` (log-log slope of mean max-per-player
field elements against m, per (n, family, depth, adversary, scheduler)) and
``report.json`` holding both plus the grid and its hash.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .circuit.families import addition_tree, inner_product, layered, random_dag
from .circuit.protocol import MpcResult, audit_masks, run_mpc
from .tcounter import AuditFailure, audit_trace, run_counter

AXES = ("n", "m", "family", "depth", "adversary", "scheduler")
METRICS = ("max_field_elements", "max_msgs_sent", "max_msgs_received", "max_chain_depth", "max_computation", "seconds")
DEFAULTS = {"m": [None], "family": ["random_dag"], "depth": [None], "adversary": ["crash"], "scheduler": ["fifo"]}


def build_circuit(family: str, n: int, m=None, depth=None, seed: int = 0):
    if family == "addition_tree":
        return addition_tree(n)
    if family == "inner_product":
        return inner_product(n)
    if family == "random_dag":
        return random_dag(n, m, seed=seed)
    if family == "layered":
        return layered(n, depth or 2)
    raise ValueError(f"unknown circuit family {family!r}")


def grid_hash(grid: dict) -> str:
    return hashlib.sha256(json.dumps(grid, sort_keys=True).encode()).hexdigest()[:16]


def cells(grid: dict) -> list[dict]:
    axes = {a: grid.get(a, DEFAULTS.get(a)) for a in AXES}
    if axes["n"] is None:
        raise ValueError("grid needs an 'n' list")
    out = []
    for combo in itertools.product(*(axes[a] for a in AXES)):
        out.append(dict(zip(AXES, combo)))
    return out


def p99(xs) -> float:
    return float(np.percentile(xs, 99)) if len(xs) else float("nan")


def run_cell(cell: dict, seeds, epsilon: float = 0.01) -> dict:
    """Run one cell over ``seeds``; failures are counted, not raised."""
    samples = {k: [] for k in METRICS}
    row = dict(cell)
    row.update(runs=0, correct=0, audited=0, errors=0, first_error="")
    for seed in seeds:
        t0 = time.perf_counter()
        try:
            if cell["family"] == "tcounter":
                n = cell["n"]
                tau = math.ceil(7 * n / 8)
                run = run_counter(n, tau, range(1, tau + 1), cell["scheduler"], seed)
                audit_trace(run.layout, run.trace)
                m = run.metrics
                ok = run.done_all
                row["audited"] += 1
            else:
                g = build_circuit(cell["family"], cell["n"], cell["m"], cell["depth"], seed)
                row["m"] = g.m
                xs = [(seed * 31 + i) % 1000 for i in range(g.n)]
                res = run_mpc(g, xs, adversary=cell["adversary"], strategy=cell["scheduler"], seed=seed,
                              epsilon=epsilon, trace=True)
                m = res.metrics
                ok = res.correct
                if all(audit(res).values()):
                    row["audited"] += 1
        except Exception as exc:  # recorded per cell
            row["errors"] += 1
            if not row["first_error"]:
                row["first_error"] = f"seed {seed}: {type(exc).__name__}: {exc}"
            continue
        row["runs"] += 1
        row["correct"] += int(ok)
        samples["max_field_elements"].append(m.max_over_good("field_elements_sent"))
        samples["max_msgs_sent"].append(m.max_over_good("msgs_sent"))
        samples["max_msgs_received"].append(m.max_over_good("msgs_received"))
        samples["max_chain_depth"].append(m.max_chain_depth_delivered)
        samples["max_computation"].append(m.max_over_good("computation_steps"))
        samples["seconds"].append(time.perf_counter() - t0)
    for k, xs in samples.items():
        if xs:
            row[f"{k}_mean"] = float(np.mean(xs))
            row[f"{k}_max"] = float(np.max(xs))
            row[f"{k}_p99"] = p99(xs)
        else:
            row[f"{k}_mean"] = row[f"{k}_max"] = row[f"{k}_p99"] = ""
    return row


def fit_slope(ms, ys) -> float:
    """Least-squares slope of log y against log m."""
    lm, ly = np.log(np.asarray(ms, float)), np.log(np.asarray(ys, float))
    return float(np.polyfit(lm, ly, 1)[0])


def fits(rows: list[dict]) -> list[dict]:
    groups: dict = {}
    for r in rows:
        if r.get("family") == "tcounter" or r.get("max_field_elements_mean") in ("", None):
            continue
        key = (r["n"], r["family"], r["depth"], r["adversary"], r["scheduler"])
        groups.setdefault(key, {})[r["m"]] = r["max_field_elements_mean"]
    out = []
    for key, by_m in sorted(groups.items(), key=lambda kv: str(kv[0])):
        if len(by_m) < 2:
            continue
        ms = sorted(by_m)
        ys = [by_m[m] for m in ms]
        ratios = [ys[i + 1] / ys[i] for i in range(len(ys) - 1)]
        out.append(dict(zip(("n", "family", "depth", "adversary", "scheduler"), key),
                        ms=ms, slope=fit_slope(ms, ys), ratios=ratios))
    return out


@dataclass
class Report:
    grid: dict
    rows: list = field(default_factory=list)
    fits: list = field(default_factory=list)

    @property
    def config_hash(self) -> str:
        return grid_hash(self.grid)

    def to_json(self) -> str:
        return json.dumps({"config_hash": self.config_hash, "grid": self.grid, "cells": self.rows, "fits": self.fits},
                          indent=1, default=str)

    def write(self, out_dir) -> None:
        os.makedirs(out_dir, exist_ok=True)
        cols = list(AXES) + ["runs", "correct", "audited", "errors"]
        cols += [f"{k}_{s}" for k in METRICS for s in ("mean", "max", "p99")] + ["first_error"]
        with open(os.path.join(out_dir, "cells.csv"), "w", newline="") as fh:
            w = csv.DictWriter(fh, cols, extrasaction="ignore")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in cols})
        with open(os.path.join(out_dir, "fits.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "family", "depth", "adversary", "scheduler", "ms", "slope", "ratios"])
            for f in self.fits:
                w.writerow([f["n"], f["family"], f["depth"] or "", f["adversary"], f["scheduler"],
                            " ".join(map(str, f["ms"])), f"{f['slope']:.4f}",
                            " ".join(f"{x:.4f}" for x in f["ratios"])])
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            fh.write(self.to_json())


def sweep(grid: dict, progress=None) -> Report:
    seeds = list(grid.get("seeds", []))
    eps = grid.get("epsilon", 0.01)
    rep = Report(grid)
    for cell in cells(grid):
        if progress:
            progress(cell)
        rep.rows.append(run_cell(cell, seeds, eps))
    rep.fits = fits(rep.rows)
    return rep


# ---------------------------------------------------------------------------
# audits


def audit_counter_events(result: MpcResult, events) -> int:
    """Soundness and lineage of the input counter inside an MPC trace.

    Root-quorum members may credit an input flag only once, only for an
    input whose commitment was agreed, and Done must not fire before
    ``tau`` distinct credited flags.
    """
    bad = result.bad
    committed = {e["input"] for e in events if e.get("ev") == "commit_decided" and e["b"] == 1 and e["player"] not in bad}
    per_member: dict = {}
    for e in events:
        if e.get("player") in bad:
            continue
        if e.get("ev") == "counter" and e.get("what") == "flag" and e.get("action") in ("credited", "absorbed"):
            origin = tuple(e["origin"])
            seen = per_member.setdefault((e["player"], e["node"]), set())
            if origin in seen:
                raise AuditFailure("flag counted twice", e)
            seen.add(origin)
            if origin[0] == "in" and origin[1] not in committed:
                raise AuditFailure("flag for an input that was never committed", e)
        elif e.get("ev") == "done_sum":
            if e["flags"] < result.setup.tau and result.setup.layout.degenerate:
                raise AuditFailure("Done with fewer than tau flags", e)
            if e["flags"] > len(committed):
                raise AuditFailure("counter exceeds committed inputs", e)
    return len(committed)


def audit(result: MpcResult, events=None) -> dict:
    """Verdict per invariant: soundness, lineage, mask invariant, |S| bound."""
    events = result.trace if events is None else events
    verdicts = {}

    def check(name, fn):
        try:
            fn()
            verdicts[name] = True
        except (AuditFailure, AssertionError, ValueError) as exc:
            verdicts[name] = False
            verdicts.setdefault("_first_failure", f"{name}: {exc}")

    check("soundness", lambda: audit_counter_events(result, events))
    check("mask_invariant", lambda: audit_masks(result.setup, events, result.bad))

    def size_bound():
        n, t = result.setup.graph.n, result.setup.graph.n - result.setup.tau
        for pid, out in result.outputs.items():
            if out is not None and out[1] < n - t:
                raise AuditFailure(f"|S|={out[1]} below n - t at player {pid}")
            if out is not None and out[1] != result.size:
                raise AuditFailure(f"|S| reported {out[1]} but {result.size} inputs committed")

    check("size_bound", size_bound)
    first = verdicts.pop("_first_failure", None)
    if first is not None:
        verdicts["first_failure"] = first
    return verdicts


def require(verdicts: dict) -> None:
    bad = [k for k, v in verdicts.items() if v is False]
    if bad:
        raise AuditFailure(verdicts.get("first_failure", ", ".join(bad)))
