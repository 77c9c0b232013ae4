"""Command line: ``qmpc run``, ``qmpc sweep`` and ``qmpc gen``."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .circuit.graph import load_circuit
from .config import Config, ConfigError, load_config
from .harness import audit, build_circuit, sweep


def cmd_run(args) -> int:
    cfg = load_config(args.config, seed=args.seed, adversary=args.adversary) if args.config else Config(
        seed=args.seed or 0, adversary=args.adversary or "crash")
    g = load_circuit(args.circuit)
    if cfg.n != g.n:
        if args.config:
            print(f"note: circuit has n={g.n}; config n={cfg.n} ignored", file=sys.stderr)
        cfg.n = g.n
    if cfg.p != g.p:
        print(f"note: circuit modulus {g.p} overrides config p={cfg.p}", file=sys.stderr)
    from .circuit.protocol import run_mpc

    res = run_mpc(
        g, cfg.input_vector(), t=cfg.bad_count, adversary=cfg.adversary, strategy=cfg.scheduler,
        seed=cfg.seed, delta=cfg.delta, c=cfg.c, c_lb=cfg.c_lb, default_input=cfg.default_input,
        step_budget=cfg.step_budget,
    )
    verdicts = audit(res)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "metrics.csv"), "w") as fh:
        fh.write(res.metrics.to_csv())
    summary = res.metrics.summary()
    outs = {str(i): (list(o) if o is not None else None) for i, o in sorted(res.outputs.items())}
    summary.update(
        config_hash=cfg.digest(), seed=cfg.seed, adversary=cfg.adversary, scheduler=cfg.scheduler,
        t=len(res.bad), m=g.m, expected_output=res.expected, size=res.size, correct=res.correct,
        all_terminated=res.all_terminated, outputs=outs, audit=verdicts,
    )
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    if cfg.trace:
        with open(os.path.join(args.out, "trace.jsonl"), "w") as fh:
            fh.write(res.to_jsonl())
    with open(os.path.join(args.out, "quorums.json"), "w") as fh:
        fh.write(res.setup.table.to_json())
    print(f"output={res.expected} |S|={res.size} correct={res.correct} audit="
          + ",".join(f"{k}:{'pass' if v else 'FAIL'}" for k, v in verdicts.items() if isinstance(v, bool)))
    return 0 if res.correct and all(v for v in verdicts.values() if isinstance(v, bool)) else 1


def cmd_sweep(args) -> int:
    with open(args.grid) as fh:
        grid = json.load(fh)
    rep = sweep(grid, progress=(lambda c: print("cell", c, file=sys.stderr)) if args.verbose else None)
    rep.write(args.out)
    for f in rep.fits:
        print(f"n={f['n']} {f['family']} {f['adversary']} {f['scheduler']}: slope {f['slope']:.3f}")
    return 0


def cmd_gen(args) -> int:
    g = build_circuit(args.family, args.n, args.m, args.depth, args.seed)
    text = g.to_text()
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="qmpc", description="Quorum-based asynchronous MPC simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="evaluate one circuit")
    r.add_argument("--circuit", required=True)
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.add_argument("--adversary", choices=["honest", "crash", "equivocate", "wrongshare"])
    r.add_argument("--out", required=True)
    r.set_defaults(fn=cmd_run)
    s = sub.add_parser("sweep", help="run a parameter grid")
    s.add_argument("--grid", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(fn=cmd_sweep)
    g = sub.add_parser("gen", help="write a generated circuit file")
    g.add_argument("--family", required=True, choices=["addition_tree", "inner_product", "random_dag", "layered"])
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int)
    g.add_argument("--depth", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="-")
    g.set_defaults(fn=cmd_gen)
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
