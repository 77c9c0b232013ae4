"""Circuit generators used by tests and experiments."""

from __future__ import annotations

import random

from ..field import MERSENNE_31
from .graph import CircuitGraph, Gate, build_graph


class _Builder:
    """Allocates gates bottom-up, then renumbers so the output is gate 1."""

    def __init__(self, n: int):
        self.n = n
        self.specs: list = []  # (op, a, b) with refs ("node", id) or ("tmp", k) or ("const", c)

    def gate(self, op, a, b) -> tuple:
        self.specs.append((op, a, b))
        return ("tmp", len(self.specs) - 1)

    def finish(self, p: int = MERSENNE_31) -> CircuitGraph:
        m = len(self.specs)
        # last allocated gate is the output; number gates in reverse allocation order
        ident = {k: self.n + (m - k) for k in range(m)}

        def fix(r):
            return ("node", ident[r[1]]) if r[0] == "tmp" else r

        gates = {ident[k]: Gate(op, fix(a), fix(b)) for k, (op, a, b) in enumerate(self.specs)}
        return build_graph(self.n, m, p, gates)


def inp(i: int) -> tuple:
    return ("node", i)


def addition_tree(n: int, p: int = MERSENNE_31) -> CircuitGraph:
    """Sum of all inputs plus the constant 1: ``m = n`` gates."""
    b = _Builder(n)
    level = [inp(i) for i in range(1, n + 1)]
    while len(level) > 1:
        nxt = [b.gate("ADD", level[k], level[k + 1]) for k in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    b.gate("ADD", level[0], ("const", 1))
    return b.finish(p)


def inner_product(n: int, p: int = MERSENNE_31) -> CircuitGraph:
    """``sum_i x_i * x_{i+1}`` cyclically: n products and n - 1 additions."""
    b = _Builder(n)
    level = [b.gate("MUL", inp(i), inp(i % n + 1)) for i in range(1, n + 1)]
    while len(level) > 1:
        nxt = [b.gate("ADD", level[k], level[k + 1]) for k in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return b.finish(p)


def random_dag(n: int, m: int | None = None, seed: int = 0, p: int = MERSENNE_31) -> CircuitGraph:
    """Random fan-in-2 circuit with ``m`` gates (default ``4n``) and fan-out at most 2."""
    m = 4 * n if m is None else m
    rng = random.Random(seed)
    b = _Builder(n)
    uses: dict = {}
    unused: list = [inp(i) for i in range(1, n + 1)]
    avail: list = []
    for _ in range(m):
        picks = []
        for _ in range(2):
            pool = unused if unused and (rng.random() < 0.7 or not avail) else avail
            r = rng.choice(pool)
            if r in unused:
                unused.remove(r)
                if r[0] == "tmp":
                    avail.append(r)
            elif r[0] == "tmp":
                avail.remove(r)
            uses[r] = uses.get(r, 0) + 1
            picks.append(r)
        g = b.gate("MUL" if rng.random() < 0.5 else "ADD", picks[0], picks[1])
        unused.append(g)
    return b.finish(p)


def layered(n: int, depth: int, p: int = MERSENNE_31) -> CircuitGraph:
    """Circuit of multiplicative/additive depth ``depth`` over ``n`` inputs.

    Layer 1 pairs up inputs; each later layer combines neighbours of the
    previous layer (every gate used at most twice); the output adds two
    gates of the penultimate layer.
    """
    if depth < 1:
        raise ValueError("depth >= 1")
    b = _Builder(n)
    if depth == 1:
        b.gate("ADD", inp(1), inp(2 if n > 1 else 1))
        return b.finish(p)
    w = max(n // 2, 2)
    layer = [b.gate("MUL" if k % 2 else "ADD", inp(2 * k % n + 1), inp((2 * k + 1) % n + 1)) for k in range(w)]
    for lvl in range(2, depth):
        layer = [b.gate("ADD" if (k + lvl) % 2 else "MUL", layer[k], layer[(k + 1) % w]) for k in range(w)]
    b.gate("ADD", layer[0], layer[1])
    return b.finish(p)


FAMILIES = {
    "addition_tree": lambda n, seed=0: addition_tree(n),
    "inner_product": lambda n, seed=0: inner_product(n),
    "random_dag": lambda n, seed=0: random_dag(n, seed=seed),
}
