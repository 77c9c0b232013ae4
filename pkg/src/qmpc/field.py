"""Prime-field arithmetic and polynomial helpers.

Field elements are plain Python ints in ``[0, p)``; polynomials are lists of
coefficients, lowest degree first. Everything here is pure and side-effect
free so it can be shared between simulated players.
"""

from __future__ import annotations

import struct

import numpy as np
from dataclasses import dataclass
from typing import Iterable, Sequence

MERSENNE_31 = 2**31 - 1


class ZeroInverse(ArithmeticError):
    """Raised when inverting zero."""


class DuplicateAbscissa(ValueError):
    """Raised when interpolation points share an x coordinate."""


def is_prime(p: int) -> bool:
    if p < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
    for s in small:
        if p % s == 0:
            return p == s
    d, r = p - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in small:
        x = pow(a, d, p)
        if x in (1, p - 1):
            continue
        for _ in range(r - 1):
            x = x * x % p
            if x == p - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class FieldElement:
    """A boxed field element, used at API boundaries and in transcripts."""

    value: int
    p: int = MERSENNE_31

    def __post_init__(self):
        if not 0 <= self.value < self.p:
            raise ValueError(f"{self.value} outside [0, {self.p})")

    def __add__(self, other: "FieldElement") -> "FieldElement":
        return FieldElement((self.value + other.value) % self.p, self.p)

    def __sub__(self, other: "FieldElement") -> "FieldElement":
        return FieldElement((self.value - other.value) % self.p, self.p)

    def __mul__(self, other: "FieldElement") -> "FieldElement":
        return FieldElement(self.value * other.value % self.p, self.p)

    def inverse(self) -> "FieldElement":
        return FieldElement(PrimeField(self.p).mul_inv(self.value), self.p)

    def to_bytes(self) -> bytes:
        return struct.pack("<Q", self.value)

    @classmethod
    def from_bytes(cls, data: bytes, p: int = MERSENNE_31) -> "FieldElement":
        (value,) = struct.unpack("<Q", data)
        return cls(value, p)


class PrimeField:
    """Arithmetic in F_p with polynomial utilities."""

    def __init__(self, p: int = MERSENNE_31):
        if not is_prime(p):
            raise ValueError(f"modulus {p} is not prime")
        self.p = p
        self._lagrange: dict = {}

    def __repr__(self) -> str:
        return f"PrimeField({self.p})"

    def __eq__(self, other) -> bool:
        return isinstance(other, PrimeField) and other.p == self.p

    def __hash__(self) -> int:
        return hash(self.p)

    # -- scalar ops -------------------------------------------------------
    def add(self, a: int, b: int) -> int:
        return (a + b) % self.p

    def sub(self, a: int, b: int) -> int:
        return (a - b) % self.p

    def neg(self, a: int) -> int:
        return -a % self.p

    def mul(self, a: int, b: int) -> int:
        return a * b % self.p

    def mul_inv(self, a: int) -> int:
        a %= self.p
        if a == 0:
            raise ZeroInverse("zero has no multiplicative inverse")
        return pow(a, self.p - 2, self.p)

    inv = mul_inv

    def div(self, a: int, b: int) -> int:
        return a * self.mul_inv(b) % self.p

    def element(self, value: int) -> FieldElement:
        return FieldElement(value % self.p, self.p)

    def random(self, rng) -> int:
        return rng.randrange(self.p)

    def encode(self, a: int) -> bytes:
        """Little-endian 8-byte encoding used in transcripts."""
        return struct.pack("<Q", a % self.p)

    # -- polynomials ------------------------------------------------------
    def eval(self, poly: Sequence[int], x: int) -> int:
        """Horner evaluation of ``poly`` at ``x``."""
        p = self.p
        acc = 0
        for c in reversed(poly):
            acc = (acc * x + c) % p
        return acc

    def eval_table(self, polys: Sequence[Sequence[int]], xs: Sequence[int]) -> list[list[int]]:
        """``out[j][l] = polys[l](xs[j])`` for equal-length coefficient lists."""
        if not polys:
            return [[] for _ in xs]
        p = self.p
        if p >= 2**32:
            return [[self.eval(c, x) for c in polys] for x in xs]
        coeffs = np.asarray(polys, dtype=np.uint64)
        deg = coeffs.shape[1]
        vand = np.array([[pow(x, e, p) for x in xs] for e in range(deg)], dtype=np.uint64)
        acc = np.zeros((len(xs), len(polys)), dtype=np.uint64)
        for e in range(deg):
            acc = (acc + (vand[e][:, None] * coeffs[:, e][None, :]) % p) % p
        return acc.tolist()

    def random_poly(self, rng, degree: int, constant: int) -> list[int]:
        return [constant % self.p] + [rng.randrange(self.p) for _ in range(degree)]

    def poly_add(self, a: Sequence[int], b: Sequence[int]) -> list[int]:
        if len(a) < len(b):
            a, b = b, a
        out = list(a)
        for i, c in enumerate(b):
            out[i] = (out[i] + c) % self.p
        return out

    def poly_scale(self, a: Sequence[int], k: int) -> list[int]:
        return [c * k % self.p for c in a]

    def poly_mul(self, a: Sequence[int], b: Sequence[int]) -> list[int]:
        p = self.p
        out = [0] * (len(a) + len(b) - 1)
        for i, x in enumerate(a):
            if x:
                for j, y in enumerate(b):
                    out[i + j] = (out[i + j] + x * y) % p
        return out

    def poly_divmod(self, num: Sequence[int], den: Sequence[int]) -> tuple[list[int], list[int]]:
        p = self.p
        den = list(den)
        while den and den[-1] == 0:
            den.pop()
        if not den:
            raise ZeroInverse("division by the zero polynomial")
        rem = list(num)
        if len(rem) < len(den):
            return [0], rem
        inv_lead = self.mul_inv(den[-1])
        quot = [0] * (len(rem) - len(den) + 1)
        for k in range(len(quot) - 1, -1, -1):
            c = rem[k + len(den) - 1] * inv_lead % p
            quot[k] = c
            if c:
                for j, dj in enumerate(den):
                    rem[k + j] = (rem[k + j] - c * dj) % p
        return quot, rem[: len(den) - 1] or [0]

    def lagrange_coeffs(self, xs: Sequence[int], at: int = 0) -> list[int]:
        """Weights w_i with sum(w_i * P(x_i)) == P(at) for deg P < len(xs)."""
        key = (tuple(xs), at)
        hit = self._lagrange.get(key)
        if hit is not None:
            return list(hit)
        w = self._lagrange_coeffs(xs, at)
        if len(self._lagrange) < 100_000:
            self._lagrange[key] = tuple(w)
        return w

    def _lagrange_coeffs(self, xs: Sequence[int], at: int) -> list[int]:
        p = self.p
        if len(set(x % p for x in xs)) != len(xs):
            raise DuplicateAbscissa("abscissas must be distinct")
        out = []
        for i, xi in enumerate(xs):
            num, den = 1, 1
            for j, xj in enumerate(xs):
                if i != j:
                    num = num * (at - xj) % p
                    den = den * (xi - xj) % p
            out.append(num * pow(den, p - 2, p) % p)
        return out

    def interpolate_at(self, points: Iterable[tuple[int, int]], at: int = 0) -> int:
        pts = list(points)
        w = self.lagrange_coeffs([x for x, _ in pts], at)
        return sum(wi * y for wi, (_, y) in zip(w, pts)) % self.p

    def interpolate(self, points: Iterable[tuple[int, int]]) -> list[int]:
        """Coefficients of the unique polynomial of degree < |points| through them."""
        p = self.p
        pts = [(x % p, y % p) for x, y in points]
        if not pts:
            raise ValueError("need at least one point")
        xs = [x for x, _ in pts]
        if len(set(xs)) != len(xs):
            raise DuplicateAbscissa("abscissas must be distinct")
        # master = prod (X - x_j)
        master = [1]
        for x in xs:
            master = self.poly_mul(master, [-x % p, 1])
        coeffs = [0] * len(pts)
        for i, (xi, yi) in enumerate(pts):
            if yi == 0:
                continue
            basis, _ = self.poly_divmod(master, [-xi % p, 1])
            denom = self.eval(basis, xi)
            k = yi * self.mul_inv(denom) % p
            for j, c in enumerate(basis):
                coeffs[j] = (coeffs[j] + k * c) % p
        return coeffs

    # -- robust decoding --------------------------------------------------
    def solve(self, rows: list[list[int]]) -> list[int] | None:
        """Solve an augmented linear system; free variables set to 0."""
        p = self.p
        m = [r[:] for r in rows]
        nvars = len(m[0]) - 1
        pivots = []
        r = 0
        for c in range(nvars):
            piv = None
            for i in range(r, len(m)):
                if m[i][c]:
                    piv = i
                    break
            if piv is None:
                continue
            m[r], m[piv] = m[piv], m[r]
            inv = pow(m[r][c], p - 2, p)
            row = [v * inv % p for v in m[r]]
            m[r] = row
            for i in range(len(m)):
                if i != r and m[i][c]:
                    f = m[i][c]
                    mi = m[i]
                    m[i] = [(a - f * b) % p for a, b in zip(mi, row)]
            pivots.append(c)
            r += 1
            if r == len(m):
                break
        for i in range(r, len(m)):
            if m[i][-1]:
                return None
        sol = [0] * nvars
        for i, c in enumerate(pivots):
            sol[c] = m[i][-1]
        return sol

    def berlekamp_welch(self, points: Sequence[tuple[int, int]], degree: int, errors: int) -> list[int] | None:
        """Recover a degree-``degree`` poly from points with at most ``errors`` wrong."""
        p = self.p
        e = errors
        nq = degree + e + 1
        rows = []
        for x, y in points:
            # Q(x) - y * (E(x) - x^e) = y * x^e, unknowns q_0..q_{nq-1}, e_0..e_{e-1}
            row = []
            xp = 1
            for _ in range(nq):
                row.append(xp)
                xp = xp * x % p
            xp = 1
            for _ in range(e):
                row.append(-y * xp % p)
                xp = xp * x % p
            row.append(y * pow(x, e, p) % p)
            rows.append(row)
        sol = self.solve(rows)
        if sol is None:
            return None
        qpoly = sol[:nq]
        epoly = sol[nq:] + [1]
        quot, rem = self.poly_divmod(qpoly, epoly)
        if any(rem):
            return None
        quot = (quot + [0] * (degree + 1))[: degree + 1]
        return quot

    def robust_decode(
        self, points: Sequence[tuple[int, int]], degree: int, min_agree: int
    ) -> list[int] | None:
        """Find a poly of degree <= ``degree`` agreeing with >= ``min_agree`` points.

        Returns ``None`` when no such poly can be certified from the points at
        hand; callers retry as more points arrive.
        """
        n = len(points)
        if n < min_agree or n < degree + 1:
            return None
        cand = self.interpolate(points[: degree + 1])
        if self._agreement(cand, points) >= min_agree:
            return cand
        max_e = (n - degree - 1) // 2
        if max_e < 1:
            return None
        cand = self.berlekamp_welch(points, degree, max_e)
        if cand is not None and self._agreement(cand, points) >= min_agree:
            return cand
        return None

    def _agreement(self, poly: Sequence[int], points: Sequence[tuple[int, int]]) -> int:
        ev = self.eval
        return sum(1 for x, y in points if ev(poly, x) == y % self.p)


DEFAULT_FIELD = PrimeField(MERSENNE_31)


def add(a: int, b: int, field: PrimeField = DEFAULT_FIELD) -> int:
    return field.add(a, b)


def mul_inv(a: int, field: PrimeField = DEFAULT_FIELD) -> int:
    return field.mul_inv(a)


def eval_poly(poly: Sequence[int], x: int, field: PrimeField = DEFAULT_FIELD) -> int:
    return field.eval(poly, x)


def interpolate(points: Iterable[tuple[int, int]], field: PrimeField = DEFAULT_FIELD) -> list[int]:
    return field.interpolate(points)
