import random

import pytest
from hypothesis import given, settings, strategies as st

from qmpc.field import (
    DEFAULT_FIELD,
    DuplicateAbscissa,
    FieldElement,
    MERSENNE_31,
    PrimeField,
    ZeroInverse,
    is_prime,
)

F = DEFAULT_FIELD
F11 = PrimeField(11)
elems = st.integers(min_value=0, max_value=MERSENNE_31 - 1)


def test_small_primes():
    assert [p for p in range(30) if is_prime(p)] == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
    assert is_prime(MERSENNE_31)
    assert not is_prime(MERSENNE_31 + 2)  # 2^31 + 1 = 3 * 715827883


def test_composite_modulus_rejected():
    with pytest.raises(ValueError):
        PrimeField(15)


def test_zero_has_no_inverse():
    with pytest.raises(ZeroInverse):
        F.mul_inv(0)
    with pytest.raises(ZeroInverse):
        F11.div(3, 11)


@given(elems.filter(bool))
def test_inverse_roundtrip(a):
    assert F.mul(a, F.mul_inv(a)) == 1


@given(elems, elems, elems)
def test_distributive(a, b, c):
    assert F.mul(a, F.add(b, c)) == F.add(F.mul(a, b), F.mul(a, c))


def test_inverse_table_f11():
    # brute-force oracle
    for a in range(1, 11):
        assert F11.mul_inv(a) == next(b for b in range(1, 11) if a * b % 11 == 1)


def test_element_bytes_little_endian():
    e = FieldElement(0x01020304, MERSENNE_31)
    assert e.to_bytes() == bytes([4, 3, 2, 1, 0, 0, 0, 0])
    assert FieldElement.from_bytes(e.to_bytes()) == e
    assert F.encode(MERSENNE_31 + 5) == FieldElement(5).to_bytes()


def test_element_range_checked():
    with pytest.raises(ValueError):
        FieldElement(MERSENNE_31)


@settings(max_examples=60)
@given(st.lists(elems, min_size=1, max_size=8), st.randoms(use_true_random=False))
def test_interpolate_recovers_poly(coeffs, rnd):
    xs = rnd.sample(range(1, 1000), len(coeffs))
    pts = [(x, F.eval(coeffs, x)) for x in xs]
    got = F.interpolate(pts)
    assert (got + [0] * len(coeffs))[: len(coeffs)] == coeffs
    assert F.interpolate_at(pts, 0) == coeffs[0]


def test_duplicate_abscissa():
    with pytest.raises(DuplicateAbscissa):
        F.interpolate([(1, 2), (1, 3)])
    with pytest.raises(DuplicateAbscissa):
        F.lagrange_coeffs([2, 2])


def test_lagrange_weights_cached_copy_is_safe():
    w = F.lagrange_coeffs([1, 2, 3])
    w[0] = 999
    assert F.lagrange_coeffs([1, 2, 3])[0] != 999


def test_eval_table_matches_eval():
    rng = random.Random(3)
    polys = [[rng.randrange(F.p) for _ in range(5)] for _ in range(4)]
    xs = list(range(1, 17))
    table = F.eval_table(polys, xs)
    assert table == [[F.eval(pl, x) for pl in polys] for x in xs]


def test_eval_table_large_prime_fallback():
    big = PrimeField((1 << 61) - 1)
    polys = [[3, 1 << 60, 7]]
    assert big.eval_table(polys, [2, 5]) == [[big.eval(polys[0], 2)], [big.eval(polys[0], 5)]]


def test_poly_divmod():
    a, b = [1, 2, 3], [5, 1]
    prod = F.poly_mul(a, b)
    q, r = F.poly_divmod(prod, b)
    assert q[:3] == a and r == [0]


@settings(max_examples=60)
@given(st.integers(1, 4), st.data())
def test_berlekamp_welch_corrects_errors(d, data):
    n = 3 * d + 4
    e = (n - d - 1) // 2
    coeffs = data.draw(st.lists(elems, min_size=d + 1, max_size=d + 1))
    pts = [(x, F.eval(coeffs, x)) for x in range(1, n + 1)]
    bad = data.draw(st.lists(st.integers(0, n - 1), max_size=e, unique=True))
    for i in bad:
        x, y = pts[i]
        pts[i] = (x, (y + 1 + data.draw(st.integers(0, F.p - 2))) % F.p)
    got = F.robust_decode(pts, d, n - e)
    assert got is not None
    assert (got + [0] * (d + 1))[: d + 1] == coeffs


def test_robust_decode_refuses_too_many_errors():
    d, n = 1, 7
    coeffs = [4, 9]
    pts = [(x, F.eval(coeffs, x)) for x in range(1, n + 1)]
    for i in range(3):
        pts[i] = (pts[i][0], pts[i][1] + 1)
    # 4 agreeing points; demanding 5 must fail rather than guess
    assert F.robust_decode(pts, d, 5) is None
