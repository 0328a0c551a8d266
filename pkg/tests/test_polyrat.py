from fractions import Fraction as F

import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from funneldae.polyrat import (
    NEG_INF,
    Poly,
    RankDeficientError,
    RatFun,
    RatMat,
    SingularMatrixError,
    as_fraction,
    fraction_inverse,
    fraction_rank,
    fraction_to_str,
    limit_at_infinity,
    poly_determinant,
    poly_gcd,
    ratfun_degree,
    ratmat_inverse,
    ratmat_left_inverse,
    ratmat_rank,
    ratmat_solve,
    ratvec_degree,
)

S = sp.symbols("s")
s = RatFun.s()

small = st.integers(-4, 4)
polys = st.lists(small, min_size=0, max_size=4).map(Poly)
nonzero_polys = polys.filter(lambda p: not p.is_zero())


def to_sympy(x):
    """Convert a Poly or RatFun to a sympy expression."""
    if isinstance(x, Poly):
        return sum(sp.Rational(c.numerator, c.denominator) * S**k for k, c in enumerate(x.coeffs))
    return to_sympy(x.num) / to_sympy(x.den)


def mat_to_sympy(M: RatMat):
    return sp.Matrix([[to_sympy(e) for e in row] for row in M.entries])


def same(a, expr) -> bool:
    return sp.simplify(to_sympy(a) - expr) == 0


# -- scalars -----------------------------------------------------------------


def test_as_fraction_accepts_strings():
    assert as_fraction("-3/2") == F(-3, 2)
    assert as_fraction(4) == 4
    assert fraction_to_str(F(-3, 2)) == "-3/2"
    assert fraction_to_str(F(5)) == "5/1"


def test_zero_polynomial_degree():
    assert Poly([]).degree == NEG_INF
    assert Poly([0, 0]).is_zero()
    assert ratfun_degree(RatFun(0)) == NEG_INF


def test_degree_of_rational_functions():
    assert ratfun_degree(1 / s) == -1
    assert ratfun_degree((s**2 + 1) / (s + 3)) == 1
    assert ratvec_degree([s - 1, 1 / s]) == 1
    assert ratvec_degree([RatFun(0), RatFun(0)]) == NEG_INF


def test_limit_at_infinity():
    assert limit_at_infinity((2 * s**2 + 1) / (s**2 + 5), 0) == 2
    assert limit_at_infinity(6 / (s + 1), 0) == 0
    assert limit_at_infinity(6 / (s + 1), 1) == 6
    assert limit_at_infinity(s**2, 0) is None


def test_canonical_form_is_monic_and_reduced():
    r = RatFun(Poly([2, 2]), Poly([4, 4]))
    assert r == RatFun(F(1, 2))
    q = (s + 1) / (2 * s + 2) + 0
    assert q.den.lc == 1
    assert q.constant_value() == F(1, 2)


def test_str_forms():
    assert str(1 / s) == "1/s"
    assert str(s - 1) == "s - 1"


def test_json_roundtrip():
    r = (3 * s**2 - F(1, 2)) / (s + F(2, 3))
    assert RatFun.from_json(r.to_json()) == r


@given(nonzero_polys, nonzero_polys)
def test_divmod_matches_sympy(a, b):
    q, rem = divmod(a, b)
    assert q * b + rem == a
    assert rem.degree < b.degree
    sq, sr = sp.div(to_sympy(a), to_sympy(b), S)
    assert sp.expand(to_sympy(q) - sq) == 0 and sp.expand(to_sympy(rem) - sr) == 0


@given(nonzero_polys, nonzero_polys)
def test_gcd_matches_sympy(a, b):
    g = poly_gcd(a, b)
    expected = sp.Poly(sp.gcd(to_sympy(a), to_sympy(b)), S).monic()
    assert sp.expand(to_sympy(g) - expected.as_expr()) == 0


@given(polys, nonzero_polys, polys, nonzero_polys)
def test_field_arithmetic_matches_sympy(a, b, c, d):
    x, y = RatFun(a, b), RatFun(c, d)
    X, Y = to_sympy(a) / to_sympy(b), to_sympy(c) / to_sympy(d)
    assert same(x + y, X + Y)
    assert same(x - y, X - Y)
    assert same(x * y, X * Y)
    if not y.num.is_zero():
        assert same(x / y, X / Y)


def test_division_by_zero():
    with pytest.raises(ZeroDivisionError):
        RatFun(1) / RatFun(0)


# -- matrices ----------------------------------------------------------------


entries = st.tuples(polys, st.sampled_from([Poly([1]), Poly([1, 1]), Poly([0, 1]), Poly([-2, 0, 1])]))


def ratmats(n, m):
    return st.lists(st.lists(entries, min_size=m, max_size=m), min_size=n, max_size=n).map(
        lambda rows: RatMat([[RatFun(a, b) for a, b in row] for row in rows]))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3).flatmap(lambda n: ratmats(n, n)))
def test_determinant_and_inverse_match_sympy(M):
    SM = mat_to_sympy(M)
    det = poly_determinant(M)
    assert sp.simplify(to_sympy(det if isinstance(det, RatFun) else RatFun(det)) - SM.det()) == 0
    if sp.simplify(SM.det()) == 0:
        with pytest.raises(SingularMatrixError):
            ratmat_inverse(M)
        assert ratmat_rank(M) < M.rows
    else:
        inv = ratmat_inverse(M)
        assert inv @ M == RatMat.identity(M.rows)
        assert sp.simplify(mat_to_sympy(inv) - SM.inv()) == sp.zeros(M.rows, M.rows)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.data())
def test_rank_matches_sympy(n, m, data):
    M = data.draw(ratmats(n, m))
    assert ratmat_rank(M) == mat_to_sympy(M).rank(simplify=True)


def test_solve_and_left_inverse():
    A = RatMat([[s, 1], [0, s + 1]])
    B = RatMat([[1], [s]])
    X = ratmat_solve(A, B)
    assert A @ X == B
    M = RatMat([[s, 1], [1, 0], [0, 1 / s]])
    L = ratmat_left_inverse(M)
    assert L @ M == RatMat.identity(2)
    with pytest.raises(RankDeficientError):
        ratmat_left_inverse(RatMat([[s, s], [1, 1]]))


def test_polynomial_determinant_is_a_poly():
    # derived with sympy: det([[s, 1], [2, s-1]]) = s^2 - s - 2
    d = poly_determinant(RatMat([[s, 1], [2, s - 1]]))
    assert isinstance(d, Poly)
    assert d == Poly([-2, -1, 1])


def test_fraction_helpers():
    assert fraction_rank([[1, 2], [2, 4]]) == 1
    inv = fraction_inverse([[2, 1], [1, 1]])
    assert inv == [[1, -1], [-1, 2]]
    with pytest.raises(SingularMatrixError):
        fraction_inverse([[1, 2], [2, 4]])


def test_evaluate_and_block():
    M = RatMat([[s, 1 / (s + 1)]])
    assert M.evaluate(1).tolist() == [[1.0, 0.5]]
    B = RatMat.block([[RatMat.identity(1), RatMat.zeros(1, 1)], [RatMat.zeros(1, 1), M.submatrix([0], [0])]])
    assert B.shape == (2, 2)
    assert B.entries[1][1] == s
