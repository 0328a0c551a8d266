"""Exact polynomials, rational functions and matrices over the field R(s).

Coefficients are :class:`fractions.Fraction`; nothing here ever rounds.
Values are immutable once constructed.

The degree of the zero polynomial (and of the zero rational function) is
``NEG_INF`` (``float('-inf')``), so that ``max`` and integer shifts behave
naturally; ``-1`` is a legal degree of a rational function and is never
used as a sentinel.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from typing import Iterable, Sequence

import numpy as np

NEG_INF = float("-inf")

__all__ = [
    "NEG_INF",
    "Poly",
    "RatFun",
    "RatMat",
    "SingularMatrixError",
    "RankDeficientError",
    "as_fraction",
    "fraction_to_str",
    "ratfun_degree",
    "ratvec_degree",
    "ratmat_rank",
    "ratmat_solve",
    "ratmat_inverse",
    "ratmat_left_inverse",
    "limit_at_infinity",
    "poly_determinant",
    "fraction_rank",
]


class SingularMatrixError(ValueError):
    """Raised when a matrix over R(s) has no inverse."""


class RankDeficientError(ValueError):
    """Raised when a full-rank precondition fails."""


def as_fraction(x) -> Fraction:
    """Convert ints, Fractions, ``"p/q"`` strings and exact floats to Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, str):
        txt = x.strip().replace("−", "-")
        return Fraction(txt)
    if isinstance(x, float):
        return Fraction(x)
    raise TypeError(f"cannot interpret {x!r} as an exact rational")


def fraction_to_str(x) -> str:
    """Serialize a rational as ``"p/q"`` with ``q > 0`` and ``gcd(|p|, q) = 1``."""
    x = as_fraction(x)
    return f"{x.numerator}/{x.denominator}"


# ---------------------------------------------------------------------------
# Polynomials


class Poly:
    """Polynomial in ``s`` with ascending Fraction coefficients.

    ``Poly([1, 0, 3])`` is ``1 + 3 s^2``. The zero polynomial has an empty
    coefficient tuple.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable = ()):
        c = [as_fraction(a) for a in coeffs]
        while c and c[-1] == 0:
            c.pop()
        self.coeffs: tuple[Fraction, ...] = tuple(c)

    @classmethod
    def _raw(cls, coeffs: tuple) -> "Poly":
        # coeffs already Fractions with nonzero top entry
        p = object.__new__(cls)
        p.coeffs = coeffs
        return p

    @classmethod
    def const(cls, c) -> "Poly":
        return cls((c,))

    @classmethod
    def s(cls) -> "Poly":
        return cls((0, 1))

    @property
    def degree(self):
        return len(self.coeffs) - 1 if self.coeffs else NEG_INF

    @property
    def lc(self) -> Fraction:
        return self.coeffs[-1] if self.coeffs else Fraction(0)

    def is_zero(self) -> bool:
        return not self.coeffs

    def is_constant(self) -> bool:
        return len(self.coeffs) <= 1

    def __bool__(self):
        return bool(self.coeffs)

    def __eq__(self, other):
        if isinstance(other, Poly):
            return self.coeffs == other.coeffs
        if isinstance(other, (int, Fraction)):
            return self.coeffs == Poly.const(other).coeffs
        return NotImplemented

    def __hash__(self):
        return hash(("Poly", self.coeffs))

    def __neg__(self):
        return Poly._raw(tuple(-a for a in self.coeffs))

    def __add__(self, other):
        other = _as_poly(other)
        if other is None:
            return NotImplemented
        a, b = self.coeffs, other.coeffs
        if len(a) < len(b):
            a, b = b, a
        out = list(a)
        for i, x in enumerate(b):
            out[i] += x
        return Poly(out)

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_poly(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = _as_poly(other)
        if other is None:
            return NotImplemented
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            if other == 0:
                return Poly()
            return Poly._raw(tuple(a * other for a in self.coeffs))
        other = _as_poly(other)
        if other is None:
            return NotImplemented
        a, b = self.coeffs, other.coeffs
        if not a or not b:
            return Poly()
        out = [Fraction(0)] * (len(a) + len(b) - 1)
        for i, x in enumerate(a):
            if x:
                for j, y in enumerate(b):
                    out[i + j] += x * y
        return Poly._raw(tuple(out))

    __rmul__ = __mul__

    def __pow__(self, n: int):
        out = Poly.const(1)
        for _ in range(n):
            out = out * self
        return out

    def __divmod__(self, other: "Poly"):
        if not other.coeffs:
            raise ZeroDivisionError("polynomial division by zero")
        rem = list(self.coeffs)
        db = len(other.coeffs) - 1
        lcb = other.coeffs[-1]
        if len(rem) - 1 < db:
            return Poly(), self
        quo = [Fraction(0)] * (len(rem) - db)
        for k in range(len(rem) - 1 - db, -1, -1):
            c = rem[k + db] / lcb
            quo[k] = c
            if c:
                for j, b in enumerate(other.coeffs):
                    rem[k + j] -= c * b
        return Poly(quo), Poly(rem[:db])

    def __floordiv__(self, other):
        return divmod(self, other)[0]

    def __mod__(self, other):
        return divmod(self, other)[1]

    def exact_div(self, other: "Poly") -> "Poly":
        q, r = divmod(self, other)
        if r.coeffs:
            raise ArithmeticError("polynomial division is not exact")
        return q

    def monic(self) -> "Poly":
        if not self.coeffs:
            return self
        return self * (1 / self.lc)

    def __call__(self, x):
        """Horner evaluation at a Fraction, float or complex point."""
        acc = 0
        if isinstance(x, (float, complex, np.floating, np.complexfloating)):
            for a in reversed(self.coeffs):
                acc = acc * x + float(a)
            return acc
        for a in reversed(self.coeffs):
            acc = acc * x + a
        return acc

    def to_json(self) -> list[str]:
        return [fraction_to_str(a) for a in self.coeffs]

    def __repr__(self):
        return f"Poly({[str(a) for a in self.coeffs]})"

    def __str__(self):
        if not self.coeffs:
            return "0"
        terms = []
        for k in range(len(self.coeffs) - 1, -1, -1):
            a = self.coeffs[k]
            if not a:
                continue
            mag = abs(a)
            sign = "-" if a < 0 else "+"
            if k == 0:
                body = str(mag)
            else:
                base = "s" if k == 1 else f"s^{k}"
                body = base if mag == 1 else f"{mag}*{base}"
            terms.append((sign, body))
        first_sign, first = terms[0]
        out = ("-" if first_sign == "-" else "") + first
        for sign, body in terms[1:]:
            out += f" {sign} {body}"
        return out


def _as_poly(x):
    if isinstance(x, Poly):
        return x
    if isinstance(x, (int, Fraction)):
        return Poly.const(x)
    return None


def poly_gcd(a: Poly, b: Poly) -> Poly:
    """Monic gcd by the Euclidean algorithm (zero if both are zero)."""
    a, b = a.monic(), b.monic()
    while b.coeffs:
        a, b = b, (a % b).monic()
    return a


# ---------------------------------------------------------------------------
# Rational functions


class RatFun:
    """Element of R(s) in canonical form: coprime numerator, monic denominator."""

    __slots__ = ("num", "den")

    def __init__(self, num=0, den=1):
        num = _coerce_poly(num)
        den = _coerce_poly(den)
        if not den.coeffs:
            raise ZeroDivisionError("rational function with zero denominator")
        if not num.coeffs:
            self.num, self.den = Poly(), Poly.const(1)
            return
        if len(den.coeffs) > 1:
            g = poly_gcd(num, den)
            if len(g.coeffs) > 1:
                num, den = num.exact_div(g), den.exact_div(g)
        lc = den.lc
        if lc != 1:
            num, den = num * (1 / lc), den * (1 / lc)
        self.num, self.den = num, den

    @classmethod
    def _raw(cls, num: Poly, den: Poly) -> "RatFun":
        r = object.__new__(cls)
        r.num, r.den = num, den
        return r

    @classmethod
    def s(cls) -> "RatFun":
        return cls._raw(Poly.s(), Poly.const(1))

    @property
    def degree(self):
        return self.num.degree - self.den.degree

    def is_zero(self) -> bool:
        return not self.num.coeffs

    def is_polynomial(self) -> bool:
        return len(self.den.coeffs) == 1

    def is_constant(self) -> bool:
        return self.is_polynomial() and len(self.num.coeffs) <= 1

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError(f"{self} is not constant")
        return self.num.coeffs[0] if self.num.coeffs else Fraction(0)

    def __bool__(self):
        return bool(self.num.coeffs)

    def __eq__(self, other):
        other = _as_ratfun(other)
        if other is None:
            return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self):
        return hash(("RatFun", self.num.coeffs, self.den.coeffs))

    def __neg__(self):
        return RatFun._raw(-self.num, self.den)

    def __add__(self, other):
        other = _as_ratfun(other)
        if other is None:
            return NotImplemented
        if not other.num.coeffs:
            return self
        if not self.num.coeffs:
            return other
        if self.den == other.den:
            return RatFun(self.num + other.num, self.den)
        return RatFun(self.num * other.den + other.num * self.den, self.den * other.den)

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_ratfun(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = _as_ratfun(other)
        if other is None:
            return NotImplemented
        return other + (-self)

    def __mul__(self, other):
        other = _as_ratfun(other)
        if other is None:
            return NotImplemented
        if not self.num.coeffs or not other.num.coeffs:
            return RatFun()
        if self.is_polynomial() and other.is_polynomial():
            return RatFun._raw(self.num * other.num, Poly.const(1))
        return RatFun(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_ratfun(other)
        if other is None:
            return NotImplemented
        if not other.num.coeffs:
            raise ZeroDivisionError("division by the zero rational function")
        return RatFun(self.num * other.den, self.den * other.num)

    def __rtruediv__(self, other):
        other = _as_ratfun(other)
        if other is None:
            return NotImplemented
        return other / self

    def __pow__(self, n: int):
        if n < 0:
            return RatFun(1) / (self ** (-n))
        return RatFun(self.num ** n, self.den ** n)

    def __call__(self, x):
        return self.num(x) / self.den(x)

    def complexity(self) -> int:
        return len(self.num.coeffs) + len(self.den.coeffs)

    def to_json(self) -> dict:
        return {"num": self.num.to_json(), "den": self.den.to_json()}

    @classmethod
    def from_json(cls, d) -> "RatFun":
        if isinstance(d, dict):
            return cls(Poly(d["num"]), Poly(d.get("den", ["1/1"])))
        return cls(as_fraction(d))

    def __repr__(self):
        return f"RatFun({self})"

    def __str__(self):
        if self.is_polynomial():
            return str(self.num)
        n = str(self.num)
        if len([a for a in self.num.coeffs if a]) > 1:
            n = f"({n})"
        d = str(self.den)
        if len([a for a in self.den.coeffs if a]) > 1 or "*" in d:
            d = f"({d})"
        return f"{n}/{d}"


def _coerce_poly(x) -> Poly:
    if isinstance(x, Poly):
        return x
    if isinstance(x, RatFun):
        if not x.is_polynomial():
            raise TypeError("expected a polynomial")
        return x.num
    return Poly.const(as_fraction(x))


def _as_ratfun(x):
    if isinstance(x, RatFun):
        return x
    if isinstance(x, Poly):
        return RatFun._raw(x, Poly.const(1))
    if isinstance(x, (int, Fraction)):
        return RatFun._raw(Poly.const(x), Poly.const(1))
    return None


def to_ratfun(x) -> RatFun:
    r = _as_ratfun(x)
    if r is None:
        if isinstance(x, (str, float, Rational)):
            return RatFun(as_fraction(x))
        if isinstance(x, dict):
            return RatFun.from_json(x)
        raise TypeError(f"cannot interpret {x!r} as a rational function")
    return r


def ratfun_degree(r) -> int | float:
    """``deg num - deg den``; ``NEG_INF`` for the zero function.

    Representation independent: common factors cancel in the difference.
    """
    if isinstance(r, tuple):
        num, den = (_coerce_poly(p) for p in r)
        if not num.coeffs:
            return NEG_INF
        return num.degree - den.degree
    return to_ratfun(r).degree


def ratvec_degree(v: Sequence) -> int | float:
    """Maximum of the entry degrees of a rational vector."""
    v = list(v)
    if not v:
        raise ValueError("degree of an empty rational vector is undefined")
    return max(ratfun_degree(x) for x in v)


def limit_at_infinity(r, shift: int = 0) -> Fraction | None:
    """``lim_{l -> oo} r(l) * l**shift`` or ``None`` when it diverges."""
    r = to_ratfun(r)
    if r.is_zero():
        return Fraction(0)
    d = r.degree + shift
    if d < 0:
        return Fraction(0)
    if d == 0:
        return r.num.lc / r.den.lc
    return None


# ---------------------------------------------------------------------------
# Matrices over R(s)


class RatMat:
    """Dense ``rows x cols`` matrix of :class:`RatFun` entries (row-major)."""

    __slots__ = ("rows", "cols", "entries")

    def __init__(self, data, rows: int | None = None, cols: int | None = None):
        if isinstance(data, RatMat):
            self.rows, self.cols, self.entries = data.rows, data.cols, data.entries
            return
        grid = [list(row) for row in data]
        if rows is None:
            rows = len(grid)
        if cols is None:
            cols = len(grid[0]) if grid else 0
        if len(grid) != rows or any(len(row) != cols for row in grid):
            raise ValueError("ragged or mis-sized matrix data")
        self.rows, self.cols = rows, cols
        self.entries = tuple(tuple(to_ratfun(x) for x in row) for row in grid)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "RatMat":
        z = RatFun()
        return cls._raw(rows, cols, tuple((z,) * cols for _ in range(rows)))

    @classmethod
    def identity(cls, n: int) -> "RatMat":
        one, z = RatFun(1), RatFun()
        return cls._raw(n, n, tuple(tuple(one if i == j else z for j in range(n)) for i in range(n)))

    @classmethod
    def _raw(cls, rows, cols, entries) -> "RatMat":
        m = object.__new__(cls)
        m.rows, m.cols, m.entries = rows, cols, entries
        return m

    @classmethod
    def block(cls, blocks: Sequence[Sequence["RatMat"]]) -> "RatMat":
        """Assemble from a grid of blocks with matching row/column sizes."""
        out = []
        for brow in blocks:
            heights = {b.rows for b in brow}
            if len(heights) != 1:
                raise ValueError("block row heights differ")
            h = heights.pop()
            for i in range(h):
                out.append([x for b in brow for x in b.entries[i]])
        cols = len(out[0]) if out else 0
        return cls(out, len(out), cols)

    @property
    def shape(self):
        return self.rows, self.cols

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    def row(self, i) -> tuple:
        return self.entries[i]

    def col(self, j) -> tuple:
        return tuple(r[j] for r in self.entries)

    def submatrix(self, rows: Sequence[int], cols: Sequence[int]) -> "RatMat":
        return RatMat._raw(len(rows), len(cols),
                           tuple(tuple(self.entries[i][j] for j in cols) for i in rows))

    @property
    def T(self) -> "RatMat":
        return RatMat._raw(self.cols, self.rows,
                           tuple(tuple(self.entries[i][j] for i in range(self.rows))
                                 for j in range(self.cols)))

    def __eq__(self, other):
        if not isinstance(other, RatMat):
            try:
                other = RatMat(other)
            except (TypeError, ValueError, IndexError):
                return NotImplemented
        return self.shape == other.shape and self.entries == other.entries

    def __hash__(self):
        return hash(self.entries)

    def _check_same(self, other):
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")

    def __add__(self, other):
        other = RatMat(other)
        self._check_same(other)
        return RatMat._raw(self.rows, self.cols,
                           tuple(tuple(a + b for a, b in zip(r1, r2))
                                 for r1, r2 in zip(self.entries, other.entries)))

    def __sub__(self, other):
        other = RatMat(other)
        self._check_same(other)
        return RatMat._raw(self.rows, self.cols,
                           tuple(tuple(a - b for a, b in zip(r1, r2))
                                 for r1, r2 in zip(self.entries, other.entries)))

    def __neg__(self):
        return RatMat._raw(self.rows, self.cols, tuple(tuple(-a for a in r) for r in self.entries))

    def __mul__(self, scalar):
        c = to_ratfun(scalar)
        return RatMat._raw(self.rows, self.cols, tuple(tuple(a * c for a in r) for r in self.entries))

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = RatMat(other)
        if self.cols != other.rows:
            raise ValueError(f"cannot multiply {self.shape} by {other.shape}")
        cols = other.col
        out = []
        for r in self.entries:
            row = []
            for j in range(other.cols):
                acc = RatFun()
                for a, b in zip(r, cols(j)):
                    if a.num.coeffs and b.num.coeffs:
                        acc = acc + a * b
                row.append(acc)
            out.append(tuple(row))
        return RatMat._raw(self.rows, other.cols, tuple(out))

    def is_constant(self) -> bool:
        return all(x.is_constant() for r in self.entries for x in r)

    def to_fractions(self) -> list[list[Fraction]]:
        return [[x.constant_value() for x in r] for r in self.entries]

    def evaluate(self, x) -> np.ndarray:
        """Numerical value at a float/complex point."""
        dtype = complex if isinstance(x, complex) else float
        return np.array([[e(x) for e in r] for r in self.entries], dtype=dtype).reshape(self.rows, self.cols)

    def to_json(self) -> list:
        return [[e.to_json() for e in r] for r in self.entries]

    def __repr__(self):
        return f"RatMat({[[str(e) for e in r] for r in self.entries]})"

    def __str__(self):
        return "[" + ",\n ".join("[" + ", ".join(str(e) for e in r) + "]" for r in self.entries) + "]"


def _row_to_polys(row: Sequence[RatFun]) -> tuple[list[Poly], Poly]:
    """Scale a rational row by the lcm of its denominators."""
    lcm = Poly.const(1)
    for e in row:
        if e.num.coeffs and not e.is_polynomial():
            g = poly_gcd(lcm, e.den)
            lcm = lcm * e.den.exact_div(g)
    out = []
    for e in row:
        if not e.num.coeffs:
            out.append(Poly())
        else:
            out.append(e.num * lcm.exact_div(e.den))
    return out, lcm


def _bareiss(rows: list[list[Poly]]) -> tuple[list[list[Poly]], int, int, list[int]]:
    """Fraction-free row echelon form over Q[s].

    Returns (echelon, rank, sign of row swaps, pivot columns). Every entry of
    the working matrix stays a minor of the input, so all divisions by the
    previous pivot are exact.
    """
    m = [list(r) for r in rows]
    nrows = len(m)
    ncols = len(m[0]) if m else 0
    prev = Poly.const(1)
    sign = 1
    r = 0
    pivots = []
    for c in range(ncols):
        if r == nrows:
            break
        piv = None
        best = None
        for i in range(r, nrows):
            if m[i][c].coeffs:
                size = len(m[i][c].coeffs)
                if best is None or size < best:
                    piv, best = i, size
        if piv is None:
            continue
        if piv != r:
            m[r], m[piv] = m[piv], m[r]
            sign = -sign
        p = m[r][c]
        for i in range(r + 1, nrows):
            a = m[i][c]
            for j in range(c + 1, ncols):
                val = p * m[i][j] - a * m[r][j]
                m[i][j] = val.exact_div(prev) if prev.degree != 0 or prev.lc != 1 else val
            m[i][c] = Poly()
        prev = p
        pivots.append(c)
        r += 1
    return m, r, sign, pivots


def ratmat_rank(M) -> int:
    """Rank over R(s) by fraction-free elimination of the row-scaled polynomial matrix."""
    M = RatMat(M)
    if M.rows == 0 or M.cols == 0:
        return 0
    polys = [_row_to_polys(r)[0] for r in M.entries]
    return _bareiss(polys)[1]


def poly_determinant(M):
    """Exact determinant; a :class:`Poly` for polynomial input, else a :class:`RatFun`."""
    M = RatMat(M)
    if M.rows != M.cols:
        raise ValueError(f"determinant of a non-square {M.rows}x{M.cols} matrix")
    polynomial = all(e.is_polynomial() for r in M.entries for e in r)
    if M.rows == 0:
        return Poly.const(1) if polynomial else RatFun(1)
    polys, scale = [], Poly.const(1)
    for r in M.entries:
        pr, lcm = _row_to_polys(r)
        polys.append(pr)
        scale = scale * lcm
    ech, rank, sign, _ = _bareiss(polys)
    n = M.rows
    det = ech[n - 1][n - 1] * sign if rank == n else Poly()
    if polynomial:
        return det
    return RatFun(det, scale)


def ratmat_solve(A, B) -> RatMat:
    """Solve ``A X = B`` for square nonsingular ``A`` by Gauss-Jordan over R(s)."""
    A, B = RatMat(A), RatMat(B)
    n = A.rows
    if A.cols != n:
        raise ValueError("ratmat_solve needs a square coefficient matrix")
    if B.rows != n:
        raise ValueError("right-hand side has the wrong number of rows")
    aug = [list(A.entries[i]) + list(B.entries[i]) for i in range(n)]
    width = n + B.cols
    for c in range(n):
        piv = None
        best = None
        for i in range(c, n):
            e = aug[i][c]
            if e.num.coeffs:
                cost = e.complexity()
                if best is None or cost < best:
                    piv, best = i, cost
        if piv is None:
            raise SingularMatrixError("matrix is singular over R(s)")
        aug[c], aug[piv] = aug[piv], aug[c]
        p = aug[c][c]
        if p != 1:
            inv = RatFun(1) / p
            aug[c] = [e * inv if e.num.coeffs else e for e in aug[c]]
        for i in range(n):
            if i == c:
                continue
            f = aug[i][c]
            if not f.num.coeffs:
                continue
            rowc = aug[c]
            aug[i] = [aug[i][j] - f * rowc[j] if rowc[j].num.coeffs else aug[i][j]
                      for j in range(width)]
    return RatMat._raw(n, B.cols, tuple(tuple(aug[i][n:]) for i in range(n)))


def ratmat_inverse(M) -> RatMat:
    """Exact inverse of a square matrix over R(s)."""
    M = RatMat(M)
    if M.rows != M.cols:
        raise ValueError("only square matrices have inverses")
    return ratmat_solve(M, RatMat.identity(M.rows))


def ratmat_left_inverse(M) -> RatMat:
    """The left inverse ``(M^T M)^{-1} M^T`` of a full-column-rank matrix."""
    M = RatMat(M)
    Mt = M.T
    try:
        return ratmat_solve(Mt @ M, Mt)
    except SingularMatrixError:
        raise RankDeficientError("no left inverse: matrix lacks full column rank") from None


def fraction_rank(rows: Sequence[Sequence]) -> int:
    """Exact rank of a matrix of rationals."""
    m = [[as_fraction(x) for x in r] for r in rows]
    if not m or not m[0]:
        return 0
    nrows, ncols = len(m), len(m[0])
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, nrows) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        for i in range(r + 1, nrows):
            f = m[i][c] / m[r][c]
            if f:
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        r += 1
        if r == nrows:
            break
    return r


def fraction_inverse(rows: Sequence[Sequence]) -> list[list[Fraction]]:
    """Exact inverse of a square rational matrix."""
    M = RatMat([[as_fraction(x) for x in r] for r in rows])
    return ratmat_inverse(M).to_fractions()
