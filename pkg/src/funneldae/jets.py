"""Truncated Taylor jets in one variable.

A jet of order ``k`` at ``t0`` stores ``c[j] = f^{(j)}(t0) / j!`` for
``j = 0..k``. Mixed-order arithmetic truncates to the smaller order, so
feeding longer jets than necessary never changes the low coefficients.

The elementary functions below accept plain floats as well, which lets
one callback serve both as a scalar function and as a jet generator.
"""

from __future__ import annotations

import math
from typing import Sequence


class TaylorJet:
    __slots__ = ("c",)

    def __init__(self, coeffs: Sequence[float]):
        c = tuple(float(x) for x in coeffs)
        if not c:
            raise ValueError("a jet needs at least one coefficient")
        self.c = c

    @classmethod
    def _raw(cls, c: tuple) -> "TaylorJet":
        j = object.__new__(cls)
        j.c = c
        return j

    @classmethod
    def constant(cls, value: float, order: int) -> "TaylorJet":
        return cls._raw((float(value),) + (0.0,) * order)

    @classmethod
    def variable(cls, t0: float, order: int) -> "TaylorJet":
        """The identity function ``t`` expanded at ``t0``."""
        if order == 0:
            return cls._raw((float(t0),))
        return cls._raw((float(t0), 1.0) + (0.0,) * (order - 1))

    @classmethod
    def from_derivatives(cls, derivs: Sequence[float]) -> "TaylorJet":
        return cls._raw(tuple(float(d) / math.factorial(j) for j, d in enumerate(derivs)))

    @property
    def order(self) -> int:
        return len(self.c) - 1

    @property
    def value(self) -> float:
        return self.c[0]

    def derivatives(self) -> list[float]:
        return [x * math.factorial(j) for j, x in enumerate(self.c)]

    def derivative_value(self, j: int) -> float:
        return self.c[j] * math.factorial(j)

    def truncate(self, order: int) -> "TaylorJet":
        if order > self.order:
            raise ValueError(f"cannot raise jet order from {self.order} to {order}")
        return TaylorJet._raw(self.c[: order + 1])

    def shift(self) -> "TaylorJet":
        """Jet of the derivative; the order drops by one."""
        if not self.c[1:]:
            raise ValueError("cannot differentiate an order-0 jet")
        return TaylorJet._raw(tuple((j + 1) * x for j, x in enumerate(self.c[1:])))

    def __getitem__(self, j):
        return self.c[j]

    def __len__(self):
        return len(self.c)

    def __repr__(self):
        return f"TaylorJet({list(self.c)})"

    def __eq__(self, other):
        return isinstance(other, TaylorJet) and self.c == other.c

    __hash__ = None

    def __neg__(self):
        return TaylorJet._raw(tuple(-x for x in self.c))

    def __add__(self, other):
        if isinstance(other, TaylorJet):
            return TaylorJet._raw(tuple(a + b for a, b in zip(self.c, other.c)))
        return TaylorJet._raw((self.c[0] + other,) + self.c[1:])

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, TaylorJet):
            return TaylorJet._raw(tuple(a - b for a, b in zip(self.c, other.c)))
        return TaylorJet._raw((self.c[0] - other,) + self.c[1:])

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, TaylorJet):
            a, b = self.c, other.c
            n = min(len(a), len(b))
            return TaylorJet._raw(tuple(sum(a[i] * b[k - i] for i in range(k + 1)) for k in range(n)))
        return TaylorJet._raw(tuple(x * other for x in self.c))

    __rmul__ = __mul__

    def recip(self) -> "TaylorJet":
        a = self.c
        if a[0] == 0:
            raise ZeroDivisionError("reciprocal of a jet with zero constant term")
        out = [1.0 / a[0]]
        for k in range(1, len(a)):
            out.append(-sum(a[i] * out[k - i] for i in range(1, k + 1)) / a[0])
        return TaylorJet._raw(tuple(out))

    def __truediv__(self, other):
        if isinstance(other, TaylorJet):
            return self * other.recip()
        return TaylorJet._raw(tuple(x / other for x in self.c))

    def __rtruediv__(self, other):
        return self.recip() * other

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise ValueError("only non-negative integer powers are supported")
        out = TaylorJet.constant(1.0, self.order)
        for _ in range(n):
            out = out * self
        return out


def variable(t0: float, order: int) -> TaylorJet:
    return TaylorJet.variable(t0, order)


def _exp_series(a: tuple) -> tuple:
    # b' = a' b  ->  k b_k = sum_{i=1..k} i a_i b_{k-i}
    b = [math.exp(a[0])]
    for k in range(1, len(a)):
        b.append(sum(i * a[i] * b[k - i] for i in range(1, k + 1)) / k)
    return tuple(b)


def _sincos_series(a: tuple) -> tuple[tuple, tuple]:
    s = [math.sin(a[0])]
    c = [math.cos(a[0])]
    for k in range(1, len(a)):
        s.append(sum(i * a[i] * c[k - i] for i in range(1, k + 1)) / k)
        c.append(-sum(i * a[i] * s[k - i] for i in range(1, k + 1)) / k)
    return tuple(s), tuple(c)


def jexp(x):
    if isinstance(x, TaylorJet):
        return TaylorJet._raw(_exp_series(x.c))
    return math.exp(x)


def jsin(x):
    if isinstance(x, TaylorJet):
        return TaylorJet._raw(_sincos_series(x.c)[0])
    return math.sin(x)


def jcos(x):
    if isinstance(x, TaylorJet):
        return TaylorJet._raw(_sincos_series(x.c)[1])
    return math.cos(x)


def jarctan(x):
    """``arctan`` via ``b' = a' / (1 + a^2)``."""
    if not isinstance(x, TaylorJet):
        return math.atan(x)
    a = x.c
    d = (x * x + 1.0).recip().c  # 1/(1+a^2)
    b = [math.atan(a[0])]
    for k in range(1, len(a)):
        # k b_k = sum_{i=1..k} i a_i d_{k-i}
        b.append(sum(i * a[i] * d[k - i] for i in range(1, k + 1)) / k)
    return TaylorJet._raw(tuple(b))


def jet_of(f, t0: float, order: int) -> TaylorJet:
    """Expand a jet-capable callable at ``t0``; constants become constant jets."""
    out = f(TaylorJet.variable(t0, order))
    if isinstance(out, TaylorJet):
        return out
    return TaylorJet.constant(out, order)
