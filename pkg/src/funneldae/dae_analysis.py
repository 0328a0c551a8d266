"""Structural analysis of linear DAE systems ``d/dt E x = A x + B u, y = C x``.

Everything that decides a yes/no question (regularity, ranks, the truncated
vector relative degree and its existence) runs in exact rational arithmetic
over R(s). Only invariant zeros involve floating point, and their stability
verdict may come back as ``None`` when a root sits too close to the
imaginary axis to call.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .polyrat import (
    NEG_INF,
    Poly,
    RatFun,
    RatMat,
    as_fraction,
    fraction_inverse,
    fraction_rank,
    fraction_to_str,
    limit_at_infinity,
    poly_determinant,
    ratmat_rank,
    ratmat_solve,
    ratvec_degree,
)

Matrix = tuple[tuple[Fraction, ...], ...]


class PreconditionError(ValueError):
    """A structural precondition of an analysis step does not hold."""


class NotRegularError(PreconditionError):
    pass


class NotAutonomousError(PreconditionError):
    pass


class NotRightInvertibleError(PreconditionError):
    pass


def _as_matrix(data, name: str) -> Matrix:
    rows = [tuple(as_fraction(x) for x in row) for row in data]
    if rows and len({len(r) for r in rows}) != 1:
        raise ValueError(f"{name}: rows have different lengths")
    return tuple(rows)


def _shape(M: Matrix) -> tuple[int, int]:
    return len(M), (len(M[0]) if M else 0)


@dataclass(frozen=True)
class LinearDae:
    """The quadruple ``[E, A, B, C]`` with exact rational entries.

    ``E, A`` are ``l x n``, ``B`` is ``l x m`` and ``C`` is ``p x n``.
    """

    E: Matrix
    A: Matrix
    B: Matrix
    C: Matrix

    def __post_init__(self):
        for name in "EABC":
            object.__setattr__(self, name, _as_matrix(getattr(self, name), name))
        l, n = _shape(self.E)
        if _shape(self.A) != (l, n):
            raise ValueError(f"A has shape {_shape(self.A)}, expected {(l, n)} to match E")
        lb, m = _shape(self.B)
        if lb != l:
            raise ValueError(f"B has {lb} rows, expected {l}")
        p, nc = _shape(self.C)
        if nc != n:
            raise ValueError(f"C has {nc} columns, expected {n}")
        if min(l, n, m, p) < 1:
            raise ValueError("all of l, n, m, p must be at least 1")

    @property
    def l(self) -> int:
        return len(self.E)

    @property
    def n(self) -> int:
        return len(self.E[0])

    @property
    def m(self) -> int:
        return len(self.B[0])

    @property
    def p(self) -> int:
        return len(self.C)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.l, self.n, self.m, self.p

    def sE_minus_A(self) -> RatMat:
        s = RatFun.s()
        return RatMat([[s * e - a for e, a in zip(er, ar)] for er, ar in zip(self.E, self.A)])

    def to_json(self) -> dict:
        enc = lambda M: [[fraction_to_str(x) for x in row] for row in M]  # noqa: E731
        return {"kind": "linear", "E": enc(self.E), "A": enc(self.A), "B": enc(self.B), "C": enc(self.C)}


def system_pencil(sys: LinearDae) -> RatMat:
    """The ``(l+p) x (n+m)`` pencil ``[[-sE + A, B], [C, 0]]``."""
    top = -sys.sE_minus_A()
    return RatMat.block([
        [top, RatMat(sys.B)],
        [RatMat(sys.C), RatMat.zeros(sys.p, sys.m)],
    ])


def is_regular(sys: LinearDae) -> bool:
    if sys.l != sys.n:
        return False
    return not poly_determinant(sys.sE_minus_A()).is_zero()


def zero_dynamics_autonomous(sys: LinearDae) -> bool:
    """Full column rank ``n + m`` of the system pencil over R(s)."""
    return ratmat_rank(system_pencil(sys)) == sys.n + sys.m


def is_right_invertible(sys: LinearDae) -> bool:
    """Full row rank ``l + p`` of the system pencil over R(s).

    For regular systems this characterizes right-invertibility; in general
    it is only used as a rank surrogate.
    """
    return ratmat_rank(system_pencil(sys)) == sys.l + sys.p


def transfer_function(sys: LinearDae) -> RatMat:
    """``G(s) = C (sE - A)^{-1} B`` for a regular system."""
    if not is_regular(sys):
        raise NotRegularError("transfer function needs a regular pencil sE - A")
    X = ratmat_solve(sys.sE_minus_A(), RatMat(sys.B))
    return RatMat(sys.C) @ X


def compute_H(sys: LinearDae) -> RatMat:
    """The ``m x p`` block ``[0 I_m] L(s) [0; I_p]`` of a left inverse of the pencil.

    The sign is chosen so that ``H = G^{-1}`` for regular systems with
    invertible transfer function, i.e. ``u = H(d/dt) y`` on the behavior.
    """
    P = system_pencil(sys)
    n, m, l, p = sys.n, sys.m, sys.l, sys.p
    if ratmat_rank(P) != n + m:
        raise NotAutonomousError("zero dynamics are not autonomous: pencil lacks full column rank")
    rhs = RatMat.block([[RatMat.zeros(l, p)], [RatMat.identity(p)]])
    if P.rows == P.cols:
        X = ratmat_solve(P, rhs)
    else:
        # rows n..n+m of (P^T P)^{-1} P^T applied to [0; I_p]
        Pt = P.T
        X = ratmat_solve(Pt @ P, Pt @ rhs)
    return X.submatrix(range(n, n + m), range(p))


@dataclass
class TvrdReport:
    exists: bool
    r: tuple[int, ...]
    q: int
    gamma_hat: list[list[Fraction]]
    gamma_hat_q: list[list[Fraction]]
    H: RatMat
    rank_gamma_hat_q: int = 0

    def to_json(self) -> dict:
        return {
            "exists": self.exists,
            "r": list(self.r),
            "q": self.q,
            "rank_gamma_hat_q": self.rank_gamma_hat_q,
            "gamma_hat": _frac_json(self.gamma_hat),
            "gamma_hat_float": [[float(x) for x in row] for row in self.gamma_hat],
            "gamma_hat_q": _frac_json(self.gamma_hat_q),
            "H": self.H.to_json(),
            "H_text": [[str(e) for e in row] for row in self.H.entries],
        }

    @classmethod
    def from_json(cls, d: dict) -> "TvrdReport":
        H = RatMat([[RatFun.from_json(e) for e in row] for row in d["H"]])
        return cls(
            exists=d["exists"], r=tuple(d["r"]), q=d["q"],
            gamma_hat=_frac_parse(d["gamma_hat"]), gamma_hat_q=_frac_parse(d["gamma_hat_q"]),
            H=H, rank_gamma_hat_q=d.get("rank_gamma_hat_q", 0),
        )


@dataclass
class VrdReport:
    exists: bool
    r: tuple[Optional[int], ...]
    gamma: Optional[list[list[Fraction]]]
    strict: bool = False
    rank_gamma: int = 0

    def to_json(self) -> dict:
        return {
            "exists": self.exists,
            "r": list(self.r),
            "strict": self.strict,
            "rank_gamma": self.rank_gamma,
            "gamma": None if self.gamma is None else _frac_json(self.gamma),
        }

    @classmethod
    def from_json(cls, d: dict) -> "VrdReport":
        g = d.get("gamma")
        return cls(exists=d["exists"], r=tuple(d["r"]), gamma=None if g is None else _frac_parse(g),
                   strict=d.get("strict", False), rank_gamma=d.get("rank_gamma", 0))


def _frac_json(M):
    return [[fraction_to_str(x) for x in row] for row in M]


def _frac_parse(M):
    return [[as_fraction(x) for x in row] for row in M]


def truncated_vrd(sys: LinearDae, H: RatMat | None = None) -> TvrdReport:
    """Truncated vector relative degree ``r``, with ``Gamma_hat`` and ``Gamma_hat_q``."""
    if not zero_dynamics_autonomous(sys):
        raise NotAutonomousError("zero dynamics are not autonomous")
    if not is_right_invertible(sys):
        raise NotRightInvertibleError("system pencil lacks full row rank (not right-invertible)")
    if H is None:
        H = compute_H(sys)
    m, p = H.rows, H.cols
    r = []
    for i in range(p):
        d = ratvec_degree(H.col(i))
        r.append(0 if d == NEG_INF else max(int(d), 0))
    gamma_hat = [[limit_at_infinity(H[j, i], -r[i]) for i in range(p)] for j in range(m)]
    keep = [i for i in range(p) if r[i] > 0]
    gamma_hat_q = [[row[i] for i in keep] for row in gamma_hat]
    q = len(keep)
    rank = fraction_rank(gamma_hat_q) if q else 0
    return TvrdReport(exists=(rank == q), r=tuple(r), q=q, gamma_hat=gamma_hat,
                      gamma_hat_q=gamma_hat_q, H=H, rank_gamma_hat_q=rank)


def vector_rd(sys: LinearDae, G: RatMat | None = None) -> VrdReport:
    """Vector relative degree read off the rows of the transfer function."""
    if G is None:
        G = transfer_function(sys)
    r: list[Optional[int]] = []
    for i in range(G.rows):
        d = ratvec_degree(G.row(i))
        r.append(None if d == NEG_INF else -int(d))
    if any(ri is None for ri in r):
        return VrdReport(exists=False, r=tuple(r), gamma=None)
    gamma = [[limit_at_infinity(G[i, j], r[i]) for j in range(G.cols)] for i in range(G.rows)]
    rank = fraction_rank(gamma)
    exists = rank == G.rows
    strict = exists and len(set(r)) == 1
    return VrdReport(exists=exists, r=tuple(r), gamma=gamma, strict=strict, rank_gamma=rank)


def apply_output_feedback(sys: LinearDae, K) -> LinearDae:
    """Close the loop ``u = K y + v``: returns ``[E, A + B K C, B, C]``."""
    K = _as_matrix(K, "K")
    if _shape(K) != (sys.m, sys.p):
        raise ValueError(f"K must be {sys.m}x{sys.p}, got {_shape(K)}")
    BKC = (RatMat(sys.B) @ RatMat(K) @ RatMat(sys.C)).to_fractions()
    A = [[a + d for a, d in zip(ar, dr)] for ar, dr in zip(sys.A, BKC)]
    return LinearDae(sys.E, A, sys.B, sys.C)


def permute_outputs(sys: LinearDae, sigma: Sequence[int]) -> LinearDae:
    """Reorder outputs: new output ``i`` is old output ``sigma[i]`` (0-based)."""
    sigma = list(sigma)
    if sorted(sigma) != list(range(sys.p)):
        raise ValueError(f"{sigma} is not a permutation of 0..{sys.p - 1}")
    return LinearDae(sys.E, sys.A, sys.B, [sys.C[i] for i in sigma])


def ordering_permutation(r: Sequence[int]) -> list[int]:
    """Stable permutation putting the relative degrees in non-increasing order."""
    return sorted(range(len(r)), key=lambda i: -r[i])


@dataclass
class GammaDecomposition:
    """``gamma @ gamma_hat_q[reordering] == [[I_q], [0]]`` exactly."""

    gamma: list[list[Fraction]]
    reordering: tuple[int, ...]

    def __iter__(self):
        return iter((self.gamma, self.reordering))


def gamma_decomposition(gamma_hat, r: Sequence[int]) -> GammaDecomposition:
    """Block-unitriangular ``Gamma`` with ``Gamma Gamma_hat_q = [I_q; 0]``.

    The input reordering is the lexicographically first choice of ``q``
    rows that makes the top block of ``Gamma_hat_q`` invertible.
    """
    G = [[as_fraction(x) for x in row] for row in gamma_hat]
    m = len(G)
    keep = [i for i, ri in enumerate(r) if ri > 0]
    q = len(keep)
    Gq = [[row[i] for i in keep] for row in G]
    if q == 0:
        ident = [[Fraction(int(i == j)) for j in range(m)] for i in range(m)]
        return GammaDecomposition(ident, tuple(range(m)))
    if fraction_rank(Gq) < q:
        raise ValueError("Gamma_hat_q does not have full column rank q")
    for rows in itertools.combinations(range(m), q):
        top = [Gq[i] for i in rows]
        if fraction_rank(top) == q:
            break
    order = tuple(rows) + tuple(i for i in range(m) if i not in rows)
    G11inv = fraction_inverse([Gq[i] for i in order[:q]])
    G21 = [Gq[i] for i in order[q:]]
    lower = [[-sum(G21[a][k] * G11inv[k][b] for k in range(q)) for b in range(q)]
             for a in range(m - q)]
    gamma = []
    for i in range(q):
        gamma.append(list(G11inv[i]) + [Fraction(0)] * (m - q))
    for a in range(m - q):
        gamma.append(lower[a] + [Fraction(int(a == b)) for b in range(m - q)])
    return GammaDecomposition(gamma, order)


# ---------------------------------------------------------------------------
# invariant zeros


@dataclass
class ZeroReport:
    zeros: list[complex]
    radii: list[float]
    determinant: Optional[Poly]
    stable: Optional[bool]
    diagnostic: str = ""


def _exact_eval(coeffs: Sequence[Fraction], z: complex) -> complex:
    """Evaluate a rational polynomial at a float complex point without rounding."""
    zr, zi = Fraction(z.real), Fraction(z.imag)
    ar, ai = Fraction(0), Fraction(0)
    for c in reversed(coeffs):
        ar, ai = ar * zr - ai * zi + c, ar * zi + ai * zr
    return complex(float(ar), float(ai))


def inclusion_radii(poly: Poly, roots: Sequence[complex]) -> list[float]:
    """Weierstrass-correction inclusion radii ``n |p(z_i)| / |lc prod_{j != i}(z_i - z_j)|``.

    Every root of ``poly`` lies in the union of the disks, and a connected
    component made of ``k`` disks holds exactly ``k`` roots.
    """
    n = len(roots)
    lc = float(poly.lc)
    out = []
    for i, z in enumerate(roots):
        denom = lc
        for j, w in enumerate(roots):
            if j != i:
                denom *= (z - w)
        val = _exact_eval(poly.coeffs, z)
        out.append(float("inf") if denom == 0 else n * abs(val) / abs(denom))
    return out


def routh_hurwitz(poly: Poly) -> bool:
    """Exact test that every root of ``poly`` has negative real part.

    Runs the Routh array in rational arithmetic. A zero in the first
    column already means a root on or right of the imaginary axis.
    """
    c = list(reversed(poly.coeffs))  # descending powers
    if not c or any(x == 0 for x in c[:1]):
        return False
    rows = [c[0::2], c[1::2]]
    if not rows[1]:
        return True
    while len(rows[-1]) > 0 and len(rows) < len(c):
        a, b = rows[-2], rows[-1]
        if b[0] == 0:
            return False
        nxt = []
        for k in range(len(a) - 1):
            bk = b[k + 1] if k + 1 < len(b) else Fraction(0)
            nxt.append(a[k + 1] - a[0] * bk / b[0])
        rows.append(nxt)
    first = [r[0] for r in rows if r]
    if any(x == 0 for x in first):
        return False
    return all(x > 0 for x in first) or all(x < 0 for x in first)


def invariant_zeros(sys: LinearDae, margin: float = 1e-9) -> ZeroReport:
    """Roots of ``det`` of the system pencil, with inclusion radii and a stability verdict.

    The verdict is exact (Routh array over the rationals); the float roots
    and their inclusion radii are for display. ``margin`` is kept for
    callers that pass it and is otherwise unused.
    """
    P = system_pencil(sys)
    if P.rows != P.cols:
        return ZeroReport([], [], None, None, f"pencil is {P.rows}x{P.cols}, not square")
    det = poly_determinant(P)
    if det.is_zero():
        return ZeroReport([], [], det, None, "pencil determinant vanishes identically")
    if det.degree == 0:
        return ZeroReport([], [], det, True, "no invariant zeros")
    coeffs = [float(c) for c in reversed(det.coeffs)]
    roots = [complex(z) for z in np.roots(coeffs)]
    roots.sort(key=lambda z: (z.real, z.imag))
    radii = inclusion_radii(det, roots)
    verdict = routh_hurwitz(det)
    return ZeroReport(roots, radii, det, verdict)


def zero_dynamics_stable(sys: LinearDae, margin: float = 1e-9) -> Optional[bool]:
    """``True``/``False`` for asymptotically stable zero dynamics, ``None`` if undecided.

    Non-autonomous zero dynamics are reported as not asymptotically stable.
    """
    if not zero_dynamics_autonomous(sys):
        return False
    return invariant_zeros(sys, margin).stable


# ---------------------------------------------------------------------------
# one-stop report


@dataclass
class AnalysisReport:
    regular: bool
    zd_autonomous: bool
    right_invertible: bool
    zd_asymptotically_stable: Optional[bool]
    invariant_zeros: list[tuple[complex, float]] = field(default_factory=list)
    tvrd: Optional[TvrdReport] = None
    vrd: Optional[VrdReport] = None
    gamma: Optional[GammaDecomposition] = None
    G: Optional[RatMat] = None
    notes: list[str] = field(default_factory=list)

    @property
    def preconditions_ok(self) -> bool:
        return self.zd_autonomous and self.right_invertible

    def to_json(self) -> dict:
        return {
            "regular": self.regular,
            "zd_autonomous": self.zd_autonomous,
            "right_invertible": self.right_invertible,
            "right_invertible_criterion": "rank surrogate (full row rank of the system pencil)",
            "zd_asymptotically_stable": self.zd_asymptotically_stable,
            "invariant_zeros": [{"re": z.real, "im": z.imag, "radius": rad}
                                for z, rad in self.invariant_zeros],
            "transfer_function": None if self.G is None else self.G.to_json(),
            "tvrd": None if self.tvrd is None else self.tvrd.to_json(),
            "vrd": None if self.vrd is None else self.vrd.to_json(),
            "gamma_decomposition": None if self.gamma is None else {
                "gamma": _frac_json(self.gamma.gamma),
                "reordering": list(self.gamma.reordering),
            },
            "notes": list(self.notes),
        }

    @classmethod
    def from_json(cls, d: dict) -> "AnalysisReport":
        gd = d.get("gamma_decomposition")
        G = d.get("transfer_function")
        return cls(
            regular=d["regular"], zd_autonomous=d["zd_autonomous"],
            right_invertible=d["right_invertible"],
            zd_asymptotically_stable=d["zd_asymptotically_stable"],
            invariant_zeros=[(complex(z["re"], z["im"]), z["radius"]) for z in d["invariant_zeros"]],
            tvrd=None if d.get("tvrd") is None else TvrdReport.from_json(d["tvrd"]),
            vrd=None if d.get("vrd") is None else VrdReport.from_json(d["vrd"]),
            gamma=None if gd is None else GammaDecomposition(_frac_parse(gd["gamma"]), tuple(gd["reordering"])),
            G=None if G is None else RatMat([[RatFun.from_json(e) for e in row] for row in G]),
            notes=list(d.get("notes", [])),
        )


def analyze(sys: LinearDae) -> AnalysisReport:
    """Run every analysis step that the system's structure permits."""
    P = system_pencil(sys)
    rank = ratmat_rank(P)
    regular = is_regular(sys)
    autonomous = rank == sys.n + sys.m
    right_inv = rank == sys.l + sys.p
    notes = []
    zeros = invariant_zeros(sys)
    if zeros.diagnostic:
        notes.append(f"invariant zeros: {zeros.diagnostic}")
    stable = zeros.stable if autonomous else False
    report = AnalysisReport(regular, autonomous, right_inv, stable,
                            list(zip(zeros.zeros, zeros.radii)), notes=notes)
    if regular:
        report.G = transfer_function(sys)
        report.vrd = vector_rd(sys, report.G)
    else:
        notes.append("not regular: transfer function and vector relative degree skipped")
    if autonomous and right_inv:
        report.tvrd = truncated_vrd(sys)
        if report.tvrd.exists:
            report.gamma = gamma_decomposition(report.tvrd.gamma_hat, report.tvrd.r)
    else:
        notes.append("truncated vector relative degree needs autonomous zero dynamics "
                     "and right-invertibility")
    return report
