"""Funnel functions, the cascaded error/gain recursion and the control law.

For each channel ``i`` with relative degree ``r_i`` the controller builds

    e_{i0} = y_i - yref_i,
    e_{i,j+1} = d/dt e_{ij} + k_{ij} e_{ij},   k_{ij} = 1 / (1 - phi_{ij}^2 e_{ij}^2),

and the derivatives are propagated in Taylor-jet arithmetic, which needs
only the current derivative values of ``y_i`` and ``yref_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .jets import TaylorJet, jarctan, jet_of, jexp

__all__ = [
    "FunnelFunction",
    "FunnelViolation",
    "CascadeResult",
    "default_phi",
    "poly_exp_arctan_phi",
    "validate_phi",
    "error_cascade",
    "check_gain_condition",
    "check_initial_funnel",
]


class FunnelViolation(RuntimeError):
    """An error left its performance funnel (``phi |e| >= 1``)."""

    def __init__(self, channel, level, t, value: float | None = None):
        self.channel, self.level, self.t, self.value = channel, level, t, value
        where = f"channel {channel}" + (f", level {level}" if level is not None else "")
        extra = "" if value is None else f" (phi*|e| = {value:.6g})"
        super().__init__(f"funnel violation at t={t:.6g}: {where}{extra}")


@dataclass(frozen=True)
class FunnelFunction:
    """A funnel function ``phi`` with derivative jets.

    ``jet_fn`` maps a :class:`TaylorJet` in ``t`` to the jet of ``phi``.
    ``bounds[j]`` is the declared sup of ``|phi^{(j)}|`` for ``j = 0..k``.
    """

    jet_fn: Callable
    smoothness: int = 2
    bounds: Optional[tuple] = None
    name: str = "phi"
    analytic: bool = True
    fd_step: float = 1e-3

    def jet(self, t: float, order: int) -> TaylorJet:
        if self.analytic:
            return jet_of(self.jet_fn, t, order)
        return self._fd_jet(t, order)

    def _fd_jet(self, t: float, order: int) -> TaylorJet:
        # central differences of increasing order; crude but flagged as non-analytic
        h = self.fd_step
        f = self.jet_fn
        derivs = [float(f(t))]
        for j in range(1, order + 1):
            acc = 0.0
            for i in range(j + 1):
                acc += (-1) ** i * math.comb(j, i) * float(f(t + (j / 2 - i) * h))
            derivs.append(acc / h ** j)
        return TaylorJet.from_derivatives(derivs)

    def __call__(self, t: float) -> float:
        return float(self.jet_fn(t))

    def derivative(self, t: float, j: int) -> float:
        return self.jet(t, j).derivative_value(j)

    @classmethod
    def from_callable(cls, f: Callable[[float], float], smoothness: int = 2, bounds=None,
                      name: str = "phi", fd_step: float = 1e-3) -> "FunnelFunction":
        """Wrap a scalar-only function; derivative jets come from finite differences."""
        return cls(f, smoothness, bounds, name, analytic=False, fd_step=fd_step)


def _default_phi_fn(t):
    return 0.5 * t * jexp(-t) + 2.0 * jarctan(t)


def default_phi() -> FunnelFunction:
    """``phi(t) = t e^{-t} / 2 + 2 arctan t``, the funnel used in the worked example.

    Declared bounds: ``phi <= pi``, ``|phi'| <= 5/2``, ``|phi''| <= 5/2``.
    """
    return FunnelFunction(_default_phi_fn, smoothness=2, bounds=(math.pi, 2.5, 2.5),
                          name="default")


def poly_exp_arctan_phi(a: float = 0.5, b: float = 1.0, c: float = 2.0, d: float = 1.0,
                        e: float = 0.0, smoothness: int = 2, bounds=None) -> FunnelFunction:
    """Family ``phi(t) = a t e^{-b t} + c arctan(d t) + e`` (the default is a=1/2, b=1, c=2, d=1)."""

    def fn(t):
        return a * t * jexp(-b * t) + c * jarctan(d * t) + e

    return FunnelFunction(fn, smoothness, bounds, name=f"pea({a},{b},{c},{d},{e})")


# ---------------------------------------------------------------------------
# validation


@dataclass
class CheckResult:
    passed: bool
    detail: str = ""
    witness: Optional[tuple] = None


@dataclass
class PhiValidation:
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def __bool__(self):
        return self.passed

    def failures(self) -> list[str]:
        return [name for name, c in self.checks.items() if not c.passed]


def validate_phi(phi: FunnelFunction, k: int | None = None, horizon: float = 10.0,
                 n_grid: int = 2001, t_min: float = 0.05, growth_ratio: float = 1.25,
                 floor: float = 1e-8) -> PhiValidation:
    """Sampled check of the funnel-class conditions on ``[0, 2*horizon]``.

    Positivity for ``t > 0``, jets within declared bounds, a doubling-horizon
    growth test for boundedness and a decay test for the liminf condition.
    Only falsifies; a pass is evidence on the sampled horizon, not a proof.
    """
    if k is None:
        k = phi.smoothness
    grid = np.linspace(0.0, 2 * horizon, 2 * n_grid - 1)
    jets = [phi.jet(float(t), k).derivatives() for t in grid]
    vals = np.array([j[0] for j in jets])
    out = PhiValidation()

    pos = grid > 0
    bad = np.nonzero(pos & (vals <= 0))[0]
    out.checks["positivity"] = CheckResult(
        not len(bad), "phi(t) > 0 for sampled t > 0",
        None if not len(bad) else (float(grid[bad[0]]), float(vals[bad[0]])))

    if phi.bounds is not None:
        witness = None
        for j in range(min(k, len(phi.bounds) - 1) + 1):
            dj = np.abs([jt[j] for jt in jets])
            idx = int(np.argmax(dj))
            if dj[idx] > phi.bounds[j] * (1 + 1e-9):
                witness = (j, float(grid[idx]), float(dj[idx]))
                break
        out.checks["declared_bounds"] = CheckResult(witness is None, "|phi^(j)| within declared bounds",
                                                    witness)
    else:
        out.checks["declared_bounds"] = CheckResult(False, "no bounds declared", None)

    half = grid <= horizon
    sup1, sup2 = np.max(np.abs(vals[half])), np.max(np.abs(vals))
    grows = sup2 > growth_ratio * sup1 + 1e-12
    out.checks["bounded_growth"] = CheckResult(
        not grows, f"sup over [0,2T] / sup over [0,T] = {sup2 / max(sup1, 1e-300):.4g}",
        (float(grid[int(np.argmax(np.abs(vals)))]), float(sup2)) if grows else None)

    late = grid >= max(t_min, 0.0)
    tail_min = float(np.min(vals[late]))
    second = grid >= horizon
    first = (grid >= horizon / 2) & (grid <= horizon)
    m2, m1 = float(np.min(vals[second])), float(np.min(vals[first]))
    decays = m2 < 0.5 * m1 or m2 < floor
    ok = tail_min >= floor and not decays
    out.checks["positive_floor"] = CheckResult(
        ok, f"min phi on [t_min, 2T] = {tail_min:.4g}",
        None if ok else (float(grid[second][int(np.argmin(vals[second]))]), m2))
    return out


# ---------------------------------------------------------------------------
# the cascade


@dataclass
class CascadeResult:
    """Intermediate errors and gains of the controller at one time instant.

    ``e[i]`` holds ``e_{i0} .. e_{i,r_i-1}``, ``k[i]`` holds ``k_{i0} .. k_{i,r_i-2}``.
    ``levels`` lists ``(label, phi, |e|)`` for every funnel that was checked.
    """

    t: float
    e: list
    k: list
    e_I: np.ndarray
    e_II: np.ndarray
    k_I: float
    k_II: float
    u: np.ndarray
    levels: list = field(default_factory=list)
    violation: Optional[FunnelViolation] = None

    @property
    def u_I(self) -> np.ndarray:
        return self.u[: len(self.e_I)]

    @property
    def u_II(self) -> np.ndarray:
        return self.u[len(self.e_I):]

    @property
    def ok(self) -> bool:
        return self.violation is None


def _level(label, phi_val, abs_e, t, levels, raise_on_violation):
    levels.append((label, phi_val, abs_e))
    w = phi_val * abs_e
    den = 1.0 - w * w
    if den <= 0.0:
        exc = FunnelViolation(label[0], label[1], t, w)
        if raise_on_violation:
            raise exc
        return den, exc
    return den, None


def error_cascade(t: float, y_jets: Sequence[TaylorJet], yref_jets: Sequence[TaylorJet],
                  phi_jets: Sequence[Sequence[TaylorJet]], e_II, phi_I: float, phi_II: float,
                  k_hat: float, r: Sequence[int] | None = None,
                  raise_on_violation: bool = True) -> CascadeResult:
    """Evaluate the controller at time ``t``.

    ``y_jets[i]`` and ``yref_jets[i]`` are jets of order at least ``r_i - 1``
    (``r_i`` defaults to ``y_jets[i].order + 1``); ``phi_jets[i][j]`` is a jet
    of ``phi_{ij}`` of order at least ``r_i - 1 - j``. ``e_II`` holds the
    values ``y_i - yref_i`` for the channels without relative degree.

    A funnel violation raises :class:`FunnelViolation` or, with
    ``raise_on_violation=False``, is stored in ``result.violation``; the
    affected gains are then ``inf``.
    """
    q = len(y_jets)
    if r is None:
        r = [yj.order + 1 for yj in y_jets]
    levels = []
    violation = None
    e_all, k_all = [], []
    e_I = np.empty(q)
    for i in range(q):
        ri = r[i]
        E = (y_jets[i] - yref_jets[i]).truncate(ri - 1)
        es, ks = [], []
        for j in range(ri - 1):
            phi = phi_jets[i][j].truncate(ri - 1 - j)
            den0, exc = _level((i, j), phi.c[0], abs(E.c[0]), t, levels, raise_on_violation)
            if exc is not None:
                violation = violation or exc
                es.append(E.c[0])
                ks.append(math.inf)
                E = None
                break
            w = phi * E
            K = (1.0 - w * w).recip()
            es.append(E.c[0])
            ks.append(K.c[0])
            E = E.shift() + (K * E).truncate(ri - 2 - j)
        if E is None:
            e_all.append(es)
            k_all.append(ks)
            e_I[i] = math.nan
            continue
        es.append(E.c[0])
        e_all.append(es)
        k_all.append(ks)
        e_I[i] = E.c[0]

    e_II = np.asarray(e_II, dtype=float).reshape(-1)
    u = np.empty(q + len(e_II))
    if violation is None:
        nI = float(np.linalg.norm(e_I)) if q else 0.0
        den, exc = _level(("I", None), phi_I, nI, t, levels, raise_on_violation) if q else (1.0, None)
        violation = violation or exc
        k_I = 1.0 / den if exc is None else math.inf
        u[:q] = -k_I * e_I
    else:
        k_I = math.inf
        u[:q] = math.nan
    nII = float(np.linalg.norm(e_II)) if len(e_II) else 0.0
    if len(e_II):
        den, exc = _level(("II", None), phi_II, nII, t, levels, raise_on_violation)
        violation = violation or exc
        k_II = k_hat / den if exc is None else math.inf
    else:
        k_II = k_hat
    u[q:] = -k_II * e_II
    return CascadeResult(t, e_all, k_all, e_I, e_II, k_I, k_II, u, levels, violation)


def check_gain_condition(k_hat: float, alpha: float, f2_jac_sup: float) -> bool:
    """Strict inequality ``k_hat > f2_jac_sup / alpha``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if f2_jac_sup < 0:
        raise ValueError(f"a norm bound cannot be negative, got {f2_jac_sup}")
    return k_hat > f2_jac_sup / alpha


@dataclass
class InitialFunnelCheck:
    passed: bool
    witness: Optional[tuple] = None

    def __bool__(self):
        return self.passed


def check_initial_funnel(cascade: CascadeResult) -> InitialFunnelCheck:
    """All levels of an initial cascade strictly inside their funnels.

    The witness is ``(label, phi * |e|)`` of the first offending level.
    """
    for label, phi_val, abs_e in cascade.levels:
        if not phi_val * abs_e < 1.0:
            return InitialFunnelCheck(False, (label, phi_val * abs_e))
    if cascade.violation is not None:
        v = cascade.violation
        return InitialFunnelCheck(False, ((v.channel, v.level), v.value))
    return InitialFunnelCheck(True)
