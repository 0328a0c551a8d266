"""Closed-loop simulation of a nonlinear functional DAE under funnel control.

The plant has differential outputs ``y_1..y_q`` with relative degrees
``r_1..r_q`` and algebraic outputs ``y_{q+1}..y_m``:

    y_I^{(r)} = f1(d1, T1(...)) + Gamma_I(d2, T1(...)) u_I
    0         = f2(X_I, X_II) + f3(d3, T2 y) + Gamma_II(d4, T2 y) u_I + f4(d5, T2 y) u_II

with ``X_I`` the stacked derivative slots ``(y_i, ..., y_i^{(r_i-1)})`` and
``X_II = y_II``. Under the controller the second line becomes an index-1
constraint in ``X_II``; it is solved by damped Newton at every Runge-Kutta
stage (half-explicit scheme) while ``X_I`` and the operator states are
advanced explicitly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .funnel import (
    CascadeResult,
    FunnelFunction,
    FunnelViolation,
    InitialFunnelCheck,
    check_gain_condition,
    check_initial_funnel,
    _level,
    error_cascade,
)
from .jets import TaylorJet, jet_of
from .operators import RealizedOperator

__all__ = [
    "FunctionalDae",
    "FunnelController",
    "SimulationConfig",
    "Trajectory",
    "NewtonFailure",
    "StepUnderflow",
    "HistorySmoothnessError",
    "PreflightError",
    "assemble_initial_state",
    "check_consistency",
    "consistent_initial_XII",
    "residual_FII",
    "jacobian_FII_XII",
    "preflight",
    "integrate",
    "monitor_funnel",
    "spot_check_plant",
    "top_derivatives",
    "reconstruct_x3",
    "write_summary",
]


class NewtonFailure(RuntimeError):
    def __init__(self, t, residual_norm, iterations):
        self.t, self.residual_norm, self.iterations = t, residual_norm, iterations
        super().__init__(f"Newton did not converge at t={t:.6g} "
                         f"(|F_II| = {residual_norm:.3g} after {iterations} iterations)")


class StepUnderflow(RuntimeError):
    pass


class HistorySmoothnessError(ValueError):
    pass


class PreflightError(RuntimeError):
    def __init__(self, report):
        self.report = report
        super().__init__("; ".join(report.messages) or "preflight checks failed")


_ZERO1 = np.zeros(1)
_ZERO1.flags.writeable = False


def _zero_disturbance(t):
    return np.zeros(1)


@dataclass
class FunctionalDae:
    """Callbacks and operators describing the plant.

    ``T1`` acts on ``Z = (X_I, X_II)`` and ``T2`` on ``y``; ``T2`` must not
    have direct feedthrough (its output may depend on its state only).
    ``history[i]`` gives the initial data of output ``i``: a number
    (constant history), a sequence of derivative values at ``t = 0`` or a
    jet-capable callable.
    """

    m: int
    r: tuple
    f1: Callable
    gamma_I: Callable
    f2: Callable
    df2_dxii: Callable
    f3: Callable
    gamma_II: Callable
    f4: Callable
    alpha: float
    f2_jac_sup: float
    T1: RealizedOperator
    T2: RealizedOperator
    history: Sequence = ()
    disturbances: Sequence = ()
    name: str = "plant"
    x3_map: Optional[Callable] = None

    def __post_init__(self):
        self.r = tuple(int(x) for x in self.r)
        if any(ri < 1 for ri in self.r):
            raise ValueError("relative degrees of the differential channels must be positive")
        if len(self.r) > self.m:
            raise ValueError("q = len(r) cannot exceed m")
        if self.T1.input_dim != self.rbar + self.m - self.q:
            raise ValueError(f"T1 expects input of dimension {self.T1.input_dim}, "
                             f"but (X_I, X_II) has {self.rbar + self.m - self.q}")
        if self.T2.input_dim != self.m:
            raise ValueError(f"T2 expects input of dimension {self.T2.input_dim}, but y has {self.m}")
        if self.T2.feedthrough:
            raise ValueError("T2 must not have direct feedthrough of y")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        d = list(self.disturbances) or []
        d += [_zero_disturbance] * (5 - len(d))
        self.disturbances = tuple(d[:5])
        self._offsets = tuple(sum(self.r[:i]) for i in range(len(self.r)))
        if not self.history:
            self.history = (0.0,) * self.m
        if len(self.history) != self.m:
            raise ValueError(f"history needs {self.m} entries, got {len(self.history)}")

    @property
    def q(self) -> int:
        return len(self.r)

    @property
    def rbar(self) -> int:
        return sum(self.r)

    @property
    def offsets(self) -> list[int]:
        return list(self._offsets)

    def d(self, k: int, t: float) -> np.ndarray:
        fn = self.disturbances[k - 1]
        if fn is _zero_disturbance:
            return _ZERO1
        return np.atleast_1d(np.asarray(fn(t), dtype=float))


@dataclass
class FunnelController:
    """Reference signal, funnel functions and the gain ``k_hat``.

    ``yref[i]`` is jet-capable (it is evaluated on :class:`TaylorJet`
    arguments). ``phi[i][j]`` is the funnel function of level ``j`` of
    channel ``i``.
    """

    yref: Sequence[Callable]
    phi: Sequence[Sequence[FunnelFunction]]
    phi_I: FunnelFunction
    phi_II: FunnelFunction
    k_hat: float

    @classmethod
    def uniform(cls, yref, phi: FunnelFunction, k_hat: float, r: Sequence[int]) -> "FunnelController":
        return cls(list(yref), [[phi] * max(ri - 1, 0) for ri in r], phi, phi, k_hat)


@dataclass
class SimulationConfig:
    """Integration settings.

    The local error test uses ``atol = rtol = tol`` on the differential
    state and, with ``algebraic_error``, on the ``X_II`` error implied by the
    embedded estimate through the linearized constraint.
    """

    t_end: float = 10.0
    tol: float = 1e-8
    h0: float = 1e-4
    h_min: float = 1e-12
    h_max: float = 0.1
    newton_tol: float = 1e-10
    newton_maxiter: int = 25
    method: str = "bs23"
    t_min: float = 0.05
    consistency_tol: float = 1e-9
    max_steps: int = 2_000_000
    algebraic_error: bool = True
    error_norm: str = "max"

    def __post_init__(self):
        if not (self.t_end > 0 and self.tol > 0 and self.h0 > 0 and 0 < self.h_min <= self.h_max):
            raise ValueError("horizon, tolerance and step bounds must be positive")
        if self.method not in _TABLEAUS:
            raise ValueError(f"unknown method {self.method!r}; choose from {sorted(_TABLEAUS)}")
        if self.error_norm not in ("max", "rms"):
            raise ValueError(f"error_norm must be 'max' or 'rms', got {self.error_norm!r}")


# ---------------------------------------------------------------------------
# initial data and consistency


@dataclass
class InitialState:
    X_I: np.ndarray
    X_II: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray


def _history_derivatives(h, count: int, channel: int) -> list[float]:
    if isinstance(h, (int, float)):
        return [float(h)] + [0.0] * (count - 1)
    if callable(h):
        try:
            return jet_of(h, 0.0, count - 1).derivatives()
        except (TypeError, ValueError) as exc:
            raise HistorySmoothnessError(f"history of output {channel + 1} cannot be expanded "
                                         f"to order {count - 1}: {exc}") from exc
    vals = [float(x) for x in h]
    if len(vals) < count:
        raise HistorySmoothnessError(f"history of output {channel + 1} supplies {len(vals)} "
                                     f"derivative values, {count} needed")
    return vals[:count]


def assemble_initial_state(plant: FunctionalDae) -> InitialState:
    """``X_I(0)``, ``X_II(0)`` and the operator states from the history."""
    X_I = []
    for i, ri in enumerate(plant.r):
        X_I += _history_derivatives(plant.history[i], ri, i)
    X_II = [_history_derivatives(plant.history[i], 1, i)[0] for i in range(plant.q, plant.m)]
    return InitialState(np.array(X_I, dtype=float), np.array(X_II, dtype=float),
                        plant.T1.initial_state.copy(), plant.T2.initial_state.copy())


def _norm(v) -> float:
    return abs(float(v[0])) if len(v) == 1 else float(np.linalg.norm(v))


def _y_from(plant, X_I, X_II):
    y = np.empty(plant.m)
    for i, off in enumerate(plant._offsets):
        y[i] = X_I[off]
    y[plant.q:] = X_II
    return y


class _Stage:
    """Everything at ``(t, X_I, eta)`` that does not depend on ``X_II``."""

    def __init__(self, plant: FunctionalDae, ctrl: FunnelController, t: float, X_I, eta2, X_II_guess,
                 same_time: "_Stage | None" = None):
        self.plant, self.ctrl, self.t = plant, ctrl, t
        self.X_I = X_I
        q, m = plant.q, plant.m
        y_jets = [TaylorJet.from_derivatives(X_I[off:off + ri])
                  for ri, off in zip(plant.r, plant._offsets)]
        if same_time is not None and same_time.t == t:
            # reference and funnel data only depend on t
            yref_jets, phi_jets = same_time.yref_jets, same_time.phi_jets
            self.phi_I, self.phi_II = same_time.phi_I, same_time.phi_II
            self.yref_II = same_time.yref_II
        else:
            # the same funnel function usually serves several levels: expand it once
            top = max([ri - 1 for ri in plant.r], default=0)
            cache = {}

            def phi_jet(fn, order):
                key = id(fn)
                if key not in cache:
                    cache[key] = fn.jet(t, top)
                return cache[key].truncate(order)

            yref_jets = [jet_of(ctrl.yref[i], t, ri - 1) for i, ri in enumerate(plant.r)]
            phi_jets = [[phi_jet(ctrl.phi[i][j], ri - 1 - j) for j in range(ri - 1)]
                        for i, ri in enumerate(plant.r)]
            self.phi_I = phi_jet(ctrl.phi_I, 0).c[0] if q else 0.0
            self.phi_II = phi_jet(ctrl.phi_II, 0).c[0] if m > q else 0.0
            self.yref_II = np.array([float(ctrl.yref[i](t)) for i in range(q, m)])
        self.y_jets, self.yref_jets, self.phi_jets = y_jets, yref_jets, phi_jets
        self.cascade_I = error_cascade(t, y_jets, yref_jets, phi_jets, [], self.phi_I, self.phi_II,
                                       ctrl.k_hat, r=plant.r)
        self.u_I = self.cascade_I.u[:q]
        if m > q:
            y = _y_from(plant, X_I, X_II_guess)
            out2 = plant.T2.output(eta2, y, t)
            self.const = (np.atleast_1d(plant.f3(plant.d(3, t), out2))
                          + np.atleast_1d(plant.gamma_II(plant.d(4, t), out2)).reshape(m - q, q) @ self.u_I
                          if q else np.atleast_1d(plant.f3(plant.d(3, t), out2)))
            self.f4 = float(plant.f4(plant.d(5, t), out2))

    def e_II(self, X_II):
        return X_II - self.yref_II

    def u_II(self, X_II):
        e = X_II - self.yref_II
        w2 = self.phi_II ** 2 * float(e @ e)
        if w2 >= 1.0:
            raise FunnelViolation("II", None, self.t, math.sqrt(w2))
        return -self.ctrl.k_hat * e / (1.0 - w2)

    def residual(self, X_II):
        return (np.atleast_1d(self.plant.f2(self.X_I, X_II)) + self.const
                + self.f4 * self.u_II(X_II))

    def jacobian(self, X_II):
        e = X_II - self.yref_II
        w2 = self.phi_II ** 2 * float(e @ e)
        if w2 >= 1.0:
            raise FunnelViolation("II", None, self.t, math.sqrt(w2))
        den = 1.0 - w2
        n = len(e)
        calG = 2.0 * self.phi_II ** 2 * np.outer(e, e) / den
        J2 = np.atleast_2d(self.plant.df2_dxii(self.X_I, X_II)).reshape(n, n)
        return J2 - (self.ctrl.k_hat * self.f4 / den) * (np.eye(n) + calG)

    def solve(self, X0, tol: float, maxiter: int):
        """Damped Newton for ``F_II(X_II) = 0``; returns ``(X_II, |F|, iterations)``."""
        X = np.array(X0, dtype=float)
        if X.size == 0:
            return X, 0.0, 0
        # pull the start inside the funnel if needed
        for _ in range(60):
            e = X - self.yref_II
            if self.phi_II ** 2 * float(e @ e) < 1.0:
                break
            X = self.yref_II + 0.5 * e
        F = self.residual(X)
        nF = _norm(F)
        it = 0
        while nF > tol:
            if it >= maxiter:
                raise NewtonFailure(self.t, nF, it)
            it += 1
            J = self.jacobian(X)
            if J.shape == (1, 1):
                if J[0, 0] == 0.0:
                    raise NewtonFailure(self.t, nF, it)
                dX = -F / J[0, 0]
            else:
                try:
                    dX = np.linalg.solve(J, -F)
                except np.linalg.LinAlgError:
                    raise NewtonFailure(self.t, nF, it) from None
            lam = 1.0
            while True:
                Xn = X + lam * dX
                try:
                    Fn = self.residual(Xn)
                    nFn = _norm(Fn)
                    if nFn <= tol or nFn < (1.0 - 1e-4 * lam) * nF:
                        break
                except FunnelViolation:
                    pass
                lam *= 0.5
                if lam < 1e-8:
                    raise NewtonFailure(self.t, nF, it)
            X, F, nF = Xn, Fn, nFn
        return X, nF, it

    def rates(self, X_II, eta1, eta2):
        plant = self.plant
        q = plant.q
        Z = np.concatenate([self.X_I, X_II])
        y = _y_from(plant, self.X_I, X_II)
        t = self.t
        dX = np.empty_like(self.X_I)
        if q:
            out1 = plant.T1.output(eta1, Z, t)
            top = (np.atleast_1d(plant.f1(plant.d(1, t), out1))
                   + np.atleast_1d(plant.gamma_I(plant.d(2, t), out1)).reshape(q, q) @ self.u_I)
            for i, (ri, off) in enumerate(zip(plant.r, plant._offsets)):
                dX[off:off + ri - 1] = self.X_I[off + 1:off + ri]
                dX[off + ri - 1] = top[i]
        d1 = plant.T1.rate(eta1, Z, t) if plant.T1.state_dim else np.zeros(0)
        d2 = plant.T2.rate(eta2, y, t) if plant.T2.state_dim else np.zeros(0)
        return np.concatenate([dX, d1, d2])

    def full_cascade(self, X_II) -> CascadeResult:
        """The stage's ``X_I`` cascade completed by the ``e_II`` level (same result as
        :func:`error_cascade` with ``e_II``, without redoing the ``X_I`` part)."""
        c = self.cascade_I
        e_II = self.e_II(X_II)
        if not len(e_II):
            return c
        levels = list(c.levels)
        den, _ = _level(("II", None), self.phi_II, _norm(e_II), self.t, levels, True)
        k_II = self.ctrl.k_hat / den
        u = np.concatenate([c.u[:self.plant.q], -k_II * e_II])
        return CascadeResult(c.t, c.e, c.k, c.e_I, e_II, c.k_I, k_II, u, levels)


def residual_FII(plant: FunctionalDae, ctrl: FunnelController, t: float, X_I, X_II, eta2=None):
    """Algebraic residual with ``u`` supplied by the controller.

    ``u_II`` uses the closed form ``-k_hat (X_II - yref_II) / (1 - phi_II^2 |X_II - yref_II|^2)``.
    """
    X_I = np.asarray(X_I, dtype=float)
    X_II = np.asarray(X_II, dtype=float)
    eta2 = plant.T2.initial_state if eta2 is None else np.asarray(eta2, dtype=float)
    if plant.m == plant.q:
        return np.zeros(0)
    return _Stage(plant, ctrl, t, X_I, eta2, X_II).residual(X_II)


def jacobian_FII_XII(plant: FunctionalDae, ctrl: FunnelController, t: float, X_I, X_II, eta2=None):
    """``d f2/d X_II - k_hat f4 / (1 - phi_II^2 |e_II|^2) (I + calG)``,
    ``calG = 2 phi_II^2 e_II e_II^T / (1 - phi_II^2 |e_II|^2)``."""
    X_I = np.asarray(X_I, dtype=float)
    X_II = np.asarray(X_II, dtype=float)
    eta2 = plant.T2.initial_state if eta2 is None else np.asarray(eta2, dtype=float)
    if plant.m == plant.q:
        return np.zeros((0, 0))
    return _Stage(plant, ctrl, t, X_I, eta2, X_II).jacobian(X_II)


@dataclass
class ConsistencyReport:
    consistent: bool
    residual: np.ndarray
    norm: float
    cascade: CascadeResult


def check_consistency(plant: FunctionalDae, ctrl: FunnelController, tol: float = 1e-9,
                      state: InitialState | None = None) -> ConsistencyReport:
    """Evaluate the algebraic equation at ``t = 0`` under the initial control.

    A funnel violation at ``t = 0`` propagates as :class:`FunnelViolation`.
    """
    st = state or assemble_initial_state(plant)
    stage = _Stage(plant, ctrl, 0.0, st.X_I, st.eta2, st.X_II)
    cascade = stage.full_cascade(st.X_II)
    res = stage.residual(st.X_II) if plant.m > plant.q else np.zeros(0)
    nrm = float(np.linalg.norm(res))
    return ConsistencyReport(nrm <= tol, res, nrm, cascade)


def consistent_initial_XII(plant: FunctionalDae, ctrl: FunnelController, guess=None,
                           tol: float = 1e-13, maxiter: int = 50) -> np.ndarray:
    """Solve the algebraic equation at ``t = 0`` for ``X_II(0)``."""
    st = assemble_initial_state(plant)
    X0 = st.X_II if guess is None else np.asarray(guess, dtype=float)
    stage = _Stage(plant, ctrl, 0.0, st.X_I, st.eta2, X0)
    return stage.solve(X0, tol, maxiter)[0]


@dataclass
class PreflightReport:
    gain_ok: bool
    funnel: InitialFunnelCheck
    consistency: Optional[ConsistencyReport]
    messages: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.gain_ok and bool(self.funnel) and (self.consistency is None
                                                      or self.consistency.consistent)


def preflight(plant: FunctionalDae, ctrl: FunnelController, tol: float = 1e-9) -> PreflightReport:
    """Gain condition, initial funnel condition and consistency, collected without raising."""
    msgs = []
    gain_ok = True
    if plant.m > plant.q:
        gain_ok = check_gain_condition(ctrl.k_hat, plant.alpha, plant.f2_jac_sup)
        if not gain_ok:
            msgs.append(f"gain condition fails: k_hat={ctrl.k_hat} <= "
                        f"{plant.f2_jac_sup}/{plant.alpha}")
    st = assemble_initial_state(plant)
    stage_ok = True
    try:
        stage = _Stage(plant, ctrl, 0.0, st.X_I, st.eta2, st.X_II)
        casc = error_cascade(0.0, stage.y_jets, stage.yref_jets, stage.phi_jets, stage.e_II(st.X_II),
                             stage.phi_I, stage.phi_II, ctrl.k_hat, r=plant.r, raise_on_violation=False)
    except FunnelViolation as exc:
        stage_ok = False
        funnel = InitialFunnelCheck(False, ((exc.channel, exc.level), exc.value))
    if stage_ok:
        funnel = check_initial_funnel(casc)
    cons = None
    if not funnel:
        msgs.append(f"initial error outside funnel: {funnel.witness}")
    else:
        cons = check_consistency(plant, ctrl, tol, st)
        if not cons.consistent:
            msgs.append(f"inconsistent initial value: |F_II(0)| = {cons.norm:.3g}")
    return PreflightReport(gain_ok, funnel, cons, msgs)


def spot_check_plant(plant: FunctionalDae, n: int = 200, seed: int = 0, scale: float = 2.0) -> dict:
    """Sample the structural assumptions: ``f4 >= alpha``, ``Gamma_I + Gamma_I^T > 0``,
    ``|d f2 / d X_II| <= f2_jac_sup``. Returns check name -> (passed, witness)."""
    rng = np.random.default_rng(seed)
    q, m = plant.q, plant.m
    res = {"f4_lower_bound": (True, None), "gamma_I_definite": (True, None),
           "f2_jac_bound": (True, None)}
    for _ in range(n):
        eta1 = rng.uniform(-scale, scale, plant.T1.output_dim)
        eta2 = rng.uniform(-scale, scale, plant.T2.output_dim)
        d = rng.uniform(-scale, scale, plant.d(1, 0.0).size)
        XI = rng.uniform(-scale, scale, plant.rbar)
        XII = rng.uniform(-scale, scale, m - q)
        if m > q and res["f4_lower_bound"][0]:
            v = float(plant.f4(d, eta2))
            if v < plant.alpha:
                res["f4_lower_bound"] = (False, (eta2.tolist(), v))
        if q and res["gamma_I_definite"][0]:
            G = np.atleast_1d(plant.gamma_I(d, eta1)).reshape(q, q)
            lam = float(np.min(np.linalg.eigvalsh(G + G.T)))
            if lam <= 0:
                res["gamma_I_definite"] = (False, (eta1.tolist(), lam))
        if m > q and res["f2_jac_bound"][0]:
            J = np.atleast_2d(plant.df2_dxii(XI, XII))
            nrm = float(np.linalg.norm(J, 2))
            if nrm > plant.f2_jac_sup * (1 + 1e-12):
                res["f2_jac_bound"] = (False, (XI.tolist(), XII.tolist(), nrm))
    return res


# ---------------------------------------------------------------------------
# integrator

_TABLEAUS = {
    # Bogacki-Shampine 3(2), FSAL; propagates the third-order solution
    "bs23": dict(
        c=[0.0, 0.5, 0.75, 1.0],
        a=[[], [0.5], [0.0, 0.75], [2 / 9, 1 / 3, 4 / 9]],
        b=[2 / 9, 1 / 3, 4 / 9, 0.0],
        bhat=[7 / 24, 1 / 4, 1 / 3, 1 / 8],
        order=2,
    ),
    # Dormand-Prince 5(4), FSAL
    "dopri5": dict(
        c=[0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0],
        a=[[], [1 / 5], [3 / 40, 9 / 40], [44 / 45, -56 / 15, 32 / 9],
           [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
           [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
           [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]],
        b=[35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0],
        bhat=[5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40],
        order=4,
    ),
}


@dataclass
class Trajectory:
    """Accepted steps of a closed-loop run.

    ``data`` maps column names to arrays over ``times``; the column order
    is the CSV order. ``status`` is one of ``completed``, ``funnel_violation``,
    ``newton_failure`` or ``step_underflow``.
    """

    times: np.ndarray
    data: dict
    m: int
    r: tuple
    status: str = "completed"
    message: str = ""
    failure: Optional[Exception] = None
    stats: dict = field(default_factory=dict)

    @property
    def q(self) -> int:
        return len(self.r)

    def col(self, name: str) -> np.ndarray:
        return self.data[name]

    def group(self, prefix: str) -> np.ndarray:
        names = [k for k in self.data if k.startswith(prefix)]
        return np.column_stack([self.data[k] for k in names]) if names else np.zeros((len(self.times), 0))

    @property
    def y(self) -> np.ndarray:
        return np.column_stack([self.data[f"y_{i + 1}"] for i in range(self.m)])

    @property
    def u(self) -> np.ndarray:
        return np.column_stack([self.data[f"u_{i + 1}"] for i in range(self.m)])

    @property
    def residual(self) -> np.ndarray:
        return self.data["residual"]

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def derivative_slot(self, i: int, j: int) -> np.ndarray:
        """``y_{i+1}^{(j)}`` along the run (``j < r_i``)."""
        return self.data[f"y_{i + 1}"] if j == 0 else self.data[f"dy_{i + 1}_{j}"]

    def to_csv(self, path, stride: int = 1) -> None:
        names = ["t"] + list(self.data)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for k in range(0, len(self.times), stride):
                w.writerow([_fmt(self.times[k])] + [_fmt(self.data[n][k]) for n in self.data])

    def summary(self, t_min: float = 0.05) -> dict:
        rep = monitor_funnel(self, t_min)
        gains = {k: float(np.max(v)) if len(v) else None for k, v in self.data.items()
                 if k.startswith("k_")}
        return {
            "status": self.status,
            "message": self.message,
            "t_final": float(self.times[-1]) if len(self.times) else None,
            "steps": dict(self.stats),
            "max_residual": float(np.max(self.residual)) if len(self.times) else None,
            "min_margins": {k: _json_num(v.min_margin) for k, v in rep.levels.items()},
            "t_of_min_margin": {k: _json_num(v.t_min_margin) for k, v in rep.levels.items()},
            "max_phi_abs_e": {k: _json_num(v.max_phi_e) for k, v in rep.levels.items()},
            "max_gains": gains,
            "max_abs_u": [float(np.max(np.abs(c))) for c in self.u.T] if len(self.times) else [],
            "verdicts": {
                "completed": self.completed,
                "inside_funnels": rep.inside,
                "positive_margin_floors": rep.floors_positive,
            },
            "t_min": t_min,
        }


def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x + 0.0, ".17g")  # no "-0"


def _json_num(x):
    if x is None or not math.isfinite(x):
        return None
    return float(x)


class _Recorder:
    def __init__(self, plant: FunctionalDae):
        self.plant = plant
        self.times = []
        self.rows = []
        q, m = plant.q, plant.m
        names = [f"y_{i + 1}" for i in range(m)]
        for i, ri in enumerate(plant.r):
            names += [f"dy_{i + 1}_{j}" for j in range(1, ri)]
        names += [f"u_{i + 1}" for i in range(m)]
        for i, ri in enumerate(plant.r):
            names += [f"e_{i + 1}_{j}" for j in range(ri)]
        names += [f"e_I_{i + 1}" for i in range(q)]
        names += [f"e_II_{i + 1}" for i in range(q, m)]
        for i, ri in enumerate(plant.r):
            names += [f"k_{i + 1}_{j}" for j in range(ri - 1)]
        if q:
            names.append("k_I")
        if m > q:
            names.append("k_II")
        names.append("residual")
        self.level_names = []
        for i, ri in enumerate(plant.r):
            self.level_names += [f"{i + 1}_{j}" for j in range(ri - 1)]
        if q:
            self.level_names.append("I")
        if m > q:
            self.level_names.append("II")
        names += [f"margin_{s}" for s in self.level_names]
        names += [f"phie_{s}" for s in self.level_names]
        names += [f"eta1_{k + 1}" for k in range(plant.T1.state_dim)]
        names += [f"eta2_{k + 1}" for k in range(plant.T2.state_dim)]
        self.names = names

    def record(self, t, X_I, X_II, eta1, eta2, casc: CascadeResult, res_norm: float):
        plant = self.plant
        row = list(_y_from(plant, X_I, X_II))
        for i, (ri, off) in enumerate(zip(plant.r, plant._offsets)):
            row += list(X_I[off + 1:off + ri])
        row += list(casc.u)
        for es in casc.e:
            row += list(es)
        row += list(casc.e_I)
        row += list(casc.e_II)
        for ks in casc.k:
            row += list(ks)
        if plant.q:
            row.append(casc.k_I)
        if plant.m > plant.q:
            row.append(casc.k_II)
        row.append(res_norm)
        margins, prods = [], []
        for _, phi_val, abs_e in casc.levels:
            margins.append(math.inf if phi_val == 0 else 1.0 / phi_val - abs_e)
            prods.append(phi_val * abs_e)
        row += margins + prods
        row += list(eta1) + list(eta2)
        self.times.append(t)
        self.rows.append(row)

    def build(self, status, message, failure, stats) -> Trajectory:
        arr = np.array(self.rows, dtype=float).reshape(len(self.rows), len(self.names))
        data = {n: arr[:, k] for k, n in enumerate(self.names)}
        return Trajectory(np.array(self.times), data, self.plant.m, self.plant.r, status, message,
                          failure, stats)


def integrate(plant: FunctionalDae, ctrl: FunnelController,
              config: SimulationConfig | None = None, check: bool = True) -> Trajectory:
    """Simulate the closed loop on ``[0, config.t_end]``.

    Runs :func:`preflight` first (raising :class:`PreflightError` when it
    fails, unless ``check=False``). Stage failures (funnel violation inside
    a stage, Newton failure) reject the step and shrink it; the run only
    aborts when the step would fall below ``h_min``, and the trajectory up
    to that point is returned with the cause in ``status``/``failure``.
    """
    cfg = config or SimulationConfig()
    if check:
        pf = preflight(plant, ctrl, cfg.consistency_tol)
        if not pf.ok:
            raise PreflightError(pf)
    tab = _TABLEAUS[cfg.method]
    c, a, b, bhat = tab["c"], tab["a"], tab["b"], tab["bhat"]
    err_w = np.array(b) - np.array(bhat)
    expo = 1.0 / (tab["order"] + 1)
    beta1, beta2 = 0.7 * expo, 0.4 * expo
    ns = len(c)

    st = assemble_initial_state(plant)
    nI, n1 = plant.rbar, plant.T1.state_dim

    def split(x):
        return x[:nI], x[nI:nI + n1], x[nI + n1:]

    stats = {"accepted": 0, "rejected": 0, "stage_failures": 0, "newton_iterations": 0}

    def stage_eval(t, x, X_guess):
        XI, e1, e2 = split(x)
        stage = _Stage(plant, ctrl, t, XI, e2, X_guess)
        X_II, nF, its = stage.solve(X_guess, cfg.newton_tol, cfg.newton_maxiter)
        stats["newton_iterations"] += its
        return stage, X_II, nF, stage.rates(X_II, e1, e2)

    rec = _Recorder(plant)
    t = 0.0
    x = np.concatenate([st.X_I, st.eta1, st.eta2])
    try:
        stage0, X_II, nF, k_first = stage_eval(t, x, st.X_II)
    except (FunnelViolation, NewtonFailure) as exc:
        return rec.build(_status_of(exc), str(exc), exc, stats)
    XI, e1, e2 = split(x)
    rec.record(t, XI, X_II, e1, e2, stage0.full_cascade(X_II), nF)

    h = min(cfg.h0, cfg.h_max, cfg.t_end)
    err_prev = 1.0
    slope = None
    last_failure: Optional[Exception] = None
    status, message = "completed", ""
    steps = 0
    while t < cfg.t_end * (1 - 1e-14):
        steps += 1
        if steps > cfg.max_steps:
            status, message = "step_underflow", "maximum number of steps exceeded"
            last_failure = StepUnderflow(message)
            break
        h = min(h, cfg.t_end - t)
        ks = [k_first]
        X_stage = X_II
        failed = None
        try:
            for si in range(1, ns):
                xs = x + h * sum(a[si][j] * ks[j] for j in range(si) if a[si][j] != 0.0)
                # warm start: linear extrapolation of X_II from the last two accepted steps
                guess = X_II + (c[si] * h) * slope if slope is not None else X_stage
                stage, X_stage, nF_s, ks_i = stage_eval(t + c[si] * h, xs, guess)
                ks.append(ks_i)
        except (FunnelViolation, NewtonFailure) as exc:
            failed = exc
        if failed is not None:
            stats["stage_failures"] += 1
            last_failure = failed
            h *= 0.25
            if h < cfg.h_min:
                status, message = _status_of(failed), str(failed)
                break
            continue
        x_new = x + h * sum(b[j] * ks[j] for j in range(ns) if b[j] != 0.0)
        err_vec = h * sum(err_w[j] * ks[j] for j in range(ns) if err_w[j] != 0.0)
        sc = cfg.tol + cfg.tol * np.maximum(np.abs(x), np.abs(x_new))
        scaled = err_vec / sc
        if cfg.algebraic_error and X_stage.size:
            scaled = np.concatenate([scaled, _algebraic_error(plant, ctrl, t + h, split(x_new - err_vec),
                                                              stage, X_stage, X_II, cfg.tol)])
        if not scaled.size:
            err = 0.0
        elif cfg.error_norm == "max":
            err = float(np.max(np.abs(scaled)))
        else:
            err = float(np.sqrt(np.mean(scaled ** 2)))
        if err <= 1.0:
            # FSAL: the last stage sits at (t + h, x_new)
            slope = (X_stage - X_II) / h
            t = t + h
            x = x_new
            X_II = X_stage
            k_first = ks[-1]
            stats["accepted"] += 1
            XI, e1, e2 = split(x)
            rec.record(t, XI, X_II, e1, e2, stage.full_cascade(X_II), nF_s)
            fac = 0.9 * max(err, 1e-10) ** (-beta1) * err_prev ** beta2
            h = min(cfg.h_max, h * min(5.0, max(0.2, fac)))
            err_prev = max(err, 1e-4)
        else:
            stats["rejected"] += 1
            h *= max(0.2, 0.9 * err ** (-expo))
            last_failure = None
        if h < cfg.h_min:
            status = "step_underflow" if last_failure is None else _status_of(last_failure)
            message = f"step size fell below {cfg.h_min:g} at t={t:.6g}"
            last_failure = last_failure or StepUnderflow(message)
            break
    failure = last_failure if status != "completed" else None
    return rec.build(status, message, failure, stats)


def _algebraic_error(plant, ctrl, t, low, stage, X_new, X_old, tol) -> np.ndarray:
    """Scaled local error of ``X_II`` implied by the embedded estimate of the differential state.

    The lower-order solution ``low`` would give ``X_II + dX`` with
    ``J dX = -F_II(low, X_II)`` to first order.
    """
    XI, _, e2 = low
    try:
        r = _Stage(plant, ctrl, t, XI, e2, X_new, same_time=stage).residual(X_new)
        dX = np.linalg.solve(stage.jacobian(X_new), -r)
    except (FunnelViolation, np.linalg.LinAlgError):
        return np.array([np.inf])
    return dX / (tol + tol * np.maximum(np.abs(X_new), np.abs(X_old)))


def _status_of(exc) -> str:
    if isinstance(exc, FunnelViolation):
        return "funnel_violation"
    if isinstance(exc, NewtonFailure):
        return "newton_failure"
    return "step_underflow"


def top_derivatives(plant: FunctionalDae, traj: Trajectory) -> np.ndarray:
    """``y_i^{(r_i)}`` at every recorded step, from the first equation with the recorded input."""
    q = plant.q
    out = np.zeros((len(traj.times), q))
    if not q:
        return out
    for k, t in enumerate(traj.times):
        XI, XII, eta1 = _row_states(plant, traj, k)
        Z = np.concatenate([XI, XII])
        o1 = plant.T1.output(eta1, Z, t)
        uI = np.array([traj.data[f"u_{i + 1}"][k] for i in range(q)])
        out[k] = (np.atleast_1d(plant.f1(plant.d(1, t), o1))
                  + np.atleast_1d(plant.gamma_I(plant.d(2, t), o1)).reshape(q, q) @ uI)
    return out


def _row_states(plant, traj, k):
    XI = []
    for i, ri in enumerate(plant.r):
        XI.append(traj.data[f"y_{i + 1}"][k])
        XI += [traj.data[f"dy_{i + 1}_{j}"][k] for j in range(1, ri)]
    XII = [traj.data[f"y_{i + 1}"][k] for i in range(plant.q, plant.m)]
    eta1 = [traj.data[f"eta1_{j + 1}"][k] for j in range(plant.T1.state_dim)]
    return np.array(XI), np.array(XII), np.array(eta1)


def reconstruct_x3(plant: FunctionalDae, traj: Trajectory) -> np.ndarray:
    """Evaluate the plant's ``x3_map(X_I, y_I^{(r)})`` along a trajectory."""
    if plant.x3_map is None:
        raise ValueError(f"plant {plant.name!r} has no x3 map")
    tops = top_derivatives(plant, traj)
    rows = []
    for k in range(len(traj.times)):
        XI, _, _ = _row_states(plant, traj, k)
        rows.append(np.atleast_1d(plant.x3_map(XI, tops[k])))
    return np.array(rows)


# ---------------------------------------------------------------------------
# monitoring


@dataclass
class LevelMargin:
    min_margin: float
    t_min_margin: Optional[float]
    max_phi_e: float


@dataclass
class MarginReport:
    levels: dict
    t_min: float

    @property
    def floors_positive(self) -> bool:
        return all(v.min_margin > 0 for v in self.levels.values())

    @property
    def inside(self) -> bool:
        return all(v.max_phi_e < 1 for v in self.levels.values())


def monitor_funnel(traj: Trajectory, t_min: float = 0.05) -> MarginReport:
    """Minimum of ``1/phi - |e|`` per level over ``t >= t_min``, and the max of ``phi |e|`` over all t."""
    levels = {}
    mask = traj.times >= t_min
    for name in traj.data:
        if not name.startswith("margin_"):
            continue
        label = name[len("margin_"):]
        mg = traj.data[name]
        prods = traj.data.get(f"phie_{label}", np.zeros_like(mg))
        if mask.any():
            idx = int(np.argmin(np.where(mask, mg, np.inf)))
            levels[label] = LevelMargin(float(mg[idx]), float(traj.times[idx]),
                                        float(np.max(prods)) if len(prods) else 0.0)
        else:
            levels[label] = LevelMargin(math.inf, None, float(np.max(prods)) if len(prods) else 0.0)
    return MarginReport(levels, t_min)


def write_summary(traj: Trajectory, path, t_min: float = 0.05) -> dict:
    summ = traj.summary(t_min)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summ, fh, indent=2)
    return summ
