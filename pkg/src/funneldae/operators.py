"""Causal operators realized by a finite-dimensional state.

An operator maps an input signal ``v`` to an output signal through

    x' = rate(x, v(t), t),     out(t) = output(x(t), v(t), t),   x(0) = x0.

Inside a closed-loop simulation the state is advanced by the loop's own
integrator; :func:`respond` evaluates an operator on a given input signal
on its own, which is what the tests and the property harness use.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

__all__ = [
    "RealizedOperator",
    "make_lti_filter",
    "affine_combine",
    "respond",
    "property_harness",
    "HarnessReport",
]


@dataclass(frozen=True)
class RealizedOperator:
    state_dim: int
    input_dim: int
    output_dim: int
    initial_state: np.ndarray
    rate: Callable
    output: Callable
    history_support: float = 0.0
    feedthrough: bool = False
    name: str = "operator"
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x0 = np.asarray(self.initial_state, dtype=float).reshape(-1)
        if x0.shape != (self.state_dim,):
            raise ValueError(f"initial state has length {x0.size}, expected {self.state_dim}")
        object.__setattr__(self, "initial_state", x0)


def _as_2d(M, rows=None, name="matrix") -> np.ndarray:
    A = np.atleast_2d(np.asarray(M, dtype=float))
    if rows is not None and A.shape[0] != rows:
        raise ValueError(f"{name} has {A.shape[0]} rows, expected {rows}")
    return A


def make_lti_filter(Q, Bin, eta0=None, name: str = "lti") -> RealizedOperator:
    """Operator ``eta' = Q eta + Bin v``, output ``eta``.

    Warns (does not fail) when ``Q`` is not Hurwitz, since then the
    bounded-input bounded-output property is not guaranteed.
    """
    Q = _as_2d(Q, name="Q")
    k = Q.shape[0]
    if Q.shape != (k, k):
        raise ValueError(f"Q must be square, got {Q.shape}")
    Bin = _as_2d(Bin, rows=k, name="Bin")
    eta0 = np.zeros(k) if eta0 is None else np.asarray(eta0, dtype=float).reshape(-1)
    if eta0.shape != (k,):
        raise ValueError(f"eta0 has length {eta0.size}, expected {k}")
    hurwitz = bool(np.all(np.linalg.eigvals(Q).real < 0))
    if not hurwitz:
        warnings.warn("Q is not Hurwitz; the filter may map bounded inputs to unbounded outputs",
                      RuntimeWarning, stacklevel=2)

    def rate(x, v, t):
        return Q @ x + Bin @ v

    def output(x, v, t):
        return x

    return RealizedOperator(k, Bin.shape[1], k, eta0, rate, output, name=name,
                            info={"Q": Q, "Bin": Bin, "hurwitz": hurwitz})


def affine_combine(base_ops: Sequence[RealizedOperator], selections: Sequence, D=None,
                   gains: Sequence | None = None, offset=None, input_dim: int | None = None,
                   name: str = "combined") -> RealizedOperator:
    """Stack operators into one.

    Operator ``j`` receives ``selections[j] @ v``; the combined output is
    ``D v + sum_j gains[j] @ out_j + offset``. The state is the
    concatenation of the base states.
    """
    base_ops = list(base_ops)
    sels = [_as_2d(S, rows=op.input_dim, name=f"selection {j}") for j, (op, S) in
            enumerate(zip(base_ops, selections))]
    if len(sels) != len(base_ops):
        raise ValueError("need one selection matrix per operator")
    if input_dim is None:
        if sels:
            input_dim = sels[0].shape[1]
        elif D is not None:
            input_dim = _as_2d(D).shape[1]
        else:
            raise ValueError("cannot infer the input dimension")
    for j, S in enumerate(sels):
        if S.shape[1] != input_dim:
            raise ValueError(f"selection {j} has {S.shape[1]} columns, expected {input_dim}")
    if gains is None:
        gains = [np.eye(op.output_dim) for op in base_ops]
    gains = [_as_2d(P, name=f"gain {j}") for j, P in enumerate(gains)]
    out_dims = {P.shape[0] for P in gains}
    if D is not None:
        D = _as_2d(D, name="D")
        if D.shape[1] != input_dim:
            raise ValueError(f"D has {D.shape[1]} columns, expected {input_dim}")
        out_dims.add(D.shape[0])
    if len(out_dims) != 1:
        raise ValueError(f"inconsistent output dimensions {sorted(out_dims)}")
    out_dim = out_dims.pop()
    for j, (op, P) in enumerate(zip(base_ops, gains)):
        if P.shape[1] != op.output_dim:
            raise ValueError(f"gain {j} has {P.shape[1]} columns, expected {op.output_dim}")
    offset = np.zeros(out_dim) if offset is None else np.asarray(offset, dtype=float).reshape(-1)
    bounds = np.cumsum([0] + [op.state_dim for op in base_ops])
    x0 = np.concatenate([op.initial_state for op in base_ops]) if base_ops else np.zeros(0)

    def rate(x, v, t):
        parts = [op.rate(x[bounds[j]:bounds[j + 1]], sels[j] @ v, t) for j, op in enumerate(base_ops)]
        return np.concatenate(parts) if parts else np.zeros(0)

    def output(x, v, t):
        y = offset.copy()
        if D is not None:
            y = y + D @ v
        for j, op in enumerate(base_ops):
            y = y + gains[j] @ op.output(x[bounds[j]:bounds[j + 1]], sels[j] @ v, t)
        return y

    feed = D is not None and bool(np.any(D)) or any(op.feedthrough for op in base_ops)
    return RealizedOperator(int(bounds[-1]), input_dim, out_dim, x0, rate, output,
                            history_support=max([op.history_support for op in base_ops], default=0.0),
                            feedthrough=feed, name=name)


def respond(op: RealizedOperator, v: Callable[[float], np.ndarray], t_eval, rtol: float = 1e-10,
            atol: float = 1e-12) -> np.ndarray:
    """Outputs of ``op`` along ``t_eval`` (starting at ``t_eval[0]``) for the input signal ``v``.

    Returns an array of shape ``(len(t_eval), output_dim)``.
    """
    t_eval = np.asarray(t_eval, dtype=float)
    x0 = op.initial_state
    if op.state_dim == 0 or len(t_eval) == 1:
        xs = np.repeat(x0[None, :], len(t_eval), axis=0)
    else:
        sol = solve_ivp(lambda t, x: op.rate(x, np.asarray(v(t), dtype=float), t),
                        (t_eval[0], t_eval[-1]), x0, t_eval=t_eval, rtol=rtol, atol=atol,
                        method="DOP853")
        if not sol.success:
            raise RuntimeError(f"operator integration failed: {sol.message}")
        xs = sol.y.T
    return np.array([op.output(x, np.asarray(v(t), dtype=float), t) for x, t in zip(xs, t_eval)])


# ---------------------------------------------------------------------------
# property harness


@dataclass
class HarnessCheck:
    passed: bool
    value: float
    witness: Optional[tuple] = None
    detail: str = ""


@dataclass
class HarnessReport:
    checks: dict = field(default_factory=dict)
    sup_input: float = 0.0
    sup_output: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def __bool__(self):
        return self.passed


def _random_signal(rng, dim: int, n_modes: int = 3, amp: float = 1.0):
    """Smooth bounded input: a random sum of sinusoids, sup norm at most ``amp`` per entry."""
    a = rng.uniform(-1, 1, size=(dim, n_modes))
    a *= amp / np.maximum(np.abs(a).sum(axis=1, keepdims=True), 1e-12)
    w = rng.uniform(0.2, 3.0, size=(dim, n_modes))
    ph = rng.uniform(0, 2 * np.pi, size=(dim, n_modes))

    def v(t):
        return np.sum(a * np.sin(w * t + ph), axis=1)

    return v


def property_harness(op: RealizedOperator, trials: int = 3, horizon: float = 10.0,
                     n_points: int = 401, seed: int = 0, causality_tol: float = 1e-6,
                     growth_factor: float = 2.0) -> HarnessReport:
    """Empirical causality, Lipschitz and boundedness checks on random bounded inputs.

    Causality: two inputs that agree on ``[0, T/2]`` must give outputs
    agreeing there. Lipschitz: the ratio of output to input perturbation is
    estimated and must be finite. Boundedness: the output sup over
    ``[0, 2T]`` may not exceed ``growth_factor`` times the sup over
    ``[0, T]`` (plus one). The harness can only falsify these properties.
    """
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 2 * horizon, 2 * n_points - 1)
    first = t <= horizon
    report = HarnessReport()
    caus_err, lip, grow_witness = 0.0, 0.0, None
    sup_in = sup_out = 0.0
    t_cut = horizon / 2
    for _ in range(trials):
        v1 = _random_signal(rng, op.input_dim)
        v2_tail = _random_signal(rng, op.input_dim)

        def v2(s, v1=v1, v2_tail=v2_tail):
            # continuous splice that agrees with v1 up to t_cut
            if s <= t_cut:
                return v1(s)
            return v1(s) + (1 - np.exp(-(s - t_cut))) * v2_tail(s)

        y1 = respond(op, v1, t)
        y2 = respond(op, v2, t)
        mask = t <= t_cut
        caus_err = max(caus_err, float(np.max(np.abs(y1[mask] - y2[mask]))) if mask.any() else 0.0)

        delta = 1e-4
        pert = _random_signal(rng, op.input_dim, amp=delta)
        y3 = respond(op, lambda s: v1(s) + pert(s), t[first])
        dv = max(float(np.max(np.abs([pert(s) for s in t[first]]))), 1e-300)
        lip = max(lip, float(np.max(np.abs(y3 - y1[first]))) / dv)

        s1 = float(np.max(np.abs(y1[first]))) if y1.size else 0.0
        s2 = float(np.max(np.abs(y1))) if y1.size else 0.0
        sup_in = max(sup_in, float(np.max(np.abs([v1(s) for s in t]))))
        sup_out = max(sup_out, s2)
        if not np.isfinite(s2) or s2 > growth_factor * s1 + 1.0:
            idx = int(np.argmax(np.max(np.abs(y1), axis=1)))
            grow_witness = grow_witness or (float(t[idx]), s2, s1)

    report.sup_input, report.sup_output = sup_in, sup_out
    report.checks["causality"] = HarnessCheck(caus_err <= causality_tol, caus_err,
                                              None if caus_err <= causality_tol else (t_cut, caus_err))
    report.checks["lipschitz"] = HarnessCheck(bool(np.isfinite(lip) and lip < 1e6), lip,
                                              detail="estimated local Lipschitz constant")
    report.checks["bounded"] = HarnessCheck(grow_witness is None, sup_out, grow_witness,
                                            detail="witness is (t, sup on [0,2T], sup on [0,T])")
    return report
