"""Golden-example battery behind ``funneldae selftest``.

Every case compares against values printed in the source material for
the built-in examples. The registry is a parameter so that a test can
hand in a deliberately broken one.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction as F
from typing import Callable

from . import registry as default_registry
from .closed_loop import SimulationConfig, check_consistency, integrate, monitor_funnel
from .dae_analysis import (
    LinearDae,
    compute_H,
    gamma_decomposition,
    is_right_invertible,
    transfer_function,
    truncated_vrd,
    vector_rd,
    zero_dynamics_autonomous,
)
from .funnel import check_gain_condition, default_phi
from .polyrat import Poly, RatFun, RatMat, limit_at_infinity, ratmat_inverse, ratvec_degree


@dataclass
class Case:
    name: str
    group: str
    run: Callable[[object], bool]


def _s():
    return RatFun.s()


def _exlin_G():
    s = _s()
    return RatMat([[0, -1 / s],
                   [(s + 1) / 6, RatFun(Poly([-8, -4, 1, 1, 1]), Poly([0, 6]))]])


def _exlin_H():
    s = _s()
    return RatMat([[RatFun(Poly([-8, -4, 1, 1, 1]), Poly([1, 1])), 6 / (s + 1)],
                   [-s, 0]])


def _cases() -> list[Case]:
    s = _s()
    cases = [
        Case("degree of (s-1, s-1)", "polyrat", lambda reg: ratvec_degree([s - 1, s - 1]) == 1),
        Case("limit of s-1 with shift -1", "polyrat", lambda reg: limit_at_infinity(s - 1, -1) == 1),
        Case("limit of 6/(s+1)", "polyrat", lambda reg: limit_at_infinity(6 / (s + 1), 0) == 0),
        Case("inverse of exlin G", "polyrat", lambda reg: ratmat_inverse(_exlin_G()) == _exlin_H()),
        Case("tvrd-nonexist H", "tvrd",
             lambda reg: compute_H(reg.linear_system("tvrd-nonexist")) == RatMat([[s - 1, s + 1], [s - 1, s - 2]])),
        Case("tvrd-nonexist report", "tvrd", _case_nonexist),
        Case("exlin transfer function", "tvrd",
             lambda reg: transfer_function(reg.linear_system("exlin")) == _exlin_G()),
        Case("exlin H", "tvrd", lambda reg: compute_H(reg.linear_system("exlin")) == _exlin_H()),
        Case("exlin tvrd (3,0)", "tvrd", _case_exlin_tvrd),
        Case("exlin no vector relative degree", "tvrd", _case_exlin_vrd),
        Case("exlin structure", "tvrd", lambda reg: zero_dynamics_autonomous(reg.linear_system("exlin"))
             and is_right_invertible(reg.linear_system("exlin"))),
        Case("exlin gamma decomposition", "tvrd", _case_exlin_gamma),
        Case("feedback example G = -s", "tvrd",
             lambda reg: transfer_function(reg.linear_system("feedback-minus-s")) == RatMat([[-s]])),
        Case("feedback example vrd (-1)", "tvrd", _case_feedback_vrd),
        Case("strict relative degree 1, zero dynamics not autonomous", "tvrd", _case_strict),
        Case("phi(0) = 0", "funnel", lambda reg: default_phi()(0.0) == 0.0),
        Case("gain condition k_hat = 2", "funnel", lambda reg: check_gain_condition(2.0, 1.0, 1.0)),
        Case("initial controller values", "funnel", _case_initial_values),
        Case("initial value consistent", "funnel", _case_consistent),
        Case("closed loop stays in funnels", "sim", _case_sim),
    ]
    return cases


def _case_nonexist(reg) -> bool:
    rep = truncated_vrd(reg.linear_system("tvrd-nonexist"))
    return (not rep.exists and rep.r == (1, 1) and rep.gamma_hat == [[1, 1], [1, 1]]
            and rep.rank_gamma_hat_q == 1)


def _case_exlin_tvrd(reg) -> bool:
    rep = truncated_vrd(reg.linear_system("exlin"))
    return rep.exists and rep.r == (3, 0) and rep.gamma_hat == [[1, 0], [0, 0]] \
        and rep.gamma_hat_q == [[1], [0]]


def _case_exlin_vrd(reg) -> bool:
    rep = vector_rd(reg.linear_system("exlin"))
    return not rep.exists and rep.gamma == [[0, -1], [0, F(1, 6)]] and rep.rank_gamma == 1


def _case_exlin_gamma(reg) -> bool:
    rep = truncated_vrd(reg.linear_system("exlin"))
    g = gamma_decomposition(rep.gamma_hat, rep.r)
    return g.gamma == [[1, 0], [0, 1]] and g.reordering == (0, 1)


def _case_feedback_vrd(reg) -> bool:
    rep = vector_rd(reg.linear_system("feedback-minus-s"))
    return rep.exists and rep.r == (-1,) and rep.gamma == [[-1]]


def _case_strict(reg) -> bool:
    sys = LinearDae(E=[[1]], A=[[0]], B=[[1, 1]], C=[[1]])
    rep = vector_rd(sys)
    return (rep.exists and rep.strict and rep.r == (1,) and rep.gamma == [[1, 1]]
            and not zero_dynamics_autonomous(sys))


def _case_initial_values(reg) -> bool:
    plant, ctrl = reg.nonlinear_system("paper-sec5")
    c = check_consistency(plant, ctrl).cascade
    close = lambda a, b: abs(a - b) <= 1e-12  # noqa: E731
    return (close(c.k[0][0], 1) and close(c.k_I, 1) and close(c.k_II, 2) and close(c.e_I[0], -1)
            and close(c.e_II[0], 0) and close(c.u[0], 1) and close(c.u[1], 0))


def _case_consistent(reg) -> bool:
    plant, ctrl = reg.nonlinear_system("paper-sec5")
    rep = check_consistency(plant, ctrl)
    return rep.consistent and rep.norm == 0.0


def _case_sim(reg) -> bool:
    plant, ctrl = reg.nonlinear_system("paper-sec5")
    traj = integrate(plant, ctrl, SimulationConfig(t_end=10.0, tol=1e-6))
    mon = monitor_funnel(traj)
    return traj.completed and mon.inside and mon.floors_positive


@dataclass
class CaseResult:
    name: str
    group: str
    passed: bool
    detail: str = ""


def run_selftest(registry=None, filter: str | None = None) -> list[CaseResult]:
    """Run the battery; ``filter`` keeps cases whose group or name contains it."""
    reg = registry or default_registry
    out = []
    for case in _cases():
        if filter and filter not in case.group and filter not in case.name:
            continue
        try:
            ok = bool(case.run(reg))
            detail = "" if ok else "value mismatch"
        except Exception as exc:  # a crash is a failed case, reported by name
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CaseResult(case.name, case.group, ok, detail))
    return out


def format_table(results: list[CaseResult]) -> str:
    width = max([len(r.name) for r in results] + [4])
    lines = [f"{'case'.ljust(width)}  group    result"]
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        extra = f"  ({r.detail})" if r.detail else ""
        lines.append(f"{r.name.ljust(width)}  {r.group.ljust(7)}  {mark}{extra}")
    n_ok = sum(r.passed for r in results)
    lines.append(f"{n_ok}/{len(results)} passed")
    return "\n".join(lines)


