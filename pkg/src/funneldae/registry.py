"""Built-in example systems.

Linear entries are :class:`LinearDae` instances for the exact analysis;
nonlinear entries are factories returning ``(plant, controller)`` pairs.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable

import numpy as np

from .closed_loop import FunctionalDae, FunnelController, consistent_initial_XII
from .dae_analysis import LinearDae
from .funnel import FunnelFunction, default_phi
from .jets import jcos, jsin
from .operators import affine_combine, make_lti_filter

__all__ = ["LINEAR", "NONLINEAR", "linear_system", "nonlinear_system", "names",
           "sec5_plant", "integrator_plant", "linear_normalform_plant", "linear_normalform_dae",
           "linear_normalform_template"]


def _tvrd_nonexist() -> LinearDae:
    return LinearDae(
        E=[[1, 0, 0, 0], [0, 1, 1, 0], [0, 1, 1, 0], [0, 0, 0, 0]],
        A=[[-1, 0, 0, 0], [0, 1, -1, 0], [0, 1, 2, 0], [0, 0, 0, 1]],
        B=[[0, 0], [1, 0], [0, 1], [0, 0]],
        C=[[0, 1, 0, 0], [0, 0, 1, 0]],
    )


def _exlin() -> LinearDae:
    return LinearDae(
        E=[[1, 0, 0, 0, 0], [0, 1, 0, 1, 0], [0, -1, 0, 0, 0], [0, 0, 0, 0, 1], [0, 1, 0, 0, 0]],
        A=[[-1, 1, -2, 0, 0], [3, 5, 0, 0, 0], [0, 0, 0, 0, 0], [0, 0, 0, 1, 0], [0, 0, 0, 0, 1]],
        B=[[0, 0], [1, 0], [0, 1], [0, 0], [0, 0]],
        C=[[0, 1, 0, 0, 0], [0, 0, 1, 0, 0]],
    )


def _feedback_minus_s() -> LinearDae:
    return LinearDae(E=[[0, 1], [0, 0]], A=[[1, 0], [0, 1]], B=[[0], [1]], C=[[1, 0]])


def _integrator_linear() -> LinearDae:
    return LinearDae(E=[[1]], A=[[0]], B=[[1]], C=[[1]])


# Normal-form demo, written in the coordinates (eta, y_1, y_2, x3_1, x3_2)
#   eta'  = -eta + y_1 + y_2
#   y_1'' = -2 y_1 - y_1' + y_2 + eta + u_1
#   0     =  y_1 - y_1' - y_2 / 2 - eta + u_2
#   x3    =  (y_1' + y_1'', y_1')
# with N = [[0, 1], [0, 0]], E32 = [[1, 0], [1, 0]], E23 = [[0, 1], [0, 0]],
# E22 = [[1, 0], [1, 0]], A22 = [[-2, 1], [1, -1/2]], Q = -1, A12 = [1, 1], A21 = [1; -1].
def linear_normalform_dae() -> LinearDae:
    h = Fraction(1, 2)
    E = [
        [1, 0, 0, 0, 0],
        [0, 1, 0, 0, 1],
        [0, 1, 0, 0, 0],
        [0, 1, 0, 0, 1],
        [0, 1, 0, 0, 0],
    ]
    A = [
        [-1, 1, 1, 0, 0],
        [1, -2, 1, 0, 0],
        [-1, 1, -h, 0, 0],
        [0, 0, 0, 1, 0],
        [0, 0, 0, 0, 1],
    ]
    B = [[0, 0], [1, 0], [0, 1], [0, 0], [0, 0]]
    C = [[0, 1, 0, 0, 0], [0, 0, 1, 0, 0]]
    return LinearDae(E, A, B, C)


LINEAR: dict[str, Callable[[], LinearDae]] = {
    "tvrd-nonexist": _tvrd_nonexist,
    "exlin": _exlin,
    "feedback-minus-s": _feedback_minus_s,
    "integrator": _integrator_linear,
    "linear-normalform-demo": linear_normalform_dae,
}


# ---------------------------------------------------------------------------
# nonlinear plants


def sec5_plant(eta0: float = 0.0, history=(0.0, 0.0), k_hat: float = 2.0,
               yref=None, phi: FunnelFunction | None = None):
    """The academic two-output example: ``m = 2``, ``q = 1``, ``r_1 = 2``.

        y1'' = -sin y1 + y1 y1' + y2^2 + y1'^2 T + (y1^2 + y2^4 + 1) u_I
        0    = y1^3 + y1 y1'^3 + y2 + T + T u_I + u_II
        T' = -2 T + 2 y1 - y2,   T(0) = eta0
    """
    T = make_lti_filter([[-2.0]], [[2.0, -1.0]], [eta0], name="T")
    # T1(y1, y1', y2) = (y1, y1', y2, T(y1, y2)); its input is Z = (y1, y1', y2)
    T1 = affine_combine(
        [T], [[[1, 0, 0], [0, 0, 1]]],
        D=[[1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, 0]],
        gains=[[[0], [0], [0], [1]]], name="T1")

    def f1(d, e):
        return np.array([-math.sin(e[0]) + e[0] * e[1] + e[2] ** 2 + e[1] ** 2 * e[3]])

    def gamma_I(d, e):
        return np.array([[e[0] ** 2 + e[2] ** 4 + 1.0]])

    def f2(XI, XII):
        return np.array([XI[0] ** 3 + XI[0] * XI[1] ** 3 + XII[0]])

    def df2(XI, XII):
        return np.array([[1.0]])

    plant = FunctionalDae(
        m=2, r=(2,), f1=f1, gamma_I=gamma_I, f2=f2, df2_dxii=df2,
        f3=lambda d, eta: np.array([eta[0]]),
        gamma_II=lambda d, eta: np.array([[eta[0]]]),
        f4=lambda d, eta: 1.0,
        alpha=1.0, f2_jac_sup=1.0, T1=T1, T2=T, history=tuple(history), name="paper-sec5")
    phi = phi or default_phi()
    if yref is None:
        yref = [lambda t: jcos(2 * t), lambda t: jsin(t)]
    ctrl = FunnelController.uniform(yref, phi, k_hat, plant.r)
    return plant, ctrl


def integrator_plant(yref=None, y0: float = 0.0, k_hat: float = 1.0, phi=None):
    """``y' = u`` with ``q = m = 1`` and ``r = 1``."""
    T1 = affine_combine([], [], D=[[1.0]], name="identity")
    T2 = affine_combine([], [], D=np.zeros((1, 1)), name="zero")
    plant = FunctionalDae(
        m=1, r=(1,), f1=lambda d, e: np.zeros(1), gamma_I=lambda d, e: np.eye(1),
        f2=lambda XI, XII: np.zeros(0), df2_dxii=lambda XI, XII: np.zeros((0, 0)),
        f3=lambda d, e: np.zeros(0), gamma_II=lambda d, e: np.zeros((0, 1)), f4=lambda d, e: 1.0,
        alpha=1.0, f2_jac_sup=0.0, T1=T1, T2=T2, history=(y0,), name="integrator")
    if yref is None:
        yref = [lambda t: 0.0]
    ctrl = FunnelController.uniform(yref, phi or default_phi(), k_hat, plant.r)
    return plant, ctrl


def _mat(M, rows, cols, name):
    if M is None:
        return np.zeros((rows, cols))
    if np.size(M) != rows * cols:
        raise ValueError(f"{name} must have shape {rows}x{cols}, got {np.shape(M)}")
    return np.array(M, dtype=float).reshape(rows, cols)


def linear_normalform_template(r, Q, A12, R1, S1, P1, Gamma11, R2, S2, P2, Gamma21,
                               eta0=None, history=None, yref=None, phi: FunnelFunction | None = None,
                               k_hat: float = 2.0, consistent: bool = True, x3_map=None,
                               name: str = "linear-normalform"):
    """Plant given by normal-form blocks (after input reordering):

        eta'  = Q eta + A12 y
        y_I^{(r)} = R1 X_I + S1 y_II + P1 eta + Gamma11 u_I
        0     = R2 X_I + S2 y_II + P2 eta + Gamma21 u_I + u_II

    ``X_I`` stacks ``(y_i, .., y_i^{(r_i - 1)})``. With ``consistent=True``
    the initial ``y_II`` is solved from the constraint.
    """
    r = tuple(int(x) for x in r)
    q, rbar = len(r), sum(r)
    Q = np.atleast_2d(np.array(Q, dtype=float))
    k = Q.shape[0]
    m = np.atleast_2d(np.array(A12, dtype=float)).shape[1]
    A12 = _mat(A12, k, m, "A12")
    R1, S1, P1 = _mat(R1, q, rbar, "R1"), _mat(S1, q, m - q, "S1"), _mat(P1, q, k, "P1")
    G11 = _mat(Gamma11, q, q, "Gamma11")
    R2, S2, P2 = _mat(R2, m - q, rbar, "R2"), _mat(S2, m - q, m - q, "S2"), _mat(P2, m - q, k, "P2")
    G21 = _mat(Gamma21, m - q, q, "Gamma21")
    eta = make_lti_filter(Q, A12, eta0, name="eta")
    # T1(Z) = (Z, eta(y)) with y = (X_I at the y_i slots, X_II)
    nz = rbar + m - q
    sel = np.zeros((m, nz))
    offs = [sum(r[:i]) for i in range(q)]
    for i, off in enumerate(offs):
        sel[i, off] = 1.0
    for j in range(m - q):
        sel[q + j, rbar + j] = 1.0
    D = np.vstack([np.eye(nz), np.zeros((k, nz))])
    gain = np.vstack([np.zeros((nz, k)), np.eye(k)])
    T1 = affine_combine([eta], [sel], D=D, gains=[gain], name="T1")

    def f1(d, e):
        return R1 @ e[:rbar] + S1 @ e[rbar:nz] + P1 @ e[nz:]

    def f2(XI, XII):
        return R2 @ XI + S2 @ XII

    if history is None:
        history = [tuple([0.0] * ri) for ri in r] + [0.0] * (m - q)
    if yref is None:
        yref = [lambda t: 0.0] * m
    phi = phi or default_phi()

    def build(hist):
        plant = FunctionalDae(
            m=m, r=r, f1=f1, gamma_I=lambda d, e: G11, f2=f2, df2_dxii=lambda XI, XII: S2,
            f3=lambda d, e: P2 @ e, gamma_II=lambda d, e: G21, f4=lambda d, e: 1.0,
            alpha=1.0, f2_jac_sup=float(np.linalg.norm(S2, 2)) if m > q else 0.0,
            T1=T1, T2=eta, history=tuple(hist), name=name, x3_map=x3_map)
        return plant, FunnelController.uniform(yref, phi, k_hat, plant.r)

    plant, ctrl = build(history)
    if consistent and m > q:
        XII = consistent_initial_XII(plant, ctrl)
        plant, ctrl = build(list(history[:q]) + [float(v) for v in XII])
    return plant, ctrl


def linear_normalform_plant(yref=None, k_hat: float = 2.0, eta0: float = 0.0,
                            y1_history=(0.0, 0.0), consistent: bool = True, phi=None):
    """The normal-form demo under the controller (``m = 2``, ``q = 1``, ``r = (2)``).

    Blocks: ``Q = -1``, ``A12 = [1, 1]``, ``R1 = [-2, -1]``, ``S1 = 1``,
    ``P1 = 1``, ``R2 = [1, -1]``, ``S2 = -1/2``, ``P2 = -1``,
    ``Gamma11 = 1``, ``Gamma21 = 0``. ``y_2(0)`` is solved for consistency
    unless ``consistent=False`` (then ``y_2(0) = 0``).
    """

    def x3_map(XI, top):
        # x3 = E32 y' + N E32 y'' = (y1' + y1'', y1')
        return np.array([XI[1] + top[0], XI[1]])

    if yref is None:
        yref = [lambda t: jsin(t), lambda t: 0.5 * jcos(t)]
    return linear_normalform_template(
        r=(2,), Q=[[-1.0]], A12=[[1.0, 1.0]], R1=[[-2.0, -1.0]], S1=[[1.0]], P1=[[1.0]],
        Gamma11=[[1.0]], R2=[[1.0, -1.0]], S2=[[-0.5]], P2=[[-1.0]], Gamma21=[[0.0]],
        eta0=[eta0], history=[tuple(y1_history), 0.0], yref=yref, phi=phi, k_hat=k_hat,
        consistent=consistent, x3_map=x3_map, name="linear-normalform-demo")


NONLINEAR: dict[str, Callable] = {
    "paper-sec5": sec5_plant,
    "linear-normalform-demo": linear_normalform_plant,
    "integrator": integrator_plant,
}


def names() -> dict[str, list[str]]:
    return {"linear": sorted(LINEAR), "nonlinear": sorted(NONLINEAR)}


def linear_system(name: str) -> LinearDae:
    try:
        return LINEAR[name]()
    except KeyError:
        raise KeyError(f"no linear system named {name!r}; known: {sorted(LINEAR)}") from None


def nonlinear_system(name: str, **kwargs):
    try:
        factory = NONLINEAR[name]
    except KeyError:
        raise KeyError(f"no nonlinear system named {name!r}; known: {sorted(NONLINEAR)}") from None
    return factory(**kwargs)
