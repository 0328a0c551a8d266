import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _cascade import cascade_at, default_grid, recursion_defect
from funneldae.funnel import (
    FunnelFunction,
    FunnelViolation,
    check_gain_condition,
    check_initial_funnel,
    default_phi,
    error_cascade,
    poly_exp_arctan_phi,
    validate_phi,
)
from funneldae.jets import TaylorJet, jarctan, jcos, jet_of, jexp, jsin

# -- jets ----------------------------------------------------------------------


def test_jet_arithmetic_matches_closed_forms():
    t = TaylorJet.variable(0.7, 4)
    f = jsin(t) * jexp(t)
    # (e^t sin t)'' = 2 e^t cos t
    assert f.derivative_value(2) == pytest.approx(2 * math.exp(0.7) * math.cos(0.7), rel=1e-14)
    g = jarctan(t)
    # arctan'' = -2t / (1+t^2)^2
    assert g.derivative_value(2) == pytest.approx(-1.4 / (1 + 0.49) ** 2, rel=1e-14)
    h = (t * t + 1.0).recip()
    assert h.derivative_value(1) == pytest.approx(-1.4 / 1.49 ** 2, rel=1e-14)


def test_mixed_orders_truncate():
    a = TaylorJet([1.0, 2.0, 3.0])
    b = TaylorJet([1.0, 1.0])
    assert (a + b).order == 1
    assert (a * b).c == (1.0, 3.0)


def test_shift_and_truncate():
    a = TaylorJet.from_derivatives([1.0, 2.0, 6.0])
    assert a.shift().derivatives() == [2.0, 6.0]
    with pytest.raises(ValueError):
        a.truncate(5)


@given(st.floats(-3, 3), st.floats(-2, 2))
def test_jets_agree_with_finite_differences(t0, w):
    def f(t):
        return jcos(w * t) + 0.3 * t * t

    d1 = jet_of(f, t0, 2).derivative_value(1)
    h = 1e-6
    fd = (f(t0 + h) - f(t0 - h)) / (2 * h)
    assert d1 == pytest.approx(fd, abs=1e-6)


# -- funnel functions ------------------------------------------------------------


def test_default_phi_values():
    phi = default_phi()
    assert phi(0.0) == 0.0
    assert phi.derivative(0.0, 1) == pytest.approx(2.5)
    assert phi(10.0) == pytest.approx(5 * math.exp(-10) + 2 * math.atan(10), rel=1e-14)


def test_default_phi_passes_validation():
    assert validate_phi(default_phi()).passed


def test_validation_catches_bad_funnels():
    decaying = FunnelFunction(lambda t: jexp(-1.0 * t), bounds=(1.0, 1.0, 1.0), name="decay")
    rep = validate_phi(decaying)
    assert "positive_floor" in rep.failures()
    growing = FunnelFunction(lambda t: t, bounds=(100.0, 1.0, 1.0), name="linear")
    assert "bounded_growth" in validate_phi(growing).failures()
    unbounded_decl = FunnelFunction(lambda t: 2.0 * jarctan(t), bounds=(1.0, 5.0, 5.0))
    rep = validate_phi(unbounded_decl)
    assert rep.checks["declared_bounds"].witness[0] == 0


def test_from_callable_uses_finite_differences():
    phi = FunnelFunction.from_callable(lambda t: 2 * math.atan(t), fd_step=1e-4)
    assert not phi.analytic
    assert phi.derivative(1.0, 1) == pytest.approx(1.0, rel=1e-6)


def test_family_reduces_to_default():
    a, b = poly_exp_arctan_phi(), default_phi()
    for t in (0.0, 0.3, 4.0):
        assert a(t) == pytest.approx(b(t), rel=1e-15)


# -- controller cascade ----------------------------------------------------------


def test_cascade_relative_degree_one_is_static_law():
    phi = default_phi()
    t = 1.0
    y = [TaylorJet([0.1])]
    c = error_cascade(t, y, [TaylorJet([0.0])], [[]], [0.05], phi(t), phi(t), 2.0, r=[1])
    kI = 1 / (1 - (phi(t) * 0.1) ** 2)
    kII = 2 / (1 - (phi(t) * 0.05) ** 2)
    assert c.k_I == pytest.approx(kI)
    assert c.u.tolist() == pytest.approx([-kI * 0.1, -kII * 0.05])


def test_cascade_violation_raises_and_records():
    phi = default_phi()
    y = [TaylorJet([2.0, 0.0])]
    with pytest.raises(FunnelViolation) as info:
        error_cascade(5.0, y, [TaylorJet([0.0, 0.0])], [[phi.jet(5.0, 1)]], [], phi(5.0), phi(5.0), 1.0)
    assert info.value.channel == 0 and info.value.level == 0
    c = error_cascade(5.0, y, [TaylorJet([0.0, 0.0])], [[phi.jet(5.0, 1)]], [], phi(5.0), phi(5.0), 1.0,
                      raise_on_violation=False)
    assert not c.ok and math.isinf(c.k[0][0])
    assert not check_initial_funnel(c)


def test_cascade_recursion_relative_degree_three():
    c = cascade_at(2.0)
    assert len(c.e[0]) == 3 and len(c.k[0]) == 2
    assert recursion_defect(default_grid(50)) <= 1e-6


def test_gain_condition():
    assert check_gain_condition(2.0, 1.0, 1.0)
    assert not check_gain_condition(1.0, 1.0, 1.0)
    assert not check_gain_condition(0.5, 1.0, 1.0)
    with pytest.raises(ValueError):
        check_gain_condition(1.0, 0.0, 1.0)


def test_initial_funnel_check_at_zero():
    phi = default_phi()
    c = error_cascade(0.0, [TaylorJet([3.0, 1.0])], [TaylorJet([0.0, 0.0])], [[phi.jet(0.0, 1)]],
                      [7.0], phi(0.0), phi(0.0), 2.0)
    # phi(0) = 0: every initial error is admissible
    assert check_initial_funnel(c)
    assert np.isfinite(c.u).all()
