import math
import warnings

import numpy as np
import pytest

from funneldae import registry
from funneldae.operators import affine_combine, make_lti_filter, property_harness, respond


def test_lti_filter_step_response():
    op = make_lti_filter([[-2.0]], [[2.0, -1.0]], [0.0])
    t = np.linspace(0, 3, 31)
    out = respond(op, lambda s: np.array([1.0, 0.0]), t)
    # eta' = -2 eta + 2, eta(0) = 0  ->  eta = 1 - e^{-2t}
    assert np.allclose(out[:, 0], 1 - np.exp(-2 * t), atol=1e-9)


def test_non_hurwitz_filter_warns():
    with pytest.warns(RuntimeWarning):
        op = make_lti_filter([[1.0]], [[1.0]])
    assert op.info["hurwitz"] is False


def test_shape_errors():
    with pytest.raises(ValueError):
        make_lti_filter([[-1.0, 0.0]], [[1.0]])
    with pytest.raises(ValueError):
        make_lti_filter([[-1.0]], [[1.0], [2.0]])
    with pytest.raises(ValueError):
        make_lti_filter([[-1.0]], [[1.0]], [0.0, 1.0])


def test_affine_combine_selection_and_feedthrough():
    base = make_lti_filter([[-1.0]], [[1.0]], [0.5])
    op = affine_combine([base], [[[0, 1]]], D=[[1, 0], [0, 0]], gains=[[[0], [3]]], offset=[0, 1])
    assert op.input_dim == 2 and op.output_dim == 2 and op.feedthrough
    out = op.output(np.array([0.5]), np.array([4.0, 7.0]), 0.0)
    assert out.tolist() == [4.0, 2.5]
    assert op.rate(np.array([0.5]), np.array([4.0, 7.0]), 0.0).tolist() == [6.5]
    with pytest.raises(ValueError):
        affine_combine([base], [[[0, 1, 2]]], D=[[1, 0]])


def test_sec5_operator_initial_value_and_bound():
    plant, _ = registry.nonlinear_system("paper-sec5")
    T = plant.T2
    assert T.initial_state.tolist() == [0.0]
    # |T(y)(t)| <= |Bin| sup|y| / 2 for zero initial state, since Q = -2
    t = np.linspace(0, 20, 401)
    ys = lambda s: np.array([math.sin(s), math.cos(3 * s)])  # noqa: E731
    out = respond(T, ys, t)
    bound = np.linalg.norm([2.0, -1.0]) * math.sqrt(2) / 2
    assert np.max(np.abs(out)) <= bound


def test_harness_accepts_stable_filter():
    op = make_lti_filter([[-2.0]], [[2.0, -1.0]])
    rep = property_harness(op, trials=2, horizon=8.0, n_points=201)
    assert rep.passed, rep.checks
    assert rep.checks["lipschitz"].value < 2.0


def test_harness_rejects_unstable_filter():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        op = make_lti_filter([[1.0]], [[1.0]])
    rep = property_harness(op, trials=2, horizon=8.0, n_points=201)
    assert not rep.checks["bounded"].passed
    assert rep.checks["bounded"].witness is not None


def test_harness_on_memoryless_feedthrough():
    op = affine_combine([], [], D=[[2.0, 0.0]])
    rep = property_harness(op, trials=1, horizon=6.0, n_points=121)
    assert rep.checks["causality"].passed
    assert 0.0 < rep.checks["lipschitz"].value <= 2.0 + 1e-9
