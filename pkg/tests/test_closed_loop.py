import dataclasses
import math

import numpy as np
import pytest

from _sec5 import admissible_points, jacobian_relative_error
from funneldae import registry
from funneldae.closed_loop import (
    FunctionalDae,
    HistorySmoothnessError,
    PreflightError,
    SimulationConfig,
    assemble_initial_state,
    check_consistency,
    consistent_initial_XII,
    integrate,
    monitor_funnel,
    preflight,
    reconstruct_x3,
    residual_FII,
    spot_check_plant,
    top_derivatives,
    write_summary,
)
from funneldae.funnel import poly_exp_arctan_phi
from funneldae.jets import jsin


@pytest.fixture(scope="module")
def sec5_short():
    plant, ctrl = registry.nonlinear_system("paper-sec5")
    return plant, ctrl, integrate(plant, ctrl, SimulationConfig(t_end=2.0, tol=1e-7))


def test_plant_dimensions():
    plant, _ = registry.nonlinear_system("paper-sec5")
    assert (plant.m, plant.q, plant.rbar) == (2, 1, 2)
    assert plant.offsets == [0]
    assert plant.d(3, 1.0).tolist() == [0.0]


def test_plant_rejects_feedthrough_in_T2():
    plant, _ = registry.nonlinear_system("paper-sec5")
    from funneldae.operators import affine_combine
    with pytest.raises(ValueError, match="feedthrough"):
        dataclasses.replace(plant, T2=affine_combine([], [], D=[[1.0, 0.0]]))


def test_initial_values():
    plant, ctrl = registry.nonlinear_system("paper-sec5")
    rep = check_consistency(plant, ctrl)
    c = rep.cascade
    assert rep.consistent and rep.norm == 0.0
    assert c.k[0][0] == pytest.approx(1.0, abs=1e-12)
    assert c.k_I == pytest.approx(1.0, abs=1e-12)
    assert c.k_II == pytest.approx(2.0, abs=1e-12)
    assert c.e_I[0] == pytest.approx(-1.0, abs=1e-12)
    assert c.u_I[0] == pytest.approx(1.0, abs=1e-12)
    assert c.u_II[0] == pytest.approx(0.0, abs=1e-12)


def test_history_forms():
    plant, ctrl = registry.nonlinear_system("paper-sec5", history=(lambda t: 0.1 * jsin(t), 0.0))
    st = assemble_initial_state(plant)
    assert st.X_I.tolist() == pytest.approx([0.0, 0.1])
    plant, _ = registry.nonlinear_system("paper-sec5", history=((0.2, -0.3, 9.0), 0.0))
    assert assemble_initial_state(plant).X_I.tolist() == [0.2, -0.3]
    plant, _ = registry.nonlinear_system("paper-sec5", history=((0.2,), 0.0))
    with pytest.raises(HistorySmoothnessError):
        assemble_initial_state(plant)


def test_preflight_gain_condition():
    plant, ctrl = registry.nonlinear_system("paper-sec5", k_hat=0.5)
    rep = preflight(plant, ctrl)
    assert not rep.ok and not rep.gain_ok
    with pytest.raises(PreflightError):
        integrate(plant, ctrl, SimulationConfig(t_end=0.1))


def test_preflight_inconsistent_initial_value():
    plant, ctrl = registry.nonlinear_system("paper-sec5", history=((0.0, 0.0), 0.3))
    rep = preflight(plant, ctrl)
    assert rep.gain_ok and rep.funnel
    # at t = 0 the constraint reduces to y2 + u_II = y2 - 2 y2 = -y2
    assert rep.consistency.residual.tolist() == pytest.approx([-0.3])
    assert not rep.ok


def test_preflight_initial_funnel():
    phi = poly_exp_arctan_phi(e=1.0)  # phi(0) = 1
    plant, ctrl = registry.nonlinear_system("paper-sec5", phi=phi, history=((2.0, 0.0), 0.0))
    rep = preflight(plant, ctrl)
    assert not rep.funnel
    assert rep.funnel.witness[0] == (0, 0)


def test_consistent_initial_value_solver():
    plant, ctrl = registry.nonlinear_system("paper-sec5")
    assert consistent_initial_XII(plant, ctrl, guess=[0.1]).tolist() == pytest.approx([0.0], abs=1e-13)
    plant, ctrl = registry.nonlinear_system("linear-normalform-demo")
    assert check_consistency(plant, ctrl).norm <= 1e-12
    assert plant.history[1] == pytest.approx(0.4)


def test_jacobian_against_finite_differences():
    plant, ctrl, pts = admissible_points(20, seed=1)
    assert max(jacobian_relative_error(plant, ctrl, *p) for p in pts) <= 1e-6


def test_spot_check_passes_for_sec5():
    plant, _ = registry.nonlinear_system("paper-sec5")
    res = spot_check_plant(plant, n=100)
    assert all(ok for ok, _ in res.values()), res


def test_short_run_stays_inside(sec5_short):
    plant, ctrl, traj = sec5_short
    assert traj.completed
    assert traj.times[-1] == pytest.approx(2.0)
    mon = monitor_funnel(traj)
    assert mon.inside and mon.floors_positive
    assert float(np.max(traj.residual)) <= 1e-8
    assert traj.u[0].tolist() == pytest.approx([1.0, 0.0], abs=1e-12)


def test_top_derivative_matches_finite_difference(sec5_short):
    plant, _, traj = sec5_short
    tops = top_derivatives(plant, traj)[:, 0]
    dy = traj.data["dy_1_1"]
    t = traj.times
    fd = np.gradient(dy, t)
    inner = slice(5, -5)
    assert np.max(np.abs(fd[inner] - tops[inner])) < 1e-2


def test_methods_agree():
    plant, ctrl = registry.nonlinear_system("paper-sec5")
    a = integrate(plant, ctrl, SimulationConfig(t_end=1.0, tol=1e-9, method="bs23"))
    b = integrate(plant, ctrl, SimulationConfig(t_end=1.0, tol=1e-9, method="dopri5"))
    assert a.completed and b.completed
    assert np.max(np.abs(a.y[-1] - b.y[-1])) < 1e-6


def test_integrator_plant_stays_at_zero():
    plant, ctrl = registry.nonlinear_system("integrator")
    traj = integrate(plant, ctrl, SimulationConfig(t_end=1.0))
    assert traj.completed
    assert np.all(traj.y == 0.0) and np.all(traj.u == 0.0)


def test_integrator_plant_tracks_reference():
    plant, ctrl = registry.integrator_plant(yref=[lambda t: jsin(t)], y0=0.5)
    traj = integrate(plant, ctrl, SimulationConfig(t_end=5.0, tol=1e-8))
    assert traj.completed and monitor_funnel(traj).inside
    assert abs(traj.y[-1, 0] - math.sin(5.0)) < 1 / ctrl.phi_I(5.0)


def test_newton_failure_is_reported():
    plant, ctrl = registry.nonlinear_system("paper-sec5")
    broken = dataclasses.replace(plant, df2_dxii=lambda XI, XII: np.array([[np.nan]]))
    traj = integrate(broken, ctrl, SimulationConfig(t_end=1.0, newton_tol=1e-300))
    assert traj.status == "newton_failure"
    assert not traj.completed


def test_normal_form_x3_reconstruction():
    plant, ctrl = registry.nonlinear_system("linear-normalform-demo")
    traj = integrate(plant, ctrl, SimulationConfig(t_end=3.0, tol=1e-8))
    assert traj.completed and monitor_funnel(traj).inside
    x3 = reconstruct_x3(plant, traj)
    assert x3.shape == (len(traj.times), 2)
    assert np.all(np.isfinite(x3)) and np.max(np.abs(x3)) < 10
    # second component is y1'
    assert np.array_equal(x3[:, 1], traj.data["dy_1_1"])


def test_csv_is_deterministic(tmp_path, sec5_short):
    plant, ctrl, traj = sec5_short
    again = integrate(plant, ctrl, SimulationConfig(t_end=2.0, tol=1e-7))
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    traj.to_csv(p1)
    again.to_csv(p2)
    assert p1.read_bytes() == p2.read_bytes()
    header = p1.read_text().splitlines()[0].split(",")
    assert header[:4] == ["t", "y_1", "y_2", "dy_1_1"]
    assert "residual" in header and "margin_II" in header
    first = p1.read_text().splitlines()[1].split(",")
    assert float(first[header.index("u_1")]) == 1.0
    assert "-0" not in first


def test_summary_file(tmp_path, sec5_short):
    import json
    _, _, traj = sec5_short
    summ = write_summary(traj, tmp_path / "s.json")
    back = json.loads((tmp_path / "s.json").read_text())
    assert back == json.loads(json.dumps(summ))
    assert back["verdicts"]["completed"] and back["verdicts"]["inside_funnels"]
    assert all(v > 0 for v in back["min_margins"].values())


def test_config_validation():
    with pytest.raises(ValueError):
        SimulationConfig(method="euler")
    with pytest.raises(ValueError):
        SimulationConfig(tol=0.0)


def test_residual_is_zero_without_algebraic_part():
    plant, ctrl = registry.nonlinear_system("integrator")
    assert residual_FII(plant, ctrl, 0.0, [0.0], []).size == 0
    assert isinstance(plant, FunctionalDae)


def test_stage_cascade_matches_full_evaluation():
    from funneldae.closed_loop import _Stage
    from funneldae.funnel import error_cascade

    plant, ctrl, pts = admissible_points(5, seed=4)
    for t, X_I, X_II, eta2 in pts:
        stage = _Stage(plant, ctrl, t, X_I, eta2, X_II)
        fast = stage.full_cascade(X_II)
        full = error_cascade(t, stage.y_jets, stage.yref_jets, stage.phi_jets, X_II - stage.yref_II,
                             stage.phi_I, stage.phi_II, ctrl.k_hat, r=plant.r)
        assert fast.u.tolist() == pytest.approx(full.u.tolist(), rel=1e-15)
        assert fast.k_II == pytest.approx(full.k_II, rel=1e-15)
        assert fast.levels == full.levels


def test_halving_tolerance_changes_final_state_little():
    plant, ctrl = registry.nonlinear_system("paper-sec5")
    a = integrate(plant, ctrl, SimulationConfig(t_end=2.0, tol=1e-8))
    b = integrate(plant, ctrl, SimulationConfig(t_end=2.0, tol=5e-9))
    assert np.max(np.abs(a.y[-1] - b.y[-1])) < 10 * 1e-8
