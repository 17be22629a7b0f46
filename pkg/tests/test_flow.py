import numpy as np
import pytest
from scipy.integrate import quad

import flowlab as fl
from flowlab.errors import BoundViolationError, EscapeError, ParameterError
from flowlab.fields import Box, GridField, VecField, _cutoff_linear_field
from flowlab.flow import flow_error_budget, integrator_order_term, resolve_field


def test_flow_constant_field_exact(cfg):
    # exact up to the roundoff of summing 1000 equal steps
    X, _, _ = fl.preset_pair("constants")
    end = fl.flow_point(X, cfg, np.array([0.0, 0.0]), 1.0)
    np.testing.assert_allclose(end, [1.0, 0.0], atol=1e-13)


def test_flow_nilpotent_exact(cfg):
    X, _, _ = fl.preset_pair("nilpotent_shears")
    end = fl.flow_point(X, cfg, np.array([1.0, 1.0]), 0.5)
    np.testing.assert_allclose(end, [1.5, 1.0], atol=1e-12)


def test_flow_holder_shear_against_quadrature_oracle(cfg):
    X, _, meta = fl.preset_pair("nonlipschitz_shear_pair")
    z = np.array([0.25, 0.0])
    end = fl.flow_point(X, cfg, z, 0.5)
    oracle_y, err = quad(lambda u: np.sqrt(abs(u)), 0.25, 0.75)
    assert err < 1e-12
    np.testing.assert_allclose(end, [0.75, oracle_y], atol=5e-4)
    np.testing.assert_allclose(meta.flow_x(z[None], 0.5)[0], [0.75, oracle_y], atol=1e-14)


def test_flow_cloud_identity_and_rotation(cfg, unit_box):
    cloud = fl.grid_cloud(unit_box, 16)
    X, _, _ = fl.preset_pair("hamiltonian_pair")
    same = fl.flow_cloud(X, cfg, cloud, 0.0)
    np.testing.assert_array_equal(same.points, cloud.points)
    np.testing.assert_array_equal(same.weights, cloud.weights)

    quarter = fl.flow_cloud(X, cfg, cloud, np.pi / 2.0)
    rotated = cloud.points @ np.array([[0.0, -1.0], [1.0, 0.0]]).T
    np.testing.assert_allclose(quarter.points, rotated, atol=1e-12)
    np.testing.assert_array_equal(quarter.weights, cloud.weights)


def test_flow_cloud_conserves_hamiltonian(cfg, unit_box):
    X, Y, _ = fl.preset_pair("hamiltonian_pair")
    cloud = fl.grid_cloud(unit_box, 24)
    H = lambda p: 0.5 * np.sum(p * p, axis=1)
    for F in (X, Y):
        moved = fl.flow_cloud(F, cfg, cloud, 1.0)
        assert np.max(np.abs(H(moved.points) - H(cloud.points))) < 1e-8


def test_group_defect(cfg, unit_box):
    cloud = fl.grid_cloud(unit_box, 24)
    X, _, _ = fl.preset_pair("hamiltonian_pair")
    assert fl.group_defect(X, cfg, cloud, 0.4, 0.0, 2) == 0.0
    C, _, _ = fl.preset_pair("constants")
    assert fl.group_defect(C, cfg, cloud, 0.7, 0.3, 1) < 1e-14
    assert fl.group_defect(X, cfg, cloud, 0.25, 0.25, 2) < 1e-9


def test_group_defect_symmetric_in_t_s(cfg, unit_box):
    cloud = fl.grid_cloud(unit_box, 16)
    X, Y, _ = fl.preset_pair("rotation_dilation_cutoff")
    a = fl.group_defect(X, cfg, cloud, 0.4, 0.1, 2)
    b = fl.group_defect(X, cfg, cloud, 0.1, 0.4, 2)
    assert abs(a - b) <= flow_error_budget(cfg, 0.5, cloud.box.diameter, X)


def test_time_reversal(cfg):
    rng = np.random.default_rng(4)
    pts = rng.uniform(-1, 1, (30, 2))
    for name in ("linear_commuting", "hamiltonian_pair", "rotation_dilation_cutoff"):
        X, _, _ = fl.preset_pair(name)
        there = fl.flow_points(X, cfg, pts, 0.7)
        back = fl.flow_points(X, cfg, there, -0.7)
        assert np.max(np.linalg.norm(back - pts, axis=1)) < 10 * cfg.dt ** 4 * 0.7 + 1e-12


def test_jacobian_density_divergence_free(cfg):
    X, _, _ = fl.preset_pair("hamiltonian_pair")
    traj = fl.jacobian_density(X, cfg, np.array([0.3, 0.2]), 1.0)
    assert traj.density[0] == 1.0
    assert np.max(np.abs(traj.density - 1.0)) < 1e-9
    dets = np.linalg.det(traj.jacobian)
    assert np.max(np.abs(dets - 1.0)) < 1e-6


def test_jacobian_density_pure_dilation(cfg):
    F = _cutoff_linear_field(np.eye(2), 10.0, Box([-4, -4], [4, 4]))
    traj = fl.jacobian_density(F, cfg, np.array([0.3, 0.2]), 0.5)
    assert traj.density[-1] == pytest.approx(np.e, abs=1e-6)
    np.testing.assert_allclose(traj.jacobian[-1], np.exp(0.5) * np.eye(2), atol=1e-6)


def test_jacobian_density_nilpotent(cfg):
    X, _, _ = fl.preset_pair("nilpotent_shears")
    traj = fl.jacobian_density(X, cfg, np.array([1.0, 1.0]), 1.0)
    assert np.max(np.abs(traj.density - 1.0)) < 1e-9
    assert abs(np.linalg.det(traj.jacobian[-1]) - 1.0) < 1e-9


def test_density_equals_det_jacobian(cfg):
    X, _, _ = fl.preset_pair("rotation_dilation_cutoff")
    traj = fl.jacobian_density(X, cfg, np.array([0.4, -0.3]), 1.0)
    dets = np.linalg.det(traj.jacobian)
    assert np.max(np.abs(dets - traj.density)) < 1e-6


def test_density_backward_time(cfg):
    X, _, meta = fl.preset_pair("rotation_dilation_cutoff")
    traj = fl.jacobian_density(X, cfg, np.array([0.4, 0.1]), -1.0)
    assert traj.times[0] == pytest.approx(-1.0)
    assert traj.times[-1] == 0.0
    assert traj.density[-1] == 1.0
    # xi(t) = exp(2 * dilation * t) for the linear dilation-rotation mix
    np.testing.assert_allclose(
        traj.density, np.exp(0.6 * traj.times), rtol=1e-9
    )


def test_density_bounds_check_cases(cfg):
    X, _, _ = fl.preset_pair("hamiltonian_pair")
    traj = fl.jacobian_density(X, cfg, np.array([0.3, 0.2]), 1.0)
    rep = fl.density_bounds_check(traj, 0.0, 1.0)
    assert rep.xi_min == pytest.approx(1.0, abs=1e-9)
    assert rep.bound == 1.0

    F = _cutoff_linear_field(np.eye(2), 10.0, Box([-4, -4], [4, 4]))
    traj2 = fl.jacobian_density(F, cfg, np.array([0.3, 0.2]), 0.5)
    rep2 = fl.density_bounds_check(traj2, 2.0, 0.5)
    assert rep2.xi_max == pytest.approx(np.e, abs=1e-6)

    Xrd, _, meta = fl.preset_pair("rotation_dilation_cutoff")
    traj3 = fl.jacobian_density(Xrd, cfg, np.array([0.4, -0.3]), 1.0)
    rep3 = fl.density_bounds_check(traj3, meta.div_sup_x, 1.0)
    assert rep3.lipschitz_estimate <= meta.div_sup_x * rep3.bound * (1 + 1e-6)

    bad = fl.Trajectory(
        times=np.array([0.0, 0.1]), states=np.zeros((2, 2)),
        density=np.array([1.0, 5.0]),
    )
    with pytest.raises(BoundViolationError):
        fl.density_bounds_check(bad, 1.0, 0.1)


def test_escape_error(cfg):
    X, _, _ = fl.preset_pair("constants")
    with pytest.raises(EscapeError) as info:
        fl.flow_point(X, cfg, np.array([3.95, 0.0]), 1.0)
    assert info.value.exit_time is not None
    assert 0.0 < info.value.exit_time <= 1.0


def test_flow_config_validation():
    with pytest.raises(ParameterError):
        fl.FlowConfig(dt=0.0)
    with pytest.raises(ParameterError):
        fl.FlowConfig(dt=1e-3, eps_schedule=(0.1, 0.2))
    with pytest.raises(ParameterError):
        fl.FlowConfig(dt=1e-3, eps_schedule=(0.1, -0.05))
    with pytest.raises(ParameterError):
        fl.FlowConfig(dt=1e-3, method="euler")
    cfgbad = fl.FlowConfig(dt=1e-12)
    X, _, _ = fl.preset_pair("constants")
    with pytest.raises(ParameterError):
        fl.flow_point(X, cfgbad, np.array([0.0, 0.0]), 1.0)


def test_eps_schedule_routes_through_mollified_field():
    X, _, _ = fl.preset_pair("nonlipschitz_shear_pair")
    cfg = fl.FlowConfig(dt=1e-3, eps_schedule=(0.2, 0.1))
    G = resolve_field(X, cfg)
    assert G.regularity == "smooth"
    # smoothing flattens the kink: values differ near x = 0, match far away
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    raw = X.eval(pts)
    smooth = G.eval(pts)
    assert abs(raw[0, 1] - smooth[0, 1]) > 1e-3
    assert abs(raw[1, 1] - smooth[1, 1]) < 5e-3
    end = fl.flow_point(X, cfg, np.array([0.25, 0.0]), 0.25)
    exact = fl.preset_pair("nonlipschitz_shear_pair")[2].flow_x(
        np.array([[0.25, 0.0]]), 0.25
    )[0]
    assert np.linalg.norm(end - exact) < 5e-3


def test_stability_study_trends(cfg):
    box = Box([-2, -2], [2, 2])
    cloud = fl.random_cloud(Box([-1, -1], [1, 1]), 300, seed=5)
    sched = fl.FlowConfig(dt=5e-3, eps_schedule=(0.25, 0.125, 0.0625, 0.03125))

    C, _, _ = fl.preset_pair("constants")
    rep = fl.stability_study(GridField.from_function(C.eval, box, 4 / 128),
                             fl.FlowConfig(dt=5e-3, eps_schedule=(0.25, 0.125)),
                             cloud, 0.25)
    assert np.all(rep.values < 1e-12)

    _, Y, _ = fl.preset_pair("hamiltonian_pair")
    repY = fl.stability_study(GridField.from_function(Y.eval, box, 4 / 512),
                              sched, cloud, 0.25)
    lip = float(np.linalg.norm(Y.jac(cloud.points), axis=(1, 2)).max())
    for eps, dist in repY.rows:
        assert dist <= 10.0 * eps * lip * 0.25

    Xr, _, _ = fl.preset_pair("nonlipschitz_shear_pair")
    repR = fl.stability_study(GridField.from_function(Xr.eval, box, 4 / 512),
                              sched, cloud, 0.25)
    assert repR.nonincreasing(slack=0.1)


def test_integrator_budget_regularity_aware():
    X, Y, _ = fl.preset_pair("nonlipschitz_shear_pair")
    S, _, _ = fl.preset_pair("hamiltonian_pair")
    dt = 1e-3
    assert integrator_order_term(dt, S) == pytest.approx(dt ** 4)
    assert integrator_order_term(dt, S, X) == pytest.approx(dt ** 1.5)
    assert integrator_order_term(dt, X, Y) == pytest.approx(dt ** 1.5)


def test_trajectory_csv(tmp_path, cfg):
    X, _, _ = fl.preset_pair("rotation_dilation_cutoff")
    traj = fl.jacobian_density(X, cfg, np.array([0.4, -0.3]), 0.05)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,z_1,z_2,xi,J_11,J_12,J_21,J_22"
    assert len(lines) == len(traj.times) + 1


def test_trajectory_validation():
    with pytest.raises(ParameterError):
        fl.Trajectory(times=np.array([0.0, 0.1, 0.05]), states=np.zeros((3, 2)))
    with pytest.raises(ParameterError):
        fl.Trajectory(times=np.array([0.1, 0.2]), states=np.zeros((2, 2)))
    with pytest.raises(ParameterError):
        fl.Trajectory(times=np.array([0.0, 0.1]), states=np.zeros((2, 2)),
                      density=np.array([2.0, 2.2]))
