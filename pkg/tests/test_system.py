import numpy as np
import pytest

from conftest import planar3_pose
from paractl import (Command, EuclideanPose, ReferenceSample, RobotGeometry,
                     RobotModel, InertialParams, SystemControllerState,
                     control_step, finite_difference_stack,
                     inverse_kinematics, jacobian, matrix_action, pd_gains,
                     predicted_modal_response, feedforward_step,
                     ForceConstraints)
from paractl.actuator import ActuatorModel


def hold_reference(pose):
    d = pose.coords.size
    return ReferenceSample(pose, np.zeros(d), np.zeros(d))


def test_matrix_action_identity_and_zero():
    tangents = [np.array([1.0, 2.0]), np.array([-0.5, 0.3])]
    out = matrix_action(np.eye(2), tangents)
    np.testing.assert_array_equal(out[0], tangents[0])
    np.testing.assert_array_equal(out[1], tangents[1])
    out = matrix_action(np.zeros((2, 2)), tangents)
    assert all(np.all(v == 0.0) for v in out)


def test_matrix_action_linear_combination():
    ta = np.array([1.0, 0.0])
    tb = np.array([0.0, 1.0])
    out = matrix_action(np.array([[1.0, 2.0], [3.0, 4.0]]), [ta, tb])
    np.testing.assert_allclose(out[0], ta + 2 * tb)
    np.testing.assert_allclose(out[1], 3 * ta + 4 * tb)
    with pytest.raises(ValueError):
        matrix_action(np.eye(3), [ta, tb])


def test_finite_difference_stack_cold_start():
    stack = finite_difference_stack([np.array([0.5, 0.0])], 0.1, 3)
    np.testing.assert_allclose(stack[0], [0.5, 0.0])
    np.testing.assert_array_equal(stack[1], 0.0)
    np.testing.assert_array_equal(stack[2], 0.0)


def test_finite_difference_stack_derivatives():
    dt = 0.1
    samples = [np.array([x]) for x in (0.0, 0.1, 0.4)]
    stack = finite_difference_stack(samples, dt, 3)
    assert stack[0][0] == pytest.approx(0.4)
    assert stack[1][0] == pytest.approx((0.4 - 0.1) / dt)
    assert stack[2][0] == pytest.approx((0.4 - 0.2 + 0.0) / dt**2)


def test_control_step_perfect_tracking(planar3_geom, planar3_constraints,
                                       planar3_gains):
    model = RobotModel(planar3_geom,
                       InertialParams(body_mass=1.0, gravity=[0.0, 0.0],
                                      actuator_mass=0.1))
    con = ForceConstraints.uniform(3)  # zero tension floor for zero forces
    ref = hold_reference(planar3_pose())
    lengths = inverse_kinematics(planar3_geom, ref.pose)
    state = SystemControllerState.initial(planar3_gains, ref.pose)
    cmd, state, diag = control_step(model, planar3_gains, con, state,
                                    lengths, ref, 1e-3)
    assert not cmd.is_brake
    np.testing.assert_allclose(cmd.forces, 0.0, atol=1e-9)
    np.testing.assert_allclose(diag.pose_error, 0.0, atol=1e-12)
    np.testing.assert_allclose(diag.accel_cmd, 0.0, atol=1e-12)


def test_control_step_static_hold_forces(planar3_model, planar3_constraints,
                                         planar3_gains):
    pose = planar3_pose()
    ref = hold_reference(pose)
    lengths = inverse_kinematics(planar3_model.geometry, pose)
    state = SystemControllerState.initial(planar3_gains, pose)
    cmd, state, diag = control_step(planar3_model, planar3_gains,
                                    planar3_constraints, state, lengths,
                                    ref, 1e-3)
    np.testing.assert_allclose(diag.wrench_cmd, [0.0, 9.81], atol=1e-9)
    np.testing.assert_allclose(cmd.forces, [-0.5, -0.5, -10.2572136],
                               atol=1e-7)
    np.testing.assert_allclose(diag.tensions, [0.5, 0.5, 10.2572136],
                               atol=1e-7)


def test_control_step_brake_on_unreachable_reference(planar3_model,
                                                     planar3_constraints,
                                                     planar3_gains):
    pose = planar3_pose()
    # far enough above the anchors that even the first-tick acceleration
    # command cannot be realized
    ref = hold_reference(EuclideanPose([2.0, 100.0]))
    lengths = inverse_kinematics(planar3_model.geometry, pose)
    state = SystemControllerState.initial(planar3_gains, pose)
    cmd, state, _ = control_step(planar3_model, planar3_gains,
                                 planar3_constraints, state, lengths, ref,
                                 1e-3)
    assert cmd.is_brake
    assert state.braked
    # latched: even a sane reference afterwards keeps braking
    cmd2, state, _ = control_step(planar3_model, planar3_gains,
                                  planar3_constraints, state, lengths,
                                  hold_reference(pose), 1e-3)
    assert cmd2.is_brake


def test_control_step_wrench_realized(planar3_model, planar3_constraints,
                                      planar3_gains):
    pose = planar3_pose()
    ref = hold_reference(EuclideanPose([2.05, 1.02]))
    lengths = inverse_kinematics(planar3_model.geometry, pose)
    state = SystemControllerState.initial(planar3_gains, pose)
    cmd, state, diag = control_step(planar3_model, planar3_gains,
                                    planar3_constraints, state, lengths,
                                    ref, 1e-3)
    jac = jacobian(planar3_model.geometry, diag.pose)
    np.testing.assert_allclose(jac.T @ diag.forces, diag.wrench_cmd,
                               atol=1e-8)
    from paractl import in_constraint_set
    assert in_constraint_set(planar3_constraints, diag.forces,
                             diag.command_offset, diag.no_load)


def test_zero_error_fixed_point_no_self_excitation(planar3_model,
                                                   planar3_constraints,
                                                   planar3_gains):
    pose = planar3_pose()
    ref = hold_reference(pose)
    lengths = inverse_kinematics(planar3_model.geometry, pose)
    state = SystemControllerState.initial(planar3_gains, pose)
    worst = 0.0
    for _ in range(1000):
        cmd, state, diag = control_step(planar3_model, planar3_gains,
                                        planar3_constraints, state, lengths,
                                        ref, 1e-3)
        worst = max(worst, float(np.max(np.abs(diag.pose_error))))
    assert worst <= 1e-9


def test_degenerates_to_single_actuator_controller():
    # one actuator on a line with the load hanging below it (gravity keeps
    # the cable taut): the tangent-space law must reproduce the scalar
    # controller tick for tick
    geom = RobotGeometry.point_mass([[0.0]])
    model = RobotModel(geom, InertialParams(body_mass=1.0, gravity=[9.81],
                                            actuator_mass=0.1))
    gains = pd_gains(4.0, 4.0, back_emf=0.0, no_load_mass=0.1)
    con = ForceConstraints.uniform(1, min_tension=0.0, max_command=1e6)
    dt = 1e-3
    state = SystemControllerState.initial(gains, EuclideanPose([1.0]))
    x_scalar = np.zeros(0)
    rng = np.random.default_rng(2)
    pose_x = 1.01
    err_hist = []
    for k in range(500):
        t = k * dt
        ref_x = 1.0 + 0.2 * np.sin(0.8 * t)
        ref = ReferenceSample(EuclideanPose([ref_x]),
                              [0.16 * np.cos(0.8 * t)],
                              [-0.128 * np.sin(0.8 * t)], time=t)
        lengths = np.array([pose_x])
        cmd, state, diag = control_step(model, gains, con, state, lengths,
                                        ref, dt)
        # feed the scalar law the same measurement the system law saw
        err_hist.append(np.array([ref_x - diag.pose.coords[0]]))
        stack = finite_difference_stack(err_hist[-3:], dt, 2)
        a_scalar, x_scalar = feedforward_step(
            gains, x_scalar, stack[:, 0],
            [ref_x, ref.velocity[0], ref.accel[0]], 1.0, dt)
        assert abs(diag.accel_cmd[0] - a_scalar) <= 1e-12
        pose_x += rng.normal(0.0, 1e-4)  # arbitrary walk; any input works


def test_predicted_modal_response_mass_independent_when_no_back_emf(
        planar3_model, planar3_gains):
    responses = predicted_modal_response(planar3_model, planar3_gains,
                                         planar3_pose())
    assert len(responses) == 2
    for resp in responses:
        np.testing.assert_allclose(sorted(resp.poles.real), [-2.0, -2.0],
                                   atol=1e-9)


def test_predicted_modal_response_back_emf_dampings(planar3_geom):
    model = RobotModel(planar3_geom,
                       InertialParams(body_mass=1.0, gravity=[0, -9.81],
                                      actuator_mass=0.1),
                       ActuatorModel.ideal(0.5))
    gains = pd_gains(4.0, 4.0, back_emf=0.5, no_load_mass=0.1)
    responses = predicted_modal_response(model, gains, planar3_pose())
    dampings = sorted(-np.sum(r.poles.real) for r in responses)
    np.testing.assert_allclose(
        dampings, sorted([4 + 0.5 / 0.725, 4 + 0.5 / 0.8142857]), atol=1e-6)


def test_predicted_modal_response_clamped_mode():
    from paractl.actuator import closed_loop_poles
    gains = pd_gains(4.0, 4.0, back_emf=0.5)
    poles = closed_loop_poles(gains, ActuatorModel.ideal(0.5), np.inf)
    assert -np.sum(poles.real) == pytest.approx(4.0)


def test_evaluate_at_reference_mode(planar3_model, planar3_constraints,
                                    planar3_gains):
    pose = planar3_pose()
    target = EuclideanPose([2.02, 1.01])
    ref = hold_reference(target)
    lengths = inverse_kinematics(planar3_model.geometry, pose)
    state = SystemControllerState.initial(planar3_gains, pose)
    cmd, state, diag = control_step(planar3_model, planar3_gains,
                                    planar3_constraints, state, lengths,
                                    ref, 1e-3, evaluate_at_reference=True)
    assert not cmd.is_brake
    # error sign flips with the difference taken at the reference
    np.testing.assert_allclose(diag.pose_error, [0.02, 0.01], atol=1e-9)
    jac_ref = jacobian(planar3_model.geometry, target)
    np.testing.assert_allclose(jac_ref.T @ diag.forces, diag.wrench_cmd,
                               atol=1e-8)


def test_command_variants():
    brake = Command.brake("test")
    assert brake.is_brake and brake.reason == "test"
    forces = Command.apply([1.0, 2.0])
    assert not forces.is_brake
    np.testing.assert_array_equal(forces.forces, [1.0, 2.0])
