"""Closed-loop physics: ground-truth plant plus the control loop on top.

The plant integrates the end-effector equations of motion under the
commanded actuator forces with RK4, substepping several physics steps per
control tick.  Sensing is ideal by default: the measured actuator values
are the true ones, optionally with seeded Gaussian noise.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .dynamics import (RobotModel, _potential_gradient, _velocity_bias,
                       modal_decomposition, point_mass_tables,
                       rigid_pose_tables)
from .errors import NumericBlowup, ValidationError
from .kinematics import (EuclideanPose, Pose, RigidPose,
                         inverse_kinematics, manifold_dim,
                         pose_to_chart, quat_multiply, quat_normalize)
from .force_distribution import ForceConstraints
from .system import ControllerGains, SystemControllerState, control_step
from .trajectory import Trajectory

BLOWUP_LIMIT = 1e9


@dataclass(frozen=True)
class SimConfig:
    """Closed-loop run settings; control period must be an integer
    multiple of the physics step."""

    dt_control: float = 1e-3
    dt_physics: float = 2.5e-4
    duration: float = 10.0
    disturbance: np.ndarray | None = None
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.dt_physics <= 0 or self.dt_control < self.dt_physics:
            raise ValidationError("need 0 < dt_physics <= dt_control")
        ratio = self.dt_control / self.dt_physics
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValidationError(
                "dt_control must be an integer multiple of dt_physics")
        if self.duration <= 0:
            raise ValidationError("duration must be positive")
        if self.disturbance is not None:
            object.__setattr__(self, "disturbance",
                               np.asarray(self.disturbance, float))

    @property
    def substeps(self) -> int:
        return int(round(self.dt_control / self.dt_physics))


@dataclass(frozen=True)
class PlantState:
    """True state of the simulated end effector."""

    pose: Pose
    twist: np.ndarray
    time: float = 0.0
    actuator_states: np.ndarray | None = None  # command-filter states

    def __post_init__(self):
        object.__setattr__(self, "twist", np.asarray(self.twist, float))


def _pack(ps: PlantState) -> np.ndarray:
    if isinstance(ps.pose, RigidPose):
        parts = [ps.pose.position, ps.pose.quaternion, ps.twist]
    else:
        parts = [ps.pose.coords, ps.twist]
    if ps.actuator_states is not None:
        parts.append(ps.actuator_states.reshape(-1))
    return np.concatenate(parts)


def _unpack(ps: PlantState, vec: np.ndarray) -> PlantState:
    if isinstance(ps.pose, RigidPose):
        pose = RigidPose(vec[:3], quat_normalize(vec[3:7]))
        twist = vec[7:13]
        rest = vec[13:]
    else:
        d = ps.pose.coords.size
        pose = EuclideanPose(vec[:d])
        twist = vec[d:2 * d]
        rest = vec[2 * d:]
    states = None
    if ps.actuator_states is not None:
        states = rest.reshape(ps.actuator_states.shape)
    return PlantState(pose=pose, twist=twist, time=ps.time,
                      actuator_states=states)


@lru_cache(maxsize=32)
def _command_filter(act):
    """Per-actuator linear filter from command force to supplied force.

    Identity for the ideal model.  Value-rate coefficients beyond the
    back-EMF term would demand value-acceleration feedthrough inside the
    force law, which the explicit integrator cannot honor, so they are
    rejected here (the eigenvalue analysis still accepts them).
    """
    if any(c != 0.0 for c in act.rate_coeffs[1:]):
        raise ValidationError(
            "plant simulation supports value-rate coefficients only through "
            "the back-EMF term")
    nc = len(act.force_deriv_coeffs)
    if len(act.command_deriv_coeffs) > nc:
        raise ValidationError(
            "command-derivative order exceeds force-derivative order")
    if nc == 0:
        return None
    den = np.concatenate([[1.0], act.force_deriv_coeffs])   # ascending
    num = np.concatenate([[1.0], act.command_deriv_coeffs])
    lead = den[-1]
    den = den / lead
    deg = nc
    a = np.zeros((deg, deg))
    a[:-1, 1:] = np.eye(deg - 1)
    a[-1, :] = -den[:-1]
    b = np.zeros(deg)
    b[-1] = 1.0
    c = np.zeros(deg)
    c[:num.size] = num / lead
    return a, b, c


def _state_derivative(model: RobotModel, ps: PlantState, pose: Pose,
                      twist: np.ndarray, states, forces_cmd: np.ndarray,
                      filt, extra_wrench) -> np.ndarray:
    if isinstance(pose, EuclideanPose):
        rows, mass, slabs = point_mass_tables(model, pose.coords)
    else:
        rows, mass, slabs = rigid_pose_tables(model, pose)
    rates = rows @ twist
    if filt is None:
        supplied = forces_cmd - model.actuator.back_emf * rates
        filter_dot = None
    else:
        a, b, c = filt
        supplied = states @ c - model.actuator.back_emf * rates
        filter_dot = states @ a.T + np.outer(forces_cmd, b)
    wrench = rows.T @ supplied
    if extra_wrench is not None:
        wrench = wrench + extra_wrench
    rhs = wrench - _potential_gradient(model, pose)
    if np.any(twist):
        rhs = rhs - _velocity_bias(slabs, twist)
    accel = np.linalg.solve(mass, rhs)
    if isinstance(pose, RigidPose):
        quat_dot = 0.5 * quat_multiply(np.concatenate([[0.0], twist[3:]]),
                                       pose.quaternion)
        parts = [twist[:3], quat_dot, accel]
    else:
        parts = [twist, accel]
    if filter_dot is not None:
        parts.append(filter_dot.reshape(-1))
    return np.concatenate(parts)


def _flat_point_derivative(model: RobotModel, d: int, y: np.ndarray,
                           forces_cmd: np.ndarray, back_emf: float,
                           extra_wrench) -> np.ndarray:
    """Point-mass plant derivative on the packed [coords, twist] vector."""
    coords = y[:d]
    twist = y[d:]
    rows, mass, slabs = point_mass_tables(model, coords)
    supplied = forces_cmd - back_emf * (rows @ twist) if back_emf \
        else forces_cmd
    wrench = rows.T @ supplied
    if extra_wrench is not None:
        wrench = wrench + extra_wrench
    rhs = wrench - _potential_gradient(model, EuclideanPose(coords))
    if np.any(twist):
        rhs = rhs - _velocity_bias(slabs, twist)
    return np.concatenate([twist, np.linalg.solve(mass, rhs)])


def step_plant(model: RobotModel, ps: PlantState, forces_cmd: np.ndarray,
               dt: float, extra_wrench: np.ndarray | None = None
               ) -> PlantState:
    """Advance the plant one RK4 step under constant commanded forces."""
    forces_cmd = np.asarray(forces_cmd, float)
    filt = _command_filter(model.actuator)
    if filt is not None and ps.actuator_states is None:
        ps = replace(ps, actuator_states=np.zeros(
            (model.actuator_count, filt[0].shape[0])))

    if filt is None and isinstance(ps.pose, EuclideanPose):
        d = ps.pose.coords.size
        back_emf = model.actuator.back_emf

        def deriv(vec: np.ndarray) -> np.ndarray:
            return _flat_point_derivative(model, d, vec, forces_cmd,
                                          back_emf, extra_wrench)

        y0 = np.concatenate([ps.pose.coords, ps.twist])
    else:
        def deriv(vec: np.ndarray) -> np.ndarray:
            probe = _unpack(ps, vec)
            return _state_derivative(model, ps, probe.pose, probe.twist,
                                     probe.actuator_states, forces_cmd,
                                     filt, extra_wrench)

        y0 = _pack(ps)
    k1 = deriv(y0)
    k2 = deriv(y0 + (0.5 * dt) * k1)
    k3 = deriv(y0 + (0.5 * dt) * k2)
    k4 = deriv(y0 + dt * k3)
    y1 = y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(y1)) or np.max(np.abs(y1)) > BLOWUP_LIMIT:
        raise NumericBlowup(f"plant state diverged at t={ps.time}")
    out = _unpack(ps, y1)
    return replace(out, time=ps.time + dt)


@dataclass
class TraceLog:
    """Per-control-tick record of a closed-loop run."""

    manifold_dim: int
    actuator_count: int
    t: list = field(default_factory=list)
    pose: list = field(default_factory=list)          # chart coordinates
    ref_pose: list = field(default_factory=list)
    pose_error: list = field(default_factory=list)
    modal_error: list = field(default_factory=list)
    forces_cmd: list = field(default_factory=list)
    tensions: list = field(default_factory=list)
    brake: list = field(default_factory=list)
    accel_cmd: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)

    def times(self) -> np.ndarray:
        return np.asarray(self.t)

    def modal_errors(self) -> np.ndarray:
        return np.asarray(self.modal_error)

    def pose_errors(self) -> np.ndarray:
        return np.asarray(self.pose_error)


def run_closed_loop(model: RobotModel, gains: ControllerGains,
                    con: ForceConstraints, trajectory: Trajectory,
                    sim: SimConfig, initial_pose: Pose | None = None,
                    initial_twist: np.ndarray | None = None,
                    evaluate_at_reference: bool = False) -> TraceLog:
    """Drive the plant with the system controller and record every tick.

    Measured actuator values come from the true pose (plus optional seeded
    noise).  The run ends at the configured duration or at the first brake
    tick, which is logged.  Modal error projections use the decomposition
    at the initial reference pose, held fixed so the logged components stay
    comparable across the run.
    """
    if not np.isclose(gains.back_emf, model.actuator.back_emf):
        raise ValidationError(
            "controller and actuator-model back-EMF constants disagree")
    d = model.manifold_dim
    n = model.actuator_count
    ref0 = trajectory.sample(0.0)
    start_pose = initial_pose if initial_pose is not None else ref0.pose
    twist0 = np.zeros(d) if initial_twist is None \
        else np.asarray(initial_twist, float)
    rng = np.random.default_rng(sim.seed)
    basis = modal_decomposition(model, ref0.pose)
    state = SystemControllerState.initial(gains, start_pose)
    ps = PlantState(pose=start_pose, twist=twist0, time=0.0)
    trace = TraceLog(manifold_dim=d, actuator_count=n)
    n_ticks = int(np.floor(sim.duration / sim.dt_control + 1e-9))
    for tick in range(n_ticks):
        t = tick * sim.dt_control
        ref = trajectory.sample(t)
        lengths = inverse_kinematics(model.geometry, ps.pose)
        if sim.noise_sigma > 0.0:
            lengths = lengths + rng.normal(0.0, sim.noise_sigma, size=n)
        cmd, state, diag = control_step(
            model, gains, con, state, lengths, ref, sim.dt_control,
            evaluate_at_reference=evaluate_at_reference)
        error = diag.pose_error if diag.pose_error is not None \
            else np.full(d, np.nan)
        trace.t.append(t)
        trace.pose.append(pose_to_chart(diag.pose) if diag.pose is not None
                          else np.full(d, np.nan))
        trace.ref_pose.append(pose_to_chart(ref.pose))
        trace.pose_error.append(error)
        trace.modal_error.append(basis.project(error)
                                 if diag.pose_error is not None
                                 else np.full(d, np.nan))
        trace.forces_cmd.append(cmd.forces if not cmd.is_brake
                                else np.full(n, np.nan))
        trace.tensions.append(diag.tensions if diag.tensions is not None
                              else np.full(n, np.nan))
        trace.brake.append(cmd.is_brake)
        trace.accel_cmd.append(diag.accel_cmd if diag.accel_cmd is not None
                               else np.full(d, np.nan))
        if cmd.is_brake:
            break
        for _ in range(sim.substeps):
            ps = step_plant(model, ps, cmd.forces, sim.dt_physics,
                            extra_wrench=sim.disturbance)
    return trace


@dataclass(frozen=True)
class TrackingMetrics:
    """Summary numbers from a trace."""

    max_error: float
    rms_error: float
    settling_times: np.ndarray   # per modal component, 2% band
    brake_events: int


def settling_time(t: np.ndarray, signal: np.ndarray,
                  band: float = 0.02) -> float:
    """Time after which |signal| stays within `band` of its initial
    magnitude; 0 when it never leaves, inf when it never settles."""
    reference = abs(signal[0])
    if reference < 1e-300:
        return 0.0
    outside = np.abs(signal) > band * reference
    if not outside.any():
        return 0.0
    last = int(np.max(np.nonzero(outside)[0]))
    if last == len(signal) - 1:
        return float("inf")
    return float(t[last + 1])


def tracking_metrics(trace: TraceLog, band: float = 0.02) -> TrackingMetrics:
    if len(trace) == 0:
        raise ValueError("empty trace")
    errors = trace.pose_errors()
    finite = errors[np.all(np.isfinite(errors), axis=1)]
    norms = np.linalg.norm(finite, axis=1) if finite.size else np.array([0.0])
    modal = trace.modal_errors()
    t = trace.times()
    settles = np.array([settling_time(t, modal[:, j], band)
                        for j in range(modal.shape[1])]) \
        if modal.size else np.zeros(0)
    return TrackingMetrics(max_error=float(np.max(norms)),
                           rms_error=float(np.sqrt(np.mean(norms**2))),
                           settling_times=settles,
                           brake_events=int(np.sum(trace.brake)))
