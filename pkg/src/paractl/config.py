"""JSON robot configuration: parsing, validation and serialization."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .actuator import ActuatorModel, ControllerGains, pd_gains
from .dynamics import InertialParams, RobotModel, mass_matrix, gram_matrix
from .errors import ParseError, ValidationError
from .force_distribution import ForceConstraints
from .kinematics import (EuclideanPose, Pose, RigidPose, RobotGeometry,
                         geometry_rank_ok, quat_normalize)
from .simulator import SimConfig

_MANIFOLDS = ("euclidean1", "euclidean2", "euclidean3", "se3")


@dataclass(frozen=True)
class RobotConfig:
    """Validated run description: plant, constraints, controller, sim."""

    model: RobotModel
    constraints: ForceConstraints
    gains: ControllerGains
    sim: SimConfig
    home_pose: Pose
    workspace_min: np.ndarray
    workspace_max: np.ndarray
    manifold: str
    controller_block: dict
    evaluate_at_reference: bool = False


def _require(data: dict, key: str, where: str):
    if key not in data:
        raise ValidationError(f"missing {key!r} in {where}")
    return data[key]


def _parse_pose(values, manifold: str) -> Pose:
    values = np.asarray(values, float)
    if manifold == "se3":
        if values.size != 7:
            raise ValidationError(
                "se3 pose needs 7 numbers: position then quaternion wxyz")
        quat = values[3:]
        if abs(np.linalg.norm(quat) - 1.0) > 1e-6:
            quat = quat_normalize(quat)
        return RigidPose(values[:3], quat_normalize(quat))
    dim = int(manifold[-1])
    if values.size != dim:
        raise ValidationError(f"{manifold} pose needs {dim} numbers")
    return EuclideanPose(values)


def _parse_gains(block: dict, back_emf: float,
                 no_load_mass: float) -> ControllerGains:
    kind = _require(block, "type", "controller")
    try:
        if kind == "pd":
            return pd_gains(float(_require(block, "kp", "controller")),
                            float(_require(block, "kd", "controller")),
                            back_emf=back_emf, no_load_mass=no_load_mass)
        if kind == "statespace":
            a = np.asarray(_require(block, "A", "controller"), float)
            b = np.asarray(_require(block, "B", "controller"), float)
            c = np.asarray(_require(block, "C", "controller"), float)
            d = np.asarray(_require(block, "D", "controller"), float)
            gains = ControllerGains(A=a, B=b, C=c, D=d, back_emf=back_emf,
                                    no_load_mass=no_load_mass)
            if "l" in block and int(block["l"]) != gains.derivative_order:
                raise ValidationError("controller l disagrees with D width")
            return gains
    except ValueError as exc:
        raise ValidationError(f"controller: {exc}") from exc
    raise ValidationError(f"unknown controller type {kind!r}")


def parse_config(data: dict) -> RobotConfig:
    manifold = _require(data, "manifold", "config")
    if manifold not in _MANIFOLDS:
        raise ValidationError(f"manifold must be one of {_MANIFOLDS}")
    rigid = manifold == "se3"
    world_dim = 3 if rigid else int(manifold[-1])

    actuators = _require(data, "actuators", "config")
    anchors, attachments = [], []
    for i, entry in enumerate(actuators):
        anchor = np.asarray(_require(entry, "anchor", f"actuator {i}"), float)
        if anchor.size != world_dim:
            raise ValidationError(
                f"actuator {i} anchor needs {world_dim} numbers")
        anchors.append(anchor)
        attachments.append(np.asarray(entry.get("attachment",
                                                [0.0] * 3), float))
    if rigid:
        geom = RobotGeometry.rigid(np.asarray(anchors),
                                   np.asarray(attachments))
    else:
        geom = RobotGeometry.point_mass(np.asarray(anchors))

    body = _require(data, "body", "config")
    mass = float(_require(body, "mass", "body"))
    gravity = np.asarray(_require(body, "gravity", "body"), float)
    inertia = np.asarray(body["inertia"], float) if "inertia" in body else None
    if mass <= 0.0:
        raise ValidationError("body mass must be positive")
    if gravity.size != world_dim:
        raise ValidationError(f"gravity needs {world_dim} numbers")
    if rigid:
        if inertia is None or inertia.shape != (3, 3):
            raise ValidationError("se3 body needs a 3x3 inertia")
        if np.max(np.abs(inertia - inertia.T)) > 1e-9 or \
                np.any(np.linalg.eigvalsh(inertia) <= 0.0):
            raise ValidationError(
                "inertia must be symmetric positive definite")

    params = _require(data, "actuator_params", "config")
    m0 = float(_require(params, "m0", "actuator_params"))
    k0 = float(_require(params, "k0", "actuator_params"))
    if m0 < 0.0:
        raise ValidationError("m0 must be nonnegative")
    actuator = ActuatorModel(
        rate_coeffs=(k0, *map(float, params.get("k_higher", []))),
        force_deriv_coeffs=tuple(map(float, params.get("c", []))),
        command_deriv_coeffs=tuple(map(float, params.get("c_cmd", []))))
    inertial = InertialParams(body_mass=mass, gravity=gravity,
                              inertia=inertia, actuator_mass=m0)
    model = RobotModel(geometry=geom, inertial=inertial, actuator=actuator)

    cons = _require(data, "constraints", "config")
    try:
        constraints = ForceConstraints(
            min_tension=np.asarray(_require(cons, "t_min", "constraints"),
                                   float),
            max_command=np.asarray(_require(cons, "f_cmd_max", "constraints"),
                                   float))
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    n = geom.actuator_count
    if constraints.min_tension.size != n or \
            constraints.max_command.size != n:
        raise ValidationError("constraint vectors must have one entry per "
                              "actuator")

    controller_block = dict(_require(data, "controller", "config"))
    gains = _parse_gains(controller_block, back_emf=k0, no_load_mass=m0)
    evaluate_at_reference = controller_block.get("evaluate_at",
                                                "measured") == "reference"

    sim_block = data.get("sim", {})
    sim = SimConfig(dt_control=float(sim_block.get("dt_control", 1e-3)),
                    dt_physics=float(sim_block.get("dt_physics", 2.5e-4)),
                    duration=float(sim_block.get("duration", 10.0)),
                    noise_sigma=float(sim_block.get("noise_sigma", 0.0)))

    home = _parse_pose(_require(data, "home_pose", "config"), manifold)
    workspace = data.get("workspace", {})
    d = geom.manifold_dim
    ws_min = np.asarray(workspace.get("min", [0.0] * d), float)
    ws_max = np.asarray(workspace.get("max", [0.0] * d), float)

    # cross-module invariants at the home pose
    if n < d:
        raise ValidationError(
            f"rank: {n} actuators cannot control {d} pose freedoms")
    if not geometry_rank_ok(geom, home):
        raise ValidationError("rank: jacobian is rank deficient at the "
                              "home pose")
    body_part = mass_matrix(model, home) - m0 * gram_matrix(geom, home)
    if np.min(np.linalg.eigvalsh(body_part)) < -1e-9:
        raise ValidationError("psd: actuator inertia exceeds body inertia "
                              "at the home pose")
    return RobotConfig(model=model, constraints=constraints, gains=gains,
                       sim=sim, home_pose=home, workspace_min=ws_min,
                       workspace_max=ws_max, manifold=manifold,
                       controller_block=controller_block,
                       evaluate_at_reference=evaluate_at_reference)


def load_config(path: str) -> RobotConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return parse_config(data)


def config_to_dict(cfg: RobotConfig) -> dict:
    """Serialize back to the JSON structure accepted by `parse_config`."""
    geom = cfg.model.geometry
    inert = cfg.model.inertial
    act = cfg.model.actuator
    rigid = geom.is_rigid
    actuators = []
    for i in range(geom.actuator_count):
        entry = {"anchor": geom.anchors[i].tolist()}
        if rigid:
            entry["attachment"] = geom.attachments[i].tolist()
        actuators.append(entry)
    body = {"mass": inert.body_mass, "gravity": inert.gravity.tolist()}
    if inert.inertia is not None:
        body["inertia"] = inert.inertia.tolist()
    params = {"m0": inert.actuator_mass, "k0": act.back_emf}
    if act.rate_coeffs[1:]:
        params["k_higher"] = list(act.rate_coeffs[1:])
    if act.force_deriv_coeffs:
        params["c"] = list(act.force_deriv_coeffs)
    if act.command_deriv_coeffs:
        params["c_cmd"] = list(act.command_deriv_coeffs)
    if isinstance(cfg.home_pose, RigidPose):
        home = [*cfg.home_pose.position.tolist(),
                *cfg.home_pose.quaternion.tolist()]
    else:
        home = cfg.home_pose.coords.tolist()
    return {
        "manifold": cfg.manifold,
        "actuators": actuators,
        "body": body,
        "actuator_params": params,
        "constraints": {
            "t_min": cfg.constraints.min_tension.tolist(),
            "f_cmd_max": cfg.constraints.max_command.tolist(),
        },
        "controller": cfg.controller_block,
        "sim": {"dt_control": cfg.sim.dt_control,
                "dt_physics": cfg.sim.dt_physics,
                "duration": cfg.sim.duration,
                "noise_sigma": cfg.sim.noise_sigma},
        "home_pose": home,
        "workspace": {"min": cfg.workspace_min.tolist(),
                      "max": cfg.workspace_max.tolist()},
    }


def save_config(cfg: RobotConfig, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
