"""Generalized mass, bias forces, no-load forces and the modal split.

The equations of motion used everywhere are

    wrench = M(pose) @ accel + bias(pose, twist)

with M the body mass/inertia plus the reflected actuator inertia
m0 * J^T J.  The bias term is derived from the Lagrangian in a local
exponential chart at the current pose, so velocity-product terms from the
pose dependence of M (including rigid-body gyroscopic forces) and the
potential gradient come out of one mechanism.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actuator import ActuatorModel
from .errors import DegenerateGeometry, SingularMass
from .kinematics import (FD_STEP, EuclideanPose, Pose, RigidPose,
                         RobotGeometry, gram_matrix, jacobian,
                         jacobian_directional_derivative, retract,
                         rigid_rows_batch, so3_left_jacobian)


@dataclass(frozen=True)
class InertialParams:
    """Body and actuator inertial constants.

    `actuator_mass` is the effective no-load mass of each actuator, felt by
    the body through the cable directions.  The optional spring adds a
    quadratic potential about `spring_center` (positions only), useful as a
    second conservative force besides gravity.
    """

    body_mass: float
    gravity: np.ndarray
    inertia: np.ndarray | None = None
    actuator_mass: float = 0.0
    spring_stiffness: float = 0.0
    spring_center: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "gravity",
                           np.atleast_1d(np.asarray(self.gravity, float)))
        if self.inertia is not None:
            object.__setattr__(self, "inertia",
                               np.asarray(self.inertia, float))
        if self.spring_center is not None:
            object.__setattr__(self, "spring_center",
                               np.asarray(self.spring_center, float))


@dataclass(frozen=True)
class RobotModel:
    """Everything the control and simulation layers need about the plant."""

    geometry: RobotGeometry
    inertial: InertialParams
    actuator: ActuatorModel = ActuatorModel.ideal()

    @property
    def manifold_dim(self) -> int:
        return self.geometry.manifold_dim

    @property
    def actuator_count(self) -> int:
        return self.geometry.actuator_count


def _position_of(pose: Pose) -> np.ndarray:
    return pose.position if isinstance(pose, RigidPose) else pose.coords


def _body_mass_matrix(model: RobotModel, pose: Pose) -> np.ndarray:
    inert = model.inertial
    if isinstance(pose, RigidPose):
        if inert.inertia is None:
            raise ValueError("rigid body needs an inertia tensor")
        m = np.zeros((6, 6))
        m[:3, :3] = inert.body_mass * np.eye(3)
        rot = pose.rotation
        m[3:, 3:] = rot @ inert.inertia @ rot.T
        return m
    d = pose.coords.size
    return inert.body_mass * np.eye(d)


def mass_matrix(model: RobotModel, pose: Pose) -> np.ndarray:
    """Generalized mass: body part plus reflected actuator inertia."""
    m = _body_mass_matrix(model, pose)
    m0 = model.inertial.actuator_mass
    if m0 != 0.0:
        m = m + m0 * gram_matrix(model.geometry, pose)
    return m


def potential_energy(model: RobotModel, pose: Pose) -> float:
    inert = model.inertial
    p = _position_of(pose)
    v = -inert.body_mass * float(inert.gravity @ p)
    if inert.spring_stiffness != 0.0:
        center = inert.spring_center if inert.spring_center is not None \
            else np.zeros_like(p)
        delta = p - center
        v += 0.5 * inert.spring_stiffness * float(delta @ delta)
    return v


def _potential_gradient(model: RobotModel, pose: Pose) -> np.ndarray:
    """Chart gradient of the potential (zero on rotation coordinates, the
    gravity line of action passing through the body origin)."""
    inert = model.inertial
    p = _position_of(pose)
    grad_p = -inert.body_mass * inert.gravity
    if inert.spring_stiffness != 0.0:
        center = inert.spring_center if inert.spring_center is not None \
            else np.zeros_like(p)
        grad_p = grad_p + inert.spring_stiffness * (p - center)
    if isinstance(pose, RigidPose):
        return np.concatenate([grad_p, np.zeros(3)])
    return grad_p


def kinetic_energy(model: RobotModel, pose: Pose, twist: np.ndarray) -> float:
    twist = np.asarray(twist, float)
    return 0.5 * float(twist @ mass_matrix(model, pose) @ twist)


def total_energy(model: RobotModel, pose: Pose, twist: np.ndarray) -> float:
    return kinetic_energy(model, pose, twist) + potential_energy(model, pose)


def _chart_mass_rigid(model: RobotModel, pose: Pose,
                      theta: np.ndarray) -> np.ndarray:
    # chart velocities map to twists through blockdiag(I, J_l(theta_rot)),
    # which is what turns the orientation dependence of the inertia into
    # the usual gyroscopic bias terms
    stepped = retract(pose, theta)
    m = mass_matrix(model, stepped)
    jl = so3_left_jacobian(theta[3:])
    big = np.eye(6)
    big[3:, 3:] = jl
    return big.T @ m @ big


def rigid_pose_tables(model: RobotModel, pose: RigidPose,
                      step: float = FD_STEP):
    """Jacobian rows, mass matrix and mass chart derivatives at a rigid
    pose, from one vectorized evaluation over the offset batch.

    Must agree with `_chart_mass_rigid` differenced offset by offset (a
    test pins the equivalence); this form just keeps the rigid simulation
    loop out of Python-level per-offset work.
    """
    inert = model.inertial
    if inert.inertia is None:
        raise ValueError("rigid body needs an inertia tensor")
    offsets = _fd_offsets(6, step)
    rows, rotations = rigid_rows_batch(model.geometry, pose, offsets)
    m = offsets.shape[0]
    chart = np.zeros((m, 6, 6))
    chart[:, :3, :3] = inert.body_mass * np.eye(3)
    chart[:, 3:, 3:] = np.einsum("mij,jk,mlk->mil", rotations, inert.inertia,
                                 rotations)
    if inert.actuator_mass != 0.0:
        chart += inert.actuator_mass * np.einsum("mki,mkj->mij", rows, rows)
    mass = chart[0].copy()
    # fold in the chart-rate factor blockdiag(I, J_l) for the offsets
    for i in range(1, m):
        jl = so3_left_jacobian(offsets[i, 3:])
        big = np.eye(6)
        big[3:, 3:] = jl
        chart[i] = big.T @ chart[i] @ big
    slabs = (chart[1::2] - chart[2::2]) / (2.0 * step)
    return rows[0], mass, slabs


def _mass_derivatives(model: RobotModel, pose: Pose,
                      step: float) -> np.ndarray:
    """d(chart mass)/d(theta_k) at the chart origin, one slab per k."""
    if isinstance(pose, EuclideanPose):
        return point_mass_tables(model, pose.coords, step)[2]
    return rigid_pose_tables(model, pose, step)[2]


def _velocity_bias(slabs: np.ndarray, twist: np.ndarray) -> np.ndarray:
    mdot = np.einsum("kij,k->ij", slabs, twist)
    quad = 0.5 * np.einsum("i,kij,j->k", twist, slabs, twist)
    return mdot @ twist - quad


_OFFSET_CACHE: dict = {}


def _fd_offsets(d: int, step: float) -> np.ndarray:
    key = (d, step)
    hit = _OFFSET_CACHE.get(key)
    if hit is None:
        hit = np.zeros((2 * d + 1, d))
        for k in range(d):
            hit[2 * k + 1, k] = step
            hit[2 * k + 2, k] = -step
        _OFFSET_CACHE[key] = hit
    return hit


def point_mass_tables(model: RobotModel, coords: np.ndarray,
                      step: float = FD_STEP):
    """Jacobian rows, mass matrix and mass chart derivatives at a flat
    pose, all from one vectorized cable evaluation.

    This is the simulation hot path; it must stay numerically identical to
    composing `jacobian`, `mass_matrix` and the finite differences used by
    `bias_force` (a test pins that equivalence).
    """
    geom = model.geometry
    d = coords.size
    m0 = model.inertial.actuator_mass
    body = model.inertial.body_mass * np.eye(d)
    positions = coords + _fd_offsets(d, step)           # (2d+1, d)
    diffs = positions[:, None, :] - geom.anchors[None, :, :]
    lengths2 = np.einsum("mki,mki->mk", diffs, diffs)
    if np.any(lengths2 < 1e-24):
        raise DegenerateGeometry("zero actuator length")
    rows = diffs / np.sqrt(lengths2)[:, :, None]
    if m0 == 0.0:
        return rows[0], body, np.zeros((d, d, d))
    grams = np.einsum("mki,mkj->mij", rows, rows)
    mass = body + m0 * grams[0]
    slabs = m0 * (grams[1::2] - grams[2::2]) / (2.0 * step)
    return rows[0], mass, slabs


def _mass_and_slabs_point(model: RobotModel, pose: EuclideanPose,
                          step: float) -> tuple[np.ndarray, np.ndarray]:
    _, mass, slabs = point_mass_tables(model, pose.coords, step)
    return mass, slabs


def bias_force(model: RobotModel, pose: Pose, twist: np.ndarray,
               step: float = FD_STEP) -> np.ndarray:
    """Velocity-product and potential terms of the equations of motion.

    Expanding d/dt(M twist) minus the chart gradient of the Lagrangian:

        bias = (sum_k dM/dtheta_k twist_k) twist
               - 1/2 [twist^T dM/dtheta_k twist]_k
               + dV/dtheta

    with the mass derivatives taken by central differences in the local
    chart.  Holding the force at `bias` keeps a resting pose still, and
    M @ accel + bias reproduces the Lagrangian dynamics for moving ones.
    """
    twist = np.asarray(twist, float)
    grad_v = _potential_gradient(model, pose)
    if not np.any(twist):
        return grad_v
    slabs = _mass_derivatives(model, pose, step)
    return _velocity_bias(slabs, twist) + grad_v


def wrench_for_accel(model: RobotModel, pose: Pose, twist: np.ndarray,
                     accel: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Wrench needed for an acceleration: M @ accel + bias, evaluated with
    a single batched mass computation."""
    twist = np.asarray(twist, float)
    accel = np.asarray(accel, float)
    if isinstance(pose, EuclideanPose):
        mass, slabs = _mass_and_slabs_point(model, pose, step)
    else:
        _, mass, slabs = rigid_pose_tables(model, pose, step)
    out = mass @ accel + _potential_gradient(model, pose)
    if np.any(twist):
        out += _velocity_bias(slabs, twist)
    return out


def no_load_forces(model: RobotModel, pose: Pose, twist: np.ndarray,
                   accel: np.ndarray, jac: np.ndarray | None = None
                   ) -> np.ndarray:
    """Actuator forces if the actuators ran detached, matching the same
    value motion: m0 * (J accel + curvature term)."""
    m0 = model.inertial.actuator_mass
    if m0 == 0.0:
        return np.zeros(model.actuator_count)
    if jac is None:
        jac = jacobian(model.geometry, pose)
    curve = jacobian_directional_derivative(model.geometry, pose, twist)
    return m0 * (jac @ np.asarray(accel, float) + curve)


def cable_tensions(no_load: np.ndarray, applied: np.ndarray) -> np.ndarray:
    """Tensions are the no-load forces minus the applied actuator forces."""
    no_load = np.asarray(no_load, float)
    applied = np.asarray(applied, float)
    if no_load.shape != applied.shape:
        raise ValueError("force vectors differ in length")
    return no_load - applied


def forward_dynamics(model: RobotModel, pose: Pose, twist: np.ndarray,
                     wrench: np.ndarray) -> np.ndarray:
    """Acceleration produced by a wrench: M^{-1} (wrench - bias)."""
    twist = np.asarray(twist, float)
    if isinstance(pose, EuclideanPose):
        m, slabs = _mass_and_slabs_point(model, pose, FD_STEP)
    else:
        _, m, slabs = rigid_pose_tables(model, pose)
    rhs = np.asarray(wrench, float) - _potential_gradient(model, pose)
    if np.any(twist):
        rhs = rhs - _velocity_bias(slabs, twist)
    try:
        return np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMass("mass matrix is singular") from exc


@dataclass(frozen=True)
class ModalDecomposition:
    """Eigenstructure of M^{-1} J^T J with a biorthogonal dual basis.

    Columns of `modes` are the eigenvectors sigma_i, columns of `duals`
    the dual covectors pi_i with pi_i . sigma_j = delta_ij.  Modal masses
    are reciprocal eigenvalues; a zero eigenvalue (direction the actuators
    cannot sense) is reported as an infinite modal mass.
    """

    eigenvalues: np.ndarray
    modal_masses: np.ndarray
    modes: np.ndarray
    duals: np.ndarray

    def project(self, tangent: np.ndarray) -> np.ndarray:
        """Coordinates of a tangent vector in the modal basis."""
        return self.duals.T @ np.asarray(tangent, float)


def modal_decomposition(model: RobotModel, pose: Pose,
                        zero_tol: float = 1e-12) -> ModalDecomposition:
    """Diagonalize M^{-1} J^T J through its symmetric similar form.

    M^{-1/2} J^T J M^{-1/2} is symmetric positive semi-definite, so a real
    eigenbasis always exists; eigenvectors map back by M^{-1/2} and the
    duals by M^{1/2}, which makes biorthogonality exact by construction.
    Modes are ordered by decreasing eigenvalue (increasing modal mass).
    """
    m = mass_matrix(model, pose)
    gram = gram_matrix(model.geometry, pose)
    vals, vecs = np.linalg.eigh(m)
    if vals[0] <= zero_tol:
        raise SingularMass("mass matrix is not positive definite")
    root = vecs @ np.diag(np.sqrt(vals)) @ vecs.T
    inv_root = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T
    sym = inv_root @ gram @ inv_root
    sym = 0.5 * (sym + sym.T)
    eigs, sym_vecs = np.linalg.eigh(sym)
    order = np.argsort(eigs)[::-1]
    eigs = eigs[order]
    sym_vecs = sym_vecs[:, order]
    # fix the sign of each mode so traces and logs are reproducible
    for j in range(sym_vecs.shape[1]):
        col = sym_vecs[:, j]
        if col[np.argmax(np.abs(col))] < 0.0:
            sym_vecs[:, j] = -col
    modes = inv_root @ sym_vecs
    duals = root @ sym_vecs
    masses = np.where(eigs > zero_tol, 1.0 / np.where(eigs > zero_tol,
                                                      eigs, 1.0), np.inf)
    return ModalDecomposition(eigenvalues=eigs, modal_masses=masses,
                              modes=modes, duals=duals)
