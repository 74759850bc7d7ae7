"""Configuration manifolds and actuator-value kinematics.

Two manifolds are supported: flat d-dimensional position space (point-mass
end effector, d in {1, 2, 3}) and rigid-body pose space (position plus unit
quaternion, 6 velocity coordinates).  Twists stack linear velocity with
world-frame angular velocity; wrenches pair with twists by the plain dot
product.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry, NoConvergence, RankDeficient

FD_STEP = 1e-6
MIN_CABLE_LENGTH = 1e-12


# --------------------------------------------------------------------------
# quaternions, stored (w, x, y, z)

def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_rotation_vector(rv: np.ndarray) -> np.ndarray:
    """Unit quaternion of the rotation by angle |rv| about axis rv/|rv|."""
    rv = np.asarray(rv, dtype=float)
    angle = np.linalg.norm(rv)
    if angle < 1e-8:
        # sin(a/2)/a series keeps full precision near zero
        s = 0.5 - angle * angle / 48.0
        return quat_normalize(np.array([1.0 - angle * angle / 8.0, *(s * rv)]))
    s = np.sin(angle / 2.0) / angle
    return np.array([np.cos(angle / 2.0), *(s * rv)])


def rotation_vector_from_quat(q: np.ndarray) -> np.ndarray:
    """Rotation vector (magnitude <= pi) of a unit quaternion."""
    if q[0] < 0.0:
        q = -q  # pick the cover with w >= 0 so the angle is <= pi
    vec = q[1:]
    s = np.linalg.norm(vec)
    if s < 1e-12:
        return 2.0 * vec
    angle = 2.0 * np.arctan2(s, q[0])
    return (angle / s) * vec


def _hat(v: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def quat_from_rotation_vector_batch(rvs: np.ndarray) -> np.ndarray:
    """Row-wise `quat_from_rotation_vector` for an (m, 3) array."""
    rvs = np.asarray(rvs, dtype=float)
    angles = np.linalg.norm(rvs, axis=1)
    small = angles < 1e-8
    safe = np.where(small, 1.0, angles)
    s = np.where(small, 0.5 - angles**2 / 48.0, np.sin(safe / 2.0) / safe)
    w = np.where(small, 1.0 - angles**2 / 8.0, np.cos(angles / 2.0))
    quats = np.concatenate([w[:, None], s[:, None] * rvs], axis=1)
    return quats / np.linalg.norm(quats, axis=1)[:, None]


def quat_multiply_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise product of an (m, 4) batch with one quaternion."""
    aw, ax, ay, az = a[:, 0], a[:, 1], a[:, 2], a[:, 3]
    bw, bx, by, bz = b
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=1)


def quat_to_matrix_batch(quats: np.ndarray) -> np.ndarray:
    """Rotation matrices (m, 3, 3) for an (m, 4) batch of unit
    quaternions."""
    w, x, y, z = quats[:, 0], quats[:, 1], quats[:, 2], quats[:, 3]
    out = np.empty((quats.shape[0], 3, 3))
    out[:, 0, 0] = 1 - 2 * (y * y + z * z)
    out[:, 0, 1] = 2 * (x * y - w * z)
    out[:, 0, 2] = 2 * (x * z + w * y)
    out[:, 1, 0] = 2 * (x * y + w * z)
    out[:, 1, 1] = 1 - 2 * (x * x + z * z)
    out[:, 1, 2] = 2 * (y * z - w * x)
    out[:, 2, 0] = 2 * (x * z - w * y)
    out[:, 2, 1] = 2 * (y * z + w * x)
    out[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def rigid_rows_batch(geom: RobotGeometry, base, steps: np.ndarray):
    """Jacobian rows at `retract(base, step)` for a batch of tangent steps.

    Returns (rows, rotations) with rows shaped (m, n, 6); vectorized so the
    dynamics finite differences stay cheap on the rigid manifold.
    """
    steps = np.asarray(steps, dtype=float)
    quats = quat_multiply_batch(quat_from_rotation_vector_batch(steps[:, 3:]),
                                quat_normalize(base.quaternion))
    rotations = quat_to_matrix_batch(quats)
    positions = base.position[None, :] + steps[:, :3]
    offsets = np.einsum("mij,nj->mni", rotations, geom.attachments)
    diffs = positions[:, None, :] + offsets - geom.anchors[None, :, :]
    lengths2 = np.einsum("mni,mni->mn", diffs, diffs)
    if np.any(lengths2 < 1e-24):
        raise DegenerateGeometry("zero actuator length in batch")
    units = diffs / np.sqrt(lengths2)[:, :, None]
    rows = np.concatenate([units, np.cross(offsets, units)], axis=2)
    return rows, rotations


def so3_left_jacobian(rv: np.ndarray) -> np.ndarray:
    """Map from rotation-vector rates to world angular velocity at exp(rv)."""
    angle = np.linalg.norm(rv)
    k = _hat(rv)
    if angle < 1e-4:
        a = 0.5 - angle * angle / 24.0
        b = 1.0 / 6.0 - angle * angle / 120.0
    else:
        a = (1.0 - np.cos(angle)) / angle ** 2
        b = (angle - np.sin(angle)) / angle ** 3
    return np.eye(3) + a * k + b * (k @ k)


# --------------------------------------------------------------------------
# poses

@dataclass(frozen=True)
class EuclideanPose:
    """Point-mass configuration: d coordinates, d in {1, 2, 3}."""

    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords",
                           np.atleast_1d(np.asarray(self.coords, dtype=float)))


@dataclass(frozen=True)
class RigidPose:
    """Rigid-body configuration: position and unit quaternion (w, x, y, z)."""

    position: np.ndarray
    quaternion: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position",
                           np.asarray(self.position, dtype=float))
        object.__setattr__(self, "quaternion",
                           np.asarray(self.quaternion, dtype=float))

    @classmethod
    def identity(cls, position=(0.0, 0.0, 0.0)) -> "RigidPose":
        return cls(np.asarray(position, dtype=float),
                   np.array([1.0, 0.0, 0.0, 0.0]))

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(quat_normalize(self.quaternion))


Pose = EuclideanPose | RigidPose


def manifold_dim(pose: Pose) -> int:
    if isinstance(pose, RigidPose):
        return 6
    return pose.coords.size


def retract(pose: Pose, step: np.ndarray) -> Pose:
    """Move a pose along a tangent vector (world-frame rotation update)."""
    step = np.asarray(step, dtype=float)
    if isinstance(pose, EuclideanPose):
        return EuclideanPose(pose.coords + step)
    dq = quat_from_rotation_vector(step[3:])
    return RigidPose(pose.position + step[:3],
                     quat_normalize(quat_multiply(dq, pose.quaternion)))


def pose_difference(a: Pose, b: Pose) -> np.ndarray:
    """Tangent vector at `a` pointing to `b`, exact inverse of `retract`.

    Flat case: plain subtraction.  Rigid case: translation difference
    stacked with the rotation vector of the relative rotation, branch
    chosen so its magnitude is at most pi.
    """
    if isinstance(a, EuclideanPose):
        if not isinstance(b, EuclideanPose) or a.coords.size != b.coords.size:
            raise ValueError("poses live on different manifolds")
        return b.coords - a.coords
    if not isinstance(b, RigidPose):
        raise ValueError("poses live on different manifolds")
    q_rel = quat_multiply(quat_normalize(b.quaternion),
                          quat_conjugate(quat_normalize(a.quaternion)))
    return np.concatenate([b.position - a.position,
                           rotation_vector_from_quat(q_rel)])


def pose_to_chart(pose: Pose) -> np.ndarray:
    """Flatten a pose to manifold_dim numbers (rotation vector for rigid)."""
    if isinstance(pose, EuclideanPose):
        return pose.coords.copy()
    return np.concatenate([pose.position,
                           rotation_vector_from_quat(
                               quat_normalize(pose.quaternion))])


# --------------------------------------------------------------------------
# robot geometry

@dataclass(frozen=True)
class RobotGeometry:
    """Anchor points in the frame and attachment points on the body.

    `attachments is None` marks a point-mass robot; anchors then have the
    same dimension as the pose coordinates.  For a rigid body, anchors are
    3-vectors in the world frame and attachments 3-vectors in body
    coordinates.
    """

    anchors: np.ndarray
    attachments: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "anchors",
                           np.atleast_2d(np.asarray(self.anchors, dtype=float)))
        if self.attachments is not None:
            object.__setattr__(
                self, "attachments",
                np.atleast_2d(np.asarray(self.attachments, dtype=float)))

    @classmethod
    def point_mass(cls, anchors) -> "RobotGeometry":
        return cls(anchors=anchors, attachments=None)

    @classmethod
    def rigid(cls, anchors, attachments) -> "RobotGeometry":
        return cls(anchors=anchors, attachments=attachments)

    @property
    def is_rigid(self) -> bool:
        return self.attachments is not None

    @property
    def actuator_count(self) -> int:
        return self.anchors.shape[0]

    @property
    def manifold_dim(self) -> int:
        return 6 if self.is_rigid else self.anchors.shape[1]

    def home_pose(self) -> Pose:
        if self.is_rigid:
            return RigidPose.identity()
        return EuclideanPose(np.zeros(self.anchors.shape[1]))


def _cable_vectors(geom: RobotGeometry, pose: Pose):
    """Anchor-to-attachment vectors, lengths, and world attachment offsets."""
    if geom.is_rigid:
        if not isinstance(pose, RigidPose):
            raise ValueError("rigid geometry requires a RigidPose")
        rot = pose.rotation
        offsets = geom.attachments @ rot.T          # (n, 3) world frame
        diffs = pose.position + offsets - geom.anchors
    else:
        if not isinstance(pose, EuclideanPose):
            raise ValueError("point-mass geometry requires a EuclideanPose")
        offsets = None
        diffs = pose.coords - geom.anchors
    lengths = np.linalg.norm(diffs, axis=1)
    if np.any(lengths < MIN_CABLE_LENGTH):
        bad = int(np.argmin(lengths))
        raise DegenerateGeometry(
            f"actuator {bad} has zero length; direction undefined")
    return diffs, lengths, offsets


def inverse_kinematics(geom: RobotGeometry, pose: Pose) -> np.ndarray:
    """Actuator values for a pose: straight-line anchor-to-attachment
    distances."""
    _, lengths, _ = _cable_vectors(geom, pose)
    return lengths


def jacobian(geom: RobotGeometry, pose: Pose) -> np.ndarray:
    """Derivative of the actuator values with respect to the pose.

    Point mass: row k is the unit vector from anchor k to the body.
    Rigid body: row k is [u, r x u] with u the unit cable direction and r
    the world-frame attachment offset, so rows act on [v, omega] twists.
    """
    diffs, lengths, offsets = _cable_vectors(geom, pose)
    units = diffs / lengths[:, None]
    if not geom.is_rigid:
        return units
    return np.hstack([units, np.cross(offsets, units)])


def actuator_rates(geom: RobotGeometry, pose: Pose,
                   twist: np.ndarray) -> np.ndarray:
    """Rate of change of the actuator values for a given twist."""
    return jacobian(geom, pose) @ np.asarray(twist, dtype=float)


def jacobian_directional_derivative(geom: RobotGeometry, pose: Pose,
                                    twist: np.ndarray,
                                    step: float = FD_STEP) -> np.ndarray:
    """Curvature term: the twist contracted twice with the jacobian
    derivative.

    Computed by central differences of the jacobian along the flow of the
    twist, with a fixed geometric step, then applied to the twist.  This is
    the second piece of the no-load actuator force (the first being the
    jacobian applied to the acceleration).
    """
    twist = np.asarray(twist, dtype=float)
    speed = np.linalg.norm(twist)
    if speed == 0.0:
        return np.zeros(geom.actuator_count)
    s = step / speed
    jac_fwd = jacobian(geom, retract(pose, s * twist))
    jac_back = jacobian(geom, retract(pose, -s * twist))
    return ((jac_fwd - jac_back) / (2.0 * s)) @ twist


def gram_matrix(geom: RobotGeometry, pose: Pose) -> np.ndarray:
    """Jacobian-transpose times jacobian (the actuator inertia shape)."""
    jac = jacobian(geom, pose)
    return jac.T @ jac


def gram_matrices_batch(geom: RobotGeometry, base: Pose,
                        steps: np.ndarray) -> np.ndarray:
    """Gram matrices at `retract(base, step)` for a batch of tangent steps.

    Vectorized over the batch; used by the dynamics finite differences,
    where per-call overhead would otherwise dominate the simulation loop.
    """
    steps = np.asarray(steps, dtype=float)
    if not geom.is_rigid:
        positions = base.coords[None, :] + steps          # (m, d)
        diffs = positions[:, None, :] - geom.anchors[None, :, :]
        lengths = np.linalg.norm(diffs, axis=2)
        if np.any(lengths < MIN_CABLE_LENGTH):
            raise DegenerateGeometry("zero actuator length in batch")
        rows = diffs / lengths[:, :, None]
        return np.einsum("mki,mkj->mij", rows, rows)
    rows, _ = rigid_rows_batch(geom, base, steps)
    return np.einsum("mki,mkj->mij", rows, rows)


def forward_kinematics(geom: RobotGeometry, lengths: np.ndarray, guess: Pose,
                       max_iters: int = 50) -> Pose:
    """Recover the pose whose actuator values best match `lengths`.

    Damped Gauss-Newton on the over-determined residual: with more
    actuators than pose freedoms the measured values are generally not
    exactly realizable, so the least-squares pose is returned.  Damping
    starts at 1e-10 and grows tenfold whenever a step fails to reduce the
    residual.
    """
    lengths = np.asarray(lengths, dtype=float)
    if lengths.size != geom.actuator_count:
        raise ValueError("length vector does not match actuator count")
    pose = guess
    damping = 1e-10
    residual = inverse_kinematics(geom, pose) - lengths
    cost = residual @ residual
    for _ in range(max_iters):
        if np.max(np.abs(residual)) <= 1e-12:
            return pose
        jac = jacobian(geom, pose)
        grad = jac.T @ residual
        if np.max(np.abs(grad)) <= 1e-12 * max(1.0, np.max(np.abs(lengths))):
            return pose
        hess = jac.T @ jac
        eye = np.eye(hess.shape[0])
        while True:
            step = np.linalg.solve(hess + damping * eye, -grad)
            candidate = retract(pose, step)
            cand_res = inverse_kinematics(geom, candidate) - lengths
            cand_cost = cand_res @ cand_res
            if cand_cost <= cost * (1.0 + 1e-14) + 1e-300:
                pose, residual, cost = candidate, cand_res, cand_cost
                damping = max(damping / 10.0, 1e-12)
                break
            damping *= 10.0
            if damping > 1e8:
                raise RankDeficient(
                    "normal equations unusable even under heavy damping")
        if np.max(np.abs(step)) <= 1e-12:
            return pose
    raise NoConvergence(f"no convergence after {max_iters} iterations")


def geometry_rank_ok(geom: RobotGeometry, pose: Pose,
                     tol: float = 1e-8) -> bool:
    """True when the jacobian has full column rank at the pose."""
    singulars = np.linalg.svd(jacobian(geom, pose), compute_uv=False)
    return bool(singulars[-1] > tol)
