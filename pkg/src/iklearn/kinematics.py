"""Serial-chain forward kinematics, geometric Jacobians, and the sphere collision model.

A robot is a serial chain of frames. Each frame is placed relative to its
parent by a fixed offset pose, optionally followed by a revolute joint
rotation. Collision geometry is a set of spheres rigidly attached to frames.
All functions here are pure; configurations may be batched with leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .validation import check_index, check_joint_config, check_position, check_rotation


def rot2(theta) -> np.ndarray:
    """2x2 rotation matrices for angles of any batch shape."""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    R = np.empty(theta.shape + (2, 2))
    R[..., 0, 0] = c
    R[..., 0, 1] = -s
    R[..., 1, 0] = s
    R[..., 1, 1] = c
    return R


def rot_axis(axis: np.ndarray, theta) -> np.ndarray:
    """Rodrigues rotation about a fixed unit axis, batched over theta."""
    theta = np.asarray(theta, dtype=float)
    K = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    c = np.cos(theta)[..., None, None]
    s = np.sin(theta)[..., None, None]
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def rot2_angle(R: np.ndarray) -> np.ndarray:
    """Planar rotation angle(s) from 2x2 matrices."""
    return np.arctan2(R[..., 1, 0], R[..., 0, 0])


@dataclass(frozen=True)
class Pose:
    """Rigid transform: position vector plus orthonormal rotation matrix."""

    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        dim = len(self.position)
        object.__setattr__(self, "position", check_position(self.position, dim))
        object.__setattr__(self, "rotation", check_rotation(self.rotation, dim))

    @property
    def dim(self) -> int:
        return len(self.position)

    @staticmethod
    def identity(dim: int) -> "Pose":
        return Pose(np.zeros(dim), np.eye(dim))

    @staticmethod
    def planar(x: float, y: float, angle: float = 0.0) -> "Pose":
        return Pose(np.array([x, y], dtype=float), rot2(angle))

    @staticmethod
    def from_xyz_rpy(xyz, rpy=(0.0, 0.0, 0.0)) -> "Pose":
        r, p, y = rpy
        R = rot_axis(np.array([0.0, 0.0, 1.0]), y) @ rot_axis(
            np.array([0.0, 1.0, 0.0]), p
        ) @ rot_axis(np.array([1.0, 0.0, 0.0]), r)
        return Pose(np.asarray(xyz, dtype=float), R)

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.position + self.rotation @ other.position, self.rotation @ other.rotation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (..., D) into the parent frame."""
        return (np.asarray(points) @ self.rotation.T) + self.position

    def inverse(self) -> "Pose":
        RT = self.rotation.T
        return Pose(-(RT @ self.position), RT)


@dataclass(frozen=True)
class Joint:
    """Revolute joint: rotation axis (None in 2D, implicit z) plus limits in radians."""

    lower: float
    upper: float
    axis: np.ndarray | None = None

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"joint limits must satisfy lower < upper, got [{self.lower}, {self.upper}]")
        if self.axis is not None:
            a = np.asarray(self.axis, dtype=float)
            n = np.linalg.norm(a)
            if n == 0:
                raise ValueError("joint axis must be nonzero")
            object.__setattr__(self, "axis", a / n)


@dataclass(frozen=True)
class Sphere:
    """Collision sphere: center in the owning frame, radius in meters."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.radius <= 0:
            raise ValueError("sphere radius must be strictly positive")


@dataclass(frozen=True)
class Frame:
    """One chain element: fixed offset from the parent, optional joint, attached spheres."""

    offset: Pose
    joint: Joint | None = None
    spheres: tuple[Sphere, ...] = ()


@dataclass(frozen=True)
class RobotModel:
    """Immutable serial-chain robot with sphere collision geometry.

    ``self_collision_pairs`` lists frame-index pairs (i, j) with j > i whose
    sphere sets are checked against each other.
    """

    name: str
    dim: int
    frames: tuple[Frame, ...]
    tcp_frame_index: int
    default_config: np.ndarray
    self_collision_pairs: tuple[tuple[int, int], ...] = ()
    workspace_radius: float | None = None
    _tables: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        check_index(self.tcp_frame_index, len(self.frames), "tcp_frame_index")
        for f in self.frames:
            if f.offset.dim != self.dim:
                raise ValueError("frame offset dimension mismatch")
            if f.joint is not None:
                if self.dim == 2 and f.joint.axis is not None:
                    raise ValueError("2D joints use the implicit z axis; axis must be None")
                if self.dim == 3 and f.joint.axis is None:
                    raise ValueError("3D joints require an explicit axis")
        for i, j in self.self_collision_pairs:
            check_index(i, len(self.frames), "self_collision pair index")
            check_index(j, len(self.frames), "self_collision pair index")
            if not j > i:
                raise ValueError("self_collision_pairs must be ordered (i, j) with j > i")
        q0 = check_joint_config(self.default_config, self.n_dof, "default_config")
        object.__setattr__(self, "default_config", q0)
        lo, hi = self.limits
        if np.any(q0 < lo) or np.any(q0 > hi):
            raise ValueError("default_config violates joint limits")
        if self.workspace_radius is None:
            reach = sum(np.linalg.norm(f.offset.position) for f in self.frames)
            object.__setattr__(self, "workspace_radius", float(reach))

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def n_dof(self) -> int:
        return sum(1 for f in self.frames if f.joint is not None)

    @property
    def task_dim(self) -> int:
        return 3 if self.dim == 2 else 6

    @property
    def limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([f.joint.lower for f in self.frames if f.joint is not None])
        hi = np.array([f.joint.upper for f in self.frames if f.joint is not None])
        return lo, hi

    # -- precomputed lookup tables ------------------------------------------

    def _table(self, key):
        if key not in self._tables:
            self._tables.update(_build_tables(self))
        return self._tables[key]

    @property
    def joint_frame_index(self) -> np.ndarray:
        """Frame index carrying each joint, in joint order (strictly increasing)."""
        return self._table("joint_frame_index")

    @property
    def sphere_table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(frame_of_sphere, local_centers (S, D), radii (S,)) stacked over all frames."""
        return self._table("sphere_table")

    @property
    def sphere_pair_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Sphere index pairs expanded from self_collision_pairs."""
        return self._table("sphere_pair_table")

    def n_joints_through_frame(self, frame_index: int) -> int:
        """Number of joints located at frames <= frame_index (those that move it)."""
        return int(np.searchsorted(self.joint_frame_index, frame_index, side="right"))


def _build_tables(robot: RobotModel) -> dict:
    jfi = np.array([i for i, f in enumerate(robot.frames) if f.joint is not None], dtype=int)
    sf, sc, sr = [], [], []
    for i, f in enumerate(robot.frames):
        for s in f.spheres:
            sf.append(i)
            sc.append(s.center)
            sr.append(s.radius)
    if sc:
        table = (np.array(sf, dtype=int), np.array(sc, dtype=float), np.array(sr, dtype=float))
    else:
        table = (np.zeros(0, dtype=int), np.zeros((0, robot.dim)), np.zeros(0))
    frame_of = table[0]
    ia, ib = [], []
    for (i, j) in robot.self_collision_pairs:
        for a in np.flatnonzero(frame_of == i):
            for b in np.flatnonzero(frame_of == j):
                ia.append(a)
                ib.append(b)
    pair_table = (np.array(ia, dtype=int), np.array(ib, dtype=int))
    return {"joint_frame_index": jfi, "sphere_table": table, "sphere_pair_table": pair_table}


# -- forward kinematics ------------------------------------------------------


def fk_arrays(robot: RobotModel, q) -> tuple[np.ndarray, np.ndarray]:
    """Batched forward kinematics.

    q has shape (..., n_dof); returns rotations (..., F, D, D) and
    positions (..., F, D) for every frame of the chain.
    """
    q = check_joint_config(q, robot.n_dof)
    batch = q.shape[:-1]
    D = robot.dim
    R = np.broadcast_to(np.eye(D), batch + (D, D))
    p = np.broadcast_to(np.zeros(D), batch + (D,))
    Rs, ps = [], []
    k = 0
    for frame in robot.frames:
        off = frame.offset
        p = p + np.einsum("...ij,j->...i", R, off.position)
        R = R @ off.rotation
        if frame.joint is not None:
            qk = q[..., k]
            Rq = rot2(qk) if D == 2 else rot_axis(frame.joint.axis, qk)
            R = R @ Rq
            k += 1
        Rs.append(R)
        ps.append(p)
    return np.stack(Rs, axis=-3), np.stack(ps, axis=-2)


def forward_kinematics(robot: RobotModel, q) -> list[Pose]:
    """Poses of all chain frames for a single configuration."""
    q = check_joint_config(q, robot.n_dof)
    if q.ndim != 1:
        raise ValueError("forward_kinematics takes a single configuration; use fk_arrays for batches")
    Rs, ps = fk_arrays(robot, q)
    return [Pose(ps[i], Rs[i]) for i in range(robot.n_frames)]


def tcp_pose(robot: RobotModel, q) -> Pose:
    return forward_kinematics(robot, q)[robot.tcp_frame_index]


# -- Jacobians ---------------------------------------------------------------


def _joint_origins_axes(robot: RobotModel, Rs: np.ndarray, ps: np.ndarray):
    """World origins (..., J, D) and, in 3D, world axes (..., J, 3) of all joints.

    A joint's world axis is its carrier frame's rotation applied to the local
    axis (the rotation about the axis leaves the axis itself invariant).
    """
    jfi = robot.joint_frame_index
    origins = ps[..., jfi, :]
    if robot.dim == 2:
        return origins, None
    axes_local = np.stack([robot.frames[i].joint.axis for i in jfi], axis=0)
    axes = np.einsum("...ij,...j->...i", Rs[..., jfi, :, :], axes_local)
    return origins, axes


def point_jacobian_arrays(
    robot: RobotModel, Rs: np.ndarray, ps: np.ndarray, points: np.ndarray, frame_of_point: np.ndarray
) -> np.ndarray:
    """Positional Jacobians of world points rigidly attached to chain frames.

    points: (..., P, D) world coordinates; frame_of_point: (P,) carrier frame
    indices. Returns (..., P, D, n_dof); columns of joints distal to a point's
    carrier frame are zero.
    """
    origins, axes = _joint_origins_axes(robot, Rs, ps)
    rel = points[..., :, None, :] - origins[..., None, :, :]  # (..., P, J, D)
    if robot.dim == 2:
        J = np.stack([-rel[..., 1], rel[..., 0]], axis=-2)  # (..., P, 2, J)
    else:
        J = np.cross(axes[..., None, :, :], rel, axis=-1)  # (..., P, J, 3)
        J = np.swapaxes(J, -1, -2)
    jfi = robot.joint_frame_index
    active = jfi[None, :] <= np.asarray(frame_of_point)[:, None]  # (P, J)
    return J * active[:, None, :]


def geometric_jacobian(robot: RobotModel, q, frame_index: int) -> np.ndarray:
    """Geometric Jacobian of a chain frame: positional rows, then rotational rows.

    Shape (3, n_dof) in 2D (x, y, angular) and (6, n_dof) in 3D.
    """
    frame_index = check_index(frame_index, robot.n_frames, "frame_index")
    q = check_joint_config(q, robot.n_dof)
    Rs, ps = fk_arrays(robot, q)
    p = ps[frame_index]
    Jp = point_jacobian_arrays(robot, Rs, ps, p[None, :], np.array([frame_index]))[0]
    jfi = robot.joint_frame_index
    active = jfi <= frame_index
    if robot.dim == 2:
        Jr = active.astype(float)[None, :]
    else:
        _, axes = _joint_origins_axes(robot, Rs, ps)
        Jr = (axes * active[:, None]).T
    return np.vstack([Jp, Jr])


def sphere_positions(robot: RobotModel, q) -> list[tuple[np.ndarray, float]]:
    """All collision spheres in world coordinates, in stable chain order."""
    centers, radii, _ = sphere_arrays(robot, *fk_arrays(robot, q))
    return [(centers[i], float(radii[i])) for i in range(len(radii))]


def sphere_arrays(robot: RobotModel, Rs: np.ndarray, ps: np.ndarray):
    """World sphere centers (..., S, D), radii (S,), and carrier frames (S,)."""
    frame_of, local, radii = robot.sphere_table
    centers = (
        np.einsum("...sij,sj->...si", Rs[..., frame_of, :, :], local) + ps[..., frame_of, :]
    )
    return centers, radii, frame_of


def sphere_jacobian(robot: RobotModel, q, frame_index: int, local_center) -> np.ndarray:
    """Positional Jacobian (D, n_dof) of a point given in a frame's coordinates."""
    frame_index = check_index(frame_index, robot.n_frames, "frame_index")
    q = check_joint_config(q, robot.n_dof)
    local_center = check_position(local_center, robot.dim, "local_center")
    Rs, ps = fk_arrays(robot, q)
    world = Rs[frame_index] @ local_center + ps[frame_index]
    return point_jacobian_arrays(robot, Rs, ps, world[None, :], np.array([frame_index]))[0]
