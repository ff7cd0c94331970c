"""Robot model factories and the robot description file format.

Robots are described in JSON (schema ``iklearn-robot-v1``) so benchmark and
ablation sweeps can swap robots without touching code. Field names:

    {
      "schema": "iklearn-robot-v1",
      "name": "planar-5",
      "dim": 2,
      "frames": [
        {"offset": {"xyz": [0.0, 0.0], "angle": 0.0},
         "axis": null | "z" | [ax, ay, az],
         "limits": [lower, upper],            # omit for fixed frames
         "spheres": [{"center": [...], "radius": 0.05}, ...]},
        ...
      ],
      "tcp_frame": 5,
      "default_config": [0, 0, 0, 0, 0],
      "self_collision_pairs": [[0, 2], ...]
    }

2D offsets use {"xyz": [x, y], "angle": theta}; 3D offsets use
{"xyz": [x, y, z], "rpy": [roll, pitch, yaw]}. ``axis`` is null for fixed
frames; in 2D revolute frames use "z" (the implicit planar axis).
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .kinematics import Frame, Joint, Pose, RobotModel, Sphere

SCHEMA = "iklearn-robot-v1"


def planar_arm(
    n_dof: int = 5,
    link_length: float = 0.2,
    limits: tuple[float, float] = (-math.pi, math.pi),
    sphere_radius: float = 0.06,
    spheres_per_link: int = 2,
    name: str | None = None,
) -> RobotModel:
    """Planar N-DoF arm with equal links and spheres spaced along each link.

    Self-collision is checked between links at least two apart; adjacent
    links meet at their shared joint and are excluded.
    """
    frames = []
    for i in range(n_dof):
        offset = Pose.identity(2) if i == 0 else Pose.planar(link_length, 0.0)
        centers = (np.arange(spheres_per_link) + 0.5) / spheres_per_link * link_length
        spheres = tuple(Sphere(np.array([c, 0.0]), sphere_radius) for c in centers)
        frames.append(Frame(offset, Joint(limits[0], limits[1]), spheres))
    frames.append(Frame(Pose.planar(link_length, 0.0)))  # tool frame, no joint
    pairs = tuple((i, j) for i in range(n_dof) for j in range(i + 2, n_dof))
    return RobotModel(
        name=name or f"planar-{n_dof}",
        dim=2,
        frames=tuple(frames),
        tcp_frame_index=n_dof,
        default_config=np.zeros(n_dof),
        self_collision_pairs=pairs,
    )


def serial_arm_3d(
    n_dof: int = 7,
    link_length: float = 0.11,
    sphere_radius: float = 0.055,
    name: str | None = None,
) -> RobotModel:
    """Generic 3D serial arm with alternating roll/pitch axes (LWR-like layout)."""
    z = np.array([0.0, 0.0, 1.0])
    y = np.array([0.0, 1.0, 0.0])
    frames = []
    for i in range(n_dof):
        axis = z if i % 2 == 0 else y
        lim = 2.9 if i % 2 == 0 else 2.0
        offset = Pose.identity(3) if i == 0 else Pose.from_xyz_rpy([0.0, 0.0, link_length])
        centers = [link_length * 0.25, link_length * 0.75]
        spheres = tuple(Sphere(np.array([0.0, 0.0, c]), sphere_radius) for c in centers)
        frames.append(Frame(offset, Joint(-lim, lim, axis), spheres))
    frames.append(Frame(Pose.from_xyz_rpy([0.0, 0.0, link_length * 0.8])))
    pairs = tuple((i, j) for i in range(n_dof) for j in range(i + 2, n_dof))
    default = np.zeros(n_dof)
    default[1::2] = 0.5  # slight elbow bend, keeps the home pose away from the coaxial singularity
    return RobotModel(
        name=name or f"serial3d-{n_dof}",
        dim=3,
        frames=tuple(frames),
        tcp_frame_index=n_dof,
        default_config=default,
        self_collision_pairs=pairs,
    )


# -- serialization -----------------------------------------------------------


def robot_to_dict(robot: RobotModel) -> dict:
    frames = []
    for f in robot.frames:
        off: dict = {"xyz": f.offset.position.tolist()}
        if robot.dim == 2:
            off["angle"] = float(np.arctan2(f.offset.rotation[1, 0], f.offset.rotation[0, 0]))
        else:
            off["rpy"] = _rpy_from_matrix(f.offset.rotation)
        entry: dict = {"offset": off, "axis": None}
        if f.joint is not None:
            entry["axis"] = "z" if robot.dim == 2 else f.joint.axis.tolist()
            entry["limits"] = [f.joint.lower, f.joint.upper]
        entry["spheres"] = [{"center": s.center.tolist(), "radius": s.radius} for s in f.spheres]
        frames.append(entry)
    return {
        "schema": SCHEMA,
        "name": robot.name,
        "dim": robot.dim,
        "frames": frames,
        "tcp_frame": robot.tcp_frame_index,
        "default_config": robot.default_config.tolist(),
        "self_collision_pairs": [list(p) for p in robot.self_collision_pairs],
    }


def robot_from_dict(data: dict) -> RobotModel:
    if data.get("schema") != SCHEMA:
        raise ValueError(f"unsupported robot schema: {data.get('schema')!r}")
    dim = int(data["dim"])
    frames = []
    for entry in data["frames"]:
        off = entry["offset"]
        if dim == 2:
            pose = Pose.planar(*off["xyz"], off.get("angle", 0.0))
        else:
            pose = Pose.from_xyz_rpy(off["xyz"], off.get("rpy", (0.0, 0.0, 0.0)))
        axis = entry.get("axis")
        joint = None
        if axis is not None:
            lo, hi = entry["limits"]
            joint = Joint(lo, hi, None if axis == "z" and dim == 2 else np.asarray(axis, float))
        spheres = tuple(Sphere(np.array(s["center"]), s["radius"]) for s in entry.get("spheres", []))
        frames.append(Frame(pose, joint, spheres))
    return RobotModel(
        name=data["name"],
        dim=dim,
        frames=tuple(frames),
        tcp_frame_index=int(data["tcp_frame"]),
        default_config=np.asarray(data["default_config"], float),
        self_collision_pairs=tuple(tuple(p) for p in data.get("self_collision_pairs", [])),
    )


def save_robot(robot: RobotModel, path) -> None:
    Path(path).write_text(json.dumps(robot_to_dict(robot), indent=2))


def load_robot(path) -> RobotModel:
    return robot_from_dict(json.loads(Path(path).read_text()))


def robot_id(robot: RobotModel) -> str:
    """Stable identifier: name plus digest of the canonical description."""
    blob = json.dumps(robot_to_dict(robot), sort_keys=True).encode()
    return f"{robot.name}:{hashlib.sha256(blob).hexdigest()[:16]}"


def _rpy_from_matrix(R: np.ndarray) -> list[float]:
    sy = math.hypot(R[0, 0], R[1, 0])
    if sy < 1e-12:
        return [math.atan2(-R[1, 2], R[1, 1]), math.atan2(-R[2, 0], sy), 0.0]
    return [
        math.atan2(R[2, 1], R[2, 2]),
        math.atan2(-R[2, 0], sy),
        math.atan2(R[1, 0], R[0, 0]),
    ]
