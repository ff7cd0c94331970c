"""IK objective: frame costs, collision costs, regularization, and analytic gradients.

The total cost splits into a frame part (position + weighted rotation error at
the TCP) and an auxiliary part (world collision, self collision, closeness to
the default configuration). A collision-free solution has zero collision cost;
penetrations are penalized through a C1 hinge on signed clearances, chained
through the interpolated distance field.

All evaluators accept batched configurations (leading axes on q) and, for the
array-level entry point, batched targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import Pose, RobotModel, fk_arrays, point_jacobian_arrays, rot2_angle, sphere_arrays
from .validation import check_joint_config, check_rotation
from .world import DistanceField, query_distance

DEFAULT_CLIP_MARGIN = 0.01


@dataclass(frozen=True)
class ObjectiveWeights:
    """Term weights; collision terms must dominate the length term."""

    lambda_rot: float = 1.0
    lambda_world: float = 100.0
    lambda_self: float = 100.0
    lambda_length: float = 0.01
    clip_margin: float = DEFAULT_CLIP_MARGIN

    def __post_init__(self):
        vals = (self.lambda_rot, self.lambda_world, self.lambda_self, self.lambda_length)
        if any(v < 0 for v in vals):
            raise ValueError("objective weights must be nonnegative")
        if min(self.lambda_world, self.lambda_self) < self.lambda_length:
            raise ValueError("collision weights must be >= length weight")

    def to_dict(self) -> dict:
        return {
            "lambda_rot": self.lambda_rot,
            "lambda_world": self.lambda_world,
            "lambda_self": self.lambda_self,
            "lambda_length": self.lambda_length,
            "clip_margin": self.clip_margin,
        }

    @staticmethod
    def from_dict(d: dict) -> "ObjectiveWeights":
        return ObjectiveWeights(**d)


@dataclass(frozen=True)
class IKProblem:
    """One IK query: robot, world distance field, target TCP pose, weights."""

    robot: RobotModel
    field: DistanceField
    target: Pose
    weights: ObjectiveWeights = ObjectiveWeights()

    def __post_init__(self):
        check_rotation(self.target.rotation, self.robot.dim)


def smooth_clip(d, margin: float):
    """C1 hinge: 0.5 * min(d - margin, 0)^2; zero for clearances past the margin."""
    v = np.minimum(np.asarray(d, dtype=float) - margin, 0.0)
    return 0.5 * v * v


def smooth_clip_derivative(d, margin: float):
    return np.minimum(np.asarray(d, dtype=float) - margin, 0.0)


@dataclass
class ObjectiveValue:
    """All cost terms for a (batch of) configuration(s), plus optional gradients."""

    u_pos: np.ndarray
    u_rot: np.ndarray
    u_world: np.ndarray
    u_self: np.ndarray
    u_length: np.ndarray
    u_frame: np.ndarray
    u_aux: np.ndarray
    total: np.ndarray
    grad_total: np.ndarray | None = None
    grad_aux: np.ndarray | None = None


def evaluate_terms(
    robot: RobotModel,
    field: DistanceField,
    target_position: np.ndarray,
    target_rotation: np.ndarray,
    weights: ObjectiveWeights,
    q,
    need_grad: bool = True,
) -> ObjectiveValue:
    """Array-level evaluation; targets broadcast against the batch shape of q."""
    q = check_joint_config(q, robot.n_dof)
    D = robot.dim
    Rs, ps = fk_arrays(robot, q)
    tcp = robot.tcp_frame_index
    p = ps[..., tcp, :]
    R = Rs[..., tcp, :, :]
    p_bar = np.asarray(target_position, dtype=float)
    R_bar = np.asarray(target_rotation, dtype=float)

    # frame terms
    dp = p - p_bar
    u_pos = 0.5 * np.einsum("...d,...d->...", dp, dp)
    if D == 2:
        dtheta = rot2_angle(R) - rot2_angle(R_bar)
        u_rot = 1.0 - np.cos(dtheta)
    else:
        M = R @ np.swapaxes(R_bar, -1, -2)
        trace = M[..., 0, 0] + M[..., 1, 1] + M[..., 2, 2]
        u_rot = 0.5 * (3.0 - trace)

    # collision terms
    margin = weights.clip_margin
    centers, radii, frame_of = sphere_arrays(robot, Rs, ps)
    dist, dgrad = query_distance(field, centers)
    world_terms = smooth_clip(dist - radii, margin)
    u_world = world_terms.sum(axis=-1)

    ia, ib = robot.sphere_pair_table
    if len(ia):
        delta = centers[..., ia, :] - centers[..., ib, :]
        sep = np.linalg.norm(delta, axis=-1)
        self_terms = smooth_clip(sep - radii[ia] - radii[ib], margin)
        u_self = self_terms.sum(axis=-1)
    else:
        sep = None
        u_self = np.zeros(q.shape[:-1])

    # length term
    dq = q - robot.default_config
    u_length = 0.5 * np.einsum("...k,...k->...", dq, dq)

    w = weights
    u_frame = u_pos + w.lambda_rot * u_rot
    u_aux = w.lambda_world * u_world + w.lambda_self * u_self + w.lambda_length * u_length
    total = u_frame + u_aux
    out = ObjectiveValue(u_pos, u_rot, u_world, u_self, u_length, u_frame, u_aux, total)
    if not need_grad:
        return out

    # gradient of the frame part
    J_tcp = point_jacobian_arrays(robot, Rs, ps, p[..., None, :], np.array([tcp]))[..., 0, :, :]
    g_pos = np.einsum("...d,...dk->...k", dp, J_tcp)
    jfi = robot.joint_frame_index
    active = (jfi <= tcp).astype(float)
    if D == 2:
        g_rot = np.sin(dtheta)[..., None] * active
    else:
        from .kinematics import _joint_origins_axes

        _, axes = _joint_origins_axes(robot, Rs, ps)
        m = 0.5 * np.stack(
            [
                M[..., 2, 1] - M[..., 1, 2],
                M[..., 0, 2] - M[..., 2, 0],
                M[..., 1, 0] - M[..., 0, 1],
            ],
            axis=-1,
        )
        g_rot = np.einsum("...jd,...d->...j", axes, m) * active

    # gradient of the world-collision part
    cprime = smooth_clip_derivative(dist - radii, margin)
    if np.any(cprime != 0.0) and len(radii):
        J_sph = point_jacobian_arrays(robot, Rs, ps, centers, frame_of)
        g_world = np.einsum("...s,...sd,...sdk->...k", cprime, dgrad, J_sph)
    else:
        J_sph = None
        g_world = np.zeros_like(q)

    # gradient of the self-collision part
    if sep is not None:
        sprime = smooth_clip_derivative(sep - radii[ia] - radii[ib], margin)
        if np.any(sprime != 0.0):
            if J_sph is None:
                J_sph = point_jacobian_arrays(robot, Rs, ps, centers, frame_of)
            safe = np.where(sep == 0.0, 1.0, sep)
            direction = delta / safe[..., None]
            J_rel = J_sph[..., ia, :, :] - J_sph[..., ib, :, :]
            g_self = np.einsum("...p,...pd,...pdk->...k", sprime, direction, J_rel)
        else:
            g_self = np.zeros_like(q)
    else:
        g_self = np.zeros_like(q)

    grad_aux = w.lambda_world * g_world + w.lambda_self * g_self + w.lambda_length * dq
    out.grad_total = g_pos + w.lambda_rot * g_rot + grad_aux
    out.grad_aux = grad_aux
    return out


def evaluate(problem: IKProblem, q, need_grad: bool = True) -> ObjectiveValue:
    return evaluate_terms(
        problem.robot,
        problem.field,
        problem.target.position,
        problem.target.rotation,
        problem.weights,
        q,
        need_grad=need_grad,
    )


# -- spec-level term accessors -------------------------------------------------


def cost_position(problem: IKProblem, q):
    return evaluate(problem, q, need_grad=False).u_pos


def cost_rotation(problem: IKProblem, q):
    return evaluate(problem, q, need_grad=False).u_rot


def cost_world_collision(problem: IKProblem, q):
    return evaluate(problem, q, need_grad=False).u_world


def cost_self_collision(problem: IKProblem, q):
    return evaluate(problem, q, need_grad=False).u_self


def cost_length(problem: IKProblem, q):
    return evaluate(problem, q, need_grad=False).u_length


def cost_total(problem: IKProblem, q):
    return evaluate(problem, q, need_grad=False).total


def cost_split(problem: IKProblem, q):
    v = evaluate(problem, q, need_grad=False)
    return v.u_frame, v.u_aux


def grad_total(problem: IKProblem, q):
    return evaluate(problem, q).grad_total


def grad_aux(problem: IKProblem, q):
    return evaluate(problem, q).grad_aux


def is_collision_free(problem: IKProblem, q) -> np.ndarray | bool:
    """Feasibility certificate for the collision terms: both exactly zero."""
    v = evaluate(problem, q, need_grad=False)
    free = (v.u_world == 0.0) & (v.u_self == 0.0)
    return bool(free) if np.isscalar(free) or free.ndim == 0 else free
