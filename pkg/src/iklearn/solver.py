"""Two-stage numerical IK with multistart.

Stage one drives the TCP onto the target pose by iterating a damped
pseudo-inverse of the geometric Jacobian on the task-space error twist.
Stage two descends the auxiliary cost (collisions, closeness to the default
configuration) inside the TCP nullspace, re-projecting after every step so the
end-effector constraint stays satisfied.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .kinematics import RobotModel, fk_arrays, point_jacobian_arrays, rot2_angle
from .objective import IKProblem, evaluate
from .validation import check_joint_config


@dataclass(frozen=True)
class SolverConfig:
    max_projection_iters: int = 50
    max_nullspace_iters: int = 10
    pos_tol: float = 1e-4
    rot_tol: float = 1e-3
    damping: float = 1e-6
    step_size: float = 1.0
    n_multistarts: int = 20
    repair_iters: int = 5  # projection repairs allowed inside one nullspace iteration
    max_backtracks: int = 6
    stall_improvement: float = 1e-12  # absolute U_A decrease below which descent stops

    def __post_init__(self):
        if self.pos_tol <= 0 or self.rot_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.damping < 0:
            raise ValueError("damping must be nonnegative")
        if self.max_projection_iters < 1 or self.max_nullspace_iters < 1:
            raise ValueError("iteration budgets must be >= 1")

    def to_dict(self) -> dict:
        return {
            "max_projection_iters": self.max_projection_iters,
            "max_nullspace_iters": self.max_nullspace_iters,
            "pos_tol": self.pos_tol,
            "rot_tol": self.rot_tol,
            "damping": self.damping,
            "step_size": self.step_size,
            "n_multistarts": self.n_multistarts,
            "repair_iters": self.repair_iters,
            "max_backtracks": self.max_backtracks,
            "stall_improvement": self.stall_improvement,
        }

    @staticmethod
    def from_dict(d: dict) -> "SolverConfig":
        return SolverConfig(**d)


@dataclass
class IKResult:
    q: np.ndarray
    feasible: bool
    pos_error: float
    rot_error: float
    cost: float
    iterations_used: int
    start_label: str
    aux_trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "q": np.asarray(self.q).tolist(),
            "feasible": bool(self.feasible),
            "pos_error": float(self.pos_error),
            "rot_error": float(self.rot_error),
            "cost": float(self.cost),
            "iterations_used": int(self.iterations_used),
            "start_label": self.start_label,
        }

    @staticmethod
    def from_dict(d: dict) -> "IKResult":
        return IKResult(
            q=np.asarray(d["q"], float),
            feasible=bool(d["feasible"]),
            pos_error=float(d["pos_error"]),
            rot_error=float(d["rot_error"]),
            cost=float(d["cost"]),
            iterations_used=int(d["iterations_used"]),
            start_label=d["start_label"],
        )


def _residual_and_jacobian(problem: IKProblem, q: np.ndarray, with_jacobian: bool = True):
    """Task-space error twist toward the target, plus the TCP Jacobian."""
    robot = problem.robot
    Rs, ps = fk_arrays(robot, q)
    tcp = robot.tcp_frame_index
    p = ps[tcp]
    R = Rs[tcp]
    target = problem.target
    e_pos = target.position - p
    if robot.dim == 2:
        dtheta = rot2_angle(target.rotation) - rot2_angle(R)
        dtheta = (dtheta + np.pi) % (2 * np.pi) - np.pi
        e_rot = np.array([dtheta])
    else:
        e_rot = Rotation.from_matrix(target.rotation @ R.T).as_rotvec()
    residual = np.concatenate([e_pos, e_rot])
    pos_error = float(np.linalg.norm(e_pos))
    rot_error = float(np.linalg.norm(e_rot))
    if not with_jacobian:
        return residual, None, pos_error, rot_error
    Jp = point_jacobian_arrays(robot, Rs, ps, p[None, :], np.array([tcp]))[0]
    jfi = robot.joint_frame_index
    active = jfi <= tcp
    if robot.dim == 2:
        Jr = active.astype(float)[None, :]
    else:
        from .kinematics import _joint_origins_axes

        _, axes = _joint_origins_axes(robot, Rs, ps)
        Jr = (axes * active[:, None]).T
    return residual, np.vstack([Jp, Jr]), pos_error, rot_error


def task_residual(problem: IKProblem, q) -> np.ndarray:
    """Error twist (position error, then rotation error) that moves the TCP to the target."""
    q = check_joint_config(q, problem.robot.n_dof)
    residual, _, _, _ = _residual_and_jacobian(problem, q, with_jacobian=False)
    return residual


def pose_errors(problem: IKProblem, q) -> tuple[float, float]:
    _, _, pos_error, rot_error = _residual_and_jacobian(problem, q, with_jacobian=False)
    return pos_error, rot_error


def damped_pinv_step(J: np.ndarray, residual: np.ndarray, damping: float) -> np.ndarray:
    """Levenberg-style step: J^T (J J^T + damping^2 I)^-1 residual."""
    JJt = J @ J.T
    JJt[np.diag_indices_from(JJt)] += damping * damping
    return J.T @ np.linalg.solve(JJt, residual)


def nullspace_projector(J: np.ndarray) -> np.ndarray:
    """Exact projector onto the Jacobian nullspace, N = I - pinv(J) J."""
    n = J.shape[1]
    return np.eye(n) - np.linalg.pinv(J) @ J


def _clamp(robot: RobotModel, q: np.ndarray) -> np.ndarray:
    lo, hi = robot.limits
    return np.clip(q, lo, hi)


def _converged(cfg: SolverConfig, pos_error: float, rot_error: float) -> bool:
    return pos_error <= cfg.pos_tol and rot_error <= cfg.rot_tol


def project_to_target(problem: IKProblem, q0, cfg: SolverConfig) -> tuple[np.ndarray, bool, int]:
    """Iterate damped pseudo-inverse steps until the TCP pose is within tolerance.

    Damping is raised temporarily whenever a step fails to reduce the residual
    (singular stretches); non-convergence is reported through the flag.
    """
    robot = problem.robot
    q = _clamp(robot, check_joint_config(np.array(q0, dtype=float), robot.n_dof))
    residual, J, pos_error, rot_error = _residual_and_jacobian(problem, q)
    iters = 0
    for _ in range(cfg.max_projection_iters):
        if _converged(cfg, pos_error, rot_error):
            return q, True, iters
        iters += 1
        damping = max(cfg.damping, 1e-12)
        norm = np.linalg.norm(residual)
        for _ in range(8):
            q_new = _clamp(robot, q + damped_pinv_step(J, residual, damping))
            r_new, J_new, pe, re_ = _residual_and_jacobian(problem, q_new)
            if np.linalg.norm(r_new) < norm or _converged(cfg, pe, re_):
                q, residual, J, pos_error, rot_error = q_new, r_new, J_new, pe, re_
                break
            damping *= 10.0
        else:
            break  # stalled even with heavy damping
    return q, _converged(cfg, pos_error, rot_error), iters


def nullspace_descent(problem: IKProblem, q0, cfg: SolverConfig) -> tuple[np.ndarray, list]:
    """Descend the auxiliary cost inside the TCP nullspace, re-projecting each step.

    Steps that fail to keep the TCP on target or that increase the auxiliary
    cost are backtracked by halving the step size; the recorded trace of
    accepted auxiliary costs is therefore non-increasing.
    """
    robot = problem.robot
    q = check_joint_config(np.array(q0, dtype=float), robot.n_dof)
    repair_cfg = SolverConfig(
        max_projection_iters=cfg.repair_iters,
        max_nullspace_iters=1,
        pos_tol=cfg.pos_tol,
        rot_tol=cfg.rot_tol,
        damping=cfg.damping,
    )
    value = evaluate(problem, q, need_grad=False)
    trace = [float(value.u_aux)]
    for _ in range(cfg.max_nullspace_iters):
        grad = evaluate(problem, q).grad_aux
        _, J, _, _ = _residual_and_jacobian(problem, q)
        direction = -(nullspace_projector(J) @ grad)
        limit_mask = _at_limit_moving_out(robot, q, direction)
        direction[limit_mask] = 0.0
        if np.linalg.norm(direction) < 1e-12:
            break
        step = cfg.step_size
        accepted = False
        for _ in range(cfg.max_backtracks):
            cand = _clamp(robot, q + step * direction)
            cand, ok, _ = project_to_target(problem, cand, repair_cfg)
            if ok:
                u_cand = float(evaluate(problem, cand, need_grad=False).u_aux)
                if u_cand <= trace[-1] + 1e-15:
                    q = cand
                    trace.append(u_cand)
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            break  # stalled: no admissible step found
    return q, trace


def _at_limit_moving_out(robot: RobotModel, q: np.ndarray, direction: np.ndarray) -> np.ndarray:
    lo, hi = robot.limits
    return ((q <= lo) & (direction < 0)) | ((q >= hi) & (direction > 0))


def solve(
    problem: IKProblem,
    initial_guesses,
    cfg: SolverConfig = SolverConfig(),
    labels: list[str] | None = None,
) -> IKResult:
    """Run both solver stages from every guess and keep the best result.

    Feasible results (TCP within tolerance, zero collision cost) win over
    infeasible ones; ties are broken by total cost, then guess order.
    """
    guesses = [check_joint_config(np.asarray(g, float), problem.robot.n_dof) for g in initial_guesses]
    if not guesses:
        raise ValueError("at least one initial guess is required")
    if labels is None:
        labels = [f"guess-{i}" for i in range(len(guesses))]
    best: IKResult | None = None
    for label, q0 in zip(labels, guesses):
        q, converged, proj_iters = project_to_target(problem, q0, cfg)
        trace: list = []
        ns_iters = 0
        if converged:
            q, trace = nullspace_descent(problem, q, cfg)
            ns_iters = max(len(trace) - 1, 0)
        value = evaluate(problem, q, need_grad=False)
        pos_error, rot_error = pose_errors(problem, q)
        feasible = (
            _converged(cfg, pos_error, rot_error)
            and value.u_world == 0.0
            and value.u_self == 0.0
        )
        result = IKResult(
            q=q,
            feasible=feasible,
            pos_error=pos_error,
            rot_error=rot_error,
            cost=float(value.total),
            iterations_used=proj_iters + ns_iters,
            start_label=label,
            aux_trace=trace,
        )
        if best is None or _better(result, best):
            best = result
    return best


def _better(a: IKResult, b: IKResult) -> bool:
    if a.feasible != b.feasible:
        return a.feasible
    return a.cost < b.cost


def verify_result(problem: IKProblem, result: IKResult, cfg: SolverConfig) -> bool:
    """Independent re-verification of a feasible flag from fresh FK and costs."""
    pos_error, rot_error = pose_errors(problem, result.q)
    value = evaluate(problem, result.q, need_grad=False)
    ok = (
        pos_error <= cfg.pos_tol
        and rot_error <= cfg.rot_tol
        and value.u_world == 0.0
        and value.u_self == 0.0
    )
    return ok == result.feasible if not result.feasible else ok


def random_guesses(robot: RobotModel, seed: int, n: int) -> list[np.ndarray]:
    """Uniform configurations inside the joint limits, deterministic in the seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi = robot.limits
    rng = np.random.default_rng(seed)
    return list(rng.uniform(lo, hi, size=(n, robot.n_dof)))


def solve_timed(problem: IKProblem, initial_guesses, cfg: SolverConfig = SolverConfig(), labels=None):
    """solve() plus wall-clock seconds, for benchmarking."""
    t0 = time.perf_counter()
    result = solve(problem, initial_guesses, cfg, labels)
    return result, time.perf_counter() - t0
