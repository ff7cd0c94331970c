"""Objective tests: term values, clip behavior, gradients vs. finite differences."""

import math

import numpy as np
import pytest

from iklearn.kinematics import Frame, Joint, Pose, RobotModel, Sphere, sphere_positions, tcp_pose
from iklearn.objective import (
    IKProblem,
    ObjectiveWeights,
    cost_length,
    cost_position,
    cost_rotation,
    cost_self_collision,
    cost_split,
    cost_total,
    cost_world_collision,
    evaluate,
    grad_aux,
    grad_total,
    is_collision_free,
    smooth_clip,
    smooth_clip_derivative,
)
from iklearn.robots import planar_arm, serial_arm_3d
from iklearn.world import DistanceField, VoxelGrid, build_distance_field, generate_world, query_distance


def free_field(dim=2, extent=3.0, n=16):
    shape = (n,) * dim
    vs = extent / n
    occ = np.zeros(shape, bool)
    return build_distance_field(VoxelGrid(shape, vs, np.full(dim, -extent / 2), occ))


def constant_field(value, dim=2, extent=3.0, n=8):
    """Field reporting a fixed distance everywhere (handcrafted for term checks)."""
    shape = (n,) * dim
    grid = VoxelGrid(shape, extent / n, np.full(dim, -extent / 2), np.zeros(shape, bool))
    dist = np.full(shape, float(value))
    grad = np.zeros(shape + (dim,))
    return DistanceField(grid, dist, grad)


def noisy_problem(seed, robot=None, weights=None):
    robot = robot or planar_arm(5)
    rng = np.random.default_rng(seed)
    grid = generate_world(seed, (48,) * robot.dim, 2.6 / 48)
    field = build_distance_field(grid)
    lo, hi = robot.limits
    target = tcp_pose(robot, rng.uniform(lo, hi))
    return IKProblem(robot, field, target, weights or ObjectiveWeights()), rng


class TestFrameTerms:
    def test_position_zero_on_target(self):
        robot = planar_arm(3)
        q = np.array([0.2, -0.4, 0.1])
        problem = IKProblem(robot, free_field(), tcp_pose(robot, q))
        assert cost_position(problem, q) == pytest.approx(0.0, abs=1e-20)

    def test_position_offset_value(self):
        robot = planar_arm(2, link_length=1.0)
        target = Pose(tcp_pose(robot, [0.0, 0.0]).position + np.array([0.3, 0.4]), np.eye(2))
        problem = IKProblem(robot, free_field(), target)
        assert cost_position(problem, [0.0, 0.0]) == pytest.approx(0.125, rel=1e-12)

    def test_rotation_identity(self):
        robot = serial_arm_3d(7)
        q = robot.default_config
        problem = IKProblem(robot, free_field(3), tcp_pose(robot, q))
        assert cost_rotation(problem, q) == pytest.approx(0.0, abs=1e-12)

    def test_rotation_pi_about_z(self):
        robot = serial_arm_3d(7)
        q = robot.default_config
        tcp = tcp_pose(robot, q)
        from iklearn.kinematics import rot_axis

        flipped = Pose(tcp.position, rot_axis(np.array([0.0, 0.0, 1.0]), math.pi) @ tcp.rotation)
        problem = IKProblem(robot, free_field(3), flipped)
        assert cost_rotation(problem, q) == pytest.approx(2.0, rel=1e-12)

    def test_rotation_2d_quarter_turn(self):
        robot = planar_arm(2)
        tcp = tcp_pose(robot, [0.0, 0.0])
        from iklearn.kinematics import rot2

        problem = IKProblem(robot, free_field(), Pose(tcp.position, rot2(math.pi / 2)))
        assert cost_rotation(problem, [0.0, 0.0]) == pytest.approx(1.0, rel=1e-12)


class TestSmoothClip:
    def test_zero_at_margin(self):
        assert smooth_clip(0.05, 0.05) == 0.0
        assert smooth_clip(1.0, 0.05) == 0.0

    def test_quadratic_inside(self):
        assert smooth_clip(0.05 - 0.1, 0.05) == pytest.approx(0.005, rel=1e-12)

    def test_c1_join(self):
        assert smooth_clip_derivative(0.05, 0.05) == 0.0
        h = 1e-8
        fd = (smooth_clip(0.05 + h, 0.05) - smooth_clip(0.05 - h, 0.05)) / (2 * h)
        assert abs(fd) < 1e-7

    def test_derivative_matches_fd_inside(self):
        d = np.linspace(-0.2, 0.2, 41)
        h = 1e-7
        fd = (smooth_clip(d + h, 0.0) - smooth_clip(d - h, 0.0)) / (2 * h)
        np.testing.assert_allclose(smooth_clip_derivative(d, 0.0), fd, atol=1e-6)


def one_sphere_robot(radius):
    frames = (
        Frame(Pose.identity(2), Joint(-math.pi, math.pi), (Sphere(np.zeros(2), radius),)),
        Frame(Pose.planar(0.3, 0.0)),
    )
    return RobotModel("one-sphere", 2, frames, 1, np.zeros(1))


class TestCollisionTerms:
    def test_free_space_zero(self):
        robot = planar_arm(5)
        problem = IKProblem(robot, free_field(), tcp_pose(robot, np.zeros(5)))
        assert cost_world_collision(problem, np.zeros(5)) == 0.0

    def test_single_term_value(self):
        robot = one_sphere_robot(0.1)
        field = constant_field(0.05)
        weights = ObjectiveWeights(clip_margin=0.0)
        problem = IKProblem(robot, field, tcp_pose(robot, [0.0]), weights)
        assert cost_world_collision(problem, [0.0]) == pytest.approx(0.5 * 0.05**2, rel=1e-12)

    def test_two_sphere_self_collision_value(self):
        frames = (
            Frame(Pose.identity(2), Joint(-4, 4), (Sphere(np.zeros(2), 0.1),)),
            Frame(Pose.planar(0.15, 0.0), Joint(-4, 4), (Sphere(np.zeros(2), 0.1),)),
            Frame(Pose.planar(0.2, 0.0)),
        )
        robot = RobotModel("pair", 2, frames, 2, np.zeros(2), self_collision_pairs=((0, 1),))
        weights = ObjectiveWeights(clip_margin=0.0)
        problem = IKProblem(robot, free_field(), tcp_pose(robot, [0.0, 0.0]), weights)
        # centers 0.15 apart, radii sum 0.2 -> penetration 0.05
        assert cost_self_collision(problem, [0.0, 0.0]) == pytest.approx(0.5 * 0.05**2, rel=1e-12)

    def test_straight_arm_self_free(self):
        robot = planar_arm(2)
        problem = IKProblem(robot, free_field(), tcp_pose(robot, np.zeros(2)))
        assert cost_self_collision(problem, np.zeros(2)) == 0.0

    def test_folded_arm_matches_double_loop_oracle(self):
        robot = planar_arm(5)
        q = np.array([0.3, 2.9, -2.9, 2.9, -2.9])  # tightly folded
        problem = IKProblem(robot, free_field(), tcp_pose(robot, np.zeros(5)))
        margin = problem.weights.clip_margin
        spheres = sphere_positions(robot, q)
        frame_of = robot.sphere_table[0]
        expected = 0.0
        for i, j in robot.self_collision_pairs:
            for a, (ca, ra) in enumerate(spheres):
                if frame_of[a] != i:
                    continue
                for b, (cb, rb) in enumerate(spheres):
                    if frame_of[b] != j:
                        continue
                    d = np.linalg.norm(ca - cb) - ra - rb
                    expected += 0.5 * min(d - margin, 0.0) ** 2
        assert expected > 0  # scene genuinely folds into itself
        assert cost_self_collision(problem, q) == pytest.approx(expected, rel=1e-12)

    def test_feasibility_certificate_iff_clearance(self):
        robot = planar_arm(5)
        rng = np.random.default_rng(12)
        grid = generate_world(1, (48, 48), 2.6 / 48)
        field = build_distance_field(grid)
        problem = IKProblem(robot, field, tcp_pose(robot, np.zeros(5)))
        margin = problem.weights.clip_margin
        lo, hi = robot.limits
        checked_free = checked_hit = 0
        for _ in range(200):
            q = rng.uniform(lo, hi)
            clear = True
            for c, r in sphere_positions(robot, q):
                d, _ = query_distance(field, c)
                clear &= (d - r) >= margin
            frame_of = robot.sphere_table[0]
            spheres = sphere_positions(robot, q)
            for i, j in robot.self_collision_pairs:
                for a, (ca, ra) in enumerate(spheres):
                    if frame_of[a] != i:
                        continue
                    for b, (cb, rb) in enumerate(spheres):
                        if frame_of[b] == j:
                            clear &= (np.linalg.norm(ca - cb) - ra - rb) >= margin
            assert is_collision_free(problem, q) == clear
            checked_free += clear
            checked_hit += not clear
        assert checked_free > 0 and checked_hit > 0


class TestLengthAndTotals:
    def test_length_zero_at_default(self):
        robot = planar_arm(3)
        problem = IKProblem(robot, free_field(), tcp_pose(robot, np.zeros(3)))
        assert cost_length(problem, robot.default_config) == 0.0

    def test_length_value(self):
        robot = planar_arm(2)
        problem = IKProblem(robot, free_field(), tcp_pose(robot, np.zeros(2)))
        assert cost_length(problem, [0.1, 0.2]) == pytest.approx(0.025, rel=1e-12)

    def test_length_gradient_exact(self):
        problem, rng = noisy_problem(3)
        q = rng.uniform(-1, 1, 5)
        weights = ObjectiveWeights(lambda_rot=0, lambda_world=1, lambda_self=1, lambda_length=1)
        free = IKProblem(problem.robot, free_field(), problem.target, weights)
        g = grad_aux(free, q)
        if is_collision_free(free, q):
            np.testing.assert_allclose(g, q - problem.robot.default_config, atol=1e-14)

    def test_split_sums_to_total(self):
        problem, rng = noisy_problem(4)
        for _ in range(20):
            q = rng.uniform(-math.pi, math.pi, 5)
            uf, ua = cost_split(problem, q)
            assert cost_total(problem, q) == uf + ua

    def test_only_length_weight(self):
        robot = planar_arm(4)
        weights = ObjectiveWeights(lambda_rot=0, lambda_world=0.5, lambda_self=0.5, lambda_length=0.5)
        q = np.array([0.3, 0.0, -0.2, 0.1])
        target = tcp_pose(robot, q)
        problem = IKProblem(robot, free_field(), target, weights)
        # on-target and collision-free: only the length term is active
        assert cost_total(problem, q) == pytest.approx(0.5 * cost_length(problem, q), rel=1e-12)

    def test_all_terms_zero(self):
        robot = planar_arm(3)
        q = robot.default_config
        problem = IKProblem(robot, free_field(), tcp_pose(robot, q))
        assert cost_total(problem, q) == 0.0


def fd_gradient(problem, q, h=1e-6):
    g = np.zeros_like(np.asarray(q, float))
    for k in range(len(g)):
        qp, qm = np.array(q, float), np.array(q, float)
        qp[k] += h
        qm[k] -= h
        g[k] = (cost_total(problem, qp) - cost_total(problem, qm)) / (2 * h)
    return g


def fd_gradient_aux(problem, q, h=1e-6):
    g = np.zeros_like(np.asarray(q, float))
    for k in range(len(g)):
        qp, qm = np.array(q, float), np.array(q, float)
        qp[k] += h
        qm[k] -= h
        _, uap = cost_split(problem, qp)
        _, uam = cost_split(problem, qm)
        g[k] = (uap - uam) / (2 * h)
    return g


class TestGradients:
    def test_zero_at_unconstrained_minimum(self):
        robot = planar_arm(5)
        q = robot.default_config
        problem = IKProblem(robot, free_field(), tcp_pose(robot, q))
        np.testing.assert_allclose(grad_total(problem, q), 0.0, atol=1e-10)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_matches_finite_differences(self, dim):
        robot = planar_arm(5) if dim == 2 else serial_arm_3d(7)
        rng = np.random.default_rng(100 + dim)
        lo, hi = robot.limits
        n_checked = 0
        for trial in range(50):
            grid = generate_world(trial, (32,) * dim, (2.6 if dim == 2 else 2.0) / 32)
            field = build_distance_field(grid)
            target = tcp_pose(robot, rng.uniform(lo, hi))
            problem = IKProblem(robot, field, target)
            q = rng.uniform(lo, hi)
            g = grad_total(problem, q)
            g_fd = fd_gradient(problem, q)
            scale = max(np.linalg.norm(g_fd), 1e-2)
            assert np.linalg.norm(g - g_fd) / scale < 1e-4, f"trial {trial}"
            ga = grad_aux(problem, q)
            ga_fd = fd_gradient_aux(problem, q)
            scale = max(np.linalg.norm(ga_fd), 1e-2)
            assert np.linalg.norm(ga - ga_fd) / scale < 1e-4, f"aux trial {trial}"
            n_checked += 1
        assert n_checked == 50

    def test_position_gradient_fd(self):
        robot = planar_arm(2, link_length=1.0)
        target = Pose(np.array([0.7, 0.9]), np.eye(2))
        weights = ObjectiveWeights(lambda_rot=0, lambda_world=0, lambda_self=0, lambda_length=0)
        problem = IKProblem(robot, free_field(), target, weights)
        q = np.array([0.4, -0.3])
        np.testing.assert_allclose(grad_total(problem, q), fd_gradient(problem, q), atol=1e-7)

    def test_collision_free_aux_gradient_is_length_only(self):
        robot = planar_arm(5)
        problem = IKProblem(robot, free_field(), tcp_pose(robot, np.zeros(5)))
        q = np.array([0.3, -0.2, 0.25, 0.15, -0.1])
        assert is_collision_free(problem, q)
        np.testing.assert_allclose(
            grad_aux(problem, q), problem.weights.lambda_length * (q - robot.default_config), atol=1e-15
        )


class TestProperties:
    def test_nonnegativity(self):
        problem, rng = noisy_problem(21)
        for _ in range(100):
            q = rng.uniform(-math.pi, math.pi, 5)
            v = evaluate(problem, q, need_grad=False)
            assert min(v.u_pos, v.u_rot, v.u_world, v.u_self, v.u_length) >= 0.0

    def test_weight_monotonicity(self):
        problem, rng = noisy_problem(22)
        base = ObjectiveWeights()
        for _ in range(50):
            q = rng.uniform(-math.pi, math.pi, 5)
            u0 = cost_total(problem, q)
            for bump in (
                ObjectiveWeights(lambda_rot=2.0),
                ObjectiveWeights(lambda_world=150.0),
                ObjectiveWeights(lambda_self=150.0),
                ObjectiveWeights(lambda_length=0.02),
            ):
                p2 = IKProblem(problem.robot, problem.field, problem.target, bump)
                assert cost_total(p2, q) >= u0 - 1e-15

    def test_batched_matches_scalar(self):
        problem, rng = noisy_problem(23)
        Q = rng.uniform(-2, 2, (8, 5))
        v = evaluate(problem, Q)
        for b in range(8):
            vb = evaluate(problem, Q[b])
            assert v.total[b] == pytest.approx(vb.total, rel=1e-14)
            np.testing.assert_allclose(v.grad_total[b], vb.grad_total, atol=1e-13)

    def test_invalid_weights_rejected(self):
        with pytest.raises(ValueError):
            ObjectiveWeights(lambda_world=-1.0)
        with pytest.raises(ValueError):
            ObjectiveWeights(lambda_world=0.001, lambda_length=0.01)
