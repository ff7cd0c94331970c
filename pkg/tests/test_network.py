"""Network tests: output mapping, topology, exact backprop vs. finite differences."""

import math

import numpy as np
import pytest

from iklearn.kinematics import tcp_pose
from iklearn.network import (
    HeadOutput,
    backward,
    forward,
    frame_feature,
    frame_feature_dim,
    grad_flat_arrays,
    init_network,
    load_params,
    save_params,
    to_angles,
)
from iklearn.objective import IKProblem, ObjectiveWeights, evaluate
from iklearn.robots import planar_arm, robot_id
from iklearn.world import build_distance_field, encode_world, generate_world, make_bps


def tiny_setup(seed=0, n_world=6, twin=True, output_mode="unit_vector"):
    robot = planar_arm(3)
    params = init_network(
        seed, robot, n_world, trunk_widths=(4,), head_widths=(3,), twin=twin, output_mode=output_mode
    )
    rng = np.random.default_rng(seed + 1)
    x_w = rng.normal(size=n_world)
    x_f = rng.normal(size=frame_feature_dim(2))
    return robot, params, x_w, x_f


class TestToAngles:
    def test_unit_pair(self):
        lo, hi = np.array([-math.pi]), np.array([math.pi])
        assert to_angles(np.array([0.0, 1.0]), lo, hi)[0] == pytest.approx(math.pi / 2, rel=1e-14)

    def test_pair_three_four(self):
        lo, hi = np.array([-math.pi]), np.array([math.pi])
        got = to_angles(np.array([3.0, 4.0]), lo, hi)[0]
        assert got == pytest.approx(math.atan2(0.8, 0.6), rel=1e-14)

    def test_scale_invariance(self):
        lo, hi = np.array([-math.pi]), np.array([math.pi])
        for alpha in (0.3, 1.7, 2.9):
            big = to_angles(np.array([math.cos(alpha), math.sin(alpha)]), lo, hi)[0]
            tiny = to_angles(1e-6 * np.array([math.cos(alpha), math.sin(alpha)]), lo, hi)[0]
            assert big == pytest.approx(tiny, abs=1e-12)
            assert big == pytest.approx(alpha, abs=1e-12)

    def test_restricted_limits_midpoint(self):
        lo, hi = np.array([0.0]), np.array([math.pi])
        assert to_angles(np.array([1.0, 0.0]), lo, hi)[0] == pytest.approx(math.pi / 2, rel=1e-14)

    def test_degenerate_pair_maps_to_midpoint(self):
        lo, hi = np.array([-1.0]), np.array([3.0])
        assert to_angles(np.zeros(2), lo, hi)[0] == pytest.approx(1.0, rel=1e-14)

    def test_normalized_pairs_unit_norm(self):
        rng = np.random.default_rng(3)
        raw = rng.normal(size=(50, 2))
        norms = np.linalg.norm(raw, axis=-1)
        unit = raw / norms[:, None]
        assert np.abs(np.linalg.norm(unit, axis=-1) - 1.0).max() < 1e-12


class TestForward:
    def test_zero_weight_network_outputs_midpoint(self):
        robot, params, x_w, x_f = tiny_setup()
        for stack in (params.trunk, params.head_a, params.head_b):
            for W, b in stack:
                W[:] = 0.0
                b[:] = 0.0
        out, _ = forward(params, x_w, x_f)
        lo, hi = robot.limits
        mid = 0.5 * (lo + hi)
        np.testing.assert_allclose(out.q_a, mid, atol=1e-15)
        np.testing.assert_allclose(out.q_b, mid, atol=1e-15)

    def test_outputs_within_limits_always(self):
        robot, params, _, _ = tiny_setup()
        rng = np.random.default_rng(7)
        lo, hi = robot.limits
        for _ in range(100):
            out, _ = forward(params, rng.normal(size=6) * 10, rng.normal(size=4) * 10)
            for q in (out.q_a, out.q_b):
                assert np.all(q >= lo) and np.all(q <= hi)

    def test_trunk_perturbation_touches_both_heads(self):
        _, params, x_w, x_f = tiny_setup()
        base, _ = forward(params, x_w, x_f)
        params.trunk[0][0][0, 0] += 0.05
        bumped, _ = forward(params, x_w, x_f)
        assert not np.array_equal(base.q_a, bumped.q_a)
        assert not np.array_equal(base.q_b, bumped.q_b)

    def test_head_a_perturbation_leaves_q_b_bit_identical(self):
        _, params, x_w, x_f = tiny_setup()
        base, _ = forward(params, x_w, x_f)
        params.head_a[0][0][0, 0] += 0.05
        bumped, _ = forward(params, x_w, x_f)
        assert not np.array_equal(base.q_a, bumped.q_a)
        assert np.array_equal(base.q_b, bumped.q_b)

    def test_dimension_mismatch_raises(self):
        _, params, x_w, x_f = tiny_setup()
        with pytest.raises(ValueError):
            forward(params, x_w[:-1], x_f)
        with pytest.raises(ValueError):
            forward(params, x_w, x_f[:-1])

    def test_batched_matches_single(self):
        _, params, x_w, x_f = tiny_setup()
        rng = np.random.default_rng(2)
        XW = rng.normal(size=(5, 6))
        XF = rng.normal(size=(5, 4))
        out, _ = forward(params, XW, XF)
        for i in range(5):
            single, _ = forward(params, XW[i], XF[i])
            np.testing.assert_allclose(out.q_a[i], single.q_a, atol=1e-12)


class TestBackward:
    def test_zero_upstream_zero_grads(self):
        _, params, x_w, x_f = tiny_setup()
        _, cache = forward(params, x_w, x_f)
        grads = backward(params, cache, np.zeros(3), np.zeros(3))
        for arr in grad_flat_arrays(grads):
            assert np.all(arr == 0.0)

    def test_head_b_grads_zero_for_head_a_upstream(self):
        _, params, x_w, x_f = tiny_setup()
        _, cache = forward(params, x_w, x_f)
        grads = backward(params, cache, np.ones(3), np.zeros(3))
        for dW, db in grads["head_b"]:
            assert np.all(dW == 0.0) and np.all(db == 0.0)
        assert any(np.any(dW != 0) for dW, _ in grads["head_a"])
        assert any(np.any(dW != 0) for dW, _ in grads["trunk"])

    def test_stale_cache_rejected(self):
        _, params, x_w, x_f = tiny_setup()
        _, cache = forward(params, x_w, x_f)
        with pytest.raises(ValueError):
            backward(params, cache, np.zeros(5))

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_full_chain_gradient_matches_fd(self, seed):
        """d cost_total / d theta through forward + objective vs. central differences."""
        robot, params, _, _ = tiny_setup(seed)
        grid = generate_world(seed, (32, 32), 2.6 / 32)
        field = build_distance_field(grid)
        bps = make_bps(seed, 6, (np.full(2, -1.3), np.full(2, 1.3)))
        x_w = encode_world(field, bps)
        rng = np.random.default_rng(seed + 10)
        lo, hi = robot.limits
        target = tcp_pose(robot, rng.uniform(lo, hi))
        problem = IKProblem(robot, field, target)
        x_f = frame_feature(target)

        def loss(p):
            out, _ = forward(p, x_w, x_f)
            va = evaluate(problem, out.q_a, need_grad=False).total
            vb = evaluate(problem, out.q_b, need_grad=False).total
            return float(va + vb)

        out, cache = forward(params, x_w, x_f)
        up_a = evaluate(problem, out.q_a).grad_total
        up_b = evaluate(problem, out.q_b).grad_total
        grads = grad_flat_arrays(backward(params, cache, up_a, up_b))
        arrays = params.flat_arrays()
        h = 1e-6
        g_all, fd_all = [], []
        for arr, g in zip(arrays, grads):
            flat = arr.ravel()
            gflat = g.ravel()
            idx = np.random.default_rng(seed).choice(flat.size, size=min(10, flat.size), replace=False)
            for j in idx:
                old = flat[j]
                flat[j] = old + h
                up = loss(params)
                flat[j] = old - h
                dn = loss(params)
                flat[j] = old
                fd_all.append((up - dn) / (2 * h))
                g_all.append(gflat[j])
        g_all, fd_all = np.asarray(g_all), np.asarray(fd_all)
        denom = max(np.linalg.norm(fd_all), 1e-3)
        assert np.linalg.norm(g_all - fd_all) / denom < 1e-4

    def test_linear_clip_gradient_matches_fd(self):
        robot, params, x_w, x_f = tiny_setup(4, output_mode="linear_clip")
        out, cache = forward(params, x_w, x_f)
        up = np.array([0.3, -0.7, 0.2])
        grads = grad_flat_arrays(backward(params, cache, up, np.zeros(3)))
        arrays = params.flat_arrays()

        def loss(p):
            o, _ = forward(p, x_w, x_f)
            return float(o.q_a @ up)

        h = 1e-7
        for arr, g in zip(arrays, grads):
            flat, gflat = arr.ravel(), g.ravel()
            for j in range(0, flat.size, max(flat.size // 5, 1)):
                old = flat[j]
                flat[j] = old + h
                up_v = loss(params)
                flat[j] = old - h
                dn = loss(params)
                flat[j] = old
                assert gflat[j] == pytest.approx((up_v - dn) / (2 * h), abs=1e-5)


class TestPersistence:
    def test_round_trip_identical_forward(self, tmp_path):
        robot, params, x_w, x_f = tiny_setup()
        params.metadata["robot_id"] = robot_id(robot)
        path = tmp_path / "net.npz"
        save_params(params, path)
        loaded = load_params(path, robot=robot)
        a, _ = forward(params, x_w, x_f)
        b, _ = forward(loaded, x_w, x_f)
        np.testing.assert_array_equal(a.q_a, b.q_a)
        np.testing.assert_array_equal(a.q_b, b.q_b)

    def test_wrong_robot_rejected(self, tmp_path):
        robot, params, _, _ = tiny_setup()
        params.metadata["robot_id"] = robot_id(robot)
        path = tmp_path / "net.npz"
        save_params(params, path)
        other = planar_arm(3, link_length=0.25)
        with pytest.raises(ValueError, match="trained for robot"):
            load_params(path, robot=other)

    def test_truncated_file_rejected(self, tmp_path):
        robot, params, _, _ = tiny_setup()
        path = tmp_path / "net.npz"
        save_params(params, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(ValueError, match="corrupt"):
            load_params(path)

    def test_single_head_round_trip(self, tmp_path):
        robot, params, x_w, x_f = tiny_setup(twin=False)
        assert params.head_b is None
        path = tmp_path / "net.npz"
        save_params(params, path)
        loaded = load_params(path)
        assert loaded.head_b is None
        a, _ = forward(params, x_w, x_f)
        b, _ = forward(loaded, x_w, x_f)
        assert a.q_b is None
        np.testing.assert_array_equal(a.q_a, b.q_a)

    def test_head_output_stack(self):
        out = HeadOutput(np.array([1.0, 2.0]), np.array([3.0, 4.0]))
        assert out.stack().shape == (2, 2)
        solo = HeadOutput(np.array([1.0, 2.0]), None)
        assert solo.stack().shape == (1, 2)
