"""Twin-headed multilayer network with unit-vector joint outputs.

A shared trunk feeds two small heads, each emitting one joint configuration.
Per joint the raw head output is a 2D pair, normalized onto the unit circle
and read off as an angle, which is then rescaled linearly into the joint
limits: every prediction is inside the limits by construction, and joints
with limits [-pi, pi] get a representation with no wrap-around discontinuity.

Forward and reverse passes are implemented directly (numpy); reverse mode
produces exact parameter gradients for any upstream dL/dq per head, which is
all unsupervised training needs.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .kinematics import Pose, RobotModel, rot2_angle

FORMAT_VERSION = 1
_NORM_EPS = 1e-8


def frame_feature(pose: Pose) -> np.ndarray:
    """Flattened target pose: position plus (cos, sin) in 2D or the full rotation in 3D."""
    if pose.dim == 2:
        angle = rot2_angle(pose.rotation)
        return np.concatenate([pose.position, [np.cos(angle), np.sin(angle)]])
    return np.concatenate([pose.position, pose.rotation.ravel()])


def frame_feature_dim(dim: int) -> int:
    return 4 if dim == 2 else 12


Layer = tuple[np.ndarray, np.ndarray]  # weight (n_in, n_out), bias (n_out,)


@dataclass
class NetworkParams:
    """All weights plus the fixed output mapping and provenance metadata."""

    trunk: list[Layer]
    head_a: list[Layer]
    head_b: list[Layer] | None
    activation: str
    lower: np.ndarray
    upper: np.ndarray
    n_world: int
    n_frame: int
    output_mode: str = "unit_vector"  # or "linear_clip" (ablation baseline)
    metadata: dict = field(default_factory=dict)

    @property
    def n_dof(self) -> int:
        return len(self.lower)

    @property
    def twin(self) -> bool:
        return self.head_b is not None

    def copy(self) -> "NetworkParams":
        cp = lambda layers: [(W.copy(), b.copy()) for W, b in layers]
        return NetworkParams(
            cp(self.trunk),
            cp(self.head_a),
            cp(self.head_b) if self.head_b is not None else None,
            self.activation,
            self.lower.copy(),
            self.upper.copy(),
            self.n_world,
            self.n_frame,
            self.output_mode,
            dict(self.metadata),
        )

    def flat_arrays(self) -> list[np.ndarray]:
        out = []
        for stack in (self.trunk, self.head_a, self.head_b or []):
            for W, b in stack:
                out.extend((W, b))
        return out


@dataclass
class HeadOutput:
    q_a: np.ndarray
    q_b: np.ndarray | None

    def stack(self) -> np.ndarray:
        if self.q_b is None:
            return self.q_a[None] if self.q_a.ndim == 1 else self.q_a[..., None, :]
        return np.stack([self.q_a, self.q_b], axis=-2)


def _glorot(rng: np.random.Generator, n_in: int, n_out: int) -> Layer:
    bound = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-bound, bound, size=(n_in, n_out)), np.zeros(n_out)


def init_network(
    seed: int,
    robot: RobotModel,
    n_world: int,
    trunk_widths: tuple[int, ...] = (256, 256, 256),
    head_widths: tuple[int, ...] = (128, 128),
    twin: bool = True,
    output_mode: str = "unit_vector",
    metadata: dict | None = None,
) -> NetworkParams:
    if output_mode not in ("unit_vector", "linear_clip"):
        raise ValueError(f"unknown output_mode {output_mode!r}")
    rng = np.random.default_rng(seed)
    n_frame = frame_feature_dim(robot.dim)
    n_dof = robot.n_dof
    raw_dim = 2 * n_dof if output_mode == "unit_vector" else n_dof
    trunk, n_in = [], n_world + n_frame
    for w in trunk_widths:
        trunk.append(_glorot(rng, n_in, w))
        n_in = w

    def make_head():
        layers, m = [], n_in
        for w in head_widths:
            layers.append(_glorot(rng, m, w))
            m = w
        layers.append(_glorot(rng, m, raw_dim))
        return layers

    head_a = make_head()
    head_b = make_head() if twin else None
    lo, hi = robot.limits
    return NetworkParams(
        trunk, head_a, head_b, "tanh", lo.copy(), hi.copy(), n_world, n_frame,
        output_mode, dict(metadata or {}),
    )


def _activate(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def _activate_deriv(post: np.ndarray) -> np.ndarray:
    return 1.0 - post * post


def to_angles(raw: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Unit-vector decoding: normalize each 2D pair, read the angle, rescale into limits.

    A vanishing pair decodes as (1, 0), i.e. the midpoint of the limits.
    """
    n_dof = len(lower)
    pairs = raw.reshape(raw.shape[:-1] + (n_dof, 2))
    norms = np.linalg.norm(pairs, axis=-1)
    theta = np.where(norms > _NORM_EPS, np.arctan2(pairs[..., 1], pairs[..., 0]), 0.0)
    mid = 0.5 * (lower + upper)
    span = upper - lower
    return mid + theta * span / (2.0 * np.pi)


def _decode(params: NetworkParams, raw: np.ndarray) -> np.ndarray:
    if params.output_mode == "unit_vector":
        return to_angles(raw, params.lower, params.upper)
    return np.clip(raw, params.lower, params.upper)


def _decode_backward(params: NetworkParams, raw: np.ndarray, dq: np.ndarray) -> np.ndarray:
    if params.output_mode == "unit_vector":
        n_dof = params.n_dof
        pairs = raw.reshape(raw.shape[:-1] + (n_dof, 2))
        sq = np.einsum("...d,...d->...", pairs, pairs)
        live = sq > _NORM_EPS * _NORM_EPS
        safe = np.where(live, sq, 1.0)
        dtheta = dq * (params.upper - params.lower) / (2.0 * np.pi)
        dpairs = np.stack([-pairs[..., 1], pairs[..., 0]], axis=-1) / safe[..., None]
        dpairs *= (dtheta * live)[..., None]
        return dpairs.reshape(raw.shape)
    inside = (raw > params.lower) & (raw < params.upper)
    return dq * inside


def _stack_forward(layers: list[Layer], x: np.ndarray, last_linear: bool):
    post = [x]
    for i, (W, b) in enumerate(layers):
        z = post[-1] @ W + b
        post.append(z if (last_linear and i == len(layers) - 1) else _activate(z))
    return post


def forward(params: NetworkParams, x_w: np.ndarray, x_f: np.ndarray):
    """Evaluate both heads; returns (HeadOutput, cache for backward).

    Inputs may be batched: x_w (..., n_world), x_f (..., n_frame). World-blind
    networks (n_world == 0) ignore x_w entirely.
    """
    x_w = np.asarray(x_w, dtype=float)
    x_f = np.asarray(x_f, dtype=float)
    if x_f.shape[-1] != params.n_frame:
        raise ValueError(f"frame feature dim {x_f.shape[-1]} != {params.n_frame}")
    if params.n_world == 0:
        x = x_f
    else:
        if x_w.shape[-1] != params.n_world:
            raise ValueError(f"world feature dim {x_w.shape[-1]} != {params.n_world}")
        batch = np.broadcast_shapes(x_w.shape[:-1], x_f.shape[:-1])
        x = np.concatenate(
            [
                np.broadcast_to(x_w, batch + (params.n_world,)),
                np.broadcast_to(x_f, batch + (params.n_frame,)),
            ],
            axis=-1,
        )
    trunk_post = _stack_forward(params.trunk, x, last_linear=False)
    h = trunk_post[-1]
    a_post = _stack_forward(params.head_a, h, last_linear=True)
    cache = {"trunk": trunk_post, "head_a": a_post}
    q_a = _decode(params, a_post[-1])
    q_b = None
    if params.head_b is not None:
        b_post = _stack_forward(params.head_b, h, last_linear=True)
        cache["head_b"] = b_post
        q_b = _decode(params, b_post[-1])
    return HeadOutput(q_a, q_b), cache


def _stack_backward(layers: list[Layer], post: list[np.ndarray], delta: np.ndarray, last_linear: bool):
    grads = [None] * len(layers)
    for i in reversed(range(len(layers))):
        out = post[i + 1]
        if not (last_linear and i == len(layers) - 1):
            delta = delta * _activate_deriv(out)
        x = post[i]
        flat_x = x.reshape(-1, x.shape[-1])
        flat_d = delta.reshape(-1, delta.shape[-1])
        grads[i] = (flat_x.T @ flat_d, flat_d.sum(axis=0))
        delta = delta @ layers[i][0].T
    return grads, delta


def backward(params: NetworkParams, cache: dict, upstream_a: np.ndarray, upstream_b=None):
    """Exact parameter gradients for upstream dL/dq on each head.

    Batched upstream contributions are summed. Returns gradients in the same
    structure as the parameters (trunk / head_a / head_b layer lists).
    """
    raw_a = cache["head_a"][-1]
    if upstream_a.shape != raw_a.shape[:-1] + (params.n_dof,):
        raise ValueError("upstream_a shape does not match the cached forward pass")
    d_raw_a = _decode_backward(params, raw_a, np.asarray(upstream_a, float))
    g_head_a, d_h = _stack_backward(params.head_a, cache["head_a"], d_raw_a, last_linear=True)
    g_head_b = None
    if params.head_b is not None:
        raw_b = cache["head_b"][-1]
        if upstream_b is None:
            upstream_b = np.zeros(raw_b.shape[:-1] + (params.n_dof,))
        d_raw_b = _decode_backward(params, raw_b, np.asarray(upstream_b, float))
        g_head_b, d_hb = _stack_backward(params.head_b, cache["head_b"], d_raw_b, last_linear=True)
        d_h = d_h + d_hb
    elif upstream_b is not None:
        raise ValueError("upstream_b given for a single-head network")
    g_trunk, _ = _stack_backward(params.trunk, cache["trunk"], d_h, last_linear=False)
    return {"trunk": g_trunk, "head_a": g_head_a, "head_b": g_head_b}


def grad_flat_arrays(grads: dict) -> list[np.ndarray]:
    out = []
    for key in ("trunk", "head_a", "head_b"):
        stack = grads.get(key)
        if stack:
            for dW, db in stack:
                out.extend((dW, db))
    return out


# -- persistence ---------------------------------------------------------------


def save_params(params: NetworkParams, path) -> None:
    """Bit-exact weights dump with embedded metadata for consistency checks."""
    arrays = {}
    shapes = {}
    for name, stack in (("trunk", params.trunk), ("head_a", params.head_a), ("head_b", params.head_b)):
        if stack is None:
            continue
        shapes[name] = len(stack)
        for i, (W, b) in enumerate(stack):
            arrays[f"{name}_{i}_W"] = W
            arrays[f"{name}_{i}_b"] = b
    meta = {
        "format_version": FORMAT_VERSION,
        "activation": params.activation,
        "output_mode": params.output_mode,
        "n_world": params.n_world,
        "n_frame": params.n_frame,
        "stacks": shapes,
        "metadata": params.metadata,
    }
    np.savez(
        path,
        __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
        lower=params.lower,
        upper=params.upper,
        **arrays,
    )


def load_params(path, robot: RobotModel | None = None, expected_robot_id: str | None = None) -> NetworkParams:
    try:
        data = np.load(path)
        meta = json.loads(bytes(data["__meta__"]).decode())
    except (zipfile.BadZipFile, KeyError, ValueError, EOFError, OSError) as exc:
        raise ValueError(f"corrupt or unreadable network file: {path}") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported network file version: {meta.get('format_version')}")

    def read_stack(name):
        n = meta["stacks"].get(name)
        if n is None:
            return None
        return [(data[f"{name}_{i}_W"], data[f"{name}_{i}_b"]) for i in range(n)]

    params = NetworkParams(
        trunk=read_stack("trunk"),
        head_a=read_stack("head_a"),
        head_b=read_stack("head_b"),
        activation=meta["activation"],
        lower=data["lower"],
        upper=data["upper"],
        n_world=meta["n_world"],
        n_frame=meta["n_frame"],
        output_mode=meta["output_mode"],
        metadata=meta["metadata"],
    )
    if expected_robot_id is None and robot is not None:
        from .robots import robot_id

        expected_robot_id = robot_id(robot)
    if expected_robot_id is not None:
        stored = params.metadata.get("robot_id")
        if stored != expected_robot_id:
            raise ValueError(
                f"network was trained for robot {stored!r}, not {expected_robot_id!r}"
            )
    return params
