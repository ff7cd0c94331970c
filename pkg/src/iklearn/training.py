"""Training pipelines for the warm-start network.

Unsupervised mode backpropagates the IK objective itself through the network
(no labels, no solver calls): for each sampled (world, target frame) the two
head predictions are scored by the objective and its configuration-space
gradient is the upstream signal. A capped head-separation reward counteracts
mode collapse. Hard-sample boosting keeps a bounded set of problems whose cost
exceeded four times the rolling mean and replays a fraction of each batch from
it.

Supervised mode first generates labels with the multistart solver, then fits
the heads with a closest-head MSE loss, periodically replacing labels when the
in-training network finds a feasible lower-cost solution (simplified
consistency cleaning).
"""

from __future__ import annotations

import json
import time
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .kinematics import Pose, RobotModel, fk_arrays, rot2_angle
from .network import (
    NetworkParams,
    backward,
    forward,
    frame_feature,
    grad_flat_arrays,
    init_network,
    load_params,
    save_params,
)
from .objective import IKProblem, ObjectiveWeights, evaluate_terms
from .solver import SolverConfig, random_guesses, solve
from .world import BasisPointSet, DistanceField, VoxelGrid, build_distance_field, encode_world


class WorldSkipped(Exception):
    """Raised when rejection sampling cannot find a collision-free configuration."""

    def __init__(self, world_index: int):
        super().__init__(f"world {world_index} too cluttered for collision-free sampling")
        self.world_index = world_index


@dataclass(frozen=True)
class BoostConfig:
    enabled: bool = True
    hard_factor: float = 4.0  # hard = cost above this multiple of the rolling mean
    rolling_window: int = 1000
    hard_set_capacity: int = 10_000
    replay_fraction: float = 0.3

    def __post_init__(self):
        if self.hard_factor <= 1.0:
            raise ValueError("hard_factor must exceed 1")
        if not 0.0 <= self.replay_fraction < 1.0:
            raise ValueError("replay_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 4000
    batch_size: int = 64
    learning_rate: float = 1e-3
    lr_decay: float = 0.3  # applied at 60% and 85% of the step budget
    lambda_head: float = 0.05
    head_sep_cap: float | None = None  # default 2.0 * sqrt(n_dof)
    boost: BoostConfig = BoostConfig()
    seed: int = 0
    trunk_widths: tuple[int, ...] = (256, 256, 256)
    head_widths: tuple[int, ...] = (128, 128)
    twin: bool = True
    output_mode: str = "unit_vector"
    world_blind: bool = False
    checkpoint_every: int = 0  # 0 disables checkpointing
    rejection_tries: int = 1000
    # supervised-only knobs
    n_labels: int = 1500
    label_multistarts: int = 100
    refresh_every: int = 500  # consistency-pass cadence, in optimizer steps
    refresh_batch: int = 64

    def sep_cap(self, n_dof: int) -> float:
        return self.head_sep_cap if self.head_sep_cap is not None else 2.0 * np.sqrt(n_dof)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trunk_widths"] = list(self.trunk_widths)
        d["head_widths"] = list(self.head_widths)
        return d

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        d = dict(d)
        if "boost" in d and isinstance(d["boost"], dict):
            d["boost"] = BoostConfig(**d["boost"])
        for key in ("trunk_widths", "head_widths"):
            if key in d:
                d[key] = tuple(d[key])
        return TrainConfig(**d)


@dataclass
class WorldSet:
    """Prepared training worlds: distance fields plus their BPS encodings."""

    fields: list[DistanceField]
    bps: BasisPointSet
    features: np.ndarray  # (n_worlds, n_basis_points)

    @staticmethod
    def from_grids(
        grids: list[VoxelGrid],
        bps: BasisPointSet,
        robot: RobotModel | None = None,
        weights: ObjectiveWeights | None = None,
        probe: int = 256,
    ) -> "WorldSet":
        """Build fields and encodings; with a robot, drop worlds that admit no
        collision-free configuration among ``probe`` seeded samples."""
        fields = [build_distance_field(g) for g in grids]
        if robot is not None:
            weights = weights or ObjectiveWeights()
            lo, hi = robot.limits
            kept = []
            for f in fields:
                Q = np.random.default_rng(0).uniform(lo, hi, size=(probe, robot.n_dof))
                v = evaluate_terms(robot, f, np.zeros(robot.dim), np.eye(robot.dim), weights, Q, need_grad=False)
                if np.any((v.u_world == 0.0) & (v.u_self == 0.0)):
                    kept.append(f)
            fields = kept
        if not fields:
            raise ValueError("no usable worlds (every world is too cluttered for the robot)")
        feats = np.stack([encode_world(f, bps) for f in fields])
        return WorldSet(fields, bps, feats)

    def __len__(self) -> int:
        return len(self.fields)


@dataclass
class ProblemSample:
    world_index: int
    x_w: np.ndarray
    x_f: np.ndarray
    target_position: np.ndarray
    target_rotation: np.ndarray
    witness: np.ndarray  # the collision-free configuration that generated the target


def _target_pose(sample: ProblemSample) -> Pose:
    return Pose(sample.target_position, sample.target_rotation)


def sample_collision_free(
    robot: RobotModel,
    field: DistanceField,
    weights: ObjectiveWeights,
    rng: np.random.Generator,
    n: int,
    max_tries: int = 1000,
) -> np.ndarray:
    """Rejection-sample n collision-free configurations (vectorized in chunks)."""
    lo, hi = robot.limits
    out = []
    tries = 0
    chunk = max(16 * n, 64)
    while len(out) < n and tries < max_tries:
        Q = rng.uniform(lo, hi, size=(chunk, robot.n_dof))
        tries += chunk
        v = evaluate_terms(robot, field, np.zeros(robot.dim), np.eye(robot.dim), weights, Q, need_grad=False)
        free = (v.u_world == 0.0) & (v.u_self == 0.0)
        out.extend(Q[free])
    if len(out) < n:
        raise WorldSkipped(-1)
    return np.asarray(out[:n])


def sample_problem(
    worlds: WorldSet,
    robot: RobotModel,
    rng: np.random.Generator,
    weights: ObjectiveWeights,
    world_index: int | None = None,
    max_tries: int = 1000,
) -> ProblemSample:
    """Sample a reachable target: a random collision-free configuration's FK pose.

    The generating configuration is kept as a feasibility witness. Raises
    WorldSkipped when the world admits no collision-free configuration within
    the try budget.
    """
    idx = int(rng.integers(len(worlds))) if world_index is None else world_index
    field = worlds.fields[idx]
    try:
        (q,) = sample_collision_free(robot, field, weights, rng, 1, max_tries)
    except WorldSkipped:
        raise WorldSkipped(idx) from None
    Rs, ps = fk_arrays(robot, q)
    tcp = robot.tcp_frame_index
    pose = Pose(ps[tcp], Rs[tcp])
    return ProblemSample(idx, worlds.features[idx], frame_feature(pose), pose.position, pose.rotation, q)


def sample_batch(
    worlds: WorldSet,
    robot: RobotModel,
    rng: np.random.Generator,
    weights: ObjectiveWeights,
    n: int,
    max_tries: int = 1000,
    worlds_per_batch: int = 8,
) -> list[ProblemSample]:
    """Sample n problems spread over a few worlds, with chunked rejection per world."""
    samples: list[ProblemSample] = []
    guard = 0
    while len(samples) < n:
        idx = int(rng.integers(len(worlds)))
        count = min(n - len(samples), max(n // worlds_per_batch, 1))
        try:
            Q = sample_collision_free(robot, worlds.fields[idx], weights, rng, count, max_tries)
        except WorldSkipped:
            guard += 1
            if guard > 10 * worlds_per_batch:
                raise WorldSkipped(idx)
            continue
        Rs, ps = fk_arrays(robot, Q)
        tcp = robot.tcp_frame_index
        for k in range(count):
            pose = Pose(ps[k, tcp], Rs[k, tcp])
            samples.append(
                ProblemSample(idx, worlds.features[idx], frame_feature(pose), pose.position, pose.rotation, Q[k])
            )
    return samples


# -- hard-sample boosting --------------------------------------------------------


@dataclass
class HardSet:
    """Bounded store of challenging problems; lowest-cost entry evicted first."""

    capacity: int
    entries: list[ProblemSample] = field(default_factory=list)
    costs: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def insert(self, sample: ProblemSample, cost: float) -> None:
        self.entries.append(sample)
        self.costs.append(float(cost))
        if len(self.entries) > self.capacity:
            drop = int(np.argmin(self.costs))
            self.entries.pop(drop)
            self.costs.pop(drop)

    def draw(self, rng: np.random.Generator, k: int) -> list[tuple[int, ProblemSample]]:
        if not self.entries or k <= 0:
            return []
        idx = rng.integers(len(self.entries), size=min(k, len(self.entries)))
        return [(int(i), self.entries[int(i)]) for i in idx]


def update_hard_set(
    hard: HardSet,
    samples: list[ProblemSample],
    costs: np.ndarray,
    rolling_mean: float,
    hard_factor: float,
) -> int:
    """Insert every sample whose cost exceeds hard_factor times the rolling mean."""
    inserted = 0
    for sample, cost in zip(samples, costs):
        if cost > hard_factor * rolling_mean:
            hard.insert(sample, cost)
            inserted += 1
    return inserted


# -- optimizer ---------------------------------------------------------------------


class Adam:
    """First-order adaptive-moment update over a list of parameter arrays."""

    def __init__(self, arrays: list[np.ndarray], beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, arrays: list[np.ndarray], grads: list[np.ndarray], lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            a -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self) -> list[np.ndarray]:
        return self.m + self.v


# -- losses ------------------------------------------------------------------------


def _head_sep_terms(q_a: np.ndarray, q_b: np.ndarray, lam: float, cap: float):
    """Capped separation reward -lam*min(||qa-qb||, cap) and its per-head gradients."""
    delta = q_a - q_b
    dist = np.linalg.norm(delta, axis=-1)
    reward = -lam * np.minimum(dist, cap)
    live = (dist > 1e-8) & (dist < cap)
    safe = np.where(dist == 0.0, 1.0, dist)
    direction = delta / safe[..., None] * live[..., None]
    return reward, -lam * direction, lam * direction


def _objective_batched(robot, worlds, weights, samples, Q, need_grad=True):
    """Evaluate the objective for per-sample problems, grouped by world."""
    B = len(samples)
    total = np.zeros(B)
    grad = np.zeros_like(Q) if need_grad else None
    free = np.zeros(B, dtype=bool)
    world_of = np.array([s.world_index for s in samples])
    for w in np.unique(world_of):
        sel = np.flatnonzero(world_of == w)
        tp = np.stack([samples[i].target_position for i in sel])
        tr = np.stack([samples[i].target_rotation for i in sel])
        v = evaluate_terms(robot, worlds.fields[w], tp, tr, weights, Q[sel], need_grad=need_grad)
        total[sel] = v.total
        free[sel] = (v.u_world == 0.0) & (v.u_self == 0.0)
        if need_grad:
            grad[sel] = v.grad_total
    return total, grad, free


def unsupervised_step(
    params: NetworkParams,
    samples: list[ProblemSample],
    weights: ObjectiveWeights,
    cfg: TrainConfig,
    robot: RobotModel,
    worlds: WorldSet,
    adam: Adam,
    lr: float,
) -> dict:
    """One optimizer step on loss = U(q_a) + U(q_b) - lambda_head * min(||q_a-q_b||, cap).

    Returns batch statistics; on a non-finite loss the update is rejected and
    the caller is told to halve the learning rate.
    """
    B = len(samples)
    x_w = np.stack([s.x_w for s in samples])
    x_f = np.stack([s.x_f for s in samples])
    out, cache = forward(params, x_w, x_f)
    u_a, g_a, free_a = _objective_batched(robot, worlds, weights, samples, out.q_a)
    if params.twin:
        u_b, g_b, free_b = _objective_batched(robot, worlds, weights, samples, out.q_b)
        sep, d_a, d_b = _head_sep_terms(out.q_a, out.q_b, cfg.lambda_head, cfg.sep_cap(params.n_dof))
        loss = u_a + u_b + sep
        up_a = (g_a + d_a) / B
        up_b = (g_b + d_b) / B
        cost_min = np.minimum(u_a, u_b)
    else:
        loss = u_a
        up_a, up_b = g_a / B, None
        u_b, free_b = u_a, free_a
        cost_min = u_a
    if not np.all(np.isfinite(loss)):
        return {"rejected": True, "loss": float("nan")}
    grads = grad_flat_arrays(backward(params, cache, up_a, up_b))
    adam.step(params.flat_arrays(), grads, lr)
    return {
        "rejected": False,
        "loss": float(loss.mean()),
        "mean_cost_a": float(u_a.mean()),
        "mean_cost_b": float(u_b.mean()),
        "free_frac_a": float(free_a.mean()),
        "free_frac_b": float(free_b.mean()),
        "cost_min": cost_min,
        "head_sep": float(np.linalg.norm(out.q_a - out.q_b, axis=-1).mean()) if params.twin else 0.0,
    }


def supervised_step(
    params: NetworkParams,
    samples: list[ProblemSample],
    labels: np.ndarray,
    cfg: TrainConfig,
    adam: Adam,
    lr: float,
) -> dict:
    """One MSE step with closest-head assignment plus the head-separation reward."""
    B = len(samples)
    x_w = np.stack([s.x_w for s in samples])
    x_f = np.stack([s.x_f for s in samples])
    out, cache = forward(params, x_w, x_f)
    err_a = out.q_a - labels
    sq_a = np.einsum("...k,...k->...", err_a, err_a)
    if params.twin:
        err_b = out.q_b - labels
        sq_b = np.einsum("...k,...k->...", err_b, err_b)
        a_closest = sq_a <= sq_b
        mse = np.where(a_closest, sq_a, sq_b)
        sep, d_a, d_b = _head_sep_terms(out.q_a, out.q_b, cfg.lambda_head, cfg.sep_cap(params.n_dof))
        up_a = (2.0 * err_a * a_closest[..., None] + d_a) / B
        up_b = (2.0 * err_b * (~a_closest)[..., None] + d_b) / B
        loss = mse + sep
    else:
        loss = sq_a
        up_a, up_b = 2.0 * err_a / B, None
    grads = grad_flat_arrays(backward(params, cache, up_a, up_b))
    adam.step(params.flat_arrays(), grads, lr)
    return {"loss": float(loss.mean()), "mse": float(np.mean(np.minimum(sq_a, sq_b)) if params.twin else loss.mean())}


# -- label generation (supervised) ----------------------------------------------


def generate_supervised_data(
    worlds: WorldSet,
    robot: RobotModel,
    solver_cfg: SolverConfig,
    n: int,
    weights: ObjectiveWeights,
    rng: np.random.Generator,
    n_multistarts: int = 100,
) -> list[tuple[ProblemSample, np.ndarray, float]]:
    """Solve n sampled problems with exhaustive multistarts; drop infeasible ones.

    Every stored label passes the solver's feasibility certificate.
    """
    data = []
    while len(data) < n:
        sample = sample_problem(worlds, robot, rng, weights)
        problem = IKProblem(robot, worlds.fields[sample.world_index], _target_pose(sample), weights)
        guess_seed = int(rng.integers(2**31))
        result = solve(problem, random_guesses(robot, guess_seed, n_multistarts), solver_cfg)
        if result.feasible:
            data.append((sample, result.q, result.cost))
    return data


def consistency_pass(
    data: list[tuple[ProblemSample, np.ndarray, float]],
    params: NetworkParams,
    robot: RobotModel,
    worlds: WorldSet,
    weights: ObjectiveWeights,
    solver_cfg: SolverConfig,
    indices,
) -> int:
    """Replace labels where the current network leads to a feasible lower-cost solution."""
    replaced = 0
    for i in indices:
        sample, q_star, cost = data[i]
        problem = IKProblem(robot, worlds.fields[sample.world_index], _target_pose(sample), weights)
        out, _ = forward(params, sample.x_w, sample.x_f)
        guesses = [out.q_a] if out.q_b is None else [out.q_a, out.q_b]
        result = solve(problem, guesses, solver_cfg, labels=["head-a", "head-b"][: len(guesses)])
        if result.feasible and result.cost < cost:
            data[i] = (sample, result.q, result.cost)
            replaced += 1
    return replaced


# -- the training loop -------------------------------------------------------------


@dataclass
class TrainReport:
    mode: str
    steps_done: int
    loss_history: list
    data_generation_seconds: float
    optimization_seconds: float
    final_loss: float
    hard_set_size: int
    solver_calls: int
    label_replacements: int = 0
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def train(
    mode: str,
    robot: RobotModel,
    worlds: WorldSet,
    cfg: TrainConfig,
    weights: ObjectiveWeights = ObjectiveWeights(),
    solver_cfg: SolverConfig | None = None,
    checkpoint_dir=None,
    resume_from=None,
    metadata: dict | None = None,
) -> tuple[NetworkParams, TrainReport]:
    """Train a warm-start network; returns the parameters and a timing report.

    Unsupervised mode never calls the solver, so its data-generation time is
    zero by construction; supervised mode spends most of its wall-clock
    generating and cleaning labels.
    """
    if mode not in ("unsupervised", "supervised"):
        raise ValueError(f"unknown training mode {mode!r}")
    solver_cfg = solver_cfg or SolverConfig()
    n_world_inputs = 0 if cfg.world_blind else worlds.bps.size
    meta = dict(metadata or {})
    meta.setdefault("bps_id", worlds.bps.digest())
    meta.setdefault("objective_weights", weights.to_dict())
    meta["training_mode"] = mode

    rng = np.random.default_rng(cfg.seed)
    params = init_network(
        cfg.seed,
        robot,
        n_world_inputs,
        trunk_widths=cfg.trunk_widths,
        head_widths=cfg.head_widths,
        twin=cfg.twin,
        output_mode=cfg.output_mode,
        metadata=meta,
    )
    adam = Adam(params.flat_arrays())
    start_step = 0
    lr_scale = 1.0
    hard = HardSet(cfg.boost.hard_set_capacity)
    rolling: list[float] = []
    loss_history: list = []
    if resume_from is not None:
        start_step, lr_scale, rolling, loss_history = _load_checkpoint(
            resume_from, params, adam, hard, rng
        )

    data_gen_seconds = 0.0
    solver_calls = 0
    replacements = 0
    dataset = None
    if mode == "supervised":
        t0 = time.perf_counter()
        dataset = generate_supervised_data(
            worlds, robot, solver_cfg, cfg.n_labels, weights, rng, cfg.label_multistarts
        )
        solver_calls += cfg.n_labels
        data_gen_seconds += time.perf_counter() - t0

    t_opt = time.perf_counter()
    for step in range(start_step, cfg.steps):
        lr = cfg.learning_rate * lr_scale
        if step >= int(0.85 * cfg.steps):
            lr *= cfg.lr_decay * cfg.lr_decay
        elif step >= int(0.60 * cfg.steps):
            lr *= cfg.lr_decay

        if mode == "unsupervised":
            n_replay = int(cfg.boost.replay_fraction * cfg.batch_size) if cfg.boost.enabled else 0
            replayed = hard.draw(rng, n_replay)
            fresh = sample_batch(worlds, robot, rng, weights, cfg.batch_size - len(replayed), cfg.rejection_tries)
            batch = [s for _, s in replayed] + fresh
            if cfg.world_blind:
                batch = [replace_features(s) for s in batch]
            stats = unsupervised_step(params, batch, weights, cfg, robot, worlds, adam, lr)
            if stats.get("rejected"):
                lr_scale *= 0.5
                loss_history.append(loss_history[-1] if loss_history else float("nan"))
                continue
            cost_min = stats.pop("cost_min")
            for (slot, _), c in zip(replayed, cost_min[: len(replayed)]):
                hard.costs[slot] = float(c)
            fresh_costs = cost_min[len(replayed):]
            if cfg.boost.enabled:
                if len(rolling) >= cfg.boost.rolling_window:
                    mean = float(np.mean(rolling[-cfg.boost.rolling_window:]))
                    update_hard_set(hard, fresh, fresh_costs, mean, cfg.boost.hard_factor)
                rolling.extend(float(c) for c in fresh_costs)
                del rolling[: max(0, len(rolling) - cfg.boost.rolling_window)]
        else:
            idx = rng.integers(len(dataset), size=cfg.batch_size)
            batch = [dataset[i][0] for i in idx]
            labels = np.stack([dataset[i][1] for i in idx])
            if cfg.world_blind:
                batch = [replace_features(s) for s in batch]
            stats = supervised_step(params, batch, labels, cfg, adam, lr)
            if cfg.refresh_every and (step + 1) % cfg.refresh_every == 0:
                t0 = time.perf_counter()
                subset = rng.integers(len(dataset), size=min(cfg.refresh_batch, len(dataset)))
                replacements += consistency_pass(
                    dataset, params, robot, worlds, weights, solver_cfg, subset
                )
                solver_calls += len(subset)
                data_gen_seconds += time.perf_counter() - t0

        loss_history.append(stats["loss"])
        if checkpoint_dir and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
            _save_checkpoint(
                Path(checkpoint_dir) / f"checkpoint-{step + 1:06d}.npz",
                params, adam, hard, rng, step + 1, lr_scale, rolling, loss_history,
            )
    optimization_seconds = time.perf_counter() - t_opt

    report = TrainReport(
        mode=mode,
        steps_done=cfg.steps,
        loss_history=loss_history,
        data_generation_seconds=data_gen_seconds,
        optimization_seconds=optimization_seconds,
        final_loss=loss_history[-1] if loss_history else float("nan"),
        hard_set_size=len(hard),
        solver_calls=solver_calls,
        label_replacements=replacements,
        config=cfg.to_dict(),
    )
    return params, report


def replace_features(sample: ProblemSample) -> ProblemSample:
    """World-blind variant: strip the world feature (the network input drops x_w)."""
    return ProblemSample(
        sample.world_index,
        np.zeros(0),
        sample.x_f,
        sample.target_position,
        sample.target_rotation,
        sample.witness,
    )


# -- checkpointing -----------------------------------------------------------------


def _save_checkpoint(path, params, adam, hard, rng, step, lr_scale, rolling, loss_history):
    arrays = {f"p_{i}": a for i, a in enumerate(params.flat_arrays())}
    arrays.update({f"m_{i}": a for i, a in enumerate(adam.m)})
    arrays.update({f"v_{i}": a for i, a in enumerate(adam.v)})
    if hard.entries:
        arrays["hard_xw"] = np.stack([s.x_w for s in hard.entries])
        arrays["hard_xf"] = np.stack([s.x_f for s in hard.entries])
        arrays["hard_tp"] = np.stack([s.target_position for s in hard.entries])
        arrays["hard_tr"] = np.stack([s.target_rotation for s in hard.entries])
        arrays["hard_witness"] = np.stack([s.witness for s in hard.entries])
        arrays["hard_world"] = np.array([s.world_index for s in hard.entries])
        arrays["hard_costs"] = np.array(hard.costs)
    state = {
        "step": step,
        "lr_scale": lr_scale,
        "adam_t": adam.t,
        "rolling": rolling,
        "loss_history": loss_history,
        "rng_state": _encode_rng(rng),
    }
    np.savez(path, __state__=np.frombuffer(json.dumps(state).encode(), dtype=np.uint8), **arrays)


def _load_checkpoint(path, params, adam, hard, rng):
    try:
        data = np.load(path)
        state = json.loads(bytes(data["__state__"]).decode())
    except (zipfile.BadZipFile, KeyError, ValueError, OSError) as exc:
        raise ValueError(f"corrupt checkpoint: {path}") from exc
    for i, a in enumerate(params.flat_arrays()):
        a[:] = data[f"p_{i}"]
    for i, m in enumerate(adam.m):
        m[:] = data[f"m_{i}"]
    for i, v in enumerate(adam.v):
        v[:] = data[f"v_{i}"]
    adam.t = state["adam_t"]
    rng.bit_generator.state = _decode_rng(state["rng_state"])
    hard.entries.clear()
    hard.costs.clear()
    if "hard_world" in data:
        for k in range(len(data["hard_world"])):
            hard.entries.append(
                ProblemSample(
                    int(data["hard_world"][k]),
                    data["hard_xw"][k],
                    data["hard_xf"][k],
                    data["hard_tp"][k],
                    data["hard_tr"][k],
                    data["hard_witness"][k],
                )
            )
            hard.costs.append(float(data["hard_costs"][k]))
    return state["step"], state["lr_scale"], list(state["rolling"]), list(state["loss_history"])


def _encode_rng(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return json.loads(json.dumps(state, default=int))


def _decode_rng(state: dict) -> dict:
    # PCG64 state entries must be Python ints
    out = dict(state)
    if "state" in out and isinstance(out["state"], dict):
        out["state"] = {k: int(v) for k, v in out["state"].items()}
    return out
