"""Procedural obstacle worlds, signed distance fields, and basis-point-set encoding.

Worlds are boolean occupancy voxel grids generated from seeded gradient-lattice
noise. A signed distance field is built once per world with an exact Euclidean
distance transform and queried with multilinear interpolation; the surface is
placed on voxel faces (half a voxel from occupied centers) so the discrete
field has unit slope across obstacle boundaries.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .validation import as_float_array

WORLD_MAGIC = b"IKWORLD1"
WORLD_SCHEMA = "iklearn-world-v1"


@dataclass(frozen=True)
class VoxelGrid:
    """Boolean occupancy grid: shape, voxel edge length, world position of the corner."""

    shape: tuple[int, ...]
    voxel_size: float
    origin: np.ndarray
    occupancy: np.ndarray
    meta: dict | None = None

    def __post_init__(self):
        if any(s < 1 for s in self.shape):
            raise ValueError("grid shape entries must be >= 1")
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.shape != tuple(self.shape):
            raise ValueError("occupancy shape mismatch")
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "origin", as_float_array(self.origin, "origin"))
        object.__setattr__(self, "occupancy", occ)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def occupied_fraction(self) -> float:
        return float(self.occupancy.mean())

    def voxel_centers_axis(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.shape[axis]) + 0.5) * self.voxel_size


@dataclass(frozen=True)
class DistanceField:
    """Signed distances (negative inside obstacles) plus a per-voxel gradient."""

    grid: VoxelGrid
    distance: np.ndarray
    gradient: np.ndarray

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def sentinel(self) -> float:
        return float(np.linalg.norm(np.asarray(self.grid.shape) * self.grid.voxel_size))


@dataclass(frozen=True)
class BasisPointSet:
    """Fixed workspace points whose signed distances form the world feature."""

    points: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "points", as_float_array(self.points, "points"))
        if self.points.ndim != 2 or len(self.points) < 1:
            raise ValueError("points must be a nonempty (N, D) array")

    @property
    def size(self) -> int:
        return len(self.points)

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.points).tobytes()).hexdigest()[:16]


# -- gradient-lattice noise ----------------------------------------------------


class _GradientNoise:
    """Classic permutation-table gradient noise on the integer lattice."""

    def __init__(self, seed: int, dim: int):
        rng = np.random.default_rng(seed)
        self.perm = rng.permutation(256)
        self.perm = np.concatenate([self.perm, self.perm])
        n_grad = 16
        if dim == 2:
            ang = rng.uniform(0, 2 * np.pi, n_grad)
            self.grads = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        else:
            v = rng.normal(size=(n_grad, 3))
            self.grads = v / np.linalg.norm(v, axis=1, keepdims=True)
        self.dim = dim

    @staticmethod
    def _fade(t: np.ndarray) -> np.ndarray:
        return t * t * t * (t * (t * 6 - 15) + 10)

    def _hash(self, cells: list[np.ndarray]) -> np.ndarray:
        h = np.zeros_like(cells[0])
        for c in cells:
            h = self.perm[(h + c) & 255]
        return h % len(self.grads)

    def sample(self, coords: np.ndarray) -> np.ndarray:
        """Noise values in roughly [-1, 1] at coordinates of shape (..., dim)."""
        c0 = np.floor(coords).astype(int)
        frac = coords - c0
        w = self._fade(frac)
        total = np.zeros(coords.shape[:-1])
        for corner in np.ndindex(*(2,) * self.dim):
            cell = [c0[..., a] + corner[a] for a in range(self.dim)]
            g = self.grads[self._hash(cell)]
            offs = frac - np.asarray(corner, dtype=float)
            dot = np.einsum("...d,...d->...", g, offs)
            weight = np.ones(coords.shape[:-1])
            for a in range(self.dim):
                weight = weight * (w[..., a] if corner[a] else (1.0 - w[..., a]))
            total += weight * dot
        return total


def generate_world(
    seed: int,
    shape: tuple[int, ...],
    voxel_size: float,
    noise_frequency: float = 1.6,
    threshold: float = 0.56,
    origin=None,
) -> VoxelGrid:
    """Seeded noise world: voxels whose normalized noise exceeds ``threshold`` stay free.

    ``noise_frequency`` is in lattice cells per meter; raising ``threshold``
    toward 1 empties the grid, lowering it fills it.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    if noise_frequency <= 0:
        raise ValueError("noise_frequency must be positive")
    shape = tuple(int(s) for s in shape)
    if any(s < 1 for s in shape):
        raise ValueError("degenerate grid shape")
    dim = len(shape)
    if origin is None:
        origin = -0.5 * np.asarray(shape) * voxel_size
    origin = as_float_array(origin, "origin")
    noise = _GradientNoise(seed, dim)
    axes = [origin[a] + (np.arange(shape[a]) + 0.5) * voxel_size for a in range(dim)]
    coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1) * noise_frequency
    # offset so lattice corners never align with the grid symmetry
    values = noise.sample(coords + 37.1)
    normalized = 0.5 * (values + 1.0)
    occ = normalized > threshold
    meta = {
        "seed": int(seed),
        "noise_frequency": float(noise_frequency),
        "threshold": float(threshold),
    }
    return VoxelGrid(shape, float(voxel_size), origin, occ, meta)


# -- signed distance field -----------------------------------------------------


def build_distance_field(grid: VoxelGrid) -> DistanceField:
    """Two-pass exact Euclidean distance transform combined with signs.

    Distances are measured to the obstacle surface, taken as the voxel faces:
    D = (distance to nearest occupied center) - voxel_size/2 in free space and
    the negated analogue inside obstacles. Empty (or full) worlds get the
    grid-diagonal sentinel everywhere.
    """
    occ = grid.occupancy
    vs = grid.voxel_size
    sentinel = float(np.linalg.norm(np.asarray(grid.shape) * vs))
    if not occ.any():
        dist = np.full(grid.shape, sentinel)
    elif occ.all():
        dist = np.full(grid.shape, -sentinel)
    else:
        d_out = ndimage.distance_transform_edt(~occ, sampling=vs)
        d_in = ndimage.distance_transform_edt(occ, sampling=vs)
        dist = np.where(occ, -(d_in - 0.5 * vs), d_out - 0.5 * vs)
    grads = np.stack(np.gradient(dist, vs), axis=-1)
    norms = np.linalg.norm(grads, axis=-1, keepdims=True)
    np.divide(grads, norms, out=grads, where=norms > 1.0)  # clamp to unit slope
    return DistanceField(grid, dist, grads)


def query_distance(field: DistanceField, x) -> tuple[np.ndarray, np.ndarray]:
    """Interpolated signed distance and gradient at world points of shape (..., D).

    Inside the grid the value is the multilinear interpolation of the voxel
    distances and the gradient is the interpolant's exact derivative. Outside,
    the boundary value is extended by the distance to the grid so iterates
    that leave the workspace see free space and a gradient pointing outward.
    """
    grid = field.grid
    x = np.asarray(x, dtype=float)
    scalar_in = x.ndim == 1
    x = np.atleast_2d(x)
    dim = grid.dim
    vs = grid.voxel_size
    extent_lo = grid.origin
    extent_hi = grid.origin + np.asarray(grid.shape) * vs
    outside = np.clip(x - extent_hi, 0.0, None) + np.clip(x - extent_lo, None, 0.0)
    u = (x - grid.origin) / vs - 0.5
    hi = np.asarray(grid.shape, dtype=float) - 1.0
    uc = np.clip(u, 0.0, hi)

    base = np.minimum(np.floor(uc).astype(int), np.asarray(grid.shape) - 2)
    base = np.maximum(base, 0)
    frac = uc - base

    dist = field.distance
    corners = np.empty((2,) * dim + x.shape[:-1])
    for corner in np.ndindex(*(2,) * dim):
        idx = tuple(np.minimum(base[..., a] + corner[a], grid.shape[a] - 1) for a in range(dim))
        corners[corner] = dist[idx]

    def reduce_lerp(diff_axis=None):
        out = corners
        for a in range(dim):
            fa = frac[..., a]
            out = (out[1] - out[0]) if a == diff_axis else out[0] * (1.0 - fa) + out[1] * fa
        return out

    value = reduce_lerp()
    grad = np.stack([reduce_lerp(a) / vs for a in range(dim)], axis=-1)

    grad[u != uc] = 0.0  # constant extension in the boundary half-voxel band
    out_norm = np.linalg.norm(outside, axis=-1)
    is_out = out_norm > 0
    if np.any(is_out):
        value = value + out_norm
        outward = outside / np.where(out_norm == 0, 1.0, out_norm)[..., None]
        grad = np.where(outside != 0, outward, grad)

    if scalar_in:
        return value[0], grad[0]
    return value, grad


# -- basis point set -------------------------------------------------------------


def make_bps(seed: int, n_points: int, workspace_bounds) -> BasisPointSet:
    """Uniformly sampled fixed basis points inside axis-aligned workspace bounds."""
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    lo, hi = (as_float_array(b, "workspace_bounds") for b in workspace_bounds)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(n_points, len(lo)))
    return BasisPointSet(pts, seed=seed)


def encode_world(field: DistanceField, bps: BasisPointSet) -> np.ndarray:
    """World feature vector: signed distance at every basis point, in order."""
    values, _ = query_distance(field, bps.points)
    return values


# -- world files -----------------------------------------------------------------


def save_world(grid: VoxelGrid, path) -> None:
    """Binary dump: magic, JSON header, bit-packed occupancy."""
    header = {
        "schema": WORLD_SCHEMA,
        "dim": grid.dim,
        "shape": list(grid.shape),
        "voxel_size": grid.voxel_size,
        "origin": grid.origin.tolist(),
        "meta": grid.meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    payload = np.packbits(grid.occupancy.ravel()).tobytes()
    with open(path, "wb") as fh:
        fh.write(WORLD_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(payload)


def load_world(path) -> VoxelGrid:
    raw = Path(path).read_bytes()
    if raw[:8] != WORLD_MAGIC:
        raise ValueError(f"{path}: not a world file")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12 : 12 + hlen])
    if header.get("schema") != WORLD_SCHEMA:
        raise ValueError(f"unsupported world schema: {header.get('schema')!r}")
    shape = tuple(header["shape"])
    n = int(np.prod(shape))
    bits = np.unpackbits(np.frombuffer(raw[12 + hlen :], dtype=np.uint8), count=n)
    occ = bits.astype(bool).reshape(shape)
    return VoxelGrid(shape, header["voxel_size"], np.asarray(header["origin"]), occ, header.get("meta"))


def world_digest(grid: VoxelGrid) -> str:
    h = hashlib.sha256()
    h.update(json.dumps([list(grid.shape), grid.voxel_size, grid.origin.tolist()]).encode())
    h.update(np.packbits(grid.occupancy.ravel()).tobytes())
    return h.hexdigest()[:16]
