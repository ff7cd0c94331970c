"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np

ROTATION_TOL = 1e-9


def as_float_array(x, name: str = "array") -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def check_rotation(R: np.ndarray, dim: int, tol: float = ROTATION_TOL) -> np.ndarray:
    """Validate an orthonormal rotation matrix with determinant +1."""
    R = np.asarray(R, dtype=float)
    if R.shape != (dim, dim):
        raise ValueError(f"rotation must be {dim}x{dim}, got {R.shape}")
    err = np.abs(R @ R.T - np.eye(dim)).max()
    if err > tol:
        raise ValueError(f"rotation not orthonormal (max |R R^T - I| = {err:.3e})")
    if np.linalg.det(R) < 0:
        raise ValueError("rotation has negative determinant (reflection)")
    return R


def check_joint_config(q, n_dof: int, name: str = "q") -> np.ndarray:
    """Coerce to a finite float vector of length ``n_dof``.

    Accepts batched input of shape (..., n_dof); the trailing axis is checked.
    """
    q = as_float_array(q, name)
    if q.shape[-1:] != (n_dof,):
        raise ValueError(f"{name} must have trailing dimension {n_dof}, got shape {q.shape}")
    return q


def check_position(x, dim: int, name: str = "position") -> np.ndarray:
    x = as_float_array(x, name)
    if x.shape[-1:] != (dim,):
        raise ValueError(f"{name} must have trailing dimension {dim}, got shape {x.shape}")
    return x


def check_index(i: int, n: int, name: str = "index") -> int:
    i = int(i)
    if not 0 <= i < n:
        raise IndexError(f"{name} {i} out of range [0, {n})")
    return i
