"""Confidence-aware voxel fusion.

Primitives are grouped by the voxel cell containing their mean, weighted
by a per-cell softmax over their confidences, and merged into one
primitive per occupied cell by convex combination of every attribute and
feature. Quaternions are sign-aligned to the highest-weight group member
before summation since q and -q encode the same rotation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MIN_SCALE
from .errors import InvalidInputError

WORLD_ZERO = "world_zero"
SCENE_MIN = "scene_min"

_QUAT_SUM_EPS = 1e-8


@dataclass(frozen=True)
class FusionConfig:
    voxel_size: float = 0.12
    temperature: float = 1.0
    grid_origin_policy: str = WORLD_ZERO

    def __post_init__(self):
        if self.voxel_size <= 0:
            raise InvalidInputError("voxel_size must be positive")
        if self.temperature <= 0:
            raise InvalidInputError("temperature must be positive")
        if self.grid_origin_policy not in (WORLD_ZERO, SCENE_MIN):
            raise InvalidInputError(
                f"unknown grid_origin_policy {self.grid_origin_policy!r}"
            )


def _means_of(primitives) -> np.ndarray:
    if hasattr(primitives, "means"):
        return np.asarray(primitives.means, dtype=np.float64)
    return np.stack([g.mean for g in primitives]) if primitives else np.zeros((0, 3))


def fusion_origin(means: np.ndarray, cfg: FusionConfig) -> np.ndarray:
    if cfg.grid_origin_policy == WORLD_ZERO or len(means) == 0:
        return np.zeros(3)
    return means.min(axis=0)


def assign_voxels(primitives, cfg: FusionConfig) -> np.ndarray:
    """Integer grouping cell floor((mean - origin) / voxel_size), (N, 3)."""
    means = _means_of(primitives)
    origin = fusion_origin(means, cfg)
    return np.floor((means - origin) / cfg.voxel_size).astype(np.int64)


def _group_slices(cells: np.ndarray):
    """Sort rows lexicographically and yield (order, start, stop) per group."""
    if len(cells) == 0:
        return np.zeros(0, dtype=np.int64), []
    order = np.lexsort((cells[:, 2], cells[:, 1], cells[:, 0]))
    sc = cells[order]
    change = np.any(sc[1:] != sc[:-1], axis=1)
    starts = np.concatenate([[0], np.nonzero(change)[0] + 1])
    stops = np.concatenate([starts[1:], [len(cells)]])
    return order, list(zip(starts, stops))


def fusion_weights(confidences, cells, temperature: float) -> np.ndarray:
    """Per-cell softmax of confidence / temperature; each cell sums to 1."""
    conf = np.asarray(confidences, dtype=np.float64)
    cells = np.asarray(cells)
    if len(conf) != len(cells):
        raise InvalidInputError("confidences and cells must have equal length")
    if temperature <= 0:
        raise InvalidInputError("temperature must be positive")
    w = np.empty(len(conf))
    order, groups = _group_slices(cells)
    for a, b in groups:
        idx = order[a:b]
        z = conf[idx] / temperature
        z -= z.max()
        e = np.exp(z)
        w[idx] = e / e.sum()
    return w


@dataclass
class FusedSet:
    """One merged primitive per occupied cell, in cell-sorted order."""

    means: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    opacities: np.ndarray
    logits: np.ndarray
    features: np.ndarray
    cells: np.ndarray               # (M, 3) grouping cell of each output
    quat_fallback: np.ndarray       # (M,) True where the quaternion sum degenerated

    def __len__(self) -> int:
        return len(self.means)


def fuse(primitives, features, weights, cells) -> FusedSet:
    """Merge co-cell primitives by confidence-weighted summation.

    `weights` must come from fusion_weights over the same `cells`. Output
    order is canonical (cell-sorted), so the result is independent of the
    input ordering.
    """
    if hasattr(primitives, "means"):
        means = np.asarray(primitives.means, dtype=np.float64)
        scales = np.asarray(primitives.scales, dtype=np.float64)
        quats = np.asarray(primitives.rotations, dtype=np.float64)
        opac = np.asarray(primitives.opacities, dtype=np.float64)
        logits = np.asarray(primitives.logits, dtype=np.float64)
    else:
        prims = list(primitives)
        means = np.stack([g.mean for g in prims])
        scales = np.stack([g.scale for g in prims])
        quats = np.stack([g.rotation for g in prims])
        opac = np.array([g.opacity for g in prims])
        logits = np.stack([g.logits for g in prims])
    feats = np.asarray(features, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    cells = np.asarray(cells)
    n = len(means)
    if not (len(feats) == len(w) == len(cells) == n):
        raise InvalidInputError("primitives, features, weights, cells length mismatch")

    order, groups = _group_slices(cells)
    m = len(groups)
    out = FusedSet(
        means=np.empty((m, 3)),
        scales=np.empty((m, 3)),
        rotations=np.empty((m, 4)),
        opacities=np.empty(m),
        logits=np.empty((m, logits.shape[1])),
        features=np.empty((m, feats.shape[1] if feats.ndim == 2 else 0)),
        cells=np.empty((m, 3), dtype=np.int64),
        quat_fallback=np.zeros(m, dtype=bool),
    )
    for gi, (a, b) in enumerate(groups):
        idx = order[a:b]
        gw = w[idx]
        out.cells[gi] = cells[idx[0]]
        out.means[gi] = gw @ means[idx]
        out.scales[gi] = np.maximum(gw @ scales[idx], MIN_SCALE)
        out.opacities[gi] = gw @ opac[idx]
        out.logits[gi] = gw @ logits[idx]
        out.features[gi] = gw @ feats[idx]
        ref = quats[idx[np.argmax(gw)]]
        aligned = quats[idx] * np.where(quats[idx] @ ref < 0, -1.0, 1.0)[:, None]
        qs = gw @ aligned
        norm = np.linalg.norm(qs)
        if norm < _QUAT_SUM_EPS:
            out.rotations[gi] = ref
            out.quat_fallback[gi] = True
        else:
            out.rotations[gi] = qs / norm
    return out


def fuse_with_config(primitives, features, confidences, cfg: FusionConfig) -> FusedSet:
    """Convenience: assign cells, weight, and fuse in one call."""
    cells = assign_voxels(primitives, cfg)
    w = fusion_weights(confidences, cells, cfg.temperature)
    return fuse(primitives, features, w, cells)
