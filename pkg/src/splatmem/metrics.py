"""IoU metrics under the per-frame frustum and whole-episode protocols."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CameraFrame
from .errors import InvalidInputError
from .grid import LABEL_MODE, VoxelGrid


@dataclass
class MetricReport:
    """Occupancy IoU, per-class IoU (NaN where a class has empty union),
    and mean IoU over classes with ground-truth support."""

    iou: float
    per_class_iou: np.ndarray
    miou: float
    observed_fraction: float

    def to_text(self) -> str:
        lines = [
            f"iou {self.iou:.6f}",
            f"miou {self.miou:.6f}",
            f"observed_fraction {self.observed_fraction:.6f}",
        ]
        for c, v in enumerate(self.per_class_iou):
            lines.append(f"class_{c}_iou " + ("absent" if np.isnan(v) else f"{v:.6f}"))
        return "\n".join(lines) + "\n"


def _check_labels(pred: VoxelGrid, gt: VoxelGrid, mask: np.ndarray) -> np.ndarray:
    if pred.mode != LABEL_MODE or gt.mode != LABEL_MODE:
        raise InvalidInputError("iou expects label grids")
    if not pred.same_geometry(gt):
        raise InvalidInputError("pred and gt grids are not congruent")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != pred.dims:
        raise InvalidInputError("mask shape does not match the grids")
    if not np.any(mask):
        raise InvalidInputError("mask selects no voxels")
    return mask


def iou(pred: VoxelGrid, gt: VoxelGrid, mask: np.ndarray) -> MetricReport:
    """Occupancy and per-class intersection-over-union over masked voxels.

    Occupancy treats every non-empty label as occupied. A class whose
    prediction/ground-truth union is empty gets the NaN sentinel; the mean
    covers only classes with ground-truth support.
    """
    mask = _check_labels(pred, gt, mask)
    p = pred.values[mask].astype(np.int64)
    g = gt.values[mask].astype(np.int64)
    empty = gt.num_classes - 1

    po, go = p != empty, g != empty
    union = np.count_nonzero(po | go)
    inter = np.count_nonzero(po & go)
    occ_iou = inter / union if union else 1.0  # both all-empty: no disagreement

    n_occ = gt.num_classes - 1
    per_class = np.full(n_occ, np.nan)
    supported = np.zeros(n_occ, dtype=bool)
    for c in range(n_occ):
        pc, gc = p == c, g == c
        u = np.count_nonzero(pc | gc)
        if u:
            per_class[c] = np.count_nonzero(pc & gc) / u
        supported[c] = bool(np.any(gc))
    miou = float(np.mean(per_class[supported])) if np.any(supported) else float("nan")
    return MetricReport(float(occ_iou), per_class, miou,
                        float(mask.sum() / mask.size))


def local_mask(grid: VoxelGrid, frame: CameraFrame) -> np.ndarray:
    """Voxels whose centers fall inside one frame's frustum."""
    centers = grid.centers().reshape(-1, 3)
    return frame.contains(centers).reshape(grid.dims)


def observed_mask(grid: VoxelGrid, frames: list[CameraFrame]) -> np.ndarray:
    """Union of per-frame frustum masks over an exploration sequence."""
    if not frames:
        raise InvalidInputError("observed_mask needs at least one frame")
    out = np.zeros(grid.dims, dtype=bool)
    for f in frames:
        out |= local_mask(grid, f)
    return out
