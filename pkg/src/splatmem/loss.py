"""Forward evaluation of the scene-completion training objective.

Combines focal, Lovasz-softmax, and geometric scale terms with fixed
weights, plus the decayed multi-stage weighting and the optional
confidence-based per-voxel reweighting variants. Everything is forward
only; there is no autodiff here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .grid import LABEL_MODE, PROB_MODE, VoxelGrid

_EPS = 1e-12

REWEIGHT_NONE = "none"
REWEIGHT_EXP = "exp_penalty"
REWEIGHT_LOG = "log_penalty"


@dataclass(frozen=True)
class LossConfig:
    lambda1: float = 100.0
    lambda2: float = 2.0
    focal_gamma: float = 2.0
    stage_count: int = 1
    reweight: str = REWEIGHT_NONE
    reweight_lambda: float = 0.2

    def __post_init__(self):
        if self.stage_count < 1:
            raise InvalidInputError("stage_count must be >= 1")
        if self.reweight not in (REWEIGHT_NONE, REWEIGHT_EXP, REWEIGHT_LOG):
            raise InvalidInputError(f"unknown reweight mode {self.reweight!r}")


def _check_pair(pred: VoxelGrid, gt: VoxelGrid, mask: np.ndarray) -> np.ndarray:
    if pred.mode != PROB_MODE:
        raise InvalidInputError("pred must be a probability grid")
    if gt.mode != LABEL_MODE:
        raise InvalidInputError("gt must be a label grid")
    if not pred.same_geometry(gt):
        raise InvalidInputError("pred and gt grids are not congruent")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != pred.dims:
        raise InvalidInputError("mask shape does not match the grids")
    if not np.any(mask):
        raise InvalidInputError("mask selects no voxels")
    return mask


def focal_loss(pred: VoxelGrid, gt: VoxelGrid, mask: np.ndarray,
               gamma: float = 2.0) -> float:
    """Mean -(1 - p_t)^gamma log p_t over masked voxels, all classes.

    gamma = 0 reduces to plain cross-entropy.
    """
    mask = _check_pair(pred, gt, mask)
    probs = pred.values[mask]
    labels = gt.values[mask].astype(np.int64)
    pt = np.clip(probs[np.arange(len(labels)), labels], _EPS, 1.0)
    return float(np.mean(-((1.0 - pt) ** gamma) * np.log(pt)))


def lovasz_loss(pred: VoxelGrid, gt: VoxelGrid, mask: np.ndarray) -> float:
    """Lovasz-softmax: sorted-error Jaccard extension, averaged over the
    classes present in the masked ground truth."""
    mask = _check_pair(pred, gt, mask)
    probs = pred.values[mask]
    labels = gt.values[mask].astype(np.int64)
    losses = []
    for c in np.unique(labels):
        fg = (labels == c).astype(np.float64)
        errors = np.abs(fg - probs[:, c])
        order = np.argsort(-errors, kind="stable")
        fg_s = fg[order]
        gts = fg.sum()
        inter = gts - np.cumsum(fg_s)
        union = gts + np.cumsum(1.0 - fg_s)
        jac = 1.0 - inter / union
        if len(jac) > 1:
            jac[1:] = jac[1:] - jac[:-1]
        losses.append(float(errors[order] @ jac))
    return float(np.mean(losses))


def geo_scale_loss(pred: VoxelGrid, gt: VoxelGrid, mask: np.ndarray) -> float:
    """Soft precision/recall/specificity log loss on occupancy.

    x = 1 - empty-channel probability, y = occupied indicator. Requires at
    least one occupied and one empty masked ground-truth voxel.
    """
    mask = _check_pair(pred, gt, mask)
    x = 1.0 - pred.values[mask][:, -1]
    y = (gt.values[mask] != gt.num_classes - 1).astype(np.float64)
    n_occ = y.sum()
    if n_occ == 0 or n_occ == len(y):
        raise InvalidInputError("gt must contain both occupied and empty voxels")
    xy = float(x @ y)
    precision = xy / max(float(x.sum()), _EPS)
    recall = xy / n_occ
    spec = float((1.0 - x) @ (1.0 - y)) / float((1.0 - y).sum())
    return float(
        -(np.log(max(precision, _EPS)) + np.log(max(recall, _EPS))
          + np.log(max(spec, _EPS)))
    )


def ssc_loss(pred: VoxelGrid, gt: VoxelGrid, mask: np.ndarray,
             cfg: LossConfig | None = None) -> float:
    """lambda1 * focal + lambda2 * lovasz + geo_scale."""
    cfg = cfg or LossConfig()
    return (
        cfg.lambda1 * focal_loss(pred, gt, mask, cfg.focal_gamma)
        + cfg.lambda2 * lovasz_loss(pred, gt, mask)
        + geo_scale_loss(pred, gt, mask)
    )


def stage_weights(n: int) -> np.ndarray:
    """Decayed supervision weights w_j = 2^j / (2^n - 1) for j = 1..n.

    As printed, the weights sum to 2 for every n; no renormalization is
    applied.
    """
    if n < 1:
        raise InvalidInputError("stage count must be >= 1")
    j = np.arange(1, n + 1, dtype=np.float64)
    return 2.0**j / (2.0**n - 1.0)


def reweighted_loss(base: np.ndarray, conf_map: np.ndarray, mode: str,
                    reweight_lambda: float = 0.2) -> float:
    """Confidence-reweighted mean of per-voxel losses.

    exp_penalty: mean(C' L + lambda exp(-C')) with C' = exp(c');
    log_penalty: mean(C' L - lambda log(C')) with C' = 1 + exp(c').
    Both mappings keep C' > 0, so the log never degenerates.
    """
    base = np.asarray(base, dtype=np.float64)
    conf_map = np.asarray(conf_map, dtype=np.float64)
    if base.shape != conf_map.shape:
        raise InvalidInputError("loss map and confidence map shapes differ")
    if mode == REWEIGHT_NONE:
        return float(np.mean(base))
    if mode == REWEIGHT_EXP:
        c = np.exp(conf_map)
        return float(np.mean(c * base + reweight_lambda * np.exp(-c)))
    if mode == REWEIGHT_LOG:
        c = 1.0 + np.exp(conf_map)
        return float(np.mean(c * base - reweight_lambda * np.log(c)))
    raise InvalidInputError(f"unknown reweight mode {mode!r}")
