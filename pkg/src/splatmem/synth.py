"""Synthetic scenes standing in for a learned perception stack.

Scenes are box compositions voxelized into ground-truth label grids.
Depth comes from exact voxel ray marching (amanatides-woo stepping), the
lifter reprojects sampled depths through the intrinsics, and a noise
controllable stub predictor turns ground truth into per-frame primitive
batches so the temporal pipeline can run end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attn import PrimitiveBatch
from .conf import ConfidenceConfig, confidence_values
from .core import NUM_CLASSES, CameraFrame, GaussianPrimitive
from .errors import InvalidInputError
from .grid import LABEL_MODE, VoxelGrid

DEFAULT_INTRINSICS = np.array([[500.0, 0.0, 320.0], [0.0, 500.0, 240.0], [0.0, 0.0, 1.0]])
DEFAULT_WIDTH, DEFAULT_HEIGHT = 640, 480
DEFAULT_NEAR, DEFAULT_FAR = 0.1, 10.0

LIFT_GRID_H, LIFT_GRID_W = 30, 40
STUB_LOGIT_MAGNITUDE = 10.0
STUB_MOVED_OPACITY = 0.5


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray
    cls: int

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=np.float64))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=np.float64))
        if np.any(self.hi <= self.lo):
            raise InvalidInputError("box hi must exceed lo on every axis")


@dataclass
class SceneSpec:
    """Axis-aligned box composition over a bounded extent.

    Overlapping boxes resolve by list order: the last box containing a
    voxel center wins.
    """

    extent: np.ndarray
    boxes: list[Box] = field(default_factory=list)
    gt_voxel_size: float = 0.08
    seed: int = 0
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        self.extent = np.asarray(self.extent, dtype=np.float64)
        if np.any(self.extent <= 0):
            raise InvalidInputError("extent must be positive")
        if self.gt_voxel_size <= 0:
            raise InvalidInputError("gt_voxel_size must be positive")
        for b in self.boxes:
            if np.any(b.lo < -1e-9) or np.any(b.hi > self.extent + 1e-9):
                raise InvalidInputError(f"box {b} exceeds the scene extent")
            if not (0 <= b.cls <= self.num_classes - 2):
                raise InvalidInputError(f"box class {b.cls} outside occupied range")


def save_scene_spec(path, spec: SceneSpec) -> None:
    """Write the human-readable scene format (one record per line)."""
    lines = [
        f"extent {spec.extent[0]} {spec.extent[1]} {spec.extent[2]}",
        f"voxel_size {spec.gt_voxel_size}",
        f"seed {spec.seed}",
        f"classes {spec.num_classes}",
    ]
    for b in spec.boxes:
        lines.append(
            "box "
            + " ".join(str(v) for v in (*b.lo, *b.hi))
            + f" {b.cls}"
        )
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_scene_spec(path) -> SceneSpec:
    with open(path) as f:
        text = f.read()
    return parse_scene_spec(text)


def parse_scene_spec(text: str) -> SceneSpec:
    extent = None
    voxel_size = 0.08
    seed = 0
    num_classes = NUM_CLASSES
    boxes: list[Box] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *vals = line.split()
        try:
            if key == "extent":
                extent = [float(v) for v in vals]
            elif key == "voxel_size":
                voxel_size = float(vals[0])
            elif key == "seed":
                seed = int(vals[0])
            elif key == "classes":
                num_classes = int(vals[0])
            elif key == "box":
                nums = [float(v) for v in vals]
                if len(nums) != 7:
                    raise ValueError("box needs 6 corner values and a class")
                boxes.append(Box(nums[0:3], nums[3:6], int(nums[6])))
            else:
                raise ValueError(f"unknown record {key!r}")
        except (ValueError, IndexError) as e:
            raise InvalidInputError(f"scene spec line {lineno}: {e}") from e
    if extent is None:
        raise InvalidInputError("scene spec is missing the extent record")
    return SceneSpec(extent, boxes, voxel_size, seed, num_classes)


def default_scene() -> SceneSpec:
    """A room-like scene: thin floor, walls, and a few furniture panels.

    Every occupied region is a one-voxel-thick shell, so an inside-out
    camera sweep can observe essentially all of the occupied space.
    Standing structure reaches the ground (replacing the floor beneath it)
    to keep every surface junction a clean class boundary.
    """
    t = 0.08  # shell thickness = one voxel
    e = (4.8, 4.8, 2.88)
    boxes = [
        Box((0.0, 0.0, 0.0), (4.8, 4.8, t), 1),              # floor
        Box((0.0, 0.0, 0.0), (t, 4.8, 2.88), 2),             # wall x=0
        Box((4.8 - t, 0.0, 0.0), (4.8, 4.8, 2.88), 2),       # wall x=max
        Box((t, 0.0, 0.0), (4.8 - t, t, 2.88), 2),           # wall y=0
        Box((t, 4.8 - t, 0.0), (4.8 - t, 4.8, 2.88), 2),     # wall y=max
        Box((0.0, 1.6, 1.12), (t, 3.2, 2.08), 3),            # window cut into wall
        Box((1.04, 0.96, 0.0), (1.12, 2.24, 1.04), 9),       # furniture panel
        Box((3.36, 1.2, 0.0), (3.44, 2.4, 0.96), 6),         # sofa back panel
        Box((1.6, 3.68, 0.0), (3.2, 3.76, 1.2), 7),          # table panel
        Box((2.0, 0.88, 0.72), (2.8, 0.96, 1.44), 8),        # screen panel
        Box((2.24, 2.24, 0.64), (2.64, 2.64, 0.72), 4),      # floating shelf slab
    ]
    return SceneSpec(e, boxes, 0.08, seed=0)


def generate_scene(spec: SceneSpec) -> VoxelGrid:
    """Voxelize a scene spec into a label grid (last box wins on overlap)."""
    dims = tuple(int(round(spec.extent[a] / spec.gt_voxel_size)) for a in range(3))
    grid = VoxelGrid.empty_labels((0.0, 0.0, 0.0), spec.gt_voxel_size, dims,
                                  spec.num_classes)
    labels = grid.values
    vs = spec.gt_voxel_size
    for b in spec.boxes:
        # voxel centers (i + 0.5) vs inside [lo, hi], closed on both ends
        lo = np.maximum(np.ceil(b.lo / vs - 0.5).astype(int), 0)
        hi = np.minimum(np.floor(b.hi / vs - 0.5).astype(int), np.array(dims) - 1)
        if np.any(lo > hi):
            continue
        labels[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1] = b.cls
    return grid


@dataclass
class DepthImage:
    """Per-pixel camera-space depth (z, meters); infinity marks no hit."""

    width: int
    height: int
    depths: np.ndarray  # (height, width)
    degenerate: bool = False  # camera started inside an occupied voxel

    def __post_init__(self):
        if self.depths.shape != (self.height, self.width):
            raise InvalidInputError("depth array shape must be (height, width)")


@dataclass
class RayHits:
    """Raw trace results for a pixel sample set."""

    hit: np.ndarray        # (N,) bool
    t_entry: np.ndarray    # (N,) z-depth where the ray entered the hit voxel
    t_exit: np.ndarray     # (N,) z-depth where it would leave that voxel
    voxel: np.ndarray      # (N, 3) int index of the hit voxel
    face_axis: np.ndarray  # (N,) axis of the face the ray entered through


def trace_rays(gt: VoxelGrid, frame: CameraFrame, pixels: np.ndarray,
               far: float | None = None) -> RayHits:
    """March rays through the label grid to the first occupied voxel.

    The ray parameter equals camera-space depth, so entry/exit values plug
    straight into the lifter. Marching stops at `far` (defaults to the
    frame's far plane) or at the grid boundary.
    """
    if gt.mode != LABEL_MODE:
        raise InvalidInputError("trace_rays expects a label grid")
    far = frame.far if far is None else far
    origin, dirs = frame.pixel_rays(pixels)
    n = len(dirs)
    occupied = gt.values != gt.num_classes - 1
    dims = np.array(gt.dims)
    vs = gt.voxel_size

    hit = np.zeros(n, dtype=bool)
    t_entry = np.full(n, np.inf)
    t_exit = np.full(n, np.inf)
    voxel = np.zeros((n, 3), dtype=np.int64)
    # Face the ray crossed into its current voxel; rays starting inside a
    # voxel fall back to their dominant direction axis.
    face = np.argmax(np.abs(dirs), axis=1)

    with np.errstate(divide="ignore", invalid="ignore"):
        inv_d = np.where(dirs != 0, 1.0 / dirs, np.inf)
    lo_t = (gt.origin - origin) * inv_d
    hi_t = (gt.origin + dims * vs - origin) * inv_d
    t0 = np.nanmax(np.minimum(lo_t, hi_t), axis=1)
    t1 = np.nanmin(np.maximum(lo_t, hi_t), axis=1)
    # Rays with a zero direction component miss unless the origin lies
    # inside that axis slab.
    for a in range(3):
        z = dirs[:, a] == 0
        inside = (origin[a] >= gt.origin[a]) & (origin[a] <= gt.origin[a] + dims[a] * vs)
        t1[z & ~inside] = -np.inf
    t_start = np.maximum(t0, 0.0)
    alive = (t_start <= t1) & (t_start <= far)

    pos = origin + t_start[:, None] * dirs
    idx = np.floor((pos - gt.origin) / vs).astype(np.int64)
    idx = np.clip(idx, 0, dims - 1)
    step = np.where(dirs > 0, 1, -1)
    with np.errstate(divide="ignore"):
        t_delta = np.where(dirs != 0, vs / np.abs(dirs), np.inf)
    next_face = gt.origin + (idx + (dirs > 0)) * vs
    with np.errstate(invalid="ignore"):
        t_max = np.where(dirs != 0, (next_face - origin) * inv_d, np.inf)

    t_cur = t_start.copy()
    while np.any(alive):
        live = np.nonzero(alive)[0]
        occ = occupied[idx[live, 0], idx[live, 1], idx[live, 2]]
        newly = live[occ]
        if len(newly):
            hit[newly] = True
            t_entry[newly] = t_cur[newly]
            t_exit[newly] = np.min(t_max[newly], axis=1)
            voxel[newly] = idx[newly]
            alive[newly] = False
            live = live[~occ]
            if len(live) == 0:
                continue
        axis = np.argmin(t_max[live], axis=1)
        t_cur[live] = t_max[live, axis]
        idx[live, axis] += step[live, axis]
        face[live] = axis
        t_max[live, axis] += t_delta[live, axis]
        out = (
            (idx[live, axis] < 0)
            | (idx[live, axis] >= dims[axis])
            | (t_cur[live] > far)
            | (t_cur[live] > t1[live])
        )
        alive[live[out]] = False
    return RayHits(hit, t_entry, t_exit, voxel, face)


def render_depth(gt: VoxelGrid, frame: CameraFrame) -> DepthImage:
    """Full-image depth render; pixel (r, c) uses the ray through its center."""
    uu, vv = np.meshgrid(np.arange(frame.width) + 0.5,
                         np.arange(frame.height) + 0.5)
    pixels = np.stack([uu.ravel(), vv.ravel()], axis=1)
    hits = trace_rays(gt, frame, pixels)
    depths = np.where(hits.hit, hits.t_entry, np.inf).reshape(frame.height, frame.width)
    cam_vox = gt.voxel_of(frame.position[None, :])[0]
    degenerate = bool(
        np.all((cam_vox >= 0) & (cam_vox < np.array(gt.dims)))
        and gt.values[tuple(cam_vox)] != gt.num_classes - 1
    )
    return DepthImage(frame.width, frame.height, depths, degenerate)


def sample_pixels(width: int, height: int, grid_h: int, grid_w: int) -> np.ndarray:
    """Centers of the pixels nearest a uniform grid_h x grid_w sampling grid."""
    us = np.minimum(np.floor((np.arange(grid_w) + 0.5) * width / grid_w), width - 1)
    vs = np.minimum(np.floor((np.arange(grid_h) + 0.5) * height / grid_h), height - 1)
    uu, vv = np.meshgrid(us + 0.5, vs + 0.5)
    return np.stack([uu.ravel(), vv.ravel()], axis=1)


def lift(
    depth: DepthImage,
    frame: CameraFrame,
    grid_h: int = LIFT_GRID_H,
    grid_w: int = LIFT_GRID_W,
    init_scale: float = 0.08,
    feature_dim: int = 32,
    num_classes: int = NUM_CLASSES,
) -> list[GaussianPrimitive]:
    """Reproject sampled depths into world-frame initial primitives.

    Samples a uniform grid of pixel centers; finite depths become means at
    depth * K^-1 (u, v, 1) mapped through the pose. Attributes start
    neutral: isotropic init_scale, identity rotation, opacity 0.5, zero
    logits and features. Infinite-depth samples are skipped.
    """
    pixels = sample_pixels(depth.width, depth.height, grid_h, grid_w)
    px = pixels[:, 0].astype(int)
    py = pixels[:, 1].astype(int)
    d = depth.depths[py, px]
    keep = np.isfinite(d) & (d > 0)
    origin, dirs = frame.pixel_rays(pixels[keep])
    means = origin + d[keep, None] * dirs
    out = []
    for m in means:
        out.append(
            GaussianPrimitive(
                m, np.full(3, init_scale), np.array([1.0, 0.0, 0.0, 0.0]),
                0.5, np.zeros(num_classes - 1), np.zeros(feature_dim),
            )
        )
    return out


@dataclass(frozen=True)
class NoiseParams:
    depth_sigma: float = 0.0
    logit_noise: float = 0.0
    flip_prob: float = 0.0


@dataclass(frozen=True)
class StubConfig:
    """Controls the shape and strength of stubbed local predictions.

    Splats are surface aligned: thin along the struck voxel face's normal
    and sized in-plane to the local sample footprint (ray spacing grows
    with distance and grazing incidence). The in-plane size is further
    capped by how far the struck surface extends in each tangent
    direction, so splats widen over large surfaces without bleeding past
    panel edges.
    """

    grid_h: int = LIFT_GRID_H
    grid_w: int = LIFT_GRID_W
    feature_dim: int = 32
    normal_scale: float = 0.02
    footprint_gain: float = 1.2
    tangent_scale_min: float = 0.03
    tangent_scale_max: float = 0.25
    # sigma may reach at most (guaranteed support) / spill_margin, keeping
    # the kernel at the first voxel past the surface edge subthreshold
    spill_margin: float = 1.7
    surface_extent_reach: int = 4
    # 0 keeps the ray chord midpoint, 1 snaps to the struck voxel center;
    # grazing chords hug voxel faces, so blending toward the center keeps
    # sample means off cell boundaries
    mean_centering: float = 0.5
    logit_magnitude: float = STUB_LOGIT_MAGNITUDE


def _surface_extent(labels: np.ndarray, voxels: np.ndarray, axis: int,
                    voxel_size: float, reach: int,
                    thin_map: np.ndarray | None = None,
                    normal_axis: np.ndarray | None = None) -> np.ndarray:
    """Symmetric same-surface run length around voxels along an axis.

    Returns meters of guaranteed support on the weaker side, up to `reach`
    voxels. A run ends at the grid edge, at a differently labeled voxel,
    or (when thin_map is given) at a voxel whose local thin axis differs
    from the sample's normal axis, which stops splats from widening around
    plane breaks like wall corners.
    """
    dims = np.array(labels.shape)
    own = labels[voxels[:, 0], voxels[:, 1], voxels[:, 2]]
    contig = np.full(len(voxels), reach, dtype=np.int64)
    for sign in (-1, 1):
        run = np.zeros(len(voxels), dtype=np.int64)
        still = np.ones(len(voxels), dtype=bool)
        for step in range(1, reach + 1):
            probe = voxels.copy()
            probe[:, axis] += sign * step
            ok = (probe[:, axis] >= 0) & (probe[:, axis] < dims[axis])
            hit = np.zeros(len(voxels), dtype=bool)
            pc = np.clip(probe, 0, dims - 1)
            hit[ok] = labels[pc[ok, 0], pc[ok, 1], pc[ok, 2]] == own[ok]
            if thin_map is not None:
                same_plane = np.zeros(len(voxels), dtype=bool)
                same_plane[ok] = thin_map[pc[ok, 0], pc[ok, 1], pc[ok, 2]] == normal_axis[ok]
                hit &= same_plane
            still &= hit
            run += still
        contig = np.minimum(contig, run)
    return contig * voxel_size


def _thin_axis_map(occupied: np.ndarray, reach: int = 2) -> np.ndarray:
    """Per-voxel axis along which the occupied shell is thinnest."""
    runs = np.empty(occupied.shape + (3,), dtype=np.int8)
    for a in range(3):
        total = np.full(occupied.shape, reach, dtype=np.int8)
        for sign in (-1, 1):
            run = np.zeros(occupied.shape, dtype=np.int8)
            still = np.ones(occupied.shape, dtype=bool)
            for step in range(1, reach + 1):
                shifted = np.zeros(occupied.shape, dtype=bool)
                src = [slice(None)] * 3
                dst = [slice(None)] * 3
                if sign > 0:
                    src[a] = slice(step, None)
                    dst[a] = slice(None, -step)
                else:
                    src[a] = slice(None, -step)
                    dst[a] = slice(step, None)
                shifted[tuple(dst)] = occupied[tuple(src)]
                still &= shifted
                run += still
            total = np.minimum(total, run)
        runs[..., a] = total
    return np.argmin(runs, axis=-1).astype(np.int8)


def stub_predict(
    gt: VoxelGrid,
    frame: CameraFrame,
    noise: NoiseParams,
    seed: int,
    stub_cfg: StubConfig | None = None,
    conf_cfg: ConfidenceConfig | None = None,
) -> PrimitiveBatch:
    """Ground-truth-guided local prediction with controllable corruption.

    Traces the lift sampling grid, places each mean at the midpoint of the
    ray's chord through the struck voxel (strictly inside it) plus depth
    noise, and assigns the containing voxel's class as a high-magnitude
    logit. Classes flip to a random wrong class with probability
    flip_prob; additive logit noise follows. Opacity is 1 for consistent
    hits and drops when the perturbed depth leaves the struck voxel.
    """
    cfg = stub_cfg or StubConfig()
    rng = np.random.default_rng(seed)
    pixels = sample_pixels(frame.width, frame.height, cfg.grid_h, cfg.grid_w)
    hits = trace_rays(gt, frame, pixels)
    n_all = len(pixels)
    n_cls = gt.num_classes - 1

    # Fixed draw order keeps runs reproducible for any hit pattern.
    depth_noise = rng.normal(0.0, 1.0, n_all) * noise.depth_sigma
    flip_roll = rng.random(n_all)
    flip_target = rng.integers(0, max(n_cls - 1, 1), n_all)
    logit_noise = rng.normal(0.0, 1.0, (n_all, n_cls)) * noise.logit_noise

    sel = np.nonzero(hits.hit)[0]
    if len(sel) == 0:
        return PrimitiveBatch.empty(cfg.feature_dim, gt.num_classes)
    t_mid = 0.5 * (hits.t_entry[sel] + hits.t_exit[sel])
    origin, dirs = frame.pixel_rays(pixels[sel])
    clean = origin + t_mid[:, None] * dirs
    centers = gt.origin + (hits.voxel[sel] + 0.5) * gt.voxel_size
    clean = clean + cfg.mean_centering * (centers - clean)
    means = clean + depth_noise[sel, None] * dirs

    cell = gt.voxel_of(means)
    in_b = gt.in_bounds(cell)
    cell_cl = np.clip(cell, 0, np.array(gt.dims) - 1)
    land_label = gt.values[cell_cl[:, 0], cell_cl[:, 1], cell_cl[:, 2]]
    hit_label = gt.values[hits.voxel[sel, 0], hits.voxel[sel, 1], hits.voxel[sel, 2]]
    use_land = in_b & (land_label != gt.num_classes - 1)
    cls = np.where(use_land, land_label, hit_label).astype(np.int64)

    flips = flip_roll[sel] < noise.flip_prob
    wrong = (cls + 1 + flip_target[sel]) % n_cls
    cls = np.where(flips, wrong, cls)

    consistent = np.all(cell == hits.voxel[sel], axis=1)
    opac = np.where(consistent, 1.0, STUB_MOVED_OPACITY)

    logits = np.zeros((len(sel), n_cls))
    logits[np.arange(len(sel)), cls] = cfg.logit_magnitude
    logits += logit_noise[sel]

    # Surface-aligned anisotropy. The splat normal is the thinnest axis of
    # the struck shell (ties broken toward the ray's entry face), so
    # grazing side entries into a thin surface still flatten against it.
    # In-plane size follows the local sample footprint (ray spacing grows
    # with range and grazing incidence) but is capped by how far the
    # surface actually extends, so splats never spill past panel rims.
    occupancy = np.where(gt.values != gt.num_classes - 1, 0, 1).astype(np.uint16)
    geom_ext = np.stack(
        [_surface_extent(occupancy, hits.voxel[sel], a, gt.voxel_size,
                         cfg.surface_extent_reach) for a in range(3)],
        axis=1,
    )
    entry = hits.face_axis[sel]
    normal_axis = np.argmin(geom_ext, axis=1)
    entry_is_min = geom_ext[np.arange(len(sel)), entry] <= geom_ext.min(axis=1)
    normal_axis[entry_is_min] = entry[entry_is_min]
    thin_map = _thin_axis_map(gt.values != gt.num_classes - 1,
                              cfg.surface_extent_reach)
    class_ext = np.stack(
        [_surface_extent(gt.values, hits.voxel[sel], a, gt.voxel_size,
                         cfg.surface_extent_reach, thin_map, normal_axis)
         for a in range(3)],
        axis=1,
    )

    pix_angle = max(1.0 / frame.intrinsics[0, 0] * frame.width / cfg.grid_w,
                    1.0 / frame.intrinsics[1, 1] * frame.height / cfg.grid_h)
    d_norm = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    incidence = np.abs(d_norm[np.arange(len(sel)), normal_axis])
    footprint = cfg.footprint_gain * t_mid * pix_angle / np.maximum(incidence, 0.2)
    allowed = (class_ext + 0.5 * gt.voxel_size) / cfg.spill_margin
    scales = np.clip(np.minimum(footprint[:, None], allowed),
                     cfg.tangent_scale_min, cfg.tangent_scale_max)
    scales[np.arange(len(sel)), normal_axis] = cfg.normal_scale

    quats = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (len(sel), 1))
    feats = np.zeros((len(sel), cfg.feature_dim))
    confs = confidence_values(logits, opac, conf_cfg)
    return PrimitiveBatch(means, scales, quats, opac, logits, feats, confs)


def _look_at_pose(position: np.ndarray, forward: np.ndarray) -> np.ndarray:
    """Camera-to-world pose with +z forward, +x right, +y down."""
    f = forward / np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    if abs(f @ up) > 0.999:
        up = np.array([1.0, 0.0, 0.0])
    r = np.cross(f, up)
    r /= np.linalg.norm(r)
    d = np.cross(f, r)
    pose = np.eye(4)
    pose[:3, 0] = r
    pose[:3, 1] = d
    pose[:3, 2] = f
    pose[:3, 3] = position
    return pose


def generate_trajectory(
    spec: SceneSpec,
    n_frames: int = 30,
    seed: int = 0,
    radius_frac: float = 0.32,
    height_frac: float = 0.5,
) -> list[CameraFrame]:
    """Seeded orbital sweep that pans across the scene over n_frames.

    Cameras sit on a circle around the scene center inside free space and
    look inward across the room with a cycling pitch, so the sweep
    progressively covers the floor, the opposite walls, and interior
    structure. Positions falling inside occupied voxels retreat toward
    the center deterministically; a scene with no free voxel at all is
    rejected.
    """
    if n_frames < 1:
        raise InvalidInputError("n_frames must be >= 1")
    gt = generate_scene(spec)
    free = gt.values == gt.num_classes - 1
    if not np.any(free):
        raise InvalidInputError("scene has no free space for a trajectory")
    rng = np.random.default_rng(seed)
    center = spec.extent / 2.0
    radius = radius_frac * float(min(spec.extent[0], spec.extent[1]))
    z = height_frac * float(spec.extent[2])
    pitches = np.array([-0.38, -0.06, 0.2])  # rad, cycled per frame

    frames = []
    for i in range(n_frames):
        theta = 2.0 * np.pi * i / n_frames + rng.uniform(-0.3, 0.3) * 2.0 * np.pi / n_frames
        pitch = pitches[i % len(pitches)] + rng.uniform(-0.05, 0.05)
        pos = np.array([
            center[0] + radius * np.cos(theta),
            center[1] + radius * np.sin(theta),
            z + rng.uniform(-0.08, 0.08),
        ])
        r = radius
        for _ in range(32):
            vox = gt.voxel_of(pos[None, :])[0]
            if np.all((vox >= 0) & (vox < np.array(gt.dims))) and free[tuple(vox)]:
                break
            r *= 0.85
            pos[0] = center[0] + r * np.cos(theta)
            pos[1] = center[1] + r * np.sin(theta)
        else:
            raise InvalidInputError("could not place a camera in free space")
        # look across the room, through the vertical axis of the center
        forward = np.array([
            -np.cos(pitch) * np.cos(theta),
            -np.cos(pitch) * np.sin(theta),
            np.sin(pitch),
        ])
        frames.append(
            CameraFrame(
                DEFAULT_INTRINSICS.copy(), _look_at_pose(pos, forward),
                DEFAULT_WIDTH, DEFAULT_HEIGHT, DEFAULT_NEAR, DEFAULT_FAR,
            )
        )
    return frames
