"""Object points inside the gripper closing volume, in gripper coordinates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import GraspPose, GripperSpec, to_gripper_frame

EXTRACTION_MODES = ("static",)

# World-frame prefilter slack; far larger than any rounding in the transform.
_PREFILTER_PAD = 1e-6


@dataclass(frozen=True, eq=False)
class GripperFrameCloud:
    points: np.ndarray
    source_object: str
    pose: GraspPose
    spec: GripperSpec

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            raise ValueError("gripper-frame cloud must be nonempty")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


def voxel_indices(uvt, spec):
    """Integer voxel coordinates ``(i_u, i_v, i_t)``, unclamped."""
    uvt = np.asarray(uvt, dtype=float)
    offset = np.array([spec.width / 2, spec.height / 2, 0.0])
    return np.floor((uvt + offset) / spec.resolution).astype(np.int64)


def inside_closing_box(uvt, spec):
    """Half-open containment mask: ``lo <= x < hi`` on every axis.

    A point is also required to land on a valid voxel index so that
    rounding in the index computation can never push an accepted point
    off the grid.
    """
    uvt = np.asarray(uvt, dtype=float).reshape(-1, 3)
    lo, hi = spec.lower, spec.upper
    mask = np.all((uvt >= lo) & (uvt < hi), axis=1)
    idx = voxel_indices(uvt, spec)
    mask &= np.all((idx >= 0) & (idx < np.array(spec.dims)), axis=1)
    return mask


def _world_aabb(pose, spec):
    corners = np.array([[x, y, z]
                        for x in (spec.lower[0], spec.upper[0])
                        for y in (spec.lower[1], spec.upper[1])
                        for z in (spec.lower[2], spec.upper[2])])
    world = pose.frame.apply(corners)
    return world.min(axis=0) - _PREFILTER_PAD, world.max(axis=0) + _PREFILTER_PAD


def extract_region(cloud, pose, spec, source_object="", prefilter=False):
    """Gripper-frame points of ``cloud`` inside the closing volume, or None.

    ``prefilter`` skips points outside the (padded) world-frame bounding box
    of the closing volume before transforming; the result is identical.
    """
    pts = cloud.points if hasattr(cloud, "points") else np.asarray(cloud, dtype=float)
    if prefilter:
        lo, hi = _world_aabb(pose, spec)
        pts = pts[np.all((pts >= lo) & (pts <= hi), axis=1)]
    uvt = to_gripper_frame(pts, pose)
    kept = uvt[inside_closing_box(uvt, spec)]
    if len(kept) == 0:
        return None
    return GripperFrameCloud(kept, source_object, pose, spec)


def extract_regions(cloud, poses, spec, source_object=""):
    """:func:`extract_region` for many poses of one cloud.

    Only points within a KD-tree ball around each closing-box centre (half
    the box diagonal plus slack) are transformed. Indices are taken in cloud
    order, so every region equals the brute-force result exactly.
    """
    pts = cloud.points if hasattr(cloud, "points") else np.asarray(cloud, dtype=float)
    if not poses or len(pts) == 0:
        return [None] * len(poses)
    centre = np.array([0.0, 0.0, spec.depth / 2])
    centres = np.array([p.frame.apply(centre) for p in poses])
    radius = spec.diagonal / 2 + _PREFILTER_PAD
    neighbours = cKDTree(pts).query_ball_point(centres, radius, return_sorted=True)
    out = []
    for pose, idx in zip(poses, neighbours):
        if not idx:
            out.append(None)
            continue
        uvt = to_gripper_frame(pts[idx], pose)
        kept = uvt[inside_closing_box(uvt, spec)]
        out.append(GripperFrameCloud(kept, source_object, pose, spec) if len(kept) else None)
    return out


@dataclass
class FilterResult:
    regions: list
    dropped_empty: int = 0
    dropped_small: int = 0

    @property
    def dropped(self):
        return self.dropped_empty + self.dropped_small


def filter_nonempty(regions, min_points=1):
    """Drop empty (None) regions and those with fewer than ``min_points`` points."""
    kept = []
    empty = small = 0
    for region in regions:
        if region is None:
            empty += 1
        elif len(region) < min_points:
            small += 1
        else:
            kept.append(region)
    return FilterResult(kept, empty, small)
