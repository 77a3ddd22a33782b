"""Gripper model, grasp frames, surface sampling and normal estimation.

Gripper frame convention: ``u`` is the closing direction between the jaws,
``v`` runs along the finger height and ``t`` is the approach direction.
The closing volume is the box ``u in [-w/2, w/2)``, ``v in [-h/2, h/2)``,
``t in [0, depth)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from .model_io import PointCloud
from .transforms import RigidTransform

DEFAULT_K_NEIGHBORS = 10


@dataclass(frozen=True)
class GripperSpec:
    width: float = 0.07
    height: float = 0.03
    depth: float = 0.05
    resolution: float = 0.01

    def __post_init__(self):
        for name in ("width", "height", "depth", "resolution"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
            object.__setattr__(self, name, float(value))
        for name in ("width", "height", "depth"):
            ratio = getattr(self, name) / self.resolution
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ValueError(f"{name}/resolution = {ratio!r} is not a positive integer")

    @property
    def dims(self):
        """Voxel counts ``(a, b, c)`` along ``(u, v, t)``."""
        return (round(self.width / self.resolution),
                round(self.height / self.resolution),
                round(self.depth / self.resolution))

    @property
    def sum_voxel(self):
        a, b, c = self.dims
        return a * b * c

    @property
    def lower(self):
        return np.array([-self.width / 2, -self.height / 2, 0.0])

    @property
    def upper(self):
        return np.array([self.width / 2, self.height / 2, self.depth])

    @property
    def diagonal(self):
        return math.sqrt(self.width ** 2 + self.height ** 2 + self.depth ** 2)

    @property
    def max_extent(self):
        return max(self.width, self.height, self.depth)

    def to_dict(self):
        return {"width": self.width, "height": self.height,
                "depth": self.depth, "resolution": self.resolution}


@dataclass(frozen=True)
class GraspPose:
    """Gripper pose; ``frame`` maps gripper coordinates into the object frame."""

    frame: RigidTransform
    source_point_index: int = -1

    def to_dict(self):
        d = self.frame.to_dict()
        d["source_point_index"] = int(self.source_point_index)
        return d


def to_gripper_frame(points, pose):
    """Express object-frame point(s) in ``(u, v, t)``: ``R^T (p - w)``."""
    frame = pose.frame if isinstance(pose, GraspPose) else pose
    return frame.inverse_apply(points)


def sample_surface_points(mesh, n, seed):
    """Area-weighted uniform sample of ``n`` points on the mesh surface."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(mesh.triangles) == 0:
        raise ValueError("mesh has no triangles")
    areas = mesh.triangle_areas()
    total = areas.sum()
    if not total > 0.0:
        raise ValueError("mesh has zero total area")
    rng = np.random.default_rng(seed)
    tri = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = (mesh.vertices[mesh.triangles[tri, i]] for i in range(3))
    pts = ((1.0 - r1)[:, None] * a
           + (r1 * (1.0 - r2))[:, None] * b
           + (r1 * r2)[:, None] * c)
    return PointCloud(pts)


def estimate_normals(cloud, k=DEFAULT_K_NEIGHBORS):
    """PCA normals from each point and its ``k`` nearest neighbours.

    Sign: largest-magnitude component made positive, then flipped to face
    away from the cloud centroid wherever that test is decisive.
    """
    pts = cloud.points
    if k < 3:
        raise ValueError("k must be >= 3")
    if len(pts) < k + 1:
        raise ValueError(f"need at least k+1={k + 1} points, have {len(pts)}")
    _, idx = cKDTree(pts).query(pts, k=k + 1)
    nbr = pts[idx]
    centered = nbr - nbr.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    dominant = np.abs(normals).argmax(axis=1)
    sign = np.sign(normals[np.arange(len(normals)), dominant])
    normals *= np.where(sign < 0, -1.0, 1.0)[:, None]
    outward = np.einsum("ni,ni->n", normals, pts - pts.mean(axis=0))
    normals[outward < 0] *= -1.0
    return PointCloud(pts, normals)


def _grasp_frames(points, normals, rolls, depth):
    """Vectorised frame construction; returns (rotations, origins, valid mask)."""
    n = np.asarray(normals, dtype=float).reshape(-1, 3)
    norm = np.linalg.norm(n, axis=1)
    valid = np.isfinite(norm) & (norm >= 1e-12)
    u = np.where(valid[:, None], n / np.where(valid, norm, 1.0)[:, None], [[1.0, 0.0, 0.0]])
    helper = np.zeros_like(u)
    helper[np.arange(len(u)), np.abs(u).argmin(axis=1)] = 1.0
    e1 = np.cross(u, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(u, e1)
    rolls = np.asarray(rolls, dtype=float).reshape(-1, 1)
    t = np.cos(rolls) * e1 + np.sin(rolls) * e2
    t -= u * np.einsum("ni,ni->n", u, t)[:, None]
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    v = np.cross(t, u)
    rotations = np.stack([u, v, t], axis=2)  # columns u, v, t
    origins = np.asarray(points, dtype=float).reshape(-1, 3) - t * (depth / 2)
    return rotations, origins, valid


def grasp_frame(point, normal, roll, spec):
    """Frame with closing axis ``normal`` that puts ``point`` at ``(0, 0, depth/2)``.

    Returns None when the normal is degenerate.
    """
    rotations, origins, valid = _grasp_frames(point, normal, [roll], spec.depth)
    if not valid[0]:
        return None
    return RigidTransform(rotations[0], origins[0])


class GraspCandidates(NamedTuple):
    poses: list
    skipped: int


def sample_grasp_candidates(cloud, m, spec, seed):
    """Draw ``m`` grasp poses from surface points and their normals."""
    if cloud.normals is None:
        raise ValueError("cloud has no normals")
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(cloud.points), size=m)
    rolls = rng.uniform(0.0, 2.0 * math.pi, size=m)
    rotations, origins, valid = _grasp_frames(cloud.points[picks], cloud.normals[picks],
                                              rolls, spec.depth)
    poses = [GraspPose(RigidTransform(rotations[j], origins[j]), int(picks[j]))
             for j in np.flatnonzero(valid)]
    return GraspCandidates(poses, int(len(picks) - valid.sum()))
