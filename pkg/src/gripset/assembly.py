"""Plane classification of unique features and occlusion-free tiling.

Each feature grid is projected onto the three gripper planes. A plane's
score is its share of the total projected area times the number of 2x2
corner patterns (windows containing exactly three set pixels) in that
projection. Features are tiled onto the panel of their best plane, one grid
cell per feature, translated only, so no feature can hide another.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvariantError
from .extraction import extract_region, voxel_indices
from .dedup import voxelize
from .model_io import PointCloud
from .transforms import RigidTransform

CORNER_KERNELS = (
    np.array([[1, 1], [1, 0]], dtype=bool),
    np.array([[1, 1], [0, 1]], dtype=bool),
    np.array([[1, 0], [1, 1]], dtype=bool),
    np.array([[0, 1], [1, 1]], dtype=bool),
)

_MAX_NUDGE_STEPS = 16


class Plane(enum.Enum):
    UV = "uv"
    UT = "ut"
    VT = "vt"

    @property
    def index(self):
        return _PLANE_ORDER.index(self)

    @property
    def dropped_axis(self):
        return {Plane.UV: 2, Plane.UT: 1, Plane.VT: 0}[self]


# Also the tie-break order.
_PLANE_ORDER = (Plane.UV, Plane.UT, Plane.VT)


@dataclass(frozen=True, eq=False)
class BinaryImage:
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=bool)
        if px.ndim != 2:
            raise ValueError("binary image must be 2-D")
        object.__setattr__(self, "pixels", px)

    @property
    def dims(self):
        return self.pixels.shape

    @property
    def area(self):
        return int(self.pixels.sum())


def project(grid, plane):
    """OR-reduce the grid along the axis the plane drops.

    UV gives an ``a x b`` image, UT ``a x c`` and VT ``b x c``.
    """
    return BinaryImage(grid.dense().any(axis=plane.dropped_axis))


def count_corner_features(img):
    """Number of 2x2 windows holding exactly three set pixels."""
    px = img.pixels if isinstance(img, BinaryImage) else np.asarray(img, dtype=bool)
    if px.shape[0] < 2 or px.shape[1] < 2:
        return 0
    p = px.astype(np.int8)
    window = p[:-1, :-1] + p[:-1, 1:] + p[1:, :-1] + p[1:, 1:]
    return int(np.count_nonzero(window == 3))


@dataclass(frozen=True)
class PlaneClassification:
    plane: Plane
    n_feature: tuple
    areas: tuple
    score: tuple

    def to_dict(self):
        return {"plane": self.plane.value, "n_feature": list(self.n_feature),
                "areas": list(self.areas), "score": list(self.score)}


def score_planes(areas, corner_counts):
    """Scores ``S_p / sum(S) * N_p`` and the winning plane (ties favour UV, then UT)."""
    total = sum(areas)
    if total <= 0:
        raise ValueError("total projected area must be positive")
    scores = tuple(s / total * n for s, n in zip(areas, corner_counts))
    best = 0
    for i in (1, 2):
        if scores[i] > scores[best]:
            best = i
    return _PLANE_ORDER[best], scores


def classify_plane(grid):
    images = [project(grid, p) for p in _PLANE_ORDER]
    areas = tuple(img.area for img in images)
    counts = tuple(count_corner_features(img) for img in images)
    plane, scores = score_planes(areas, counts)
    return PlaneClassification(plane, counts, areas, scores)


@dataclass(frozen=True, eq=False)
class Placement:
    feature_id: int
    record: object
    classification: PlaneClassification
    translation: np.ndarray
    points: np.ndarray
    point_offset: int

    @property
    def plane(self):
        return self.classification.plane

    @property
    def point_count(self):
        return len(self.points)

    @property
    def placement_pose(self):
        """Pose of the feature's gripper frame in the composite frame."""
        return RigidTransform(np.eye(3), self.translation)


@dataclass(frozen=True, eq=False)
class AssembledObject:
    placements: list
    spacing: float
    spec: object
    composite_cloud: PointCloud

    def plane_counts(self):
        counts = {p.value: 0 for p in _PLANE_ORDER}
        for pl in self.placements:
            counts[pl.plane.value] += 1
        return counts


def minimum_spacing(spec):
    return spec.max_extent + spec.resolution


def default_spacing(spec):
    return spec.max_extent + 2 * spec.resolution


def _panel_cell(plane, k, side, pitch):
    row, col = divmod(k, side)
    if plane is Plane.UV:
        return np.array([col * pitch, row * pitch, 0.0])
    if plane is Plane.UT:
        return np.array([col * pitch, -pitch, row * pitch])
    return np.array([-pitch, col * pitch, row * pitch])


def _axis_cells(x, axis, spec):
    """Voxel index along one axis, or -1 when outside the half-open box."""
    offset = (spec.width / 2, spec.height / 2, 0.0)[axis]
    idx = np.floor((x + offset) / spec.resolution).astype(np.int64)
    inside = (x >= spec.lower[axis]) & (x < spec.upper[axis])
    inside &= (idx >= 0) & (idx < spec.dims[axis])
    return np.where(inside, idx, -1)


def _translate_exactly(points, translation, spec):
    """Translate gripper-frame points so that subtracting ``translation``
    again lands every point in its original voxel.

    ``(x + d) - d`` can differ from ``x`` by one ulp of ``d``; points whose
    round trip would cross a voxel face are nudged by single ulps.
    """
    moved = points + translation
    for axis in range(3):
        d = translation[axis]
        if d == 0.0:
            continue
        want = _axis_cells(points[:, axis], axis, spec)
        col = moved[:, axis].copy()
        for _ in range(_MAX_NUDGE_STEPS):
            back = col - d
            bad = _axis_cells(back, axis, spec) != want
            if not bad.any():
                break
            toward = np.where(back[bad] < points[bad, axis], np.inf, -np.inf)
            col[bad] = np.nextafter(col[bad], toward)
        else:
            raise InvariantError("could not place feature without changing its grid",
                                 stage="assemble")
        moved[:, axis] = col
    return moved


def layout(records, spec, spacing=None, classifications=None):
    """Tile unique features onto three panels, one per gripper plane.

    Panel UV lies in the composite XY plane at z=0, panel UT in XZ at
    ``y = -pitch`` and panel VT in YZ at ``x = -pitch``. Features fill each
    panel row-major on a ``ceil(sqrt(n))``-wide grid with pitch ``spacing``.
    """
    if spacing is None:
        spacing = default_spacing(spec)
    if spacing < minimum_spacing(spec):
        raise ValueError(f"spacing {spacing} below minimum {minimum_spacing(spec)} "
                         f"(largest gripper extent plus one voxel)")
    if classifications is None:
        classifications = [classify_plane(r.grid) for r in records]
    by_plane = {p: [] for p in _PLANE_ORDER}
    for fid, (rec, cls) in enumerate(zip(records, classifications)):
        by_plane[cls.plane].append((fid, rec, cls))

    placements = []
    offset = 0
    for plane in _PLANE_ORDER:
        members = by_plane[plane]
        if not members:
            continue
        side = math.ceil(math.sqrt(len(members)))
        for k, (fid, rec, cls) in enumerate(members):
            translation = _panel_cell(plane, k, side, float(spacing))
            pts = _translate_exactly(rec.exemplar.points, translation, spec)
            placements.append(Placement(fid, rec, cls, translation, pts, offset))
            offset += len(pts)
    assembled = AssembledObject(placements, float(spacing), spec, PointCloud(np.zeros((0, 3))))
    object.__setattr__(assembled, "composite_cloud", compose_cloud(assembled))
    return assembled


def compose_cloud(assembled):
    if not assembled.placements:
        return PointCloud(np.zeros((0, 3)))
    return PointCloud(np.concatenate([pl.points for pl in assembled.placements]))


def placement_aabbs(assembled, pad=None):
    """Per-placement ``(lo, hi)`` point bounding boxes, padded by half a voxel."""
    if pad is None:
        pad = assembled.spec.resolution / 2
    return [(pl.points.min(axis=0) - pad, pl.points.max(axis=0) + pad)
            for pl in assembled.placements]


def aabbs_disjoint(boxes):
    """True when no two closed boxes intersect. Sweep over x then exact check."""
    order = sorted(range(len(boxes)), key=lambda i: boxes[i][0][0])
    active = []
    for i in order:
        lo, hi = boxes[i]
        active = [j for j in active if boxes[j][1][0] >= lo[0]]
        for j in active:
            if np.all(boxes[j][0] <= hi) and np.all(lo <= boxes[j][1]):
                return False
        active.append(i)
    return True


def reextract(points, pose, spec):
    """Grid of the region of ``points`` seen from ``pose`` (None if empty)."""
    region = extract_region(points, pose, spec, prefilter=True)
    return None if region is None else voxelize(region, spec)


def placed_grid_matches(placement, spec):
    """Fast check on a placement's own points (ignores neighbours)."""
    uvt = placement.placement_pose.inverse_apply(placement.points)
    return np.array_equal(voxel_indices(uvt, spec),
                          voxel_indices(placement.record.exemplar.points, spec))
