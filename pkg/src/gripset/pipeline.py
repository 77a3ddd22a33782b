"""End-to-end orchestration: sample, extract, dedup, classify, assemble."""

from __future__ import annotations

import glob
import hashlib
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .assembly import classify_plane, default_spacing, layout, minimum_spacing
from .dedup import dedup, voxelize
from .errors import ConfigError, GripsetError, InvariantError, ParseError
from .extraction import EXTRACTION_MODES, GripperFrameCloud, extract_regions, filter_nonempty
from .geometry import (DEFAULT_K_NEIGHBORS, GraspPose, GripperSpec, estimate_normals,
                       sample_grasp_candidates, sample_surface_points)
from .model_io import PointCloud, parse_obj, write_grid_set, write_manifest, write_ply_ascii
from .stats import StatsReport
from .transforms import RigidTransform

log = logging.getLogger(__name__)

GRIDS_UNIQUE = "features.gfa"
GRIDS_ALL = "all_grids.gfa"
COMPOSITE = "composite.ply"
MANIFEST = "manifest.json"
STATS = "stats.json"
REGIONS = "regions.npz"


class DataError(GripsetError):
    """An input object could not be read or parsed."""


@dataclass
class PipelineConfig:
    objects: list
    gripper: GripperSpec = field(default_factory=GripperSpec)
    samples_per_object: int = 4000
    grasps_per_object: int = 500
    k_neighbors: int = DEFAULT_K_NEIGHBORS
    seed: int = 0
    spacing: float | None = None
    min_points: int = 1
    output_dir: Path = Path("out")
    workers: int = 1
    extraction_mode: str = "static"
    dump_regions: bool = False

    def __post_init__(self):
        self.objects = [Path(p) for p in self.objects]
        self.output_dir = Path(self.output_dir)
        if not self.objects:
            raise ConfigError("object list is empty")
        for name in ("samples_per_object", "grasps_per_object", "min_points", "workers"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.k_neighbors < 3:
            raise ConfigError("k_neighbors must be >= 3")
        if self.samples_per_object < self.k_neighbors + 1:
            raise ConfigError("samples_per_object must exceed k_neighbors")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.extraction_mode not in EXTRACTION_MODES:
            raise ConfigError(f"extraction_mode must be one of {EXTRACTION_MODES}")
        if self.spacing is None:
            self.spacing = default_spacing(self.gripper)
        if self.spacing < minimum_spacing(self.gripper):
            raise ConfigError(f"spacing must be >= {minimum_spacing(self.gripper)}")


def load_config(path, **overrides):
    """Read a YAML config; object paths and globs are relative to the file."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    doc.update({k: v for k, v in overrides.items() if v is not None})
    base = path.parent
    objects = []
    for entry in doc.pop("objects", None) or []:
        pattern = str(entry if Path(entry).is_absolute() else base / entry)
        matches = sorted(glob.glob(pattern)) if glob.has_magic(pattern) else [pattern]
        objects += matches
    gripper = doc.pop("gripper", None) or {}
    try:
        spec = GripperSpec(**gripper)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad gripper spec: {exc}") from None
    out = doc.pop("output_dir", "out")
    if not Path(out).is_absolute():
        out = base / out
    try:
        return PipelineConfig(objects=objects, gripper=spec, output_dir=out, **doc)
    except TypeError as exc:
        raise ConfigError(f"unknown config key: {exc}") from None


@dataclass
class ObjectRegions:
    name: str
    regions: list  # GripperFrameCloud or None per candidate
    skipped: int = 0


def mesh_digest(mesh):
    h = hashlib.blake2b(digest_size=16)
    h.update(np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(mesh.triangles, dtype="<i8").tobytes())
    return h.digest()


def object_seeds(seed, mesh):
    """Surface and grasp seeds for one object.

    Derived from the run seed and the mesh content, so byte-identical
    objects get identical samples wherever they sit in the corpus.
    """
    digest = int.from_bytes(mesh_digest(mesh), "little")
    surface, grasps = np.random.SeedSequence([int(seed), digest]).spawn(2)
    return surface, grasps


def _load_mesh(path):
    try:
        return parse_obj(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc})") from None
    except (ParseError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None


def _extract_object(name, mesh, config):
    spec = config.gripper
    surface_seed, grasp_seed = object_seeds(config.seed, mesh)
    try:
        cloud = sample_surface_points(mesh, config.samples_per_object, surface_seed)
        cloud = estimate_normals(cloud, config.k_neighbors)
    except ValueError as exc:
        raise DataError(f"{name}: {exc}") from None
    poses, skipped = sample_grasp_candidates(cloud, config.grasps_per_object, spec, grasp_seed)
    regions = extract_regions(cloud, poses, spec, source_object=name)
    return ObjectRegions(name, regions, skipped)


def _pmap(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


class _Timer:
    def __init__(self):
        self.ms = {}

    @contextmanager
    def stage(self, name):
        start = time.perf_counter()
        try:
            yield
        except InvariantError as exc:
            if exc.stage is None:
                exc.stage = name
            raise
        finally:
            self.ms[name] = self.ms.get(name, 0.0) + (time.perf_counter() - start) * 1000.0


def extract_all(config, timer=None):
    """Regions for every candidate of every object, in config order."""
    timer = timer or _Timer()
    workers = min(config.workers, len(config.objects))
    with timer.stage("load"):
        meshes = _pmap(_load_mesh, config.objects, workers)
    names = [Path(p).stem for p in config.objects]
    with timer.stage("extract"):
        per_object = _pmap(lambda nm: _extract_object(nm[0], nm[1], config),
                           list(zip(names, meshes)), workers)
    return per_object


def _pose_meta(pose):
    return pose.to_dict()


def grid_records(items):
    """``.gfa`` records from ``(grid, region, region_index, source_count)``."""
    return [({"source_object": region.source_object,
              "pose": _pose_meta(region.pose),
              "occupied_count": grid.occupied_count,
              "source_count": count,
              "region_index": index}, grid.bits)
            for grid, region, index, count in items]


@dataclass
class PipelineResult:
    records: list
    assembled: object
    stats: StatsReport
    paths: dict


def run_pipeline(config):
    """Run every stage and write the grid sets, composite PLY, manifest and stats."""
    timer = _Timer()
    spec = config.gripper
    workers = config.workers
    per_object = extract_all(config, timer)
    all_regions = [r for obj in per_object for r in obj.regions]

    with timer.stage("filter"):
        filtered = filter_nonempty(all_regions, config.min_points)
    regions = filtered.regions
    with timer.stage("voxelize"):
        grids = _pmap(lambda r: voxelize(r, spec), regions, workers)
    with timer.stage("dedup"):
        records = dedup(regions, spec, workers=workers, grids=grids)
    with timer.stage("classify"):
        classes = _pmap(lambda rec: classify_plane(rec.grid), records, workers)
    with timer.stage("assemble"):
        assembled = layout(records, spec, config.spacing, classes)

    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    paths = {"unique_grids": out / GRIDS_UNIQUE, "all_grids": out / GRIDS_ALL,
             "composite": out / COMPOSITE, "manifest": out / MANIFEST, "stats": out / STATS}
    with timer.stage("write"):
        unique_blob = write_grid_set(spec.dims, grid_records(
            (rec.grid, rec.exemplar, rec.first_seen, len(rec.sources)) for rec in records))
        naive_blob = write_grid_set(spec.dims, grid_records(
            (g, r, i, 1) for i, (g, r) in enumerate(zip(grids, regions))))
        paths["unique_grids"].write_bytes(unique_blob)
        paths["all_grids"].write_bytes(naive_blob)
        paths["composite"].write_text(write_ply_ascii(assembled.composite_cloud))
        paths["manifest"].write_text(write_manifest(assembled))
        if config.dump_regions:
            dump = out / "regions"
            dump.mkdir(exist_ok=True)
            for i, r in enumerate(regions):
                (dump / f"region_{i:06d}_{r.source_object}.ply").write_text(
                    write_ply_ascii(PointCloud(r.points)))

    stats = StatsReport(
        timings_ms=dict(timer.ms),
        objects=len(config.objects),
        candidates=len(all_regions) + sum(o.skipped for o in per_object),
        candidates_skipped=sum(o.skipped for o in per_object),
        regions_nonempty=len(all_regions) - filtered.dropped_empty,
        regions_dropped_empty=filtered.dropped_empty,
        regions_dropped_small=filtered.dropped_small,
        grids_total=len(regions),
        grids_unique=len(records),
        naive_bytes=paths["all_grids"].stat().st_size,
        unique_bytes=paths["unique_grids"].stat().st_size,
        plane_counts=assembled.plane_counts(),
        source_total=sum(len(r.sources) for r in records),
    )
    stats.check()
    paths["stats"].write_text(stats.to_json())
    log.info("pipeline done: %d regions -> %d unique features", len(regions), len(records))
    return PipelineResult(records, assembled, stats, paths)


# -- region files for the stage-by-stage CLI ---------------------------------

def save_regions(path, regions):
    """Write kept gripper-frame regions to an ``.npz`` archive."""
    counts = np.array([len(r) for r in regions], dtype=np.int64)
    np.savez(
        path,
        points=(np.concatenate([r.points for r in regions]) if regions else np.zeros((0, 3))),
        offsets=np.concatenate([[0], np.cumsum(counts)]).astype(np.int64),
        rotations=np.array([r.pose.frame.rotation for r in regions]).reshape(-1, 3, 3),
        translations=np.array([r.pose.frame.translation for r in regions]).reshape(-1, 3),
        point_index=np.array([r.pose.source_point_index for r in regions], dtype=np.int64),
        names=np.array([r.source_object for r in regions], dtype=str),
    )


def load_regions(path, spec):
    with np.load(path) as z:
        pts, off = z["points"], z["offsets"]
        regions = []
        for i in range(len(off) - 1):
            pose = GraspPose(RigidTransform(z["rotations"][i], z["translations"][i]),
                             int(z["point_index"][i]))
            regions.append(GripperFrameCloud(pts[off[i]:off[i + 1]], str(z["names"][i]), pose, spec))
    return regions
