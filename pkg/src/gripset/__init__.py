"""Gripper-frame feature deduplication and single-object assembly."""

from .assembly import (AssembledObject, BinaryImage, Plane, PlaneClassification, classify_plane,
                       compose_cloud, count_corner_features, layout, project)
from .dedup import FeatureRecord, OccupancyGrid, canonical_key, dedup, grids_identical, voxelize
from .extraction import GripperFrameCloud, extract_region, filter_nonempty
from .geometry import (GraspPose, GripperSpec, estimate_normals, sample_grasp_candidates,
                       sample_surface_points, to_gripper_frame)
from .model_io import (Mesh, PointCloud, parse_obj, parse_ply_ascii, read_grid_set,
                       write_grid_set, write_manifest, write_obj, write_ply_ascii)
from .transforms import RigidTransform

__version__ = "0.1.0"
