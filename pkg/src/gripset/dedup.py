"""Binary voxel encoding of gripper-frame clouds and exact duplicate removal.

Two regions are the same feature when their occupancy grids agree on every
voxel. Grids are bucketed by a 64-bit digest and confirmed bit-for-bit, so
hash collisions can cost time but never correctness.
"""

from __future__ import annotations

import hashlib
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantError
from .extraction import voxel_indices


@dataclass(frozen=True)
class OccupancyGrid:
    dims: tuple
    bits: bytes
    occupied_count: int

    def __post_init__(self):
        a, b, c = self.dims
        if len(self.bits) != (a * b * c + 7) // 8:
            raise ValueError("packed length does not match dims")

    @classmethod
    def from_dense(cls, occupancy):
        """Build from a boolean array indexed ``[i_u, i_v, i_t]``."""
        occ = np.asarray(occupancy, dtype=bool)
        if occ.ndim != 3:
            raise ValueError("occupancy must be 3-D")
        a, b, c = occ.shape
        flat = occ.transpose(2, 1, 0).reshape(-1)  # ((i_t*b)+i_v)*a + i_u
        return cls((a, b, c), np.packbits(flat, bitorder="little").tobytes(), int(flat.sum()))

    @classmethod
    def from_packed(cls, dims, bits):
        dims = tuple(int(d) for d in dims)
        n = dims[0] * dims[1] * dims[2]
        flat = np.unpackbits(np.frombuffer(bytes(bits), dtype=np.uint8), bitorder="little")
        return cls(dims, bytes(bits), int(flat[:n].sum()))

    def flat(self):
        a, b, c = self.dims
        raw = np.unpackbits(np.frombuffer(self.bits, dtype=np.uint8), bitorder="little")
        return raw[:a * b * c].astype(bool)

    def dense(self):
        """Boolean array indexed ``[i_u, i_v, i_t]``."""
        a, b, c = self.dims
        return self.flat().reshape(c, b, a).transpose(2, 1, 0)

    @property
    def sum_voxel(self):
        a, b, c = self.dims
        return a * b * c


def voxelize(region, spec):
    """Occupancy grid: a voxel is 1 iff at least one point falls in it."""
    a, b, c = spec.dims
    idx = voxel_indices(region.points, spec)
    if np.any(idx < 0) or np.any(idx >= np.array([a, b, c])):
        raise InvariantError("region point maps outside the voxel grid", stage="voxelize")
    occ = np.zeros((c, b, a), dtype=bool)
    occ[idx[:, 2], idx[:, 1], idx[:, 0]] = True
    flat = occ.reshape(-1)
    return OccupancyGrid((a, b, c), np.packbits(flat, bitorder="little").tobytes(),
                         int(flat.sum()))


def grids_identical(first, second):
    if tuple(first.dims) != tuple(second.dims):
        raise ValueError(f"grid dims differ: {first.dims} vs {second.dims}")
    return first.bits == second.bits


def canonical_key(grid):
    """Stable 64-bit digest of ``(dims, packed bits)``; identical across processes."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<HHH", *grid.dims))
    h.update(grid.bits)
    return int.from_bytes(h.digest(), "little")


@dataclass
class FeatureRecord:
    grid: OccupancyGrid
    exemplar: object
    sources: list = field(default_factory=list)
    canonical_key: int = 0
    first_seen: int = 0
    region_indices: list = field(default_factory=list)

    def sort_key(self):
        return (self.grid.occupied_count, self.canonical_key, self.first_seen)


def _local_unique(entries, key):
    """Dedup one chunk: ``entries`` are (global index, grid, payload)."""
    buckets = {}
    order = []
    for index, grid, payload in entries:
        k = key(grid)
        bucket = buckets.setdefault(k, [])
        for group in bucket:
            if grids_identical(group[1], grid):
                group[3].append((index, payload))
                break
        else:
            group = [index, grid, k, [(index, payload)]]
            bucket.append(group)
            order.append(group)
    return order


def dedup_grids(grids, payloads=None, key=canonical_key, workers=1):
    """Unique grids in first-seen order.

    Returns a list of ``(first index, grid, key, [(index, payload), ...])``.
    Work is split into contiguous chunks deduplicated independently and merged
    in chunk order, so the result does not depend on ``workers``.
    """
    grids = list(grids)
    if payloads is None:
        payloads = [None] * len(grids)
    if grids:
        dims = grids[0].dims
        for g in grids:
            if tuple(g.dims) != tuple(dims):
                raise ValueError(f"mixed grid dims in stream: {dims} vs {g.dims}")
    entries = list(zip(range(len(grids)), grids, payloads))
    workers = max(1, int(workers))
    if workers == 1 or len(entries) < 2 * workers:
        chunks = [entries]
    else:
        size = -(-len(entries) // workers)
        chunks = [entries[i:i + size] for i in range(0, len(entries), size)]
    if len(chunks) == 1:
        partials = [_local_unique(chunks[0], key)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(lambda ch: _local_unique(ch, key), chunks))

    buckets = {}
    merged = []
    for partial in partials:
        for index, grid, k, members in partial:
            bucket = buckets.setdefault(k, [])
            for group in bucket:
                if grids_identical(group[1], grid):
                    group[3].extend(members)
                    break
            else:
                group = [index, grid, k, list(members)]
                bucket.append(group)
                merged.append(group)
    return merged


def dedup(regions, spec, workers=1, key=canonical_key, grids=None):
    """One :class:`FeatureRecord` per distinct occupancy grid.

    Output is sorted by ``(occupied_count, canonical_key, first_seen)``.
    ``grids`` may carry the regions' already computed voxelizations.
    """
    regions = list(regions)
    for r in regions:
        if r.spec != spec:
            raise ValueError("region extracted under a different gripper spec")
    if grids is not None:
        grids = list(grids)
        if len(grids) != len(regions):
            raise ValueError("grids and regions differ in length")
    elif workers > 1 and len(regions) > workers:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            grids = list(pool.map(lambda r: voxelize(r, spec), regions))
    else:
        grids = [voxelize(r, spec) for r in regions]
    groups = dedup_grids(grids, regions, key=key, workers=workers)
    records = []
    for first, grid, k, members in groups:
        records.append(FeatureRecord(
            grid=grid,
            exemplar=regions[first],
            sources=[(reg.source_object, reg.pose) for _, reg in members],
            canonical_key=k,
            first_seen=first,
            region_indices=[i for i, _ in members],
        ))
    records.sort(key=FeatureRecord.sort_key)
    return records
