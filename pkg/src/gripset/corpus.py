"""Synthetic parametric object corpora with controlled duplication."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .model_io import Mesh, write_obj

FAMILIES = ("boxes", "cylinders", "mixed")
CYLINDER_SEGMENTS = 24

# Shape parameters are drawn on a millimetre lattice inside these ranges (m).
_BOX_RANGE = (0.03, 0.12)
_CYL_RADIUS_RANGE = (0.015, 0.05)
_CYL_HEIGHT_RANGE = (0.04, 0.15)


def box_mesh(sx, sy, sz):
    """Closed cuboid centred at the origin, 12 outward-facing triangles."""
    hx, hy, hz = sx / 2, sy / 2, sz / 2
    vertices = np.array([[x, y, z] for x in (-hx, hx) for y in (-hy, hy) for z in (-hz, hz)])
    # vertex index = 4*ix + 2*iy + iz
    triangles = [
        (0, 1, 3), (0, 3, 2),  # -x
        (4, 6, 7), (4, 7, 5),  # +x
        (0, 4, 5), (0, 5, 1),  # -y
        (2, 3, 7), (2, 7, 6),  # +y
        (0, 2, 6), (0, 6, 4),  # -z
        (1, 5, 7), (1, 7, 3),  # +z
    ]
    return Mesh(vertices, np.array(triangles))


def cylinder_mesh(radius, height, segments=CYLINDER_SEGMENTS):
    """Closed cylinder along z, centred at the origin."""
    ang = 2 * math.pi * np.arange(segments) / segments
    ring = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    bottom = np.column_stack([ring, np.full(segments, -height / 2)])
    top = np.column_stack([ring, np.full(segments, height / 2)])
    vertices = np.vstack([bottom, top, [[0, 0, -height / 2], [0, 0, height / 2]]])
    cb, ct = 2 * segments, 2 * segments + 1
    triangles = []
    for i in range(segments):
        j = (i + 1) % segments
        triangles += [(i, j, segments + j), (i, segments + j, segments + i)]
        triangles += [(cb, j, i), (ct, segments + i, segments + j)]
    return Mesh(vertices, np.array(triangles))


def _lattice_draw(rng, count, ranges):
    """``count`` distinct parameter tuples on a 1 mm lattice."""
    seen = set()
    out = []
    while len(out) < count:
        params = tuple(round(float(rng.integers(round(lo * 1000), round(hi * 1000) + 1)) / 1000, 3)
                       for lo, hi in ranges)
        if params not in seen:
            seen.add(params)
            out.append(params)
    return out


def synthetic_shapes(family, unique_count, seed):
    """List of ``(name, mesh)`` with ``unique_count`` distinct shapes."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")
    if unique_count < 1:
        raise ValueError("unique_count must be >= 1")
    rng = np.random.default_rng(seed)
    if family == "mixed":
        kinds = ["box" if i % 2 == 0 else "cylinder" for i in range(unique_count)]
    else:
        kinds = ["box" if family == "boxes" else "cylinder"] * unique_count
    boxes = iter(_lattice_draw(rng, kinds.count("box"), [_BOX_RANGE] * 3))
    cyls = iter(_lattice_draw(rng, kinds.count("cylinder"), [_CYL_RADIUS_RANGE, _CYL_HEIGHT_RANGE]))
    shapes = []
    for i, kind in enumerate(kinds):
        if kind == "box":
            shapes.append((f"box{i:03d}", box_mesh(*next(boxes))))
        else:
            shapes.append((f"cyl{i:03d}", cylinder_mesh(*next(cyls))))
    return shapes


def gen_synthetic_corpus(family, unique_count, copies, seed, out_dir):
    """Write ``unique_count * copies`` OBJ files; copies are byte-identical."""
    if copies < 1:
        raise ValueError("copies must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, mesh in synthetic_shapes(family, unique_count, seed):
        text = write_obj(mesh)
        for j in range(copies):
            path = out_dir / f"{name}_copy{j:02d}.obj"
            path.write_text(text)
            paths.append(path)
    return paths
