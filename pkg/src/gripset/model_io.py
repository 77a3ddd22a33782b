"""Readers and writers for meshes, point clouds, grid sets and manifests.

Supported formats:

* OBJ subset: ``v x y z`` and ``f i j k ...`` lines (1-based, ``i/..``
  suffixes ignored, polygons fan-triangulated), ``#`` comments.
* ASCII PLY with ``x y z`` and optional ``nx ny nz`` vertex properties.
* ``.gfa`` grid-set container (see :func:`write_grid_set`).
* JSON assembly manifest.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ParseError, SerializationError

GFA_MAGIC = b"GFA1"
_HEADER = struct.Struct("<4sHHHI")
_U32 = struct.Struct("<I")
MANIFEST_FORMAT = "gripset-manifest/1"


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size:
            if t.min() < 0 or t.max() >= len(v):
                raise ValueError("triangle index out of range")
            if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
                raise ValueError("degenerate triangle (repeated vertex index)")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.triangles, other.triangles))

    def triangle_areas(self):
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    normals: np.ndarray | None = field(default=None)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", p)
        if self.normals is not None:
            n = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if len(n) != len(p):
                raise ValueError("normals and points differ in length")
            if not np.all(np.abs(np.linalg.norm(n, axis=1) - 1.0) <= 1e-6):
                raise ValueError("normals must be unit length")
            object.__setattr__(self, "normals", n)

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        if (self.normals is None) != (other.normals is None):
            return False
        same_normals = self.normals is None or np.array_equal(self.normals, other.normals)
        return np.array_equal(self.points, other.points) and same_normals


def format_float(x):
    """Shortest text that parses back to exactly ``x``."""
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


# -- OBJ ---------------------------------------------------------------------

def parse_obj(text):
    vertices = []
    faces = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *fields = line.split()
        if tag == "v":
            if len(fields) not in (3, 4):
                raise ParseError(f"vertex needs 3 coordinates, got {len(fields)}", lineno)
            try:
                xyz = [float(x) for x in fields[:3]]
            except ValueError:
                raise ParseError(f"bad vertex coordinate in {raw!r}", lineno) from None
            if not all(math.isfinite(x) for x in xyz):
                raise ParseError("non-finite vertex coordinate", lineno)
            vertices.append(xyz)
        elif tag == "f":
            if len(fields) < 3:
                raise ParseError("face needs at least 3 vertices", lineno)
            try:
                idx = [int(f.split("/", 1)[0]) for f in fields]
            except ValueError:
                raise ParseError(f"bad face index in {raw!r}", lineno) from None
            for i in idx:
                if i < 1 or i > len(vertices):
                    raise ParseError(f"face index {i} out of range (have {len(vertices)} vertices)",
                                     lineno)
            if len(set(idx)) != len(idx):
                raise ParseError("degenerate face (repeated vertex)", lineno)
            faces.extend((idx[0] - 1, idx[k] - 1, idx[k + 1] - 1) for k in range(1, len(idx) - 1))
        elif tag in ("vn", "vt", "o", "g", "s", "usemtl", "mtllib"):
            continue
        else:
            raise ParseError(f"unsupported statement {tag!r}", lineno)
    return Mesh(np.array(vertices, dtype=float).reshape(-1, 3),
                np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_obj(mesh):
    lines = [f"v {format_float(x)} {format_float(y)} {format_float(z)}" for x, y, z in mesh.vertices]
    lines += [f"f {i + 1} {j + 1} {k + 1}" for i, j, k in mesh.triangles]
    return "\n".join(lines) + "\n"


# -- PLY ---------------------------------------------------------------------

_PLY_FLOAT_TYPES = {"float", "float32", "double", "float64"}
# 17 significant digits always parse back to the identical double.
_PLY_NUMBER = "%.17g"


def parse_ply_ascii(text):
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", 1)
    elements = []  # (name, count, [property names])
    body_start = None
    for lineno in range(1, len(lines)):
        parts = lines[lineno].split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            if len(parts) < 2 or parts[1] != "ascii":
                raise ParseError(f"only ASCII PLY is supported, got {' '.join(parts[1:])!r}",
                                 lineno + 1)
        elif parts[0] == "element":
            try:
                elements.append((parts[1], int(parts[2]), []))
            except (IndexError, ValueError):
                raise ParseError("bad element declaration", lineno + 1) from None
        elif parts[0] == "property":
            if not elements:
                raise ParseError("property before element", lineno + 1)
            if parts[1] == "list":
                elements[-1][2].append(None)
            else:
                if parts[1] not in _PLY_FLOAT_TYPES and elements[-1][0] == "vertex":
                    raise ParseError(f"vertex property type {parts[1]!r} unsupported", lineno + 1)
                elements[-1][2].append(parts[2])
        elif parts[0] == "end_header":
            body_start = lineno + 1
            break
        else:
            raise ParseError(f"unexpected header line {lines[lineno]!r}", lineno + 1)
    if body_start is None:
        raise ParseError("missing end_header")

    body = [(i + 1, ln) for i, ln in enumerate(lines[body_start:], start=body_start) if ln.strip()]
    cursor = 0
    points = normals = None
    for name, count, props in elements:
        if cursor + count > len(body):
            raise ParseError(f"element {name!r} declares {count} rows, "
                             f"only {len(body) - cursor} present")
        rows = body[cursor:cursor + count]
        cursor += count
        if name != "vertex":
            continue
        for axis in "xyz":
            if axis not in props:
                raise ParseError(f"vertex element lacks property {axis!r}")
        has_normals = all(n in props for n in ("nx", "ny", "nz"))
        tokens = " ".join(ln for _, ln in rows).split()
        if len(tokens) != count * len(props):
            for lineno, ln in rows:
                if len(ln.split()) != len(props):
                    raise ParseError(f"expected {len(props)} values, got {len(ln.split())}", lineno)
        try:
            data = np.array(tokens, dtype=float).reshape(count, len(props))
        except ValueError:
            for lineno, ln in rows:
                try:
                    [float(f) for f in ln.split()]
                except ValueError:
                    raise ParseError(f"bad number in {ln!r}", lineno) from None
            raise
        points = data[:, [props.index(a) for a in "xyz"]]
        if has_normals:
            normals = data[:, [props.index(a) for a in ("nx", "ny", "nz")]]
    if cursor != len(body):
        raise ParseError(f"{len(body) - cursor} rows beyond the declared element counts")
    if points is None:
        raise ParseError("no vertex element")
    try:
        return PointCloud(points, normals)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def write_ply_ascii(cloud):
    props = ["x", "y", "z"]
    data = cloud.points
    if cloud.normals is not None:
        props += ["nx", "ny", "nz"]
        data = np.hstack([cloud.points, cloud.normals])
    header = ["ply", "format ascii 1.0", f"element vertex {len(cloud.points)}"]
    header += [f"property double {p}" for p in props]
    header.append("end_header")
    row_fmt = " ".join([_PLY_NUMBER] * len(props))
    rows = [row_fmt % tuple(row) for row in data.tolist()]
    return "\n".join(header + rows) + "\n"


# -- grid-set container ------------------------------------------------------

def packed_length(dims):
    a, b, c = dims
    return (a * b * c + 7) // 8


def _encode_metadata(meta):
    if isinstance(meta, (bytes, bytearray)):
        return bytes(meta)
    try:
        return json.dumps(meta, sort_keys=True, separators=(",", ":"),
                          allow_nan=False).encode("utf-8")
    except ValueError as exc:
        raise SerializationError(f"metadata not serializable: {exc}") from None


def write_grid_set(dims, records):
    """Serialize ``records`` (pairs of metadata, packed bits) to ``.gfa`` bytes.

    Layout, all little-endian: ``GFA1``, a, b, c as u16, record count as u32,
    then per record a u32 metadata length, the UTF-8 JSON metadata and
    ``ceil(a*b*c/8)`` packed bytes. Bit ``((i_t*b)+i_v)*a + i_u`` is stored
    LSB-first; trailing pad bits must be zero.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or not all(1 <= d <= 65535 for d in dims):
        raise ValueError(f"dims must be three values in [1, 65535], got {dims}")
    nbytes = packed_length(dims)
    nbits = dims[0] * dims[1] * dims[2]
    out = [_HEADER.pack(GFA_MAGIC, *dims, len(records))]
    for meta, bits in records:
        bits = bytes(bits)
        if len(bits) != nbytes:
            raise ValueError(f"record has {len(bits)} packed bytes, expected {nbytes}")
        if nbits % 8 and bits[-1] >> (nbits % 8):
            raise ValueError("nonzero padding bits")
        blob = _encode_metadata(meta)
        out += [_U32.pack(len(blob)), blob, bits]
    return b"".join(out)


def read_grid_set(data):
    data = bytes(data)
    if len(data) < _HEADER.size:
        raise FormatError("truncated header")
    magic, a, b, c, count = _HEADER.unpack_from(data, 0)
    if magic != GFA_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    dims = (a, b, c)
    if 0 in dims:
        raise FormatError("zero dimension")
    nbytes = packed_length(dims)
    pad = (a * b * c) % 8
    pos = _HEADER.size
    records = []
    for i in range(count):
        if pos + 4 > len(data):
            raise FormatError(f"truncated at record {i}")
        (mlen,) = _U32.unpack_from(data, pos)
        pos += 4
        if pos + mlen + nbytes > len(data):
            raise FormatError(f"truncated at record {i}")
        try:
            meta = json.loads(data[pos:pos + mlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"record {i}: bad metadata ({exc})") from None
        pos += mlen
        bits = data[pos:pos + nbytes]
        pos += nbytes
        if pad and bits[-1] >> pad:
            raise FormatError(f"record {i}: nonzero padding bits")
        records.append((meta, bits))
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes")
    return dims, records


# -- manifest ----------------------------------------------------------------

def _pose_dict(transform):
    return {"position": [float(x) for x in transform.translation],
            "quaternion": [float(x) for x in transform.quaternion()]}


def manifest_dict(assembled):
    spec = assembled.spec
    features = []
    for pl in assembled.placements:
        rec = pl.record
        features.append({
            "id": pl.feature_id,
            "source_object": rec.exemplar.source_object,
            "grasp_pose": _pose_dict(rec.exemplar.pose.frame),
            "plane": pl.plane.value,
            "score": float(pl.classification.score[pl.plane.index]),
            "scores": {p.value: float(s) for p, s in zip(type(pl.plane), pl.classification.score)},
            "corner_counts": [int(n) for n in pl.classification.n_feature],
            "areas": [int(s) for s in pl.classification.areas],
            "placement": {"translation": [float(x) for x in pl.translation]},
            "placement_pose": _pose_dict(pl.placement_pose),
            "point_offset": pl.point_offset,
            "point_count": pl.point_count,
            "source_count": len(rec.sources),
        })
    return {
        "format": MANIFEST_FORMAT,
        "gripper": {"width": spec.width, "height": spec.height, "depth": spec.depth,
                    "resolution": spec.resolution, "dims": list(spec.dims)},
        "resolution": spec.resolution,
        "spacing": assembled.spacing,
        "point_count": len(assembled.composite_cloud),
        "features": features,
    }


def write_manifest(assembled):
    try:
        return json.dumps(manifest_dict(assembled), indent=2, allow_nan=False) + "\n"
    except ValueError as exc:
        raise SerializationError(f"manifest contains a non-finite number: {exc}") from None


def read_manifest(text):
    doc = json.loads(text)
    if doc.get("format") != MANIFEST_FORMAT:
        raise FormatError(f"unknown manifest format {doc.get('format')!r}")
    return doc
