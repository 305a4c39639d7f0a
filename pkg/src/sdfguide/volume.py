"""Segmented labelmap volumes: NRRD I/O and voxel/world coordinate conversion.

Index (i, j, k) refers to the CENTER of a voxel, located at
``origin + direction @ (spacing * (i, j, k))`` in world millimeters.
"""

from __future__ import annotations

import gzip
import re
import warnings
from dataclasses import dataclass, field

import numpy as np


class NrrdError(ValueError):
    """Malformed or unsupported NRRD content."""


_NRRD_TYPES = {
    "uint8": np.uint8,
    "uchar": np.uint8,
    "unsigned char": np.uint8,
    "uint16": np.uint16,
    "unsigned short": np.uint16,
    "ushort": np.uint16,
    "int16": np.int16,
    "short": np.int16,
    "uint32": np.uint32,
    "unsigned int": np.uint32,
    "uint": np.uint32,
}

_TYPE_NAMES = {np.uint8: "uint8", np.uint16: "uint16", np.int16: "int16", np.uint32: "uint32"}


@dataclass(frozen=True)
class VoxelGeometry:
    """Voxel grid geometry: dims, per-axis spacing (mm), world origin (mm),
    and a 3x3 orthonormal direction matrix whose columns are the axis
    orientations."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    direction: np.ndarray  # 3x3, orthonormal columns

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        direction = np.asarray(self.direction, dtype=np.float64).reshape(3, 3).copy()
        direction.setflags(write=False)
        if any(d < 1 for d in dims):
            raise ValueError(f"all dims must be >= 1, got {dims}")
        if any(s <= 0 for s in spacing):
            raise ValueError(f"all spacing components must be > 0, got {spacing}")
        dots = direction.T @ direction
        if not np.allclose(dots, np.eye(3), atol=1e-6):
            raise ValueError("direction columns must be orthonormal")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", direction)

    def world_to_index(self, p) -> np.ndarray:
        """Map world point(s) (mm) to continuous voxel indices.

        Accepts shape (3,) or (M, 3). Out-of-volume points are allowed;
        bounds are the caller's concern.
        """
        p = np.asarray(p, dtype=np.float64)
        rel = p - np.asarray(self.origin)
        return (rel @ self.direction) / np.asarray(self.spacing)

    def index_to_world(self, c) -> np.ndarray:
        """Map continuous voxel index/indices to world points (mm)."""
        c = np.asarray(c, dtype=np.float64)
        return (c * np.asarray(self.spacing)) @ self.direction.T + np.asarray(self.origin)

    def same_grid(self, other: "VoxelGeometry", tol: float = 1e-9) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing, atol=tol)
            and np.allclose(self.origin, other.origin, atol=tol)
            and np.allclose(self.direction, other.direction, atol=tol)
        )


@dataclass
class LabelVolume:
    """Segmented voxel grid. ``labels`` is an integer grid indexed [i, j, k]
    (x, y, z); value 0 is background. ``table`` maps label value to anatomy
    name; ``critical`` flags labels whose removal counts as injury."""

    geometry: VoxelGeometry
    labels: np.ndarray
    table: dict[int, str] = field(default_factory=dict)
    critical: frozenset[int] = frozenset()
    space: str = "LPS"

    def __post_init__(self):
        self.labels = np.ascontiguousarray(self.labels)
        if self.labels.shape != self.geometry.dims:
            raise ValueError(
                f"labels grid shape {self.labels.shape} != geometry dims {self.geometry.dims}"
            )
        present = set(np.unique(self.labels).tolist()) - {0}
        missing = present - set(self.table)
        if missing:
            raise ValueError(f"grid labels without table entries: {sorted(missing)}")
        self.critical = frozenset(self.critical)
        if not self.critical <= set(self.table):
            raise ValueError("critical labels must be a subset of table keys")

    def label_mask(self, label: int) -> np.ndarray:
        """Boolean grid, true exactly where ``labels == label``."""
        if label == 0 or label not in self.table:
            raise ValueError(f"unknown label value {label}")
        return self.labels == label


def _parse_vector(text: str) -> np.ndarray:
    m = re.fullmatch(r"\(([^)]*)\)", text.strip())
    if not m:
        raise NrrdError(f"malformed vector {text!r}")
    return np.array([float(t) for t in m.group(1).split(",")], dtype=np.float64)


def _parse_header(data: bytes):
    """Split NRRD bytes into (fields, keyvalues, payload_offset)."""
    end = data.find(b"\n\n")
    if end < 0:
        raise NrrdError("no blank line terminating NRRD header")
    try:
        header = data[:end].decode("utf-8")
    except UnicodeDecodeError as e:
        raise NrrdError(f"header is not valid UTF-8: {e}") from None
    lines = header.splitlines()
    if not lines or not re.fullmatch(r"NRRD000[45]", lines[0].strip()):
        raise NrrdError("bad magic: expected NRRD0004 or NRRD0005")
    fields: dict[str, str] = {}
    keyvals: dict[str, str] = {}
    for line in lines[1:]:
        if not line or line.startswith("#"):
            continue
        if ":=" in line:
            k, v = line.split(":=", 1)
            keyvals[k.strip()] = v.strip()
        elif ": " in line:
            k, v = line.split(": ", 1)
            fields[k.strip().lower()] = v.strip()
        else:
            raise NrrdError(f"malformed header line {line!r}")
    return fields, keyvals, end + 2


def _collect_segments(keyvals: dict[str, str]):
    """Extract SegmentK_* keys -> list of (layer, value, name)."""
    segs: dict[int, dict[str, str]] = {}
    pat = re.compile(r"Segment(\d+)_(Name|LabelValue|Layer)$")
    for k, v in keyvals.items():
        m = pat.fullmatch(k)
        if m:
            segs.setdefault(int(m.group(1)), {})[m.group(2)] = v
    out = []
    for idx in sorted(segs):
        s = segs[idx]
        if "LabelValue" not in s:
            continue
        out.append(
            (
                int(s.get("Layer", "0")),
                int(s["LabelValue"]),
                s.get("Name", f"label_{int(s['LabelValue'])}"),
            )
        )
    return out


def parse_nrrd(data: bytes) -> LabelVolume:
    """Parse a segmented labelmap from raw NRRD file content.

    Supports the subset: dimension 3 or 4 (one non-spatial layer axis),
    types uint8/uint16/int16/uint32, raw or gzip encoding, attached data
    only. 4D per-segment layers are collapsed to one label grid; on overlap
    the lowest layer index wins and a warning is issued.
    """
    fields, keyvals, offset = _parse_header(data)
    for req in ("dimension", "type", "encoding", "sizes", "space directions"):
        if req not in fields:
            raise NrrdError(f"missing required field {req!r}")

    dim = int(fields["dimension"])
    if dim not in (3, 4):
        raise NrrdError(f"unsupported dimension {dim}")
    tname = fields["type"].lower()
    if tname not in _NRRD_TYPES:
        raise NrrdError(f"unsupported type {fields['type']!r}")
    dtype = np.dtype(_NRRD_TYPES[tname])
    encoding = fields["encoding"].lower()
    if encoding not in ("raw", "gzip", "gz"):
        raise NrrdError(f"unsupported encoding {fields['encoding']!r}")
    space = fields.get("space", "LPS")
    if space.lower() in ("left-posterior-superior", "lps"):
        space = "LPS"
    elif space.lower() in ("right-anterior-superior", "ras"):
        space = "RAS"
    else:
        raise NrrdError(f"unsupported space {space!r}")

    sizes = [int(t) for t in fields["sizes"].split()]
    if len(sizes) != dim:
        raise NrrdError("sizes length does not match dimension")

    dir_tokens = re.findall(r"none|\([^)]*\)", fields["space directions"])
    if len(dir_tokens) != dim:
        raise NrrdError("space directions length does not match dimension")
    layer_axis = None
    vectors = []
    for ax, tok in enumerate(dir_tokens):
        if tok == "none":
            if layer_axis is not None:
                raise NrrdError("multiple non-spatial axes")
            layer_axis = ax
        else:
            vectors.append(_parse_vector(tok))
    if dim == 4 and layer_axis is None:
        raise NrrdError("4D volume without a non-spatial (none) axis")
    if dim == 3 and layer_axis is not None:
        raise NrrdError("3D volume with a non-spatial axis")
    if len(vectors) != 3:
        raise NrrdError("expected exactly 3 spatial space directions")

    cols = np.stack(vectors, axis=1)  # world vector per index step, columns
    spacing = np.linalg.norm(cols, axis=0)
    if np.any(spacing <= 0) or abs(np.linalg.det(cols)) < 1e-12:
        raise NrrdError("non-invertible direction matrix")
    direction = cols / spacing

    if "space origin" in fields:
        origin = _parse_vector(fields["space origin"])
    else:
        origin = np.zeros(3)

    payload = data[offset:]
    if encoding in ("gzip", "gz"):
        try:
            payload = gzip.decompress(payload)
        except OSError as e:
            raise NrrdError(f"bad gzip payload: {e}") from None
    endian = fields.get("endian", "little").lower()
    if dtype.itemsize > 1:
        dtype = dtype.newbyteorder("<" if endian == "little" else ">")
    count = int(np.prod(sizes))
    if len(payload) < count * dtype.itemsize:
        raise NrrdError(
            f"data size mismatch: need {count * dtype.itemsize} bytes, have {len(payload)}"
        )
    arr = np.frombuffer(payload[: count * dtype.itemsize], dtype=dtype)
    # NRRD stores the first sizes axis fastest; C-order reshape wants it last.
    arr = arr.reshape(sizes[::-1]).transpose(range(dim - 1, -1, -1))

    segments = _collect_segments(keyvals)

    if dim == 4:
        spatial_axes = [a for a in range(4) if a != layer_axis]
        grid = np.moveaxis(arr, layer_axis, 0)  # (layers, x, y, z)
        nlayers = grid.shape[0]
        labels = np.zeros(grid.shape[1:], dtype=np.int64)
        overlap = False
        for layer in range(nlayers):
            vals = grid[layer]
            fresh = (labels == 0) & (vals != 0)
            overlap = overlap or bool(np.any((labels != 0) & (vals != 0)))
            labels[fresh] = vals[fresh]
        if overlap:
            warnings.warn("overlapping segment layers; lowest layer index wins", stacklevel=2)
        sizes3 = [sizes[a] for a in spatial_axes]
        if list(labels.shape) != sizes3:
            raise NrrdError("spatial sizes inconsistent")
    else:
        labels = arr.astype(np.int64)

    geometry = VoxelGeometry(tuple(labels.shape), tuple(spacing), tuple(origin), direction)

    table = {value: name for _, value, name in segments}
    present = set(np.unique(labels).tolist()) - {0}
    for v in sorted(present - set(table)):
        table[v] = f"label_{v}"
    table = {v: n for v, n in table.items() if v != 0}

    return LabelVolume(geometry, labels, table, space=space)


def load_nrrd(path) -> LabelVolume:
    with open(path, "rb") as f:
        return parse_nrrd(f.read())


def write_nrrd(v: LabelVolume, encoding: str = "gzip", dtype=None) -> bytes:
    """Serialize a LabelVolume as a 3D NRRD (attached data, little-endian)."""
    if dtype is None:
        maxv = int(v.labels.max()) if v.labels.size else 0
        dtype = np.uint8 if maxv < 256 else (np.uint16 if maxv < 65536 else np.uint32)
    dtype = np.dtype(dtype)
    if dtype.type not in _TYPE_NAMES:
        raise NrrdError(f"unsupported output dtype {dtype}")
    g = v.geometry
    cols = g.direction * np.asarray(g.spacing)
    dir_strs = " ".join("(" + ",".join(repr(float(x)) for x in cols[:, a]) + ")" for a in range(3))
    lines = [
        "NRRD0005",
        "# produced by sdfguide",
        "type: " + _TYPE_NAMES[dtype.type],
        "dimension: 3",
        f"space: {v.space}",
        f"sizes: {g.dims[0]} {g.dims[1]} {g.dims[2]}",
        f"space directions: {dir_strs}",
        "kinds: domain domain domain",
        "endian: little",
        f"encoding: {encoding}",
        "space origin: (" + ",".join(repr(float(x)) for x in g.origin) + ")",
    ]
    for idx, value in enumerate(sorted(v.table)):
        lines.append(f"Segment{idx}_Name:={v.table[value]}")
        lines.append(f"Segment{idx}_LabelValue:={value}")
        lines.append(f"Segment{idx}_Layer:=0")
    header = "\n".join(lines) + "\n\n"
    payload = np.ascontiguousarray(
        v.labels.astype(dtype.newbyteorder("<")).transpose(2, 1, 0)
    ).tobytes()
    if encoding == "gzip":
        payload = gzip.compress(payload)
    elif encoding != "raw":
        raise NrrdError(f"unsupported encoding {encoding!r}")
    return header.encode("utf-8") + payload


def save_nrrd(v: LabelVolume, path, encoding: str = "gzip") -> None:
    with open(path, "wb") as f:
        f.write(write_nrrd(v, encoding=encoding))
