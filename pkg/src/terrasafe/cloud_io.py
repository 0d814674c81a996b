"""Point cloud I/O and density normalization.

Clouds are stored as numpy arrays: coordinates in meters (right-handed,
z up), optional grayscale appearance in [0, 1], and an optional per-point
manual classification used to override the geometric safety label.

Supported formats: PLY (ascii / binary little-endian), whitespace XYZ
text, and CSV with a header row. Color input is collapsed to gray at load
time via the usual luminance weights; the rest of the pipeline is
grayscale-only.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

FORMATS = ("ply_ascii", "ply_binary_le", "xyz_text", "csv")

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


class CloudIOError(Exception):
    """Unreadable, malformed, or empty cloud file."""


class ManualClass(IntEnum):
    NONE = 0
    FORCE_UNSAFE = 1
    FORCE_SAFE = 2


@dataclass
class LoadReport:
    path: str
    format: str
    total_rows: int = 0
    dropped: int = 0

    def to_json(self) -> dict:
        return {
            "path": self.path,
            "format": self.format,
            "total_rows": self.total_rows,
            "dropped": self.dropped,
            "loaded": self.total_rows - self.dropped,
        }


@dataclass
class PointCloud:
    """Immutable-by-convention cloud of 3D points.

    xyz is (N, 3) float64. gray and manual_class are None or length-N
    arrays. extras carries additional per-point float scalars (e.g. the
    smoothed safety value written by the labeling stage).
    """

    xyz: np.ndarray
    gray: np.ndarray | None = None
    manual_class: np.ndarray | None = None
    extras: dict[str, np.ndarray] = field(default_factory=dict)
    crs_note: str = ""

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        if len(self.xyz) == 0:
            raise CloudIOError("zero valid points")
        if not np.all(np.isfinite(self.xyz)):
            raise CloudIOError("non-finite coordinates in cloud")
        if self.gray is not None:
            self.gray = np.asarray(self.gray, dtype=np.float64)
            if self.gray.shape != (len(self.xyz),):
                raise CloudIOError("gray length mismatch")
        if self.manual_class is not None:
            self.manual_class = np.asarray(self.manual_class, dtype=np.uint8)
            if self.manual_class.shape != (len(self.xyz),):
                raise CloudIOError("manual_class length mismatch")

    def __len__(self) -> int:
        return len(self.xyz)


# ---------------------------------------------------------------------------
# Loading

def _finish(xyz, gray, manual, extras, report, crs_note=""):
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    report.total_rows = len(xyz)
    cols = [xyz]
    if gray is not None:
        cols.append(np.asarray(gray, dtype=np.float64).reshape(-1, 1))
    keep = np.all(np.isfinite(np.hstack(cols)), axis=1)
    report.dropped = int((~keep).sum())
    if keep.sum() == 0:
        raise CloudIOError("zero valid points")
    return PointCloud(
        xyz=xyz[keep],
        gray=None if gray is None else np.asarray(gray, dtype=np.float64)[keep],
        manual_class=None if manual is None else np.asarray(manual)[keep],
        extras={k: np.asarray(v, dtype=np.float64)[keep] for k, v in extras.items()},
        crs_note=crs_note,
    )


def load_cloud(path, format: str, with_report: bool = False):
    """Load a cloud; rows with non-finite values are dropped and counted.

    Returns the cloud, or (cloud, LoadReport) when with_report is set.
    """
    path = Path(path)
    if format not in FORMATS:
        raise CloudIOError(f"unknown format {format!r}")
    if not path.is_file():
        raise CloudIOError(f"no such file: {path}")
    report = LoadReport(path=str(path), format=format)
    try:
        if format in ("ply_ascii", "ply_binary_le"):
            cloud = _load_ply(path, report)
        elif format == "xyz_text":
            cloud = _load_xyz(path, report)
        else:
            cloud = _load_csv(path, report)
    except CloudIOError:
        raise
    except (OSError, ValueError, struct.error) as exc:
        raise CloudIOError(f"failed to read {path}: {exc}") from exc
    return (cloud, report) if with_report else cloud


def _load_xyz(path, report):
    rows = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            rows.append([float(v) for v in parts[:4]])
    if not rows:
        raise CloudIOError("zero valid points")
    width = min(len(r) for r in rows)
    data = np.array([r[:width] for r in rows], dtype=np.float64)
    gray = data[:, 3] if width >= 4 else None
    return _finish(data[:, :3], gray, None, {}, report)


def _load_csv(path, report):
    with open(path) as fh:
        header = [h.strip().lower() for h in fh.readline().split(",")]
        data = np.genfromtxt(fh, delimiter=",", dtype=np.float64, ndmin=2)
    if data.size == 0:
        raise CloudIOError("zero valid points")
    col = {name: i for i, name in enumerate(header)}
    for axis in "xyz":
        if axis not in col:
            raise CloudIOError(f"csv missing column {axis!r}")
    xyz = data[:, [col["x"], col["y"], col["z"]]]
    gray = None
    if all(c in col for c in ("red", "green", "blue")):
        rgb = data[:, [col["red"], col["green"], col["blue"]]]
        gray = rgb @ LUMA_WEIGHTS / 255.0
    elif "gray" in col:
        gray = data[:, col["gray"]]
    manual = None
    if "manual_class" in col:
        raw = data[:, col["manual_class"]]
        manual = np.where(np.isfinite(raw), raw, 0).astype(np.uint8)
    return _finish(xyz, gray, manual, {}, report)


_PLY_TYPES = {
    "char": "i1", "uchar": "u1", "int8": "i1", "uint8": "u1",
    "short": "i2", "ushort": "u2", "int16": "i2", "uint16": "u2",
    "int": "i4", "uint": "u4", "int32": "i4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _parse_ply_header(fh):
    line = fh.readline().strip()
    if line != b"ply":
        raise CloudIOError("malformed header: missing 'ply' magic")
    fmt = None
    count = None
    props = []
    comments = []
    in_vertex = False
    while True:
        line = fh.readline()
        if not line:
            raise CloudIOError("malformed header: no end_header")
        tokens = line.decode("ascii", "replace").split()
        if not tokens:
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "comment":
            comments.append(" ".join(tokens[1:]))
        elif tokens[0] == "element":
            in_vertex = tokens[1] == "vertex"
            if in_vertex:
                count = int(tokens[2])
        elif tokens[0] == "property" and in_vertex:
            if tokens[1] == "list":
                raise CloudIOError("list properties unsupported on vertex element")
            props.append((tokens[2], tokens[1]))
        elif tokens[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian"):
        raise CloudIOError(f"unsupported ply format {fmt!r}")
    if count is None:
        raise CloudIOError("malformed header: no vertex element")
    return fmt, count, props, comments


def _load_ply(path, report):
    with open(path, "rb") as fh:
        fmt, count, props, comments = _parse_ply_header(fh)
        names = [p[0] for p in props]
        for axis in "xyz":
            if axis not in names:
                raise CloudIOError(f"ply missing property {axis!r}")
        dtype = np.dtype([(n, "<" + _PLY_TYPES[t]) for n, t in props])
        if fmt == "ascii":
            text = fh.read().decode("ascii", "replace")
            data = np.genfromtxt(io.StringIO(text), dtype=np.float64, ndmin=2)
            if data.size == 0:
                raise CloudIOError("zero valid points")
            if data.shape[1] != len(props):
                raise CloudIOError("ply row width does not match header")
            rec = {n: data[:, i] for i, (n, _t) in enumerate(props)}
            scale = {n: 255.0 if _PLY_TYPES[t] == "u1" else 1.0 for n, t in props}
        else:
            raw = np.frombuffer(fh.read(), dtype=dtype, count=count)
            rec = {n: raw[n].astype(np.float64) for n in names}
            scale = {n: 255.0 if dtype[n] == np.uint8 else 1.0 for n in names}
    xyz = np.column_stack([rec["x"], rec["y"], rec["z"]])
    gray = None
    if all(c in rec for c in ("red", "green", "blue")):
        rgb = np.column_stack([rec["red"], rec["green"], rec["blue"]])
        rgb /= np.array([scale["red"], scale["green"], scale["blue"]])
        gray = rgb @ LUMA_WEIGHTS
    elif "gray" in rec:
        gray = rec["gray"] / scale["gray"]
    manual = None
    if "manual_class" in rec:
        raw_mc = rec["manual_class"]
        manual = np.where(np.isfinite(raw_mc), raw_mc, 0).astype(np.uint8)
    extras = {
        n: rec[n] for n in names
        if n not in ("x", "y", "z", "red", "green", "blue", "gray", "manual_class")
    }
    return _finish(xyz, gray, manual, extras, report, crs_note="; ".join(comments))


# ---------------------------------------------------------------------------
# Saving

def save_cloud(cloud: PointCloud, path, format: str) -> None:
    """Write a cloud. Binary PLY stores doubles, so coordinates round-trip
    exactly; ascii formats are good to 1e-6 m."""
    path = Path(path)
    if format not in FORMATS:
        raise CloudIOError(f"unknown format {format!r}")
    try:
        if format in ("ply_ascii", "ply_binary_le"):
            _save_ply(cloud, path, binary=(format == "ply_binary_le"))
        elif format == "xyz_text":
            with open(path, "w") as fh:
                for p in cloud.xyz:
                    fh.write(f"{p[0]:.8f} {p[1]:.8f} {p[2]:.8f}\n")
        else:
            _save_csv(cloud, path)
    except OSError as exc:
        raise CloudIOError(f"failed to write {path}: {exc}") from exc


def _save_csv(cloud, path):
    names = ["x", "y", "z"]
    cols = [cloud.xyz[:, 0], cloud.xyz[:, 1], cloud.xyz[:, 2]]
    if cloud.gray is not None:
        names.append("gray")
        cols.append(cloud.gray)
    if cloud.manual_class is not None:
        names.append("manual_class")
        cols.append(cloud.manual_class)
    for k, v in cloud.extras.items():
        names.append(k)
        cols.append(v)
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join(f"{v:.8f}" for v in row) + "\n")


def _save_ply(cloud, path, binary):
    props = [("x", "double"), ("y", "double"), ("z", "double")]
    cols = [cloud.xyz[:, 0], cloud.xyz[:, 1], cloud.xyz[:, 2]]
    if cloud.gray is not None:
        props.append(("gray", "double"))
        cols.append(cloud.gray)
    if cloud.manual_class is not None:
        props.append(("manual_class", "uchar"))
        cols.append(cloud.manual_class)
    for k, v in cloud.extras.items():
        props.append((k, "double"))
        cols.append(v)
    header = ["ply"]
    header.append("format binary_little_endian 1.0" if binary else "format ascii 1.0")
    if cloud.crs_note:
        header.append(f"comment {cloud.crs_note}")
    header.append(f"element vertex {len(cloud)}")
    header += [f"property {t} {n}" for n, t in props]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            dtype = np.dtype([(n, "<" + _PLY_TYPES[t]) for n, t in props])
            rec = np.empty(len(cloud), dtype=dtype)
            for (n, _t), c in zip(props, cols):
                rec[n] = c
            fh.write(rec.tobytes())
        else:
            for row in zip(*cols):
                line = " ".join(
                    str(int(v)) if t == "uchar" else f"{v:.8f}"
                    for (n, t), v in zip(props, row)
                )
                fh.write((line + "\n").encode("ascii"))


# ---------------------------------------------------------------------------
# Density normalization

def voxel_downsample(cloud: PointCloud, cell: float) -> PointCloud:
    """Collapse each occupied cubic cell to the centroid of its members.

    Gray averages within the cell; manual classes merge with
    force_unsafe > force_safe > none precedence. The grid is anchored at
    the world origin, which makes the operation idempotent for a fixed
    cell size.
    """
    if cell <= 0:
        raise ValueError("cell must be positive")
    keys = np.floor(cloud.xyz / cell).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    n_cells = len(uniq)
    counts = np.bincount(inverse, minlength=n_cells).astype(np.float64)
    xyz = np.empty((n_cells, 3))
    for ax in range(3):
        xyz[:, ax] = np.bincount(inverse, weights=cloud.xyz[:, ax], minlength=n_cells)
    xyz /= counts[:, None]
    gray = None
    if cloud.gray is not None:
        gray = np.bincount(inverse, weights=cloud.gray, minlength=n_cells) / counts
    manual = None
    if cloud.manual_class is not None:
        # precedence none < force_safe < force_unsafe, via priority remap
        prio = np.array([0, 2, 1], dtype=np.int64)[cloud.manual_class]
        merged = np.zeros(n_cells, dtype=np.int64)
        np.maximum.at(merged, inverse, prio)
        manual = np.array([0, 2, 1], dtype=np.uint8)[merged]
    extras = {
        k: np.bincount(inverse, weights=v, minlength=n_cells) / counts
        for k, v in cloud.extras.items()
    }
    return PointCloud(xyz=xyz, gray=gray, manual_class=manual, extras=extras,
                      crs_note=cloud.crs_note)
