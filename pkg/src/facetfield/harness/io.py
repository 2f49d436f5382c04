"""Point-cloud file reading and artifact writing.

Readers accept XYZ (whitespace floats, '#' comments), ASCII PLY (x/y/z
vertex properties, other properties ignored), and OBJ ('v' records).
`io_read` additionally normalizes the cloud into [-1, 1]^3 by centering and
uniform scaling and reports the transform so outputs can be mapped back.
All writers are atomic: write to a temporary name, then rename.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from ..core import build_index
from ..errors import InvalidInput, ParseError


@dataclass(frozen=True)
class NormalizationTransform:
    """normalized = (raw - center) * scale"""

    center: tuple
    scale: float

    def apply(self, pts):
        return (np.asarray(pts) - np.asarray(self.center)) * self.scale

    def invert(self, pts):
        return np.asarray(pts) / self.scale + np.asarray(self.center)

    def to_dict(self):
        return {"center": list(self.center), "scale": self.scale}


def _parse_xyz(path):
    pts = []
    with open(path) as f:
        for ln, line in enumerate(f, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            fields = text.split()
            if len(fields) < 3:
                raise ParseError("expected at least 3 coordinates",
                                 path=path, line=ln)
            try:
                pts.append([float(v) for v in fields[:3]])
            except ValueError:
                raise ParseError(f"bad number in {text!r}", path=path, line=ln)
    return pts


def _parse_obj(path):
    pts = []
    with open(path) as f:
        for ln, line in enumerate(f, start=1):
            if not line.startswith("v "):
                continue
            fields = line.split()
            if len(fields) < 4:
                raise ParseError("vertex record needs 3 coordinates",
                                 path=path, line=ln)
            try:
                pts.append([float(v) for v in fields[1:4]])
            except ValueError:
                raise ParseError(f"bad number in vertex record", path=path,
                                 line=ln)
    return pts


def _parse_ply(path):
    with open(path, "rb") as f:
        raw = f.read()
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError:
        raise ParseError("only ASCII PLY is supported", path=path)
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", path=path, line=1)
    n_vertex = None
    props = []
    in_vertex = False
    body_start = None
    for ln, line in enumerate(lines[1:], start=2):
        t = line.strip().split()
        if not t:
            continue
        if t[0] == "format":
            if t[1] != "ascii":
                raise ParseError("only ASCII PLY is supported", path=path,
                                 line=ln)
        elif t[0] == "element":
            in_vertex = t[1] == "vertex"
            if in_vertex:
                n_vertex = int(t[2])
        elif t[0] == "property" and in_vertex:
            props.append(t[-1])
        elif t[0] == "end_header":
            body_start = ln
            break
    if body_start is None or n_vertex is None:
        raise ParseError("incomplete PLY header", path=path)
    try:
        cols = [props.index(c) for c in ("x", "y", "z")]
    except ValueError:
        raise ParseError("vertex element lacks x/y/z properties", path=path)
    pts = []
    for ln in range(body_start, body_start + n_vertex):
        if ln >= len(lines):
            raise ParseError("fewer vertex rows than declared", path=path,
                             line=ln + 1)
        fields = lines[ln].split()
        if len(fields) < len(props):
            raise ParseError("short vertex row", path=path, line=ln + 1)
        try:
            pts.append([float(fields[c]) for c in cols])
        except ValueError:
            raise ParseError("bad number in vertex row", path=path, line=ln + 1)
    return pts


def read_points(path, normalize: bool = False):
    """Raw (k, 3) coordinates from an XYZ, PLY, or OBJ file."""
    ext = os.path.splitext(str(path))[1].lower()
    try:
        if ext == ".ply":
            pts = _parse_ply(path)
        elif ext == ".obj":
            pts = _parse_obj(path)
        else:
            pts = _parse_xyz(path)
    except OSError as err:
        raise InvalidInput(f"cannot read {path}: {err}") from err
    if not pts:
        raise InvalidInput(f"{path}: no points found")
    arr = np.asarray(pts, dtype=np.float64)
    if normalize:
        arr = normalization_for(arr).apply(arr)
    return arr


def normalization_for(pts) -> NormalizationTransform:
    """Centering plus uniform scale mapping the longest axis onto [-1, 1]."""
    pts = np.asarray(pts, dtype=np.float64)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    center = 0.5 * (lo + hi)
    extent = float((hi - lo).max())
    scale = 2.0 / extent if extent > 0 else 1.0
    return NormalizationTransform(center=tuple(center), scale=scale)


def io_read(path):
    """(PointCloud in [-1, 1]^3, NormalizationTransform) from a file."""
    raw = read_points(path)
    tf = normalization_for(raw)
    return build_index(tf.apply(raw)), tf


def atomic_write(path, data: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        f.write(data)
    os.replace(tmp, path)


def write_xyz(points, path):
    lines = [f"{p[0]:.10g} {p[1]:.10g} {p[2]:.10g}" for p in np.asarray(points)]
    atomic_write(path, "\n".join(lines) + "\n")


def write_json(obj, path):
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_csv(header, rows, path):
    atomic_write(path, "\n".join([header, *rows]) + "\n")
