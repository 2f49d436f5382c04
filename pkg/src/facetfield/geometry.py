"""Local surface types and closed-form displacement kernels.

A local surface is a plane, a dihedral (two half-planes sharing an edge), or
a trihedral (three planar sectors sharing an apex). Each kernel returns the
shortest vector from a query point onto the surface, tagged with the branch
(face, edge, ray, apex) that produced it and a margin: the distance, in the
same units, to the nearest branch switch. Gradients of the squared
displacement norm are analytic and chain through the unit normalization of
the stored raw normals and the tanh clamp of the stored raw offset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kx
from .core import Vec3, as_vec3
from .errors import DegenerateDihedral, DegenerateTrihedral, InvalidFrame, InvalidInput

EPS_PARALLEL = kx.EPS_PARALLEL
OFFSET_SCALE = kx.OFFSET_SCALE

_OTHERS = ((1, 2), (0, 2), (0, 1))


def _unit1(v):
    v = as_vec3(v)
    n = np.linalg.norm(v)
    if n < 1e-300:
        raise InvalidInput("zero-length normal")
    return v / n


@dataclass(frozen=True)
class Plane:
    """Plane through `anchor` with normal `normal_raw / ||normal_raw||`."""

    anchor: Vec3
    normal_raw: Vec3

    def __post_init__(self):
        object.__setattr__(self, "anchor", as_vec3(self.anchor))
        object.__setattr__(self, "normal_raw", as_vec3(self.normal_raw))

    @property
    def normal(self) -> Vec3:
        return _unit1(self.normal_raw)


@dataclass(frozen=True)
class Dihedral:
    """Two half-planes sharing the edge through `anchor + offset`."""

    anchor: Vec3
    normal1_raw: Vec3
    normal2_raw: Vec3
    offset_raw: Vec3 = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("anchor", "normal1_raw", "normal2_raw", "offset_raw"):
            object.__setattr__(self, name, as_vec3(getattr(self, name)))

    @classmethod
    def from_geometry(cls, anchor, normal1, normal2, offset=(0.0, 0.0, 0.0)):
        """Build from unit normals and a literal offset in (-0.01, 0.01)^3."""
        return cls(anchor, normal1, normal2, kx.raw_offset_from_value(offset))

    @property
    def normal1(self):
        return _unit1(self.normal1_raw)

    @property
    def normal2(self):
        return _unit1(self.normal2_raw)

    @property
    def offset(self):
        return kx.tanh_offset(self.offset_raw)

    @property
    def apex(self):
        return self.anchor + self.offset

    @property
    def edge_dir(self):
        cr = np.cross(self.normal1, self.normal2)
        n = np.linalg.norm(cr)
        if n < EPS_PARALLEL:
            raise DegenerateDihedral("normals are (nearly) parallel")
        return cr / n


@dataclass(frozen=True)
class Trihedral:
    """Three planar sectors sharing the apex at `anchor + offset`."""

    anchor: Vec3
    normal1_raw: Vec3
    normal2_raw: Vec3
    normal3_raw: Vec3
    offset_raw: Vec3 = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("anchor", "normal1_raw", "normal2_raw", "normal3_raw",
                     "offset_raw"):
            object.__setattr__(self, name, as_vec3(getattr(self, name)))

    @classmethod
    def from_geometry(cls, anchor, n1, n2, n3, offset=(0.0, 0.0, 0.0)):
        return cls(anchor, n1, n2, n3, kx.raw_offset_from_value(offset))

    @property
    def normals(self):
        return (_unit1(self.normal1_raw), _unit1(self.normal2_raw),
                _unit1(self.normal3_raw))

    @property
    def offset(self):
        return kx.tanh_offset(self.offset_raw)

    @property
    def apex(self):
        return self.anchor + self.offset


LocalSurface = Plane | Dihedral | Trihedral


@dataclass(frozen=True)
class Displacement:
    """Shortest vector from the query onto the surface.

    `branch` names the face/edge/ray/apex case that produced it; `margin` is
    the distance to the nearest branch switch (inf for the smooth plane).
    """

    s: Vec3
    branch: str
    margin: float

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.s))


def _row(v):
    return np.asarray(v, dtype=np.float64)[None, :]


def plane_displacement(pl: Plane, q) -> Displacement:
    """s = <anchor - q, n> n; total on all inputs."""
    q = as_vec3(q)
    s, _ = kx.plane_forward(_row(pl.anchor), _row(pl.normal_raw), _row(q))
    return Displacement(s=s[0], branch="face", margin=np.inf)


def halfplane_displacement(apex, edge_dir, face_normal, inface_dir, q) -> Displacement:
    """Shortest displacement onto {apex + t*edge_dir + u*inface_dir : u >= 0}.

    The frame (edge_dir, face_normal, inface_dir) must be orthonormal.
    """
    a = as_vec3(apex)
    e = as_vec3(edge_dir)
    n = as_vec3(face_normal)
    d = as_vec3(inface_dir)
    q = as_vec3(q)
    for v in (e, n, d):
        if abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise InvalidFrame("frame vectors must be unit length")
    if (abs(e @ n) > 1e-6 or abs(e @ d) > 1e-6 or abs(n @ d) > 1e-6):
        raise InvalidFrame("frame vectors must be mutually orthogonal")
    w = q - a
    h = w @ n
    qp = q - h * n
    u = (qp - a) @ d
    if u >= 0.0:
        s = qp - q
        branch = "interior"
    else:
        s = a + (w @ e) * e - q
        branch = "edge"
    return Displacement(s=s, branch=branch, margin=abs(float(u)))


_WEDGE_BRANCH = {0: "face1", 1: "face2", 2: "edge"}


def _wedge_margin(diag):
    case = int(diag["case"][0])
    u1, u2 = float(diag["u1"][0]), float(diag["u2"][0])
    c1, c2 = float(diag["cand1"][0]), float(diag["cand2"][0])
    if case == 2:
        # both faces clamp to the same edge foot; only the clamp boundaries matter
        return min(abs(u1), abs(u2))
    uk = u1 if case == 0 else u2
    gap = abs(np.sqrt(max(c1, 0.0)) - np.sqrt(max(c2, 0.0)))
    return min(abs(uk), gap)


def dihedral_displacement(dh: Dihedral, q) -> Displacement:
    """Min-norm displacement over the two half-planes; ties pick face 1."""
    q = as_vec3(q)
    cr = np.cross(dh.normal1, dh.normal2)
    if np.linalg.norm(cr) < EPS_PARALLEL:
        raise DegenerateDihedral(
            "normals nearly parallel; fall back to the plane kernel with normal1"
        )
    s, ctx = kx.dihedral_forward(_row(dh.anchor), _row(dh.normal1_raw),
                                 _row(dh.normal2_raw), _row(dh.offset_raw),
                                 _row(q))
    diag = ctx["diag"]
    case = int(diag["case"][0])
    return Displacement(s=s[0], branch=_WEDGE_BRANCH[case],
                        margin=float(_wedge_margin(diag)))


def _sector_partner(k, sub):
    return _OTHERS[k][sub - 1] if sub in (1, 2) else None


def _sector_margin(diag):
    d2 = np.maximum(diag["d2"][0], 0.0)
    dists = np.sqrt(d2)
    kstar = int(diag["kstar"][0])
    sub_all = diag["sub"][0]
    sub = int(sub_all[kstar])

    # Gap to competing faces, skipping candidates that clamp to the same
    # point (shared apex, shared boundary ray): those are continuous.
    gap = np.inf
    for k in range(3):
        if k == kstar:
            continue
        sk = int(sub_all[k])
        if sub == 3 and sk == 3:
            continue
        if (sub in (1, 2) and sk in (1, 2)
                and _sector_partner(kstar, sub) == k
                and _sector_partner(k, sk) == kstar):
            continue
        gap = min(gap, abs(float(dists[k] - dists[kstar])))

    slack = diag["slack"][0, kstar]
    ray_t = diag["ray_t"][0, kstar]
    t_raw = diag["ray_t_raw"][0, kstar]
    if sub == 0:
        local = float(np.min(np.abs(slack)))
    elif sub in (1, 2):
        t_pick = float(ray_t[sub - 1])
        t_other = float(ray_t[2 - sub])
        parts = [t_pick, float(max(slack.max(), 0.0))]
        ww = float(d2[kstar]) + t_pick * t_pick
        d_pick = np.sqrt(max(ww - t_pick * t_pick, 0.0))
        d_other = np.sqrt(max(ww - t_other * t_other, 0.0))
        parts.append(abs(d_other - d_pick))
        local = float(min(parts))
    else:
        local = float(min(np.min(np.abs(t_raw)), max(slack.max(), 0.0)))
    return min(gap, local)


def trihedral_displacement(th: Trihedral, q) -> Displacement:
    """Min-norm displacement over the three sectors; ties pick the lower face."""
    q = as_vec3(q)
    m1, m2, m3 = th.normals
    for a, b in ((m1, m2), (m1, m3), (m2, m3)):
        if np.linalg.norm(np.cross(a, b)) < EPS_PARALLEL:
            raise DegenerateTrihedral(
                "a normal pair is nearly parallel; fall back to the dihedral "
                "on the distinct pair, then to the plane"
            )
    s, ctx = kx.trihedral_forward(_row(th.anchor), _row(th.normal1_raw),
                                  _row(th.normal2_raw), _row(th.normal3_raw),
                                  _row(th.offset_raw), _row(q))
    diag = ctx["diag"]
    kstar = int(diag["kstar"][0])
    sub = int(diag["sub"][0, kstar])
    if sub == 0:
        branch = f"face{kstar + 1}"
    elif sub in (1, 2):
        other = _OTHERS[kstar][sub - 1]
        branch = f"ray{kstar + 1}{other + 1}"
    else:
        branch = "apex"
    return Displacement(s=s[0], branch=branch, margin=float(_sector_margin(diag)))


def displacement(surface: LocalSurface, q) -> Displacement:
    if isinstance(surface, Plane):
        return plane_displacement(surface, q)
    if isinstance(surface, Dihedral):
        return dihedral_displacement(surface, q)
    if isinstance(surface, Trihedral):
        return trihedral_displacement(surface, q)
    raise InvalidInput(f"not a local surface: {type(surface)!r}")


def kernel_gradient(surface: LocalSurface, q) -> dict:
    """Gradient of ||s||^2 with respect to the surface's raw parameters.

    Keys: 'anchor' plus 'normal' (plane) or 'normal1..3' and 'offset'. At a
    branch boundary this is the active branch's gradient.
    """
    q = as_vec3(q)
    if isinstance(surface, Plane):
        s, ctx = kx.plane_forward(_row(surface.anchor), _row(surface.normal_raw),
                                  _row(q))
        grads = kx.plane_backward(ctx, 2.0 * s)
    elif isinstance(surface, Dihedral):
        s, ctx = kx.dihedral_forward(_row(surface.anchor),
                                     _row(surface.normal1_raw),
                                     _row(surface.normal2_raw),
                                     _row(surface.offset_raw), _row(q))
        grads = kx.dihedral_backward(ctx, 2.0 * s)
    elif isinstance(surface, Trihedral):
        s, ctx = kx.trihedral_forward(_row(surface.anchor),
                                      _row(surface.normal1_raw),
                                      _row(surface.normal2_raw),
                                      _row(surface.normal3_raw),
                                      _row(surface.offset_raw), _row(q))
        grads = kx.trihedral_backward(ctx, 2.0 * s)
    else:
        raise InvalidInput(f"not a local surface: {type(surface)!r}")
    return {k: v[0] for k, v in grads.items()}
