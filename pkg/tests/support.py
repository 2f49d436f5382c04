"""Shared test helpers: independent oracles and exactly-representable states.

Oracles here deliberately avoid the production kernels: nearest neighbors by
linear scan, surface distances by dense sampling of the surface definition,
gradients by central finite differences.
"""

import numpy as np

from facetfield._kernels import raw_offset_from_value
from facetfield.core import build_index
from facetfield.model import (DIHEDRAL, PLANE, TRIHEDRAL, Hyper, ModelState,
                              ParamBank, raw_from_scale)


# ---------------------------------------------------------------------------
# linear-scan k-NN oracle
# ---------------------------------------------------------------------------

def linear_scan_knn(points, q, k):
    d = np.linalg.norm(points - q, axis=1)
    order = np.lexsort((np.arange(len(points)), d))[:k]
    return d[order], order


# ---------------------------------------------------------------------------
# dense-sampling distance oracles
# ---------------------------------------------------------------------------

def _auto_extent(anchor, q):
    # the closest surface point is within 2*|q - anchor| of the anchor,
    # since the anchor itself lies on the surface
    return 2.0 * float(np.linalg.norm(np.asarray(q) - np.asarray(anchor))) + 0.05


def plane_oracle(anchor, normal, q, delta=0.02, extent=None):
    if extent is None:
        extent = _auto_extent(anchor, q)
    n = normal / np.linalg.norm(normal)
    ref = np.zeros(3)
    ref[np.argmin(np.abs(n))] = 1.0
    t1 = np.cross(n, ref)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    g = np.arange(-extent, extent, delta)
    uu, vv = np.meshgrid(g, g, indexing="ij")
    pts = anchor + uu[..., None] * t1 + vv[..., None] * t2
    return float(np.linalg.norm(pts - q, axis=-1).min())


def halfplane_oracle(apex, edge_dir, inface_dir, q, delta=0.02, extent=None):
    if extent is None:
        extent = _auto_extent(apex, q)
    t = np.arange(-extent, extent, delta)
    u = np.arange(0.0, extent, delta)
    tt, uu = np.meshgrid(t, u, indexing="ij")
    pts = apex + tt[..., None] * edge_dir + uu[..., None] * inface_dir
    return float(np.linalg.norm(pts - q, axis=-1).min())


def dihedral_oracle(dh, q, delta=0.02, extent=None):
    a = dh.apex
    if extent is None:
        extent = _auto_extent(a, q)
    n1, n2 = dh.normal1, dh.normal2
    e = np.cross(n1, n2)
    e /= np.linalg.norm(e)
    best = np.inf
    for nk, no in ((n1, n2), (n2, n1)):
        d = -(no - (no @ nk) * nk)
        d /= np.linalg.norm(d)
        best = min(best, halfplane_oracle(a, e, d, q, delta, extent))
    return best


def trihedral_oracle(th, q, delta=0.02, extent=None):
    a = th.apex
    if extent is None:
        extent = _auto_extent(a, q)
    M3 = th.normals
    best = float(np.linalg.norm(a - q))   # the apex is always on the surface
    g = np.arange(-extent, extent, delta)
    uu, vv = np.meshgrid(g, g, indexing="ij")
    for k in range(3):
        mk = M3[k]
        ref = np.zeros(3)
        ref[np.argmin(np.abs(mk))] = 1.0
        t1 = np.cross(mk, ref)
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(mk, t1)
        pts = a + uu[..., None] * t1 + vv[..., None] * t2
        ok = np.ones(pts.shape[:2], dtype=bool)
        for j in range(3):
            if j != k:
                ok &= (pts - a) @ M3[j] <= 1e-12
        if ok.any():
            best = min(best, float(np.linalg.norm(pts[ok] - q, axis=-1).min()))
    return best


def surface_oracle(surface, q, delta=0.02, extent=None):
    from facetfield.geometry import Dihedral, Plane, Trihedral
    if isinstance(surface, Plane):
        return plane_oracle(surface.anchor, surface.normal, q, delta, extent)
    if isinstance(surface, Dihedral):
        return dihedral_oracle(surface, q, delta, extent)
    if isinstance(surface, Trihedral):
        return trihedral_oracle(surface, q, delta, extent)
    raise TypeError(surface)


# ---------------------------------------------------------------------------
# random surfaces away from degeneracy
# ---------------------------------------------------------------------------

def rand_unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_plane(rng):
    from facetfield.geometry import Plane
    return Plane(rng.normal(0, 0.3, 3), rng.normal(size=3))


def random_dihedral(rng, min_cross=0.05):
    from facetfield.geometry import Dihedral
    while True:
        dh = Dihedral(rng.normal(0, 0.3, 3), rng.normal(size=3),
                      rng.normal(size=3), rng.normal(0, 0.5, 3))
        if np.linalg.norm(np.cross(dh.normal1, dh.normal2)) >= min_cross:
            return dh


def random_trihedral(rng, min_cross=0.05):
    from facetfield.geometry import Trihedral
    while True:
        th = Trihedral(rng.normal(0, 0.3, 3), rng.normal(size=3),
                       rng.normal(size=3), rng.normal(size=3),
                       rng.normal(0, 0.5, 3))
        ms = th.normals
        if min(np.linalg.norm(np.cross(ms[a], ms[b]))
               for a, b in ((0, 1), (0, 2), (1, 2))) >= min_cross:
            return th


# ---------------------------------------------------------------------------
# finite-difference gradient oracle over raw surface parameters
# ---------------------------------------------------------------------------

def fd_kernel_gradient(surface, q, h=1e-5):
    """Central finite differences of ||s||^2 over every raw parameter."""
    from facetfield.geometry import (Dihedral, Plane, Trihedral, displacement)

    if isinstance(surface, Plane):
        fields = ["anchor", "normal_raw"]
        keys = ["anchor", "normal"]
    elif isinstance(surface, Dihedral):
        fields = ["anchor", "normal1_raw", "normal2_raw", "offset_raw"]
        keys = ["anchor", "normal1", "normal2", "offset"]
    else:
        fields = ["anchor", "normal1_raw", "normal2_raw", "normal3_raw",
                  "offset_raw"]
        keys = ["anchor", "normal1", "normal2", "normal3", "offset"]

    def rebuild(name, j, delta):
        kw = {f: getattr(surface, f).copy() for f in fields}
        kw[name][j] += delta
        return type(surface)(**kw)

    out = {}
    for name, key in zip(fields, keys):
        g = np.zeros(3)
        for j in range(3):
            fp = displacement(rebuild(name, j, h), q).norm ** 2
            fm = displacement(rebuild(name, j, -h), q).norm ** 2
            g[j] = (fp - fm) / (2 * h)
        out[key] = g
    return out


def grad_rel_err(analytic: dict, numeric: dict):
    a = np.concatenate([np.ravel(analytic[k]) for k in sorted(numeric)])
    b = np.concatenate([np.ravel(numeric[k]) for k in sorted(numeric)])
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-10)
    return np.linalg.norm(a - b) / denom


# ---------------------------------------------------------------------------
# exactly-representable clouds and their parameter banks
# ---------------------------------------------------------------------------

def _state_from(points, bank, k1, k2, selected):
    bank.selected[:] = selected
    bank.scale[:] = raw_from_scale(0.02)
    cloud = build_index(points)
    return ModelState(cloud, bank, Hyper(k1=k1, k2=k2, theta=100.0))


def make_exact_plane_state(n=900, k1=8, k2=6, seed=0):
    """Points on z = 0 with every variant an exact (degenerate) plane."""
    rng = np.random.default_rng(seed)
    pts = np.column_stack([rng.uniform(-0.8, 0.8, (n, 2)), np.zeros(n)])
    bank = ParamBank.zeros(n)
    ez = np.array([0.0, 0.0, 1.0])
    for key in ("plane_normal", "di_normal1", "di_normal2",
                "tri_normal1", "tri_normal2", "tri_normal3"):
        getattr(bank, key)[:] = ez
    state = _state_from(pts, bank, k1, k2, PLANE)
    info = dict(normal=ez, distance=lambda q: np.abs(np.asarray(q)[:, 2]))
    return state, info


def wedge_frames(angle_deg):
    beta = 0.5 * np.deg2rad(angle_deg)
    ua = np.array([0.0, np.sin(beta), -np.cos(beta)])
    ub = np.array([0.0, -np.sin(beta), -np.cos(beta)])
    na = np.array([0.0, np.cos(beta), np.sin(beta)])
    nb = np.array([0.0, -np.cos(beta), np.sin(beta)])
    return ua, ub, na, nb


def make_exact_wedge_state(angle_deg=90.0, n_face=700, k1=8, k2=6, seed=0,
                           mirror=False):
    """Tent-roof wedge: faces sampled beyond a wide margin from the ridge,
    the ridge itself sampled densely, every point's parameters exact.

    Face points carry the face plane in all variants; ridge points carry the
    exact wedge as their dihedral (trihedral degenerates to it, the plane
    variant holds one face, exact on the collinear ridge neighborhood).
    """
    rng = np.random.default_rng(seed)
    ua, ub, na, nb = wedge_frames(angle_deg)
    ex = np.array([1.0, 0.0, 0.0])
    L, W, margin = 0.9, 0.9, 0.3

    xs = rng.uniform(-L, L, n_face)
    us = rng.uniform(margin, W, n_face)
    face_a = xs[:, None] * ex + us[:, None] * ua
    if mirror:
        face_b = face_a * np.array([1.0, -1.0, 1.0])
    else:
        xs2 = rng.uniform(-L, L, n_face)
        us2 = rng.uniform(margin, W, n_face)
        face_b = xs2[:, None] * ex + us2[:, None] * ub
    ridge_x = np.arange(-L, L + 1e-9, 0.01)
    ridge = ridge_x[:, None] * ex

    pts = np.vstack([face_a, face_b, ridge])
    n = len(pts)
    n_ridge = len(ridge)
    bank = ParamBank.zeros(n)
    sel = np.zeros(n, dtype=np.int8)

    fa = slice(0, n_face)
    fb = slice(n_face, 2 * n_face)
    rg = slice(2 * n_face, n)
    for key in ("plane_normal", "di_normal1", "di_normal2",
                "tri_normal1", "tri_normal2", "tri_normal3"):
        arr = getattr(bank, key)
        arr[fa] = na
        arr[fb] = nb
    bank.plane_normal[rg] = na
    bank.di_normal1[rg] = na
    bank.di_normal2[rg] = nb
    bank.tri_normal1[rg] = na
    bank.tri_normal2[rg] = nb
    bank.tri_normal3[rg] = na   # parallel pair: falls back to the wedge
    sel[rg] = DIHEDRAL

    state = _state_from(pts, bank, k1, k2, sel)

    # distance to the unbounded wedge the parameters represent
    from facetfield.harness.shapes import Rect
    big = 1e9
    rect_a = Rect(np.zeros(3), ex, ua, (-big, big), (0.0, big))
    rect_b = Rect(np.zeros(3), ex, ub, (-big, big), (0.0, big))

    def distance(q):
        return np.minimum(rect_a.distance(q), rect_b.distance(q))

    info = dict(normals=(na, nb), n_ridge=n_ridge, ridge=rg, faces=(fa, fb),
                distance=distance, angle_deg=angle_deg)
    return state, info


def make_exact_corner_state(k1=8, k2=6, seed=0, n_face=420):
    """Box corner: three quarter-planes with margins around the three edges,
    densely sampled edges with a margin around the apex, and a tight cluster
    of on-surface points at the apex whose trihedral offset recenters the
    corner exactly."""
    rng = np.random.default_rng(seed)
    axes = np.eye(3)
    W, margin, edge_margin = 0.9, 0.3, 0.12

    face_pts = []
    face_norm = []
    for k in range(3):
        i, j = [a for a in range(3) if a != k]
        u = rng.uniform(-W, -margin, n_face)
        v = rng.uniform(-W, -margin, n_face)
        pts = np.zeros((n_face, 3))
        pts[:, i] = u
        pts[:, j] = v
        face_pts.append(pts)
        face_norm.append(axes[k])

    edge_pts = []
    edge_pairs = []   # outward normals of the two faces meeting at the edge
    ts = np.arange(-W, -edge_margin + 1e-9, 0.008)
    for axis in range(3):
        pts = np.zeros((len(ts), 3))
        pts[:, axis] = ts
        edge_pts.append(pts)
        normals = [axes[a] for a in range(3) if a != axis]
        edge_pairs.append(normals)

    cluster = [np.zeros(3)]
    for axis in range(3):
        for d in (2.5e-6, 5e-6, 7.5e-6, 1e-5):
            p = np.zeros(3)
            p[axis] = -d
            cluster.append(p)
    cluster = np.array(cluster)

    pts = np.vstack(face_pts + edge_pts + [cluster])
    n = len(pts)
    bank = ParamBank.zeros(n)
    sel = np.zeros(n, dtype=np.int8)

    pos = 0
    for k in range(3):
        sl = slice(pos, pos + n_face)
        for key in ("plane_normal", "di_normal1", "di_normal2",
                    "tri_normal1", "tri_normal2", "tri_normal3"):
            getattr(bank, key)[sl] = face_norm[k]
        pos += n_face
    for axis in range(3):
        sl = slice(pos, pos + len(ts))
        n1, n2 = edge_pairs[axis]
        bank.plane_normal[sl] = n1
        bank.di_normal1[sl] = n1
        bank.di_normal2[sl] = n2
        bank.tri_normal1[sl] = n1
        bank.tri_normal2[sl] = n2
        bank.tri_normal3[sl] = n1
        sel[sl] = DIHEDRAL
        pos += len(ts)
    cl = slice(pos, n)
    bank.plane_normal[cl] = axes[0]
    bank.di_normal1[cl] = axes[0]
    bank.di_normal2[cl] = axes[1]
    bank.tri_normal1[cl] = axes[0]
    bank.tri_normal2[cl] = axes[1]
    bank.tri_normal3[cl] = axes[2]
    # recenter every cluster anchor exactly onto the corner
    bank.tri_offset[cl] = raw_offset_from_value(-pts[cl])
    bank.di_offset[cl] = raw_offset_from_value(-pts[cl])
    sel[cl] = TRIHEDRAL

    state = _state_from(pts, bank, k1, k2, sel)

    # distance to the unbounded corner sectors the parameters represent
    from facetfield.harness.shapes import Rect
    big = 1e9
    rects = [Rect(np.zeros(3), axes[(k + 1) % 3], axes[(k + 2) % 3],
                  (-big, 0.0), (-big, 0.0)) for k in range(3)]

    def distance(q):
        return np.min(np.stack([r.distance(q) for r in rects]), axis=0)

    info = dict(distance=distance, cluster=cl, n=n)
    return state, info
