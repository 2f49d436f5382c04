"""Vectorized displacement kernels and their analytic parameter gradients.

The math is split in three phases so that per-surface work is never repeated
across the many (surface, query) pairs the optimizer evaluates:

  derive    per surface: unit normals, clamped offset, edge/ray frames,
            degeneracy routing. O(#points).
  pairs     per (surface, query) pair: displacement plus branch bookkeeping,
            and the reverse pass that scatters gradients onto per-surface
            accumulators. O(#pairs).
  finalize  per surface: chain accumulated gradients through the cross
            products, the unit normalization, and the tanh offset clamp back
            to the raw parameters. O(#points).

Branch conventions (convex wedge / convex corner):
  wedge   face k = half-plane through the apex with normal n_k, extending
          from the shared edge away from the other normal's projection.
  corner  face k = planar sector {x: <x-a, m_k> = 0, <x-a, m_j> <= 0, j != k}.
Minima over faces break ties toward the lower face index; at a branch
boundary the gradient is the active branch's (min-of-smooth subgradient).
"""

from __future__ import annotations

import numpy as np

OFFSET_SCALE = 0.01     # offsets live in (-OFFSET_SCALE, OFFSET_SCALE) via tanh
EPS_PARALLEL = 1e-4     # cross-product norm below which normals count as parallel

# wedge subcases
_FACE1, _FACE2, _EDGE = 0, 1, 2
# trihedral routes
ROUTE_SECTOR, ROUTE_WEDGE, ROUTE_PLANE = 0, 1, 2

OTHERS = ((1, 2), (0, 2), (0, 1))   # the two constraint faces per sector face
_PAIRS = np.array(((0, 1), (0, 2), (1, 2)))


def _dot(a, b):
    return np.einsum("ij,ij->i", a, b)


def _cross(a, b):
    out = np.empty(np.broadcast(a, b).shape)
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def _norm(a):
    return np.sqrt(np.einsum("ij,ij->i", a, a))


def _unit(u):
    norms = np.maximum(_norm(u), 1e-300)
    return u / norms[:, None], norms


def _unit_backward(g_n, n, norms):
    # n = u / |u|  =>  g_u = (g_n - <g_n, n> n) / |u|
    return (g_n - _dot(g_n, n)[:, None] * n) / norms[:, None]


def _scatter(buf, idx, vals):
    """buf[idx] += vals with duplicate indices, via bincount."""
    n = buf.shape[0]
    for j in range(vals.shape[1]):
        buf[:, j] += np.bincount(idx, weights=vals[:, j], minlength=n)


def tanh_offset(raw):
    """Componentwise clamp of a raw offset into (-OFFSET_SCALE, OFFSET_SCALE)."""
    return OFFSET_SCALE * np.tanh(raw)


def raw_offset_from_value(value):
    """Inverse of tanh_offset, for constructing exact surfaces in tests."""
    x = np.asarray(value, dtype=np.float64) / OFFSET_SCALE
    if np.any(np.abs(x) >= 1.0):
        raise ValueError(f"offset magnitude must stay below {OFFSET_SCALE}")
    return np.arctanh(x)


# ---------------------------------------------------------------------------
# plane: s = -<q - a, n> n
# ---------------------------------------------------------------------------

def plane_derive(anchor, normal_raw):
    n, ln = _unit(normal_raw)
    return dict(a=anchor, n=n, ln=ln)


def plane_pairs_forward(drv, pi, q):
    n = drv["n"][pi]
    w = q - drv["a"][pi]
    h = _dot(w, n)
    s = -h[:, None] * n
    return s, dict(pi=pi, w=w, h=h)


def plane_pairs_backward(drv, ctx, gs, acc=None):
    """Returns per-pair anchor gradients; normal gradients accumulate in acc."""
    pi = ctx["pi"]
    n = drv["n"][pi]
    gn_dot = _dot(gs, n)
    g_a = gn_dot[:, None] * n
    g_n = -(gn_dot[:, None] * ctx["w"] + ctx["h"][:, None] * gs)
    if acc is not None:
        _scatter(acc["plane_n"], pi, g_n)
    return g_a, g_n


def plane_finalize(drv, acc_n):
    return _unit_backward(acc_n, drv["n"], drv["ln"])


# ---------------------------------------------------------------------------
# wedge: two half-planes sharing the edge through the apex
# ---------------------------------------------------------------------------

def wedge_pairs_forward(a, n1, n2, e, crn, d12, pi, q):
    """Displacement onto a wedge; all surface arrays are indexed by pi."""
    n1g, n2g, eg = n1[pi], n2[pi], e[pi]
    crng, d12g = crn[pi], d12[pi]
    w = q - a[pi]
    h1 = _dot(w, n1g)
    h2 = _dot(w, n2g)
    # In-face coordinate along d_k = -(n_other - <n_other,n_k> n_k)/|n1 x n2|;
    # u_k >= 0 means the in-plane projection lands on the half-plane.
    u1 = (d12g * h1 - h2) / crng
    u2 = (d12g * h2 - h1) / crng
    t = _dot(w, eg)
    ww = _dot(w, w)
    d2_edge = np.maximum(ww - t * t, 0.0)
    feas1 = u1 >= 0.0
    feas2 = u2 >= 0.0
    cand1 = np.where(feas1, h1 * h1, d2_edge)
    cand2 = np.where(feas2, h2 * h2, d2_edge)
    pick1 = cand1 <= cand2
    case = np.where(pick1,
                    np.where(feas1, _FACE1, _EDGE),
                    np.where(feas2, _FACE2, _EDGE)).astype(np.int8)
    s = np.empty_like(q)
    m = case == _FACE1
    s[m] = -h1[m, None] * n1g[m]
    m = case == _FACE2
    s[m] = -h2[m, None] * n2g[m]
    m = case == _EDGE
    s[m] = -w[m] + t[m, None] * eg[m]
    ctx = dict(pi=pi, w=w, h1=h1, h2=h2, t=t, case=case)
    diag = dict(u1=u1, u2=u2, cand1=cand1, cand2=cand2, case=case)
    return s, ctx, diag


def wedge_pairs_backward(a, n1, n2, e, crn, pi, ctx, gs):
    """Per-pair gradients (g_a, g_n1, g_n2, g_cr); the cross-product chain of
    g_cr is applied once per surface by the caller's finalize."""
    case = ctx["case"]
    w = ctx["w"]
    g_a = np.zeros_like(gs)
    g_n1 = np.zeros_like(gs)
    g_n2 = np.zeros_like(gs)
    g_cr = np.zeros_like(gs)

    for code, nk, h, g_nk in ((_FACE1, n1, ctx["h1"], g_n1),
                              (_FACE2, n2, ctx["h2"], g_n2)):
        m = case == code
        if m.any():
            nm = nk[pi[m]]
            gm = gs[m]
            gn_dot = _dot(gm, nm)
            g_a[m] = gn_dot[:, None] * nm
            g_nk[m] = -(gn_dot[:, None] * w[m] + h[m, None] * gm)
    m = case == _EDGE
    if m.any():
        em = e[pi[m]]
        gm = gs[m]
        ge_dot = _dot(gm, em)
        g_a[m] = gm - ge_dot[:, None] * em
        g_e = ge_dot[:, None] * w[m] + ctx["t"][m, None] * gm
        g_cr[m] = (g_e - _dot(g_e, em)[:, None] * em) / crn[pi[m], None]
    return g_a, g_n1, g_n2, g_cr


def dihedral_derive(p, u1, u2, offset_raw):
    n1, l1 = _unit(u1)
    n2, l2 = _unit(u2)
    th = np.tanh(offset_raw)
    a = p + OFFSET_SCALE * th
    cr = _cross(n1, n2)
    crn = np.maximum(_norm(cr), 1e-300)
    deg = crn < EPS_PARALLEL
    e = cr / crn[:, None]
    d12 = _dot(n1, n2)
    return dict(a=a, n1=n1, n2=n2, l1=l1, l2=l2, th=th, e=e, crn=crn,
                d12=d12, deg=deg)


def dihedral_pairs_forward(drv, pi, q):
    """Wedge displacement; surfaces with (nearly) parallel normals fall back
    to the plane through the apex with the first normal."""
    deg = drv["deg"][pi]
    s = np.empty_like(q)
    ctx = dict(pi=pi, deg=deg, wedge=None, plane=None, diag=None)
    ok = ~deg
    if ok.any():
        rows = np.flatnonzero(ok)
        sw, wctx, diag = wedge_pairs_forward(drv["a"], drv["n1"], drv["n2"],
                                             drv["e"], drv["crn"], drv["d12"],
                                             pi[rows], q[rows])
        s[rows] = sw
        ctx["wedge"] = (rows, wctx)
        ctx["diag"] = diag
    if deg.any():
        rows = np.flatnonzero(deg)
        pdrv = dict(a=drv["a"], n=drv["n1"], ln=drv["l1"])
        sp, pctx = plane_pairs_forward(pdrv, pi[rows], q[rows])
        s[rows] = sp
        ctx["plane"] = (rows, pctx)
    return s, ctx


def dihedral_pairs_backward(drv, ctx, gs, acc):
    """Accumulates into acc (di_n1, di_n2, di_cr, di_a); returns per-pair g_a."""
    pi = ctx["pi"]
    g_a_pairs = np.zeros_like(gs)
    if ctx["wedge"] is not None:
        rows, wctx = ctx["wedge"]
        g_a, g_n1, g_n2, g_cr = wedge_pairs_backward(
            drv["a"], drv["n1"], drv["n2"], drv["e"], drv["crn"],
            pi[rows], wctx, gs[rows])
        g_a_pairs[rows] = g_a
        pr = pi[rows]
        _scatter(acc["di_n1"], pr, g_n1)
        _scatter(acc["di_n2"], pr, g_n2)
        _scatter(acc["di_cr"], pr, g_cr)
    if ctx["plane"] is not None:
        rows, pctx = ctx["plane"]
        pdrv = dict(a=drv["a"], n=drv["n1"], ln=drv["l1"])
        g_a, g_n = plane_pairs_backward(pdrv, pctx, gs[rows])
        g_a_pairs[rows] = g_a
        _scatter(acc["di_n1"], pi[rows], g_n)
    _scatter(acc["di_a"], pi, g_a_pairs)
    return g_a_pairs


def dihedral_finalize(drv, acc):
    g_n1 = acc["di_n1"] + _cross(drv["n2"], acc["di_cr"])
    g_n2 = acc["di_n2"] + _cross(acc["di_cr"], drv["n1"])
    g_u1 = _unit_backward(g_n1, drv["n1"], drv["l1"])
    g_u2 = _unit_backward(g_n2, drv["n2"], drv["l2"])
    th = drv["th"]
    g_off = OFFSET_SCALE * (1.0 - th * th) * acc["di_a"]
    return g_u1, g_u2, g_off


# ---------------------------------------------------------------------------
# corner: three planar sectors sharing the apex
# ---------------------------------------------------------------------------

def trihedral_derive(p, v1, v2, v3, offset_raw):
    m1, l1 = _unit(v1)
    m2, l2 = _unit(v2)
    m3, l3 = _unit(v3)
    th = np.tanh(offset_raw)
    a = p + OFFSET_SCALE * th
    M = np.stack([m1, m2, m3], axis=1)
    n = M.shape[0]
    C = np.einsum("ikj,ilj->ikl", M, M)
    # C_o[:, k, slot] = <m_k, m_other(slot)>: the constraint-dot table
    C_o = np.empty((n, 3, 2))
    for k in range(3):
        i, j = OTHERS[k]
        C_o[:, k, 0] = C[:, k, i]
        C_o[:, k, 1] = C[:, k, j]

    # Boundary-ray frames for each (face k, constraint slot); the sign makes
    # the ray leave the apex on the side allowed by the remaining constraint.
    ray_e = np.empty((n, 3, 2, 3))
    ray_crn = np.empty((n, 3, 2))
    for k in range(3):
        i, j = OTHERS[k]
        for slot, (jj, oo) in enumerate(((i, j), (j, i))):
            cr = _cross(M[:, k], M[:, jj])
            crn = np.maximum(np.sqrt(np.einsum("ij,ij->i", cr, cr)), 1e-300)
            e0 = cr / crn[:, None]
            sigma = np.where(np.einsum("ij,ij->i", e0, M[:, oo]) > 0.0, -1.0, 1.0)
            ray_e[:, k, slot] = sigma[:, None] * e0
            ray_crn[:, k, slot] = sigma * crn  # sign folded into the chain

    pair_crn = np.stack([
        _norm(_cross(m1, m2)), _norm(_cross(m1, m3)), _norm(_cross(m2, m3))
    ], axis=1)
    route = np.full(n, ROUTE_SECTOR, dtype=np.int8)
    route[pair_crn.min(axis=1) < EPS_PARALLEL] = ROUTE_WEDGE
    route[pair_crn.max(axis=1) < EPS_PARALLEL] = ROUTE_PLANE
    pair_pick = np.argmax(pair_crn, axis=1)

    # Fallback wedge on the most distinct pair, for ROUTE_WEDGE surfaces.
    rows = np.arange(n)
    wa = M[rows, _PAIRS[pair_pick, 0]]
    wb = M[rows, _PAIRS[pair_pick, 1]]
    wcr = _cross(wa, wb)
    wcrn = np.maximum(_norm(wcr), 1e-300)
    return dict(a=a, M=M, ls=(l1, l2, l3), th=th, C_o=C_o,
                ray_e=ray_e, ray_crn=ray_crn, route=route,
                pair_pick=pair_pick, wn1=wa, wn2=wb,
                we=wcr / wcrn[:, None], wcrn=wcrn, wd12=_dot(wa, wb))


def _sector_pairs_forward(drv, pi, q):
    M = drv["M"][pi]                              # (P, 3, 3)
    w = q - drv["a"][pi]
    ww = _dot(w, w)
    wm = np.einsum("ij,ikj->ik", w, M)            # (P, 3)
    P = len(pi)

    # Sector slacks g[p, k, slot] = <q'-a, m_other> per face.
    wm_o = np.empty((P, 3, 2))
    for k in range(3):
        i, j = OTHERS[k]
        wm_o[:, k, 0] = wm[:, i]
        wm_o[:, k, 1] = wm[:, j]
    slack = wm_o - wm[:, :, None] * drv["C_o"][pi]
    feas = (slack <= 0.0).all(axis=2)              # (P, 3)

    t_raw = np.einsum("ij,iklj->ikl", w, drv["ray_e"][pi])   # (P, 3, 2)
    tpos = np.maximum(t_raw, 0.0)
    d2_rays = ww[:, None, None] - tpos * tpos
    slot_pick = np.where(d2_rays[:, :, 0] <= d2_rays[:, :, 1], 0, 1)
    arange3 = np.arange(3)
    d2_clamp = d2_rays[np.arange(P)[:, None], arange3, slot_pick]
    tpos_pick = tpos[np.arange(P)[:, None], arange3, slot_pick]
    sub = np.where(feas, 0, np.where(tpos_pick > 0.0, 1 + slot_pick, 3))
    d2 = np.where(feas, wm * wm, d2_clamp)
    kstar = np.argmin(d2, axis=1)
    rows = np.arange(P)
    sub_star = sub[rows, kstar]

    s = np.empty_like(q)
    face_m = sub_star == 0
    if face_m.any():
        kf = kstar[face_m]
        s[face_m] = -wm[face_m, kf, None] * M[face_m, kf]
    ray_m = (sub_star == 1) | (sub_star == 2)
    if ray_m.any():
        kr = kstar[ray_m]
        slot = sub_star[ray_m] - 1
        er = drv["ray_e"][pi[ray_m], kr, slot]
        tr = t_raw[rows[ray_m], kr, slot]
        s[ray_m] = -w[ray_m] + tr[:, None] * er
    apex_m = sub_star == 3
    if apex_m.any():
        s[apex_m] = -w[apex_m]

    ctx = dict(pi=pi, w=w, wm=wm, kstar=kstar, sub_star=sub_star, t_raw=t_raw)
    diag = dict(d2=d2, slack=slack, ray_t=tpos, ray_t_raw=t_raw, sub=sub,
                kstar=kstar)
    return s, ctx, diag


def _sector_pairs_backward(drv, ctx, gs, acc):
    pi = ctx["pi"]
    w = ctx["w"]
    kstar, sub_star = ctx["kstar"], ctx["sub_star"]
    rows = np.arange(len(pi))
    g_a = np.zeros_like(gs)
    M3 = acc["tri_M"].reshape(-1, 3)              # (n*3, 3) flat view
    CR6 = acc["tri_cr"].reshape(-1, 3)            # (n*6, 3) flat view

    face_m = sub_star == 0
    if face_m.any():
        kf = kstar[face_m]
        nf = drv["M"][pi[face_m], kf]
        gm = gs[face_m]
        gn_dot = _dot(gm, nf)
        g_a[face_m] = gn_dot[:, None] * nf
        g_n = -(gn_dot[:, None] * w[face_m]
                + ctx["wm"][face_m, kf, None] * gm)
        _scatter(M3, pi[face_m] * 3 + kf, g_n)
    ray_m = (sub_star == 1) | (sub_star == 2)
    if ray_m.any():
        r = rows[ray_m]
        kr = kstar[ray_m]
        slot = sub_star[ray_m] - 1
        e = drv["ray_e"][pi[ray_m], kr, slot]
        t = ctx["t_raw"][r, kr, slot]
        crn = drv["ray_crn"][pi[ray_m], kr, slot]  # signed: sigma * |cross|
        gm = gs[ray_m]
        wr = w[ray_m]
        ge_dot = _dot(gm, e)
        g_a[ray_m] = gm - ge_dot[:, None] * e
        g_e = ge_dot[:, None] * wr + t[:, None] * gm
        g_cr = (g_e - _dot(g_e, e)[:, None] * e) / crn[:, None]
        _scatter(CR6, pi[ray_m] * 6 + kr * 2 + slot, g_cr)
    apex_m = sub_star == 3
    if apex_m.any():
        g_a[apex_m] = gs[apex_m]
    return g_a


def trihedral_pairs_forward(drv, pi, q):
    route = drv["route"][pi]
    s = np.empty_like(q)
    ctx = dict(pi=pi, route=route, sector=None, wedge=None, plane=None,
               diag=None)
    m = route == ROUTE_SECTOR
    if m.any():
        rows = np.flatnonzero(m)
        ss, sctx, diag = _sector_pairs_forward(drv, pi[rows], q[rows])
        s[rows] = ss
        ctx["sector"] = (rows, sctx)
        ctx["diag"] = diag
    m = route == ROUTE_WEDGE
    if m.any():
        rows = np.flatnonzero(m)
        sw, wctx, _ = wedge_pairs_forward(drv["a"], drv["wn1"], drv["wn2"],
                                          drv["we"], drv["wcrn"], drv["wd12"],
                                          pi[rows], q[rows])
        s[rows] = sw
        ctx["wedge"] = (rows, wctx)
    m = route == ROUTE_PLANE
    if m.any():
        rows = np.flatnonzero(m)
        pdrv = dict(a=drv["a"], n=drv["M"][:, 0], ln=drv["ls"][0])
        sp, pctx = plane_pairs_forward(pdrv, pi[rows], q[rows])
        s[rows] = sp
        ctx["plane"] = (rows, pctx)
    return s, ctx


def trihedral_pairs_backward(drv, ctx, gs, acc):
    pi = ctx["pi"]
    g_a_pairs = np.zeros_like(gs)
    if ctx["sector"] is not None:
        rows, sctx = ctx["sector"]
        g_a_pairs[rows] = _sector_pairs_backward(drv, sctx, gs[rows], acc)
    if ctx["wedge"] is not None:
        rows, wctx = ctx["wedge"]
        g_a, g_n1, g_n2, g_cr = wedge_pairs_backward(
            drv["a"], drv["wn1"], drv["wn2"], drv["we"], drv["wcrn"],
            pi[rows], wctx, gs[rows])
        g_a_pairs[rows] = g_a
        pr = pi[rows]
        pk = _PAIRS[drv["pair_pick"][pr]]
        M3 = acc["tri_M"].reshape(-1, 3)
        _scatter(M3, pr * 3 + pk[:, 0], g_n1)
        _scatter(M3, pr * 3 + pk[:, 1], g_n2)
        _scatter(acc["tri_wcr"], pr, g_cr)
    if ctx["plane"] is not None:
        rows, pctx = ctx["plane"]
        pdrv = dict(a=drv["a"], n=drv["M"][:, 0], ln=drv["ls"][0])
        g_a, g_n = plane_pairs_backward(pdrv, pctx, gs[rows])
        g_a_pairs[rows] = g_a
        M3 = acc["tri_M"].reshape(-1, 3)
        _scatter(M3, pi[rows] * 3, g_n)
    _scatter(acc["tri_a"], pi, g_a_pairs)
    return g_a_pairs


def trihedral_finalize(drv, acc):
    M = drv["M"]
    g_M = acc["tri_M"].copy()
    cr_acc = acc["tri_cr"]
    for k in range(3):
        i, j = OTHERS[k]
        for slot, jj in enumerate((i, j)):
            g_cr = cr_acc[:, k, slot]
            g_M[:, k] += _cross(M[:, jj], g_cr)
            g_M[:, jj] += _cross(g_cr, M[:, k])
    # fallback-wedge cross chain on the picked pair
    wcr = acc["tri_wcr"]
    rows = np.arange(M.shape[0])
    pk = _PAIRS[drv["pair_pick"]]
    ga = _cross(drv["wn2"], wcr)
    gb = _cross(wcr, drv["wn1"])
    np.add.at(g_M, (rows, pk[:, 0]), ga)
    np.add.at(g_M, (rows, pk[:, 1]), gb)

    l1, l2, l3 = drv["ls"]
    g_v1 = _unit_backward(g_M[:, 0], M[:, 0], l1)
    g_v2 = _unit_backward(g_M[:, 1], M[:, 1], l2)
    g_v3 = _unit_backward(g_M[:, 2], M[:, 2], l3)
    th = drv["th"]
    g_off = OFFSET_SCALE * (1.0 - th * th) * acc["tri_a"]
    return g_v1, g_v2, g_v3, g_off


# ---------------------------------------------------------------------------
# accumulators
# ---------------------------------------------------------------------------

def new_accumulator(n):
    return dict(
        plane_n=np.zeros((n, 3)),
        di_n1=np.zeros((n, 3)), di_n2=np.zeros((n, 3)),
        di_cr=np.zeros((n, 3)), di_a=np.zeros((n, 3)),
        tri_M=np.zeros((n, 3, 3)), tri_cr=np.zeros((n, 3, 2, 3)),
        tri_wcr=np.zeros((n, 3)), tri_a=np.zeros((n, 3)),
    )


# ---------------------------------------------------------------------------
# single-surface convenience wrappers (one surface per row)
# ---------------------------------------------------------------------------

def plane_forward(anchor, normal_raw, q):
    drv = plane_derive(anchor, normal_raw)
    pi = np.arange(len(q))
    s, pctx = plane_pairs_forward(drv, pi, q)
    return s, dict(kind="plane", drv=drv, pctx=pctx)


def plane_backward(ctx, gs):
    g_a, g_n = plane_pairs_backward(ctx["drv"], ctx["pctx"], gs)
    g_raw = plane_finalize(ctx["drv"], g_n)
    return dict(anchor=g_a, normal=g_raw)


def dihedral_forward(p, u1, u2, offset_raw, q):
    drv = dihedral_derive(p, u1, u2, offset_raw)
    pi = np.arange(len(q))
    s, pctx = dihedral_pairs_forward(drv, pi, q)
    diag = None
    if pctx["wedge"] is not None and len(pctx["wedge"][0]) == len(q):
        diag = pctx["diag"]
    return s, dict(kind="dihedral", drv=drv, pctx=pctx, diag=diag)


def dihedral_backward(ctx, gs):
    acc = new_accumulator(len(gs))
    g_a = dihedral_pairs_backward(ctx["drv"], ctx["pctx"], gs, acc)
    g_u1, g_u2, g_off = dihedral_finalize(ctx["drv"], acc)
    return dict(anchor=g_a, normal1=g_u1, normal2=g_u2, offset=g_off)


def trihedral_forward(p, v1, v2, v3, offset_raw, q):
    drv = trihedral_derive(p, v1, v2, v3, offset_raw)
    pi = np.arange(len(q))
    s, pctx = trihedral_pairs_forward(drv, pi, q)
    diag = None
    if pctx["sector"] is not None and len(pctx["sector"][0]) == len(q):
        diag = pctx["diag"]
    return s, dict(kind="trihedral", drv=drv, pctx=pctx, diag=diag)


def trihedral_backward(ctx, gs):
    acc = new_accumulator(len(gs))
    g_a = trihedral_pairs_backward(ctx["drv"], ctx["pctx"], gs, acc)
    g_v1, g_v2, g_v3, g_off = trihedral_finalize(ctx["drv"], acc)
    return dict(anchor=g_a, normal1=g_v1, normal2=g_v2, normal3=g_v3,
                offset=g_off)
