"""Per-point parameter bank, geometry selection, and the merged field.

Each cloud point owns raw parameters for all three local surface candidates
plus a raw merge scale. The selected candidate per point is the one with the
smallest mean displacement norm over its k1 nearest neighbors; near-ties
resolve toward the simpler surface. A query's displacement is the
softmax-weighted average of the displacements onto its k2 nearest neighbors'
selected surfaces, with the nearest neighbor's scale as the blend bandwidth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _kernels as kx
from .core import PointCloud, Vec3, as_vec3
from .errors import InvalidInput
from .geometry import Dihedral, Plane, Trihedral

PLANE, DIHEDRAL, TRIHEDRAL = 0, 1, 2
VARIANT_NAMES = ("plane", "dihedral", "trihedral")

R_FLOOR = 1e-3  # keeps the learned merge scale strictly positive

GRAD_KEYS = (
    "plane_normal",
    "di_normal1", "di_normal2", "di_offset",
    "tri_normal1", "tri_normal2", "tri_normal3", "tri_offset",
    "scale",
)


def scale_to_r(scale_raw):
    """softplus(raw) + floor: the positive per-point merge scale."""
    return np.logaddexp(0.0, scale_raw) + R_FLOOR


def raw_from_scale(r):
    """Inverse of scale_to_r for initialization."""
    x = max(float(r) - R_FLOOR, 1e-9)
    return float(np.log(np.expm1(x))) if x < 30 else x


@dataclass
class Hyper:
    k1: int = 36
    k2: int = 12
    theta: float = 100.0
    eps_parallel: float = kx.EPS_PARALLEL
    # Residual-argmin slack: a more complex variant is selected only when it
    # beats every simpler one by the relative margin plus the absolute floor,
    # so near-ties and converged-to-noise residuals resolve toward the
    # simpler surface.
    select_margin: float = 0.1
    select_floor: float = 1e-4


@dataclass
class ParamBank:
    plane_normal: np.ndarray   # (n, 3) raw
    di_normal1: np.ndarray
    di_normal2: np.ndarray
    di_offset: np.ndarray      # (n, 3) pre-tanh
    tri_normal1: np.ndarray
    tri_normal2: np.ndarray
    tri_normal3: np.ndarray
    tri_offset: np.ndarray
    scale: np.ndarray          # (n,) pre-softplus
    selected: np.ndarray       # (n,) int8 variant index

    @classmethod
    def zeros(cls, n):
        return cls(*(np.zeros((n, 3)) for _ in range(8)), np.zeros(n),
                   np.zeros(n, dtype=np.int8))

    def zero_grads(self) -> dict:
        return {k: np.zeros_like(getattr(self, k)) for k in GRAD_KEYS}

    def copy(self):
        return ParamBank(*(getattr(self, k).copy() for k in GRAD_KEYS),
                         self.selected.copy())


@dataclass(frozen=True)
class PointParams:
    """Read-only view of one point's raw parameters."""

    plane_normal: Vec3
    dihedral: tuple
    trihedral: tuple
    scale: float
    selected: int


@dataclass(frozen=True)
class MergeWeights:
    indices: np.ndarray
    weights: np.ndarray


class ModelState:
    """Cloud plus the parameter bank under optimization."""

    def __init__(self, cloud: PointCloud, bank: ParamBank, hyper: Hyper,
                 enabled=(PLANE, DIHEDRAL, TRIHEDRAL)):
        n = len(cloud)
        if bank.plane_normal.shape[0] != n:
            raise InvalidInput("parameter bank length must match the cloud")
        if not (1 <= hyper.k1 <= max(n - 1, 1)) or not (1 <= hyper.k2 <= n):
            raise InvalidInput("k1/k2 out of range for this cloud")
        enabled = tuple(sorted(set(enabled)))
        if not enabled or any(v not in (PLANE, DIHEDRAL, TRIHEDRAL) for v in enabled):
            raise InvalidInput("at least one known variant must be enabled")
        self.cloud = cloud
        self.bank = bank
        self.hyper = hyper
        self.enabled = enabled
        self.neighbors = _neighbor_table(cloud, hyper.k1)

    def point_params(self, i: int) -> PointParams:
        b = self.bank
        return PointParams(
            plane_normal=b.plane_normal[i].copy(),
            dihedral=(b.di_normal1[i].copy(), b.di_normal2[i].copy(),
                      b.di_offset[i].copy()),
            trihedral=(b.tri_normal1[i].copy(), b.tri_normal2[i].copy(),
                       b.tri_normal3[i].copy(), b.tri_offset[i].copy()),
            scale=float(b.scale[i]),
            selected=int(b.selected[i]),
        )

    def surface(self, i: int, variant: int):
        """The i-th point's candidate surface object for the given variant."""
        b = self.bank
        p = self.cloud.points[i]
        if variant == PLANE:
            return Plane(p, b.plane_normal[i])
        if variant == DIHEDRAL:
            return Dihedral(p, b.di_normal1[i], b.di_normal2[i], b.di_offset[i])
        if variant == TRIHEDRAL:
            return Trihedral(p, b.tri_normal1[i], b.tri_normal2[i],
                             b.tri_normal3[i], b.tri_offset[i])
        raise InvalidInput(f"unknown variant {variant}")


def _neighbor_table(cloud: PointCloud, k1: int):
    """(n, k1) nearest-neighbor indices per point, excluding the point itself."""
    n = len(cloud)
    if n == 1:
        # no other points: the residual of the only point is taken against
        # itself (zero for any surface through it)
        return np.zeros((1, k1), dtype=np.int64)
    dist, idx = cloud.knn_batch(cloud.points, k1 + 1)
    rows = np.arange(n)
    is_self = idx == rows[:, None]
    has_self = is_self.any(axis=1)
    drop = np.where(has_self, np.argmax(is_self, axis=1), k1)
    keep = np.ones_like(idx, dtype=bool)
    keep[rows, drop] = False
    return idx[keep].reshape(n, k1)


# ---------------------------------------------------------------------------
# derived-parameter cache and pair dispatch
# ---------------------------------------------------------------------------

def derive_params(state: ModelState) -> dict:
    """Per-point derived quantities (unit normals, frames, routing) computed
    once per parameter setting and shared by every pair evaluation."""
    b = state.bank
    pts = state.cloud.points
    return dict(
        plane=kx.plane_derive(pts, b.plane_normal),
        di=kx.dihedral_derive(pts, b.di_normal1, b.di_normal2, b.di_offset),
        tri=kx.trihedral_derive(pts, b.tri_normal1, b.tri_normal2,
                                b.tri_normal3, b.tri_offset),
    )


def new_accumulator(state: ModelState) -> dict:
    acc = kx.new_accumulator(len(state.cloud))
    acc["scale"] = np.zeros(len(state.cloud))
    return acc


def finalize_grads(state: ModelState, derived: dict, acc: dict) -> dict:
    """Chain the per-point accumulators back to raw-parameter gradients."""
    g_u1, g_u2, g_doff = kx.dihedral_finalize(derived["di"], acc)
    g_v1, g_v2, g_v3, g_toff = kx.trihedral_finalize(derived["tri"], acc)
    return {
        "plane_normal": kx.plane_finalize(derived["plane"], acc["plane_n"]),
        "di_normal1": g_u1, "di_normal2": g_u2, "di_offset": g_doff,
        "tri_normal1": g_v1, "tri_normal2": g_v2, "tri_normal3": g_v3,
        "tri_offset": g_toff,
        "scale": acc["scale"],
    }


def _pairs_forward(derived, pidx, variant_ids, queries):
    s = np.empty_like(queries)
    groups = []
    for vid in (PLANE, DIHEDRAL, TRIHEDRAL):
        m = variant_ids == vid
        if not m.any():
            continue
        rows = np.flatnonzero(m)
        pi = pidx[rows]
        qv = queries[rows]
        if vid == PLANE:
            sv, ctx = kx.plane_pairs_forward(derived["plane"], pi, qv)
        elif vid == DIHEDRAL:
            sv, ctx = kx.dihedral_pairs_forward(derived["di"], pi, qv)
        else:
            sv, ctx = kx.trihedral_pairs_forward(derived["tri"], pi, qv)
        s[rows] = sv
        groups.append((vid, rows, ctx))
    return s, groups


def _pairs_backward(derived, groups, gs, acc: dict):
    # Anchor gradients are dropped for planes (the anchor is the cloud point);
    # for wedge and corner surfaces they feed the offset chain inside acc.
    for vid, rows, ctx in groups:
        g = gs[rows]
        if vid == PLANE:
            kx.plane_pairs_backward(derived["plane"], ctx, g, acc)
        elif vid == DIHEDRAL:
            kx.dihedral_pairs_backward(derived["di"], ctx, g, acc)
        else:
            kx.trihedral_pairs_backward(derived["tri"], ctx, g, acc)


# ---------------------------------------------------------------------------
# merged field
# ---------------------------------------------------------------------------

@dataclass
class FieldCtx:
    queries: np.ndarray
    idx: np.ndarray
    dist: np.ndarray
    rho: np.ndarray
    r: np.ndarray
    w: np.ndarray
    spairs: np.ndarray
    derived: dict = field(repr=False, default_factory=dict)
    groups: list = field(repr=False, default_factory=list)


def field_forward(state: ModelState, queries, want_ctx: bool = False,
                  derived: dict = None):
    """s_g at each query: softmax-weighted neighbor displacements.

    One scale r per query scales every distance in the softmax: the scale of
    the query's nearest cloud point, acting as that point's learned blend
    bandwidth over its territory.
    """
    queries = np.asarray(queries, dtype=np.float64)
    k2 = state.hyper.k2
    theta = state.hyper.theta
    if derived is None:
        derived = derive_params(state)
    dist, idx = state.cloud.knn_batch(queries, k2)
    home = idx[:, 0]
    rho = state.bank.scale[home]
    r = scale_to_r(rho)
    z = -dist / (theta * r[:, None])
    z = z - z.max(axis=1, keepdims=True)
    ew = np.exp(z)
    w = ew / ew.sum(axis=1, keepdims=True)
    pidx = idx.ravel()
    variant = state.bank.selected[pidx]
    qrep = np.repeat(queries, k2, axis=0)
    sp, groups = _pairs_forward(derived, pidx, variant, qrep)
    spairs = sp.reshape(len(queries), k2, 3)
    s = np.einsum("mk,mkj->mj", w, spairs)
    if not want_ctx:
        return s, None
    return s, FieldCtx(queries=queries, idx=idx, dist=dist, rho=rho, r=r, w=w,
                       spairs=spairs, derived=derived, groups=groups)


def field_backward(state: ModelState, ctx: FieldCtx, g_s, acc: dict):
    theta = state.hyper.theta
    gw = np.einsum("mj,mkj->mk", g_s, ctx.spairs)
    gz = ctx.w * (gw - (ctx.w * gw).sum(axis=1, keepdims=True))
    gr = (gz * ctx.dist).sum(axis=1) / (theta * ctx.r * ctx.r)
    grho = gr * expit(ctx.rho)
    acc["scale"] += np.bincount(ctx.idx[:, 0], weights=grho,
                                minlength=len(state.cloud))
    gsp = (ctx.w[..., None] * g_s[:, None, :]).reshape(-1, 3)
    _pairs_backward(ctx.derived, ctx.groups, gsp, acc)


def geometric_displacement(state: ModelState, q) -> Vec3:
    """Merged displacement s_g(q) for a single query point."""
    s, _ = field_forward(state, as_vec3(q)[None, :])
    return s[0]


def merge_weights(state: ModelState, q) -> MergeWeights:
    """Softmax weights over the k2 neighbors of q."""
    q = as_vec3(q)
    dist, idx = state.cloud.knn_batch(q[None, :], state.hyper.k2)
    r = scale_to_r(state.bank.scale[idx[:, 0]])
    z = -dist / (state.hyper.theta * r[:, None])
    z = z - z.max(axis=1, keepdims=True)
    ew = np.exp(z)
    w = ew / ew.sum(axis=1, keepdims=True)
    return MergeWeights(indices=idx[0], weights=w[0])


# ---------------------------------------------------------------------------
# residuals and selection
# ---------------------------------------------------------------------------

def residual_pairs_forward(state: ModelState, variant: int, derived: dict = None):
    """Mean neighbor displacement norm per point for one forced variant.

    Returns (D, pair_ctx) where D is (n,) and pair_ctx feeds the local-loss
    backward pass.
    """
    if derived is None:
        derived = derive_params(state)
    nb = state.neighbors
    n, k1 = nb.shape
    owners = np.repeat(np.arange(n), k1)
    queries = state.cloud.points[nb.ravel()]
    vids = np.full(n * k1, variant, dtype=np.int8)
    sp, groups = _pairs_forward(derived, owners, vids, queries)
    norms = np.linalg.norm(sp, axis=1)
    D = norms.reshape(n, k1).mean(axis=1)
    return D, (sp, norms, groups)


def residual(state: ModelState, i: int, variant: int,
             derived: dict = None) -> float:
    """Mean displacement norm from point i's k1 neighbors to its surface."""
    if derived is None:
        derived = derive_params(state)
    nb = state.neighbors[i]
    queries = state.cloud.points[nb]
    owners = np.full(len(nb), i)
    vids = np.full(len(nb), variant, dtype=np.int8)
    sp, _ = _pairs_forward(derived, owners, vids, queries)
    return float(np.linalg.norm(sp, axis=1).mean())


def residual_matrix(state: ModelState, derived: dict = None):
    """(n, 3) residuals; disabled variants are +inf."""
    if derived is None:
        derived = derive_params(state)
    n = len(state.cloud)
    out = np.full((n, 3), np.inf)
    for v in state.enabled:
        out[:, v], _ = residual_pairs_forward(state, v, derived)
    return out


def _margin_argmin(rm, margin, floor):
    """Smallest-residual variant, resolved toward the simpler one whenever
    it comes within (1 + margin) of the minimum plus the absolute floor."""
    best = rm.min(axis=1)
    slack = best * (1.0 + margin) + floor
    sel = np.full(rm.shape[0], TRIHEDRAL, dtype=np.int8)
    sel[rm[:, DIHEDRAL] <= slack] = DIHEDRAL
    sel[rm[:, PLANE] <= slack] = PLANE
    return sel


def select_geometry(state: ModelState, i: int) -> int:
    """Residual argmin for point i; near-ties resolve toward the simpler."""
    derived = derive_params(state)
    vals = np.array([[residual(state, i, v, derived)
                      if v in state.enabled else np.inf
                      for v in (PLANE, DIHEDRAL, TRIHEDRAL)]])
    return int(_margin_argmin(vals, state.hyper.select_margin,
                              state.hyper.select_floor)[0])


def select_all(state: ModelState, derived: dict = None):
    """Re-select every point's variant in place; returns the selection."""
    rm = residual_matrix(state, derived)
    state.bank.selected = _margin_argmin(rm, state.hyper.select_margin,
                                         state.hyper.select_floor)
    return state.bank.selected


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def _tangent_basis(n):
    ref = np.zeros_like(n)
    ref[np.arange(len(n)), np.argmin(np.abs(n), axis=1)] = 1.0
    t1 = np.cross(n, ref)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(n, t1)
    return t1, t2


def init_params(cloud: PointCloud, k1: int = 36, *, k2: int = 12,
                theta: float = 100.0, seed: int = 0,
                enabled=(PLANE, DIHEDRAL, TRIHEDRAL)) -> ModelState:
    """PCA-seeded free parameters: plane normals from local PCA, wedge and
    corner normals as small deterministic tilts of them, offsets at zero,
    and the merge scale at the median nearest-neighbor spacing."""
    from .core import pca_normal

    n = len(cloud)
    if n < k1 + 1:
        raise InvalidInput(f"need at least k1+1={k1 + 1} points")
    rng = np.random.default_rng(seed)

    normals = np.empty((n, 3))
    for i in range(n):
        normals[i] = pca_normal(cloud, i, k1)

    t1, t2 = _tangent_basis(normals)
    tilt = np.deg2rad(5.0)
    phase = rng.uniform(0.0, 2 * np.pi, n)

    def tilted(phi):
        d = np.cos(phi)[:, None] * t1 + np.sin(phi)[:, None] * t2
        return np.cos(tilt) * normals + np.sin(tilt) * d

    bank = ParamBank.zeros(n)
    bank.plane_normal = normals.copy()
    bank.di_normal1 = tilted(phase)
    bank.di_normal2 = tilted(phase + np.pi)
    bank.tri_normal1 = tilted(phase)
    bank.tri_normal2 = tilted(phase + 2 * np.pi / 3)
    bank.tri_normal3 = tilted(phase + 4 * np.pi / 3)

    nn_dist, _ = cloud.knn_batch(cloud.points, 2)
    spacing = float(np.median(nn_dist[:, 1]))
    bank.scale[:] = raw_from_scale(max(spacing, R_FLOOR * 2))
    bank.selected[:] = PLANE

    enabled_ids = tuple(VARIANT_NAMES.index(v) if isinstance(v, str) else int(v)
                        for v in enabled)
    return ModelState(cloud, bank, Hyper(k1=k1, k2=k2, theta=theta),
                      enabled=enabled_ids)
