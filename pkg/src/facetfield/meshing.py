"""Surface extraction from a fitted displacement field.

The surface of record is the projected point set: queries walked along the
field until the residual displacement is tiny. A voxel grid of field norms
supports inspection and a marching-cubes shell mesh (iso-surface of the
distance-minus-tau field) for visualization. The shell is a thin two-sided
skin around the zero set, not a topology-faithful mesh of the open surface.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np
from skimage import measure

from .errors import EmptyMesh, InvalidInput, ProjectionUnstableWarning
from .model import ModelState, derive_params, field_forward
from .training import sample_queries

DEFAULT_BOUNDS = ((-1.1, -1.1, -1.1), (1.1, 1.1, 1.1))


@dataclass
class UdfGrid:
    """Field norms (and cached displacements) at voxel centers."""

    resolution: int
    bounds: np.ndarray        # (2, 3) lower/upper corners
    values: np.ndarray        # (R, R, R) ||s|| at centers, x-major indexing
    displacements: np.ndarray  # (R, R, R, 3)

    @property
    def voxel_size(self) -> np.ndarray:
        return (self.bounds[1] - self.bounds[0]) / self.resolution

    def axis_centers(self, axis: int) -> np.ndarray:
        lo, hi = self.bounds[0, axis], self.bounds[1, axis]
        h = (hi - lo) / self.resolution
        return lo + h * (np.arange(self.resolution) + 0.5)

    def center(self, ix: int, iy: int, iz: int) -> np.ndarray:
        return np.array([self.axis_centers(0)[ix],
                         self.axis_centers(1)[iy],
                         self.axis_centers(2)[iz]])

    def dump_binary(self, path):
        """Flat little-endian float32 dump, x-fastest, after a 4-int32 header
        (R, R, R, 0)."""
        with open(path, "wb") as f:
            r = self.resolution
            f.write(struct.pack("<4i", r, r, r, 0))
            f.write(self.values.astype("<f4").ravel(order="F").tobytes())


def evaluate_grid(state: ModelState, resolution: int = 64,
                  bounds=DEFAULT_BOUNDS, chunk: int = 65536) -> UdfGrid:
    """Evaluate the merged field at every voxel center."""
    if resolution < 8:
        raise InvalidInput("grid resolution must be at least 8")
    bounds = np.asarray(bounds, dtype=np.float64)
    if bounds.shape != (2, 3) or np.any(bounds[1] <= bounds[0]):
        raise InvalidInput("bounds must be a (2, 3) box with positive extent")
    r = resolution
    axes = [bounds[0, a] + (bounds[1, a] - bounds[0, a]) / r
            * (np.arange(r) + 0.5) for a in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    centers = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    derived = derive_params(state)
    disp = np.empty_like(centers)
    for lo in range(0, len(centers), chunk):
        hi = min(lo + chunk, len(centers))
        disp[lo:hi], _ = field_forward(state, centers[lo:hi], derived=derived)
    values = np.linalg.norm(disp, axis=1)
    return UdfGrid(resolution=r, bounds=bounds,
                   values=values.reshape(r, r, r),
                   displacements=disp.reshape(r, r, r, 3))


@dataclass
class SurfaceSamples:
    """Projected surface points with their originating queries."""

    points: np.ndarray
    origins: np.ndarray
    residuals: np.ndarray
    discard_fraction: float
    stable: bool


def project_samples(state: ModelState, n_samples: int = 100_000,
                    jitter: float = 0.03, tol: float = 1e-3,
                    max_iters: int = 3, rng=None) -> SurfaceSamples:
    """Walk jittered queries onto the zero set by iterating q <- q + s(q).

    Queries whose residual never drops below tol are discarded; more than
    half discarded raises a ProjectionUnstableWarning and flags the result.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    derived = derive_params(state)
    origins = sample_queries(state.cloud, n_samples, jitter, rng)
    q = origins.copy()
    res = np.full(n_samples, np.inf)
    active = np.ones(n_samples, dtype=bool)
    for _ in range(max_iters):
        s, _ = field_forward(state, q[active], derived=derived)
        norms = np.linalg.norm(s, axis=1)
        res[active] = norms
        q[active] += s
        still = norms > tol
        idx = np.flatnonzero(active)
        active[idx[~still]] = False
        if not active.any():
            break
    if active.any():
        s, _ = field_forward(state, q[active], derived=derived)
        res[active] = np.linalg.norm(s, axis=1)
    keep = res <= tol
    discard = 1.0 - float(keep.mean())
    stable = discard <= 0.5
    if not stable:
        warnings.warn(f"{discard:.0%} of samples failed to project",
                      ProjectionUnstableWarning)
    return SurfaceSamples(points=q[keep], origins=origins[keep],
                          residuals=res[keep], discard_fraction=discard,
                          stable=stable)


@dataclass
class TriMesh:
    vertices: np.ndarray   # (v, 3)
    triangles: np.ndarray  # (t, 3) int

    def write_obj(self, path):
        with open(path, "w") as f:
            for v in self.vertices:
                f.write(f"v {v[0]:.8g} {v[1]:.8g} {v[2]:.8g}\n")
            for t in self.triangles:
                f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def _drop_degenerate(verts, faces, min_area=1e-12):
    a = verts[faces[:, 1]] - verts[faces[:, 0]]
    b = verts[faces[:, 2]] - verts[faces[:, 0]]
    areas = 0.5 * np.linalg.norm(np.cross(a, b), axis=1)
    return faces[areas > min_area]


def extract_shell_mesh(grid: UdfGrid, tau: float = None) -> TriMesh:
    """Marching-cubes iso-surface of (values - tau): a thin two-sided shell
    around the zero set. tau defaults to 1.5 voxel sizes and may not be
    smaller than one voxel."""
    h = float(grid.voxel_size.max())
    if tau is None:
        tau = 1.5 * h
    if tau < h:
        raise InvalidInput(f"tau={tau} must be at least one voxel ({h})")
    field = grid.values - tau
    if field.min() > 0 or field.max() < 0:
        raise EmptyMesh(f"no zero crossing of distance - {tau}")
    spacing = tuple(grid.voxel_size)
    verts, faces, _, _ = measure.marching_cubes(field, level=0.0,
                                                spacing=spacing)
    verts = verts + grid.bounds[0] + 0.5 * grid.voxel_size
    faces = _drop_degenerate(verts, np.asarray(faces, dtype=np.int64))
    if len(faces) == 0:
        raise EmptyMesh("all extracted triangles were degenerate")
    return TriMesh(vertices=verts, triangles=faces)
