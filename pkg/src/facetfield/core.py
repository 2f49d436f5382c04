"""Point-cloud container, exact k-nearest-neighbor queries, and PCA normals.

Points live in the normalized working space (a cube around the origin).
Neighbor queries are exact: results always agree with a linear scan, with
ties broken by the lower point index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateNeighborhood, InvalidInput

# Inputs are normalized into [-1, 1]^3; the slack absorbs query jitter.
COORD_BOUND = 1.5

Vec3 = np.ndarray  # shape (3,), float64


def as_vec3(v) -> Vec3:
    """Coerce to a finite float64 vector of shape (3,)."""
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (3,):
        raise InvalidInput(f"expected a 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput("non-finite coordinate")
    return a


@dataclass(frozen=True)
class NeighborList:
    """k nearest neighbors of a query point, sorted by (distance, index)."""

    indices: np.ndarray   # (k,) int
    distances: np.ndarray  # (k,) float, non-decreasing

    def __len__(self):
        return len(self.indices)


class PointCloud:
    """Immutable point set with an exact spatial index.

    Concurrent read-only queries are safe: the underlying arrays are frozen
    and the kd-tree is never mutated after construction.
    """

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise InvalidInput("points must be a non-empty (n, 3) array")
        if not np.all(np.isfinite(pts)):
            raise InvalidInput("non-finite coordinate in point cloud")
        if np.abs(pts).max() > COORD_BOUND:
            raise InvalidInput(
                f"point outside [-{COORD_BOUND}, {COORD_BOUND}]^3; normalize input first"
            )
        pts = pts.copy()
        pts.setflags(write=False)
        self._points = pts
        self._tree = cKDTree(pts)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def tree(self) -> cKDTree:
        return self._tree

    def __len__(self):
        return self._points.shape[0]

    def knn(self, q, k: int) -> NeighborList:
        """Exact k nearest neighbors of q, ties broken by lower index."""
        q = as_vec3(q)
        n = len(self)
        if not 1 <= k <= n:
            raise InvalidInput(f"k={k} out of range for cloud of {n} points")
        # Over-query so that any tie group straddling the k-th place is fully
        # present before the (distance, index) sort.
        kq = min(n, k + 4)
        while True:
            dist, idx = self._tree.query(q, k=kq)
            dist = np.atleast_1d(dist)
            idx = np.atleast_1d(idx)
            if kq >= n or dist[kq - 1] > dist[k - 1]:
                break
            kq = min(n, kq * 2)
        order = np.lexsort((idx, dist))[:k]
        sel = idx[order]
        # Recompute distances from coordinates so they match exactly.
        d = np.linalg.norm(self._points[sel] - q, axis=1)
        return NeighborList(indices=sel, distances=d)

    def knn_batch(self, queries, k: int):
        """(distances, indices) for many queries at once, both (m, k).

        Fast path for internal use: deterministic, but exact ties come back
        in kd-tree order rather than lowest-index order.
        """
        queries = np.asarray(queries, dtype=np.float64)
        n = len(self)
        if not 1 <= k <= n:
            raise InvalidInput(f"k={k} out of range for cloud of {n} points")
        dist, idx = self._tree.query(queries, k=k, workers=-1)
        if k == 1:
            dist = dist[:, None]
            idx = idx[:, None]
        return dist, idx


def build_index(points) -> PointCloud:
    """Build a point cloud with its exact k-NN index."""
    return PointCloud(points)


def knn(cloud: PointCloud, q, k: int) -> NeighborList:
    return cloud.knn(q, k)


def pca_normal(cloud: PointCloud, i: int, k: int) -> Vec3:
    """Unit normal of the k-point neighborhood around cloud point i.

    Smallest-eigenvalue direction of the neighborhood covariance; the sign
    is fixed so the largest-magnitude component is positive.
    """
    if k < 3:
        raise InvalidInput("pca_normal needs k >= 3")
    nb = cloud.knn(cloud.points[i], k)
    x = cloud.points[nb.indices]
    x = x - x.mean(axis=0)
    cov = x.T @ x / k
    evals, evecs = np.linalg.eigh(cov)
    if evals[-1] <= 1e-20:
        raise DegenerateNeighborhood(f"all {k} neighbors of point {i} coincide")
    normal = evecs[:, 0]
    normal = normal / np.linalg.norm(normal)
    j = int(np.argmax(np.abs(normal)))
    if normal[j] < 0:
        normal = -normal
    return normal
