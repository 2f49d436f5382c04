"""Symmetric L1 chamfer distance between point sets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..errors import InvalidInput


@dataclass
class MetricReport:
    cd1: float
    one_sided_recon_to_gt: float
    one_sided_gt_to_recon: float
    n_recon: int
    n_gt: int
    wall_clock_seconds: float = 0.0
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "cd1": self.cd1,
            "one_sided_recon_to_gt": self.one_sided_recon_to_gt,
            "one_sided_gt_to_recon": self.one_sided_gt_to_recon,
            "n_recon": self.n_recon,
            "n_gt": self.n_gt,
            "wall_clock_seconds": self.wall_clock_seconds,
            "config": self.config,
        }


def one_sided_l1(src, dst) -> float:
    """Mean L1 distance from each src point to its L1-nearest dst point."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if len(src) == 0 or len(dst) == 0:
        raise InvalidInput("point sets must be non-empty")
    tree = cKDTree(dst)
    d, _ = tree.query(src, k=1, p=1, workers=-1)
    return float(np.mean(d))


def cd1(recon_points, gt_points, config=None) -> MetricReport:
    """Average of the two one-sided mean L1 nearest-neighbor distances."""
    a = one_sided_l1(recon_points, gt_points)
    b = one_sided_l1(gt_points, recon_points)
    return MetricReport(cd1=0.5 * (a + b),
                        one_sided_recon_to_gt=a,
                        one_sided_gt_to_recon=b,
                        n_recon=len(recon_points), n_gt=len(gt_points),
                        config=dict(config or {}))
