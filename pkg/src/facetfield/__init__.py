"""facetfield: self-supervised point-cloud surface reconstruction.

Local geometry around every input point is represented by a plane, a wedge
(two half-planes sharing an edge), or a corner (three planar sectors sharing
an apex). Displacements onto the per-point surfaces are merged into a field
whose norm is an unsigned distance, the per-point parameters are optimized
directly against self-supervised losses, and surfaces are extracted by
projecting queries along the field.
"""

from . import geometry, meshing, model, training
from .core import NeighborList, PointCloud, build_index, knn, pca_normal
from .errors import (DegenerateDihedral, DegenerateNeighborhood,
                     DegenerateTrihedral, DivergenceError, EmptyMesh,
                     FacetFieldError, InvalidFrame, InvalidInput, ParseError,
                     ProjectionUnstableWarning)
from .geometry import (Dihedral, Displacement, Plane, Trihedral,
                       dihedral_displacement, displacement,
                       halfplane_displacement, kernel_gradient,
                       plane_displacement, trihedral_displacement)
from .meshing import (SurfaceSamples, TriMesh, UdfGrid, evaluate_grid,
                      extract_shell_mesh, project_samples)
from .model import (Hyper, MergeWeights, ModelState, ParamBank, PointParams,
                    geometric_displacement, init_params, merge_weights,
                    residual, select_all, select_geometry)
from .training import (Adam, LossReport, TrainConfig, cosine_lr, fit,
                       loss_cd, loss_local, loss_udf, sample_queries,
                       total_loss, udf_context)

__version__ = "0.1.0"
