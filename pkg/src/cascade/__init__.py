"""Coarse-to-fine as-rigid-as-possible mesh deformation toolkit.

Deform a high resolution triangle mesh interactively by decimating it
to a coarse proxy, solving an as-rigid-as-possible deformation there,
and re-attaching the fine detail through per-triangle local reference
frames, with an optional fine-scale refinement pass.
"""

from .errors import (
    CacheMismatch,
    CascadeError,
    DegenerateNeighborhood,
    DegenerateTriangle,
    Disconnected,
    DuplicateHandle,
    EdgeNotFound,
    EmptyCoarse,
    IncompatibleCoarse,
    IncompatibleConnectivity,
    IncompatibleSourcePair,
    InconsistentOrientation,
    IndexOutOfRange,
    InputError,
    InsufficientLandmarks,
    InvalidParams,
    NoHandles,
    NonManifoldEdge,
    NonManifoldVertex,
    NonTriangulatableFace,
    NumericalError,
    OpenMesh,
    ParseError,
    SingularSystem,
    SizeMismatch,
    SparseMapTooSmall,
    TopologyError,
    ZeroLengthRestEdge,
)
from .mesh import (
    Mesh,
    build_mesh,
    check_deformation_compatible,
    cotangent_weights,
    euler_characteristic,
    triangle_gradient,
    triangle_normal,
)
from .remesh import CoarseMesh, decimate, link_condition
from .correspond import build_correspondence
from .lrf import Correspondence, Frame, compute_frame, reconstruct
from .arap import ArapSystem, Constraints, arap_energy, arap_solve
from .refine import RefineParams
from .metrics import (
    MetricsReport,
    edge_error,
    mesh_volume,
    vertex_distance,
)
from .pipeline import (
    PipelineConfig,
    align_isometric,
    bench,
    pose_transfer,
    run_pipeline,
)
from .fileio import read_obj, write_obj

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
