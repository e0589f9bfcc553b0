"""bevx: multi-camera to bird's-eye-view feature transforms.

Three equivalent transform routes over shared geometry:

  * reference.splat_reference - per-sample scatter-add (the semantic oracle)
  * reference.vt_ftm          - one sparse transport matrix
  * transform.vt_matrixvt     - ring/ray factorization, no lifted tensor

plus prime (height-axis compression) and bench (timing + equivalence CLI).
"""
from .errors import (
    BevxError,
    ConfigError,
    FileFormatError,
    GeometryError,
    ShapeError,
    UsageError,
    ValidationError,
)
from .geometry import (
    BevGrid,
    Camera,
    CameraRig,
    DepthBins,
    FrustumGeometry,
    Scene,
    generate_frustum,
    load_scene,
    make_bev_grid,
    make_depth_bins,
    scene_digest,
    scene_to_dict,
    synthetic_scene_dict,
)
from .prime import (
    AblationReport,
    PrimeAttention,
    RefineMap,
    full_vs_prime_ablation,
    prime_depth,
    prime_feature,
)
from .reference import build_ftm, lift, lift_full, splat_full, splat_reference, vt_ftm
from .tensor_core import (
    DTYPE,
    SparseBinaryMatrix,
    as_feature,
    hadamard,
    matmul,
    reduce_sum,
    scatter_add,
    spmm,
)
from .transform import (
    CostReport,
    RingRayPair,
    build_ring_ray,
    cost_model,
    effective_ftm,
    load_ring_ray,
    save_ring_ray,
    vt_composed,
    vt_matrixvt,
)

__version__ = "0.1.0"

__all__ = [
    "BevxError",
    "ConfigError",
    "FileFormatError",
    "GeometryError",
    "ShapeError",
    "UsageError",
    "ValidationError",
    "BevGrid",
    "Camera",
    "CameraRig",
    "DepthBins",
    "FrustumGeometry",
    "Scene",
    "generate_frustum",
    "load_scene",
    "make_bev_grid",
    "make_depth_bins",
    "scene_digest",
    "scene_to_dict",
    "synthetic_scene_dict",
    "AblationReport",
    "PrimeAttention",
    "RefineMap",
    "full_vs_prime_ablation",
    "prime_depth",
    "prime_feature",
    "build_ftm",
    "lift",
    "lift_full",
    "splat_full",
    "splat_reference",
    "vt_ftm",
    "DTYPE",
    "SparseBinaryMatrix",
    "as_feature",
    "hadamard",
    "matmul",
    "reduce_sum",
    "scatter_add",
    "spmm",
    "CostReport",
    "RingRayPair",
    "build_ring_ray",
    "cost_model",
    "effective_ftm",
    "load_ring_ray",
    "save_ring_ray",
    "vt_composed",
    "vt_matrixvt",
    "__version__",
]
