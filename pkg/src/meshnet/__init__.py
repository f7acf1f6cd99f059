"""Gauge-equivariant message passing and attention on triangle meshes."""

__version__ = "0.1.0"

from .mesh import (
    FaceGeometry,
    Mesh,
    face_geometry,
    generate_grid_patch,
    generate_icosphere,
    generate_mesh,
    load_mesh,
    save_mesh,
    vertex_normals,
)
from .tangent import (
    FrameField,
    TransportData,
    build_frames,
    log_map,
    regauge,
    tangent_projector,
    theta_angle,
    transport_angle,
    transport_data,
    wrap_angle,
)
from .representations import (
    EquivariantKernel,
    FeatureType,
    assemble_kernel,
    constraint_residual,
    kernel_basis,
    rep_block_diag,
    rho_matrix,
)
from .features import (
    GeometricFeatureField,
    RelTanConfig,
    compute_features,
    get_features,
    reltan_features,
    reltan_scaling_statistics,
    xyz_features,
)
from .autodiff import Adam, Tensor, nll_loss, parameter
from .layers import (
    EdgeGeometry,
    EmanAttentionLayer,
    GaugeNonlinearity,
    GemConvLayer,
)
from .model import Model, ModelSpec, build_model
from .transforms import (
    AmbientTransform,
    Permutation,
    apply_ambient,
    apply_permutation,
    pushforward_features,
    pushforward_frames,
    random_transform_suite,
)
from .config import RunConfig, config_hash, default_config, load_config, parse_config
from .harness import equivariance_gap, evaluate, time_layers, train
