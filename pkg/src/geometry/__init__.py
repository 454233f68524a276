"""lie group geometry: cartan data, root volumes, boundary circle, wavefront probes"""

from .lie_core import (
    GroupSpec,
    GroupElement,
    CartanTriple,
    IwasawaTriple,
    cartan_decompose,
    cartan_decompose_batch,
    iwasawa_decompose,
    canonical_m_reduce,
    chamber_margin,
    distance,
    distance_to_origin,
    exp_a,
    inner_product,
    m_group,
    random_element,
    random_k,
)
from .root_volume import (
    RootSystemData,
    ChamberCone,
    AsymptoticFit,
    root_system,
    density_xi,
    ball_volume,
    cone_volume,
    asymptotic_fit,
    volume_ratio,
)
from .boundary import (
    Arc,
    BoundaryPoint,
    ContractionTrajectory,
    boundary_action,
    contraction_probe,
    invariant_measure,
    point_distances,
    poisson_density,
    visual_angle,
)
from .wavefront import (
    WavefrontReport,
    RigidityReport,
    WallWitness,
    wavefront_check,
    search_largest_radius,
    wall_failure_probe,
    angular_rigidity,
)

__all__ = [
    "GroupSpec",
    "GroupElement",
    "CartanTriple",
    "IwasawaTriple",
    "cartan_decompose",
    "cartan_decompose_batch",
    "iwasawa_decompose",
    "canonical_m_reduce",
    "chamber_margin",
    "distance",
    "distance_to_origin",
    "exp_a",
    "inner_product",
    "m_group",
    "random_element",
    "random_k",
    "RootSystemData",
    "ChamberCone",
    "AsymptoticFit",
    "root_system",
    "density_xi",
    "ball_volume",
    "cone_volume",
    "asymptotic_fit",
    "volume_ratio",
    "Arc",
    "BoundaryPoint",
    "ContractionTrajectory",
    "boundary_action",
    "contraction_probe",
    "invariant_measure",
    "poisson_density",
    "point_distances",
    "visual_angle",
    "WavefrontReport",
    "RigidityReport",
    "WallWitness",
    "wavefront_check",
    "search_largest_radius",
    "wall_failure_probe",
    "angular_rigidity",
]
