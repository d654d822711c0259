"""Low-volume sections of circle bundles over triangulated surfaces."""

from .bundle import (
    Connection,
    euler_number,
    levi_civita_connection,
    make_connection,
    trivial_connection,
    wrap,
)
from .energy import (
    VOLUME,
    energy_gradient,
    mass_ratio_profile,
    smoothed_twisting,
    stretched,
    stretched_volume,
    twisting,
    volume,
)
from .mesh import SurfaceMesh, load_mesh, make_disk, make_flat_torus, make_icosphere, read_mesh
from .section import DiscreteSection, SingularityRecord, face_index, singular_faces, total_index
from .solver import (
    SolverParams,
    extract_hcone,
    initialize,
    minimize_inner,
    outer_search,
    regularity_check,
    topology_report,
)

__version__ = "0.1.0"
