"""curvcodec: a curvature + density codec for simply-connected meshes.

Encode a triangle mesh into a two-channel tensor (mean curvature
half-density and log vertex density) on a canonical domain, and
reconstruct meshes from tensors by density-driven CVT remeshing, a
regularized Dirac eigenproblem and one-shot area calibration.
"""

from . import areacal, cli, confmap, cvtmesh, errors, meshcore, quatmath, shapecodec, shapes, spinrec
from .confmap import (
    MobiusTransform,
    Parameterization,
    disk_align,
    disk_parameterize,
    disk_to_square,
    mobius_center,
    mobius_from_3_points,
    sphere_align_landmarks,
    sphere_parameterize,
    square_to_disk,
    stereographic,
    stereographic_inverse,
)
from .meshcore import (
    TriMesh,
    chamfer,
    load_obj,
    mass_matrix,
    relative_willmore,
    save_obj,
    willmore,
)
from .shapecodec import (
    CurvatureTensor,
    DiskDomain,
    SphericalDomain,
    build_sphere_domain,
    decode_sample,
    encode,
    extract_density,
    lerp,
    read_cbr,
    scale_density,
    write_cbr,
)
from .cvtmesh import (
    VoronoiDiagram,
    delaunay_dual,
    lloyd_relax,
    sample_points,
    voronoi_disk_constrained,
    voronoi_sphere,
    weighted_centroid,
)
from .spinrec import (
    ReconstructionReport,
    assemble_dirac,
    assemble_regularizer,
    assemble_rho,
    integrate_positions,
    reconstruct,
    solve_spin,
    transform_edges,
)
from .areacal import assemble_area_energy, calibrate, closing_residual, quat_gradient

__version__ = "0.1.0"
