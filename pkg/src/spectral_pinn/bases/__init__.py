from .interval import SineBasis, sine_eval, sine_reconstruct, sine_transform
from .sphere import (
    SphereBasis,
    assoc_legendre,
    real_sph_harm,
    sphere_laplacian_check,
)
from .torus import (
    EigenBasis,
    TorusBasis,
    TorusGeometry,
    TorusMesh,
    assemble_fem,
    build_torus_mesh,
    solve_eigenbasis,
    torus_basis_eval,
)

__all__ = [
    "SineBasis", "sine_eval", "sine_transform", "sine_reconstruct",
    "SphereBasis", "assoc_legendre", "real_sph_harm", "sphere_laplacian_check",
    "TorusGeometry", "TorusMesh", "EigenBasis", "TorusBasis",
    "build_torus_mesh", "assemble_fem", "solve_eigenbasis", "torus_basis_eval",
]
