"""Analytic SVD of matrices analytic on the unit circle.

Tracks singular-value branches of a Laurent-polynomial matrix ``A(z)``,
groups them into multiplex orbits, and builds three factorizations
``A = U M V^P``: the Puiseux SVD, the complex diagonal decomposition and
the holomorphic block pseudo-circulant factorization.
"""

from .circulant import (
    CirculantBlock,
    DftFrame,
    build_dft_frame,
    cyclic_permutation,
    dft_frame_matrix,
    fourier_matrix,
    lambdas_from_phi,
    phi_from_lambdas,
)
from .decompositions import (
    Factorization,
    analyze,
    build_pseudo_circulant,
    build_puiseux_svd,
    decompose,
    demultiplex_signs,
)
from .errors import (
    AmbiguousAssociationError,
    DegeneracyError,
    FactorizationError,
    InfeasibleStructureError,
    MultiplexError,
    NonGenericStartError,
    ParseError,
    PcsvdError,
    ShapeError,
    TailNotDecayedError,
)
from .laurent import (
    FrequencyGrid,
    GridSamples,
    PuiseuxMatrix,
    coefficients_from_samples,
    eval_grid,
    eval_points,
    frobenius_residual,
    load_matrix,
    multiply,
    para_hermitian,
    save_matrix,
)
from .multiplex import (
    Orbit,
    OrbitStructure,
    analyze_branches,
    detect_orbits,
    detect_permutation,
    orbit_json,
    orbit_report,
)
from .synthesis import Fixture, generate_fixture, synthesize
from .tracking import BranchSet, align_vectors, pointwise_factor, track_branches, track_matrix
from .verification import (
    PROFILES,
    VerificationReport,
    parse_profile,
    verify_circulant_block,
    verify_factorization,
    verify_orbit_relations,
)

__version__ = "0.1.0"
