"""Far field operators and eigenvalue signatures for layered ball scatterers.

The package synthesizes far field data for spherically symmetric
scatterers, assembles discretized far field operators on sphere
quadratures, and extracts three spectral target signatures: far field
operator eigenvalues, transmission eigenvalues, and generalized
Stekloff eigenvalues. Analytic references for the ball geometry live
in :mod:`scatsig.oracles`.
"""

from .forward import (
    DipoleSource,
    ImpedanceBall,
    MediumSpec,
    ModalCoefficients,
    PlaneWave,
    ResonantParameterError,
    TruncationError,
    electric_far_field,
    impedance_coefficients,
    impedance_far_field,
    magnetic_far_field,
    mie_coefficients,
    scattered_field,
    total_field,
    truncation_degree,
)
from .ffop import (
    FarFieldMatrix,
    SphereQuadrature,
    TangentVectorField,
    add_noise,
    adjoint,
    assemble,
    build_quadrature,
    inner_product,
    load_ffop,
    save_ffop,
)
from .oracles import (
    BracketError,
    ModeFamily,
    NeumannResonanceError,
    StekloffMode,
    first_tev,
    index_bound_from_tev,
    s_modal_multiplier,
    shift_estimate,
    stekloff_eigs_ball,
    tev_determinant,
    tev_min_singular,
    tev_roots,
)
from .scan import (
    ScanResult,
    TikhonovConfig,
    ZSampling,
    find_peaks,
    stekloff_scan,
    tev_scan,
    tikhonov_solve,
)
from .spectra import (
    EigenSet,
    PhaseTrack,
    circle_residual,
    eig,
    energy_identity_residual,
    lidski_positivity,
    phase_track,
)
from .sphfun import RecurrenceOverflowError

__version__ = "0.1.0"

__all__ = [
    "BracketError",
    "DipoleSource",
    "EigenSet",
    "FarFieldMatrix",
    "ImpedanceBall",
    "MediumSpec",
    "ModalCoefficients",
    "ModeFamily",
    "NeumannResonanceError",
    "PhaseTrack",
    "PlaneWave",
    "RecurrenceOverflowError",
    "ResonantParameterError",
    "ScanResult",
    "SphereQuadrature",
    "StekloffMode",
    "TangentVectorField",
    "TikhonovConfig",
    "TruncationError",
    "ZSampling",
    "add_noise",
    "adjoint",
    "assemble",
    "build_quadrature",
    "circle_residual",
    "eig",
    "electric_far_field",
    "energy_identity_residual",
    "find_peaks",
    "first_tev",
    "impedance_coefficients",
    "impedance_far_field",
    "index_bound_from_tev",
    "inner_product",
    "lidski_positivity",
    "load_ffop",
    "magnetic_far_field",
    "mie_coefficients",
    "phase_track",
    "s_modal_multiplier",
    "save_ffop",
    "scattered_field",
    "shift_estimate",
    "stekloff_eigs_ball",
    "stekloff_scan",
    "tev_determinant",
    "tev_min_singular",
    "tev_roots",
    "tev_scan",
    "tikhonov_solve",
    "total_field",
    "truncation_degree",
]
