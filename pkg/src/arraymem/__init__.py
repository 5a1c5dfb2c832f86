"""Retrieval-efficiency optimization for free-space atomic arrays.

Pipeline: build a geometry, assemble the photon-exchange matrix, sample
the detection mode at the atoms, eigendecompose, assemble the Hermitian
efficiency matrix, and read off the top eigenpair.
"""

from .geometry import (
    Geometry,
    apply_position_disorder,
    build_square_array,
    remove_holes,
)
from .greens import (
    ISOTROPIC,
    TWO_LEVEL,
    InteractionMatrix,
    greens_tensor,
    interaction_matrix,
    load_matrix,
    save_matrix,
)
from .modes import (
    DetectionMode,
    ModeSamples,
    detection_field,
    mode_flux_norm,
    mode_norm,
    sample_mode,
    validate_projection,
)
from .spectral import SpectralDecomposition, eigendecompose
from .retrieval import (
    EfficiencyMatrix,
    RetrievalSolution,
    efficiency_of_spin_wave,
    k_matrix,
    max_efficiency,
)
from .dynamics import (
    AmplitudeTrajectory,
    ControlSchedule,
    eta_finite_time,
    evolve,
)

__version__ = "0.1.0"

__all__ = [
    "Geometry",
    "build_square_array",
    "remove_holes",
    "apply_position_disorder",
    "InteractionMatrix",
    "greens_tensor",
    "interaction_matrix",
    "save_matrix",
    "load_matrix",
    "TWO_LEVEL",
    "ISOTROPIC",
    "DetectionMode",
    "ModeSamples",
    "detection_field",
    "mode_norm",
    "mode_flux_norm",
    "sample_mode",
    "validate_projection",
    "SpectralDecomposition",
    "eigendecompose",
    "EfficiencyMatrix",
    "RetrievalSolution",
    "k_matrix",
    "max_efficiency",
    "efficiency_of_spin_wave",
    "ControlSchedule",
    "AmplitudeTrajectory",
    "evolve",
    "eta_finite_time",
    "__version__",
]
