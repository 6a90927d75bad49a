"""Digital twin of a two-crystal shearing interferometer for spatial-coherence measurements."""

from .geometry import InstrumentConfig, min_collimation_radius
from .quantum import QuantumSourceSpec, coherence_length_delta, g_spatial
from .thermal import ThermalSourceSpec, mu_circ, temporal_coherence

__version__ = "0.1.0"

__all__ = [
    "InstrumentConfig",
    "QuantumSourceSpec",
    "ThermalSourceSpec",
    "coherence_length_delta",
    "g_spatial",
    "min_collimation_radius",
    "mu_circ",
    "temporal_coherence",
    "__version__",
]
