"""Entanglement generation and purification of two atoms in a lossy cavity by no-photon detection.

Modules
-------
states    Hilbert-space signatures, operators, pure and mixed states.
models    Effective, interaction-picture and full three-level Hamiltonians; Lindblad generator.
dynamics  Schrodinger and master-equation integration, steady states, closed-form states.
protocol  Post-selected purification rounds, Bell analysis, localization and detector models.
cli       Command-line experiments writing reproducible CSV tables.
"""
__version__ = "0.1.0"

from .dynamics import (  # noqa: E402
    IntegratorConfig,
    analytic_steady_state,
    closed_form_evolved_state,
    evolve_master,
    evolve_pure,
    find_steady_state,
)
from .models import EffectiveParams, FullModelParams, build_interaction_hamiltonian, check_regimes  # noqa: E402
from .protocol import DetectorModel, ProtocolParams, bell_surface, chsh_max, localization_sweep, purify  # noqa: E402
from .states import DensityState, Operator, PureState, SpaceSignature  # noqa: E402

__all__ = [
    "DensityState", "DetectorModel", "EffectiveParams", "FullModelParams", "IntegratorConfig",
    "Operator", "ProtocolParams", "PureState", "SpaceSignature", "analytic_steady_state",
    "bell_surface", "build_interaction_hamiltonian", "check_regimes", "chsh_max",
    "closed_form_evolved_state", "evolve_master", "evolve_pure", "find_steady_state",
    "localization_sweep", "purify",
]
