"""Plants: exact LTI systems and the point-mass LIP walker."""
from .lti import LtiSystem, lti_step, random_stable_system
from .walker import (LipWalker, LipWalkerState, Measurement, PerturbationSchedule, WalkerParams,
                     analytic_lip, clamp_cop, impact_swap, integrate, lip_dynamics, observe,
                     orbit_state, orbital_energy, randomize_model, stance_frame_output)

__all__ = [
    "LtiSystem", "lti_step", "random_stable_system", "LipWalker", "LipWalkerState",
    "Measurement", "PerturbationSchedule", "WalkerParams", "analytic_lip", "clamp_cop",
    "impact_swap", "integrate", "lip_dynamics", "observe", "orbit_state", "orbital_energy",
    "randomize_model", "stance_frame_output",
]
