"""Delayed two-mass oscillator: fractional-order loop shaping vs. 2DOF H-infinity control.

Submodules
----------
lti          transfer functions, state space, margins, H-infinity norms
reduction    Lyapunov solver and balanced truncation
plant        two-mass model and input nonlinearities
approx       Pade delays, Oustaloup filters, partial compensator
controllers  controller construction, feedforward, sensitivity
signals      reference, disturbance, jitter and metrics
sim          closed-loop simulation (compiled kernel with Python fallback)
cli          command-line entry point
"""

from .lti import RationalTF, StateSpaceModel, hinf_norm, stability_margins
from .plant import PlantParams, build_plant, plant_tf
from .sim import KERNEL_IMPL, Scenario, simulate

__version__ = "0.1.0"

__all__ = [
    "RationalTF", "StateSpaceModel", "hinf_norm", "stability_margins", "PlantParams",
    "build_plant", "plant_tf", "Scenario", "simulate", "KERNEL_IMPL",
]
