"""Semiclassical resonance lattices generated by a periodic orbit.

The pipeline runs orbit -> monodromy -> hypotheses -> action model -> lattice::

    from reslat import build_system, default_guess, find_periodic_orbit
    system = build_system("model", mu=[1])
    orbit = find_periodic_orbit(system, default_guess(system, 0.0), 0.0)
"""

from .action import ActionModel, action_integral, build_action_model, eval_action, subprincipal_integral
from .dynamics import (HamiltonianSystem, PhasePoint, Trajectory, build_system, check_derivatives,
                       default_guess, integrate)
from .errors import *  # noqa: F401,F403
from .floquet import (BlockNormalForm, FloquetExponent, HypothesisReport, MonodromyData,
                      block_normal_form, check_hypotheses, classify, conley_zehnder, monodromy,
                      nonresonance_scan, stable_unstable_split)
from .orbits import OrbitFamily, PeriodicOrbit, continue_family, find_periodic_orbit, poincare_return
from .quantize import (QuantizationInput, Resonance, ResonanceLattice, bs_residual, compare,
                       enumerate_lattice, model_oracle, solve_resonance)

__version__ = "0.1.0"
