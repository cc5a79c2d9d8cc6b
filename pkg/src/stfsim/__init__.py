"""Particle simulation of shear-thickening fluids.

An SPH fluid with a dynamic spring network whose stiffness grows with the
fractional derivative of each spring's relative velocity history.
"""
from ._backend import backend_name, set_threads
from .frackernel import FracWeights, HistoryBank, VelocityHistory, frac_deriv, gamma, make_weights, weight_p0
from .scenario_io import Scenario, ScenarioError, load_preset, load_scenario, parse_scenario, serialize
from .sphcore import FluidParams, Particles, rebuild_index
from .springnet import SpringParams, SpringSet
from .world import Container, NumericalAbort, RigidSphere, VibrationSource, World, make_world

__version__ = "0.1.0"
