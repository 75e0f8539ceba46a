"""Lagrangian toolkit for passive vector fields advected by a rough rotation with transport noise."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .fields import HolderRotationField, InitialField, ZeroField, holder_velocity, preset_initial_field
from .flow import (
    BrownianPath,
    FlowSample,
    flow_jacobian,
    integrate_flow,
    integrate_inverse_flow,
    inverse_jacobian_evolve,
    sample_brownian,
    stack_paths,
    zero_path,
)
from .exact import blowup_envelope, exact_B, exact_B_cartesian
from .transport import FieldSample, annulus_grid, pullback_at, pushforward, reconstruct_grid
from .diagnostics import evolve_line, fit_blowup_exponent, stretch_supremum, weak_form_residual
from .montecarlo import EnsembleSpec, run_ensemble, split_seed, suppression_ratio
from .config import Scenario, parse_scenario
