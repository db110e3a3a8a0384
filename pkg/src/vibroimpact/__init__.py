"""Event-driven simulation and grazing-bifurcation analysis of vibro-impact systems."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .model import ImpactEvent, State, SystemDefinition, apply_impact, field_at, invert_impact
from .integrator import (DEFAULT_OPTIONS, IntegratorOptions, Trajectory, inverse_stroboscopic_map, simulate,
                         stroboscopic_map)
from .fixtures import make_system
