"""opbw: Monte Carlo toolkit for directed random walks on the backbone of
supercritical oriented-percolation clusters."""

from .config import CapacityLaw, ConfigError, SimConfig, default_offsets, two_neighbor_offsets
from .env import (
    Environment,
    QueryError,
    ResourceError,
    SpaceTimePoint,
    dump_environment,
    generate_environment,
    load_environment,
    neighborhood,
    omega,
    permutation,
    point,
)
from .perc import (
    BackboneField,
    ContactState,
    compute_backbone,
    contact_step,
    estimate_pc,
    height_tail,
    reachable,
    survival_time,
)

__version__ = "0.1.0"
