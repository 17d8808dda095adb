"""Sandpile identities on Sierpinski gasket graphs and their scaling limits."""

from .constructions import ValueMap, assemble_identity, build_f, build_M, combine_iota, rotate_values
from .engine import (
    SandpileConfig,
    group_add,
    group_order,
    identity,
    is_recurrent,
    max_config,
    random_recurrent,
    stabilize,
)
from .gasket import GasketGraph, SinkSpec, build_gasket, cell_vertices, corner_multiplicity, rotation_map
from .integrals import ContinuationView, cell_integral, continuation_at_point, convergence_table, monte_carlo_integral
from .render import RenderSpec, render

__all__ = [
    "ContinuationView",
    "GasketGraph",
    "RenderSpec",
    "SandpileConfig",
    "SinkSpec",
    "ValueMap",
    "assemble_identity",
    "build_M",
    "build_f",
    "build_gasket",
    "cell_integral",
    "cell_vertices",
    "combine_iota",
    "continuation_at_point",
    "convergence_table",
    "corner_multiplicity",
    "group_add",
    "group_order",
    "identity",
    "is_recurrent",
    "max_config",
    "monte_carlo_integral",
    "random_recurrent",
    "render",
    "rotate_values",
    "rotation_map",
    "stabilize",
]
