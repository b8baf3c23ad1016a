"""Rydberg-atom schedules for the maximum independent set problem on unit-disk graphs."""
from .errors import RydmisError
from .graphs import (UnitDiskGraph, build_unit_disk_graph, hardness_parameter, independent_set_census,
                     parse_toy_graph_id)

__version__ = "0.1.0"

__all__ = [
    "RydmisError",
    "UnitDiskGraph",
    "build_unit_disk_graph",
    "hardness_parameter",
    "independent_set_census",
    "parse_toy_graph_id",
    "__version__",
]
