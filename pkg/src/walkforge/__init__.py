"""Uneven-partition adding walks and parallel collision search for group action inverse problems."""
from __future__ import annotations

import warnings

__version__ = "0.1.0"

# numba probes TBB when the parallel batch kernel first runs; an old TBB only
# means another threading layer is used, so the warning is noise.
warnings.filterwarnings("ignore", message="The TBB threading layer requires TBB", module="numba")

from .collision_search import CollisionSearchSolver, SolveReport, solve  # noqa: E402
from .group_core import GroupSpec, make_group  # noqa: E402
from .walk_engine import WalkParams, build_partition_plan  # noqa: E402

__all__ = [
    "CollisionSearchSolver",
    "GroupSpec",
    "SolveReport",
    "WalkParams",
    "build_partition_plan",
    "make_group",
    "solve",
]
