"""Throughput optimization for variable-rate incremental-redundancy HARQ over
a three-node decode-and-forward relay channel, with exact Monte Carlo
evaluation, an independent protocol simulator, and capacity baselines."""

__version__ = "0.1.0"

from .channel import (LinkMoments, RelayTopology, SnrSampler, TopologyMoments,
                      capacity_cdf, db_to_linear, derive_topology,
                      linear_to_db, link_moments, mutual_info)
from .policy import (RatePolicy, from_fixed_rate, random_policy, validate)

__all__ = [
    "__version__",
    "LinkMoments",
    "RelayTopology",
    "SnrSampler",
    "TopologyMoments",
    "capacity_cdf",
    "db_to_linear",
    "derive_topology",
    "linear_to_db",
    "link_moments",
    "mutual_info",
    "RatePolicy",
    "from_fixed_rate",
    "random_policy",
    "validate",
]
