"""Simulation and verification laboratory for Brownian last-passage percolation."""

from .env import (BrownianField, GridSpec, RngPolicy, SampledPath,
                  sample_brownian, sample_field)
from .errors import (BlppError, ConfigurationError, InternalConsistencyError,
                     TruncationError)
from .lpp import (GeodesicReport, JumpSequence, LatticePoint, finite_geodesics,
                  geodesic_count_bound, last_passage)
from .queues import (IdentityReport, PathBundle, TruncationPolicy,
                     busemann_chain_step, d_iterated, d_map, exchange_identity_check,
                     intertwining_check, multiline_step, q_map, r_map, script_d)
from .stats import StatReport, ks_distance, ks_two_sample, parallel_map

__version__ = "0.1.0"

__all__ = [
    "BlppError", "BrownianField", "ConfigurationError", "GeodesicReport",
    "GridSpec", "IdentityReport", "InternalConsistencyError", "JumpSequence",
    "LatticePoint", "PathBundle", "RngPolicy", "SampledPath", "StatReport",
    "TruncationError", "TruncationPolicy", "busemann_chain_step", "d_iterated",
    "d_map", "exchange_identity_check", "finite_geodesics", "geodesic_count_bound",
    "intertwining_check", "ks_distance", "ks_two_sample", "last_passage",
    "multiline_step", "parallel_map", "q_map", "r_map", "sample_brownian",
    "sample_field", "script_d",
]
