"""Per-flow delay at vehicle-actuated intersections under exhaustive control.

The intersection is a polling system whose queues (flows) are served in
groups.  The package provides light- and heavy-traffic limits of the mean
delay, an interpolation between them, a simulator and an exact Markov-chain
oracle for small exponential instances.
"""
from .analytic import (DelayLaw, approx_mean_delay, ht_delay_law, ht_scaled_mean,
                       interpolation_constants, lt_mean_general, lt_mean_poisson,
                       select_order)
from .errors import (ConfigError, InvalidInputError, PollDelayError,
                     UnstableLoadError, UnsupportedTopologyError)
from .model import (DistributionModel, FlowSpec, GroupSpec, IntersectionSpec,
                    check_stability, derive_quantities, normalize_loads, scale)

__version__ = "0.1.0"
