"""Monte Carlo toolkit for the contact process with rapid stirring.

Modules:

* :mod:`cpstir.core` - seeded streams, samplers, lattice helpers, estimates
* :mod:`cpstir.exclusion` - two-particle exclusion difference and free comparison walk
* :mod:`cpstir.green` - the 3-d lattice Green function at the origin
* :mod:`cpstir.renewal` - two-type alternating renewal processes
* :mod:`cpstir.genealogy` - free and thinned branching genealogies under stirring
* :mod:`cpstir.events` - collision events in one window and the extinction test
* :mod:`cpstir.contact` - direct simulation, survival and critical-rate bisection
"""
from __future__ import annotations

from .core import DistributionSpec, EstimateReport, SeededStream, neighbors

__all__ = ["DistributionSpec", "EstimateReport", "SeededStream", "neighbors"]
__version__ = "0.1.0"
