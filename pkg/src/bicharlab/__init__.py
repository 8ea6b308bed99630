"""Desk-scale laboratory for broken bicharacteristic flow near a boundary.

The package traces generalized rays (transversal reflection, tangency,
boundary gliding) in collar coordinates, classifies boundary contact
strata, builds exact Dirichlet quasimodes of the Laplace and Stokes
systems on the unit disk, quantizes phase-space observables, and checks
propagation statements for the induced semiclassical mass distributions
at finite frequency.
"""

__version__ = "0.1.0"

from . import billiard, bumps, charts, classify, flow, modes, parametrix  # noqa: E402,F401
from . import config, io, polar, quantize, verify  # noqa: E402,F401
