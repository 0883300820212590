"""Backward Euler simulation of sandwiched SDEs driven by Holder noise.

Subpackages: ``model`` (drift families, assumptions, envelope bounds),
``noise`` (Gaussian driver sampling), ``solver`` (drift-implicit
stepping), ``analysis`` (strong-convergence studies), ``config`` and
``cli`` (JSON configs and the command line).
"""

__version__ = "0.1.0"

from . import analysis, config, model, noise, solver  # noqa: F401
