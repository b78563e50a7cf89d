"""PDMR simulator and inversion toolkit (Python bindings)."""

from ._pdmr import *  # noqa: F401,F403
from ._pdmr import __doc__  # noqa: F401

__version__ = "0.1.0"
