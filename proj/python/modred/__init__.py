"""Python bindings for the modred C++ library."""

from ._modred import *  # noqa: F401,F403
from ._modred import __doc__  # noqa: F401

__version__ = "0.1.0"
