"""Numerical detection of snap-back repellors, homoclinic orbits and their
bifurcations for noninvertible maps."""

from .errors import SnapbackError
from .maps import MapDefinition, make_builtin, make_family

__all__ = ["MapDefinition", "SnapbackError", "make_builtin", "make_family"]
__version__ = "0.1.0"
