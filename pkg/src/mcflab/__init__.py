"""Finite-difference laboratory for graphical mean curvature flow and its uniqueness theory."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
