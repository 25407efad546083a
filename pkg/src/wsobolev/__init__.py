"""Weighted Sobolev machinery for push-forward measures on model singular domains."""
from .exceptions import *  # noqa: F401,F403
from .geometry import DomainSpec, GridDomain, build_grid_domain, sphere_slice

__version__ = "0.1.0"
