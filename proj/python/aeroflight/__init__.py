"""Aerodynamics-aware flight control of jet-powered humanoids."""

from ._aeroflight import *  # noqa: F401,F403
from ._aeroflight import __doc__  # noqa: F401
