"""Hebbian/anti-Hebbian similarity-matching networks with a CIFAR-10 pipeline."""

from ._hahn import *  # noqa: F401,F403
from ._hahn import __doc__  # noqa: F401
