"""
Src module for stegmesh
=======================

Covert steg-link routing between MANET cluster heads, simulated
deterministically. Entry point: ``run_cli.py`` / ``src.cli_main``.
"""

from . import core
from . import utils
from .version import VERSION

__all__ = ['core', 'utils', 'VERSION']
