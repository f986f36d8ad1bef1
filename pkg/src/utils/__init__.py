"""
Utils module for stegmesh
=========================
"""

from .encoding import read_text_safely, save_text_safely
from .logger import KeyMaterialFilter, setup_logger
from .rng import SplitMix64, derive_stream

__all__ = [
    'read_text_safely', 'save_text_safely', 'KeyMaterialFilter', 'setup_logger', 'SplitMix64', 'derive_stream'
]
