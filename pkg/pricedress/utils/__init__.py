"""
Utility modules for pricedress

Contains CSV input/output, the run output handler with its manifest, and
console/logging setup.
"""

from .output_handler import OutputHandler, RunManifest
from .console import setup_logging

__all__ = ["OutputHandler", "RunManifest", "setup_logging"]
