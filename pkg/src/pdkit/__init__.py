"""Plausible-deniability schemes, a flash/block device simulator and a game harness."""
from .core import ChallengePair, Level, Op, Pattern, Request
from .kernels import BACKEND
from .schemes import make_scheme

__version__ = "0.1.0"

__all__ = ["BACKEND", "ChallengePair", "Level", "Op", "Pattern", "Request", "make_scheme", "__version__"]
