"""RL-scheduled external memory for streaming question answering."""

__version__ = "0.1.0"

from . import backend

__all__ = ["backend", "__version__"]
