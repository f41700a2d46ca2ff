"""Synthetic insurance-fraud data with a claim-party social network."""

__version__ = "0.1.0"

from .config import EngineConfig  # noqa: E402
from .engine import DatasetBundle, generate, replicate  # noqa: E402

__all__ = ["EngineConfig", "DatasetBundle", "generate", "replicate", "__version__"]
