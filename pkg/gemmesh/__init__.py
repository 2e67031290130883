"""Top-level package for gemmesh."""

from importlib import metadata

__version__ = metadata.version("gemmesh")
