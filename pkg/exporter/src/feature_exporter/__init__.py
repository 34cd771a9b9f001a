"""Dump CNN activation grids to FTM1 files for the matching engine."""

from .export import ExportConfig, export_features
from .ftm import write_ftm
from .vgg import DEFAULT_LAYERS, WeightsUnavailableError, load_backbone, parse_layers

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_LAYERS",
    "ExportConfig",
    "WeightsUnavailableError",
    "export_features",
    "load_backbone",
    "parse_layers",
    "write_ftm",
    "__version__",
]
