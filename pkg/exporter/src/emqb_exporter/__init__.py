"""EMQB exporter: PyTorch checkpoints + calibration stats -> watermarkable bundles."""

from .exporter import (
    AGGREGATION,
    ExportError,
    ExportManifest,
    collect_activations,
    export,
    quantize_symmetric,
    write_emqb,
)

__version__ = "0.1.0"

__all__ = [
    "AGGREGATION",
    "ExportError",
    "ExportManifest",
    "collect_activations",
    "export",
    "quantize_symmetric",
    "write_emqb",
]
