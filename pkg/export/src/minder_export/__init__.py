"""Offline converter from pretrained vision transformers to the portable ONNX
graph format the minder encoder consumes."""

from .errors import (
    ExportError,
    ParityFailure,
    RetrievalError,
    UnknownModel,
    UnsupportedArchitecture,
)
from .export import ExportManifest, export_module, export_registered, parity_check
from .registry import REGISTRY, RegistryEntry, lookup
from .vit import CLASS_TOKEN, POOLED, build_vit_graph, resample_pos_embed

__version__ = "0.1.0"

__all__ = [
    "CLASS_TOKEN",
    "POOLED",
    "REGISTRY",
    "ExportError",
    "ExportManifest",
    "ParityFailure",
    "RegistryEntry",
    "RetrievalError",
    "UnknownModel",
    "UnsupportedArchitecture",
    "build_vit_graph",
    "export_module",
    "export_registered",
    "lookup",
    "parity_check",
    "resample_pos_embed",
]
