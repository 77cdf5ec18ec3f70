"""Offline deep patch-feature exporter for the scanpath analysis engine."""

__version__ = "0.1.0"

from .cropping import crop_patch, patch_origin
from .exporter import ExportConfig, WeightsUnavailable, export_embeddings
