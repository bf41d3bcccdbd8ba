"""Standalone producer of the embedding interchange format."""

from .encoders import DEFAULT_ENCODER, EncoderError, get_encoder
from .export import ExportJob, export_images, export_text
from .writer import ExportError

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_ENCODER",
    "EncoderError",
    "ExportError",
    "ExportJob",
    "export_images",
    "export_text",
    "get_encoder",
    "__version__",
]
