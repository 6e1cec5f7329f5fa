"""CAM bundle exporter: saliency maps, preprocessed tensors, ONNX graphs."""

from .cams import CAM_METHODS, compute_cam
from .errors import (
    CamFailure,
    ExporterError,
    ExportUnsupported,
    UnknownCamMethod,
    UnknownModel,
)
from .export import ExportSpec, export_bundle, verify_bundle
from .formats import read_image, read_map, write_image, write_map
from .onnx_graph import export_onnx
from .preprocess import IMAGENET_MEAN, IMAGENET_STD, preprocess_image
from .registry import ModelEntry, get_model_entry, known_models, register

__version__ = "0.1.0"

__all__ = [
    "CAM_METHODS",
    "CamFailure",
    "ExportSpec",
    "ExportUnsupported",
    "ExporterError",
    "IMAGENET_MEAN",
    "IMAGENET_STD",
    "ModelEntry",
    "UnknownCamMethod",
    "UnknownModel",
    "compute_cam",
    "export_bundle",
    "export_onnx",
    "get_model_entry",
    "known_models",
    "preprocess_image",
    "read_image",
    "read_map",
    "register",
    "verify_bundle",
    "write_image",
    "write_map",
]
