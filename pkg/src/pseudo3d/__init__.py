"""Pseudo-3D transform of 2D images for joint 2D/3D self-supervised pipelines."""

from .errors import (
    BoundsError,
    ConfigurationError,
    DataError,
    DegenerateInputError,
    DimensionError,
    P3DError,
    TrainingError,
)
from .im2col import ConvSpec, col2im, conv2d_direct, conv2d_gemm, im2col
from .p3d import P3DConfig, consistency_residual, from_pseudo3d, pseudo3d_for_model, to_pseudo3d
from .tensor import crop, matmul, resize_bilinear, resize_trilinear

__version__ = "0.1.0"

__all__ = [
    "BoundsError",
    "ConfigurationError",
    "ConvSpec",
    "DataError",
    "DegenerateInputError",
    "DimensionError",
    "P3DConfig",
    "P3DError",
    "TrainingError",
    "col2im",
    "consistency_residual",
    "conv2d_direct",
    "conv2d_gemm",
    "crop",
    "from_pseudo3d",
    "im2col",
    "matmul",
    "pseudo3d_for_model",
    "resize_bilinear",
    "resize_trilinear",
    "to_pseudo3d",
]
