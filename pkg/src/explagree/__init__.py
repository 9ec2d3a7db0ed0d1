"""Agreement analysis for post-hoc explanations of a toy Vision Transformer."""
from ._kernels import BACKEND as KERNEL_BACKEND
from .agreement import AgreementMatrix, aggregate, cr, iou, pairwise_matrices
from .maps import AttributionMap, BinaryMask
from .maskpipe import BinarizeConfig, binarize
from .vit import ToyViT, ViTConfig, ViTParams

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND", "AgreementMatrix", "aggregate", "cr", "iou", "pairwise_matrices",
    "AttributionMap", "BinaryMask", "BinarizeConfig", "binarize", "ToyViT", "ViTConfig", "ViTParams",
]
