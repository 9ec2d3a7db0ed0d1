"""The six explanation methods, plus an exact Shapley reference."""
from .attention import (attention_rollout, beyond_attention, beyond_attention_relevance,
                        rollout_matrices, rollout_product, rollout_relevance)
from .gradients import gradient_shap, integrated_gradients
from .lime import lime_attribution, lime_weights, weighted_ridge
from .segments import FILL_VALUE, SegmentGrid, mask_images, segment_grid
from .shap import exact_shapley, kernel_shap, kernel_shap_game, shapley_kernel_weight

METHODS = (
    "lime",
    "kernel_shap",
    "gradient_shap",
    "integrated_gradients",
    "attention_rollout",
    "beyond_attention",
)

DISPLAY_NAMES = {
    "lime": "LIME",
    "kernel_shap": "KernelSHAP",
    "gradient_shap": "GradientSHAP",
    "integrated_gradients": "IG",
    "attention_rollout": "AttentionRollout",
    "beyond_attention": "BeyondAttention",
}

__all__ = [
    "METHODS", "DISPLAY_NAMES", "FILL_VALUE", "SegmentGrid", "segment_grid", "mask_images",
    "integrated_gradients", "gradient_shap", "lime_attribution", "lime_weights", "weighted_ridge",
    "kernel_shap", "kernel_shap_game", "exact_shapley", "shapley_kernel_weight",
    "attention_rollout", "beyond_attention", "rollout_relevance", "rollout_matrices",
    "rollout_product", "beyond_attention_relevance",
]
