from .base import BaseExplainer, top_k
from .rxp import ResidualStats, RXPExplainer, fit_residual_stats, zscore, explain_rxp, residual_relevance
from .kernel_shap import (
    KernelShapExplainer,
    score_fn,
    shap_kernel_weight,
    sample_coalitions,
    masked_eval,
    kernel_shap_values,
    kernel_shap_explain,
)
from .exact import ExactShapleyExplainer, exact_shapley
from .factory import ExplainerFactory

__all__ = [
    "BaseExplainer",
    "top_k",
    "ResidualStats",
    "RXPExplainer",
    "fit_residual_stats",
    "zscore",
    "explain_rxp",
    "residual_relevance",
    "KernelShapExplainer",
    "score_fn",
    "shap_kernel_weight",
    "sample_coalitions",
    "masked_eval",
    "kernel_shap_values",
    "kernel_shap_explain",
    "ExactShapleyExplainer",
    "exact_shapley",
    "ExplainerFactory",
]
