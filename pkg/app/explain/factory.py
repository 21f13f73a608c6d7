from typing import Dict, Optional, Sequence

import numpy as np

from app.core.exceptions import InvalidArgument
from app.core.seeding import derive_seed
from app.detector.autoencoder import Detector
from app.explain.base import BaseExplainer
from app.explain.exact import MAX_EXACT_FEATURES, ExactShapleyExplainer
from app.explain.kernel_shap import KernelShapExplainer
from app.explain.rxp import ResidualStats, RXPExplainer
from app.models.schemas import ExplainerMethod, ShapPreset

DEFAULT_EXACT_BACKGROUND = 50


class ExplainerFactory:
    """Factory class for creating explainer instances."""

    @classmethod
    def create(
        cls,
        method: ExplainerMethod,
        detector: Detector,
        stats: Optional[ResidualStats] = None,
        training: Optional[np.ndarray] = None,
        presets: Sequence[ShapPreset] = (),
        seed: int = 0,
        background: Optional[np.ndarray] = None
    ) -> BaseExplainer:
        """
        Create an explainer for the given method.

        Args:
            method: Explainer method name
            detector: Trained detector to explain
            stats: Residual statistics, required by RXP
            training: Scaled training rows the background is drawn from, required by SHAP/exact
            presets: SHAP presets to look the method up in
            seed: Seed for background selection and default coalition sampling
            background: Pre-shuffled background rows; SHAP presets take their leading rows instead of drawing from training

        Returns:
            An explainer instance
        """
        method = ExplainerMethod(method)
        if method == ExplainerMethod.RXP:
            if stats is None:
                raise InvalidArgument("rxp needs fitted residual statistics")
            return RXPExplainer(detector, stats)

        if training is None and background is None:
            raise InvalidArgument(f"{method.value} needs training or background rows")

        if method == ExplainerMethod.EXACT:
            rows = training if training is not None else background
            n_background = min(DEFAULT_EXACT_BACKGROUND, len(rows))
            return ExactShapleyExplainer(detector, rows, n_background, seed=derive_seed(seed, "exact"))

        preset = next((p for p in presets if p.name == method), None)
        if preset is None:
            raise InvalidArgument(f"no SHAP preset configured for {method.value}")
        config = preset.to_config(derive_seed(seed, f"shap.{method.value}"))
        if background is not None:
            return KernelShapExplainer(detector, background, config, name=method.value, shuffled=True)
        return KernelShapExplainer(detector, training, config, name=method.value)

    @classmethod
    def get_available_methods(cls, input_dim: int, presets: Sequence[ShapPreset]) -> Dict[str, dict]:
        """
        Report which methods can run for a detector of the given width.

        Returns:
            Dict with method names as keys and availability info as values.
        """
        configured = {preset.name: preset for preset in presets}
        status = {}
        for method in ExplainerMethod:
            if method == ExplainerMethod.RXP:
                status[method.value] = {"available": True}
            elif method == ExplainerMethod.EXACT:
                status[method.value] = {
                    "available": input_dim <= MAX_EXACT_FEATURES,
                    "max_features": MAX_EXACT_FEATURES
                }
            elif method in configured:
                preset = configured[method]
                status[method.value] = {
                    "available": preset.n_coalition_samples >= input_dim + 2,
                    "n_coalition_samples": preset.n_coalition_samples,
                    "n_background": preset.n_background
                }
            else:
                status[method.value] = {"available": False, "error": "no preset configured"}
        return status
