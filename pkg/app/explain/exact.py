import math
import time
from typing import Optional

import numpy as np

from app.core.exceptions import TooManyFeatures
from app.core.seeding import derive_seed
from app.detector.autoencoder import Detector
from app.explain.base import BaseExplainer, build_explanation, normalize_magnitudes
from app.explain.kernel_shap import (
    ScoreFunction,
    check_game_inputs,
    all_coalitions,
    coalition_values,
    score_fn,
    select_background,
)
from app.models.schemas import Explanation, ExplanationMethod

MAX_EXACT_FEATURES = 12


def exact_shapley(f: ScoreFunction, x, background) -> np.ndarray:
    """
    Shapley values by enumerating all 2^M coalitions.

    Args:
        f: Batch score function
        x: Record to explain
        background: Rows supplying absent features

    Returns:
        Vector of M Shapley values
    """
    record, matrix = check_game_inputs(x, background)
    M = record.shape[0]
    if M > MAX_EXACT_FEATURES:
        raise TooManyFeatures(f"exact enumeration supports at most {MAX_EXACT_FEATURES} features, got {M}")

    masks = all_coalitions(M)
    values = coalition_values(f, record, matrix, masks)
    sizes = masks.sum(axis=1)
    factorial = np.array([math.factorial(k) for k in range(M + 1)], dtype=np.float64)
    codes = np.arange(1 << M)

    phi = np.zeros(M)
    for i in range(M):
        bit = 1 << i
        without = codes[(codes & bit) == 0]
        s = sizes[without]
        weight = factorial[s] * factorial[M - s - 1] / factorial[M]
        phi[i] = np.sum(weight * (values[without | bit] - values[without]))
    return phi


class ExactShapleyExplainer(BaseExplainer):
    """Brute-force Shapley attribution for small feature counts."""

    def __init__(self, detector: Detector, training, n_background: int, seed: int = 0):
        if detector.input_dim > MAX_EXACT_FEATURES:
            raise TooManyFeatures(
                f"exact enumeration supports at most {MAX_EXACT_FEATURES} features, got {detector.input_dim}"
            )
        self.detector = detector
        self.background = select_background(training, n_background, derive_seed(seed, "background"))

    def explain(self, x: np.ndarray, seed: Optional[int] = None) -> Explanation:
        start = time.perf_counter_ns()
        f = score_fn(self.detector)
        phi = exact_shapley(f, x, self.background)
        phi0 = float(np.mean(f(self.background)))
        relevance = normalize_magnitudes(phi)
        elapsed = time.perf_counter_ns() - start
        return build_explanation(
            ExplanationMethod.EXACT_SHAPLEY,
            relevance,
            elapsed,
            phi_raw=phi,
            phi0=phi0
        )

    @property
    def method_name(self) -> str:
        return "exact"

    @property
    def is_deterministic(self) -> bool:
        return True
