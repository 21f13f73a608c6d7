from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from app.core.exceptions import InvalidArgument, ZeroRelevanceMass
from app.models.schemas import Explanation, ExplanationMethod


class BaseExplainer(ABC):
    """Base class for all per-record explainers."""

    @abstractmethod
    def explain(self, x: np.ndarray, seed: Optional[int] = None) -> Explanation:
        """Explain one (scaled) record. Stochastic explainers draw from `seed` when given."""
        pass

    @property
    @abstractmethod
    def method_name(self) -> str:
        """Return the method identifier used in reports."""
        pass

    @property
    def is_deterministic(self) -> bool:
        return False


def rank_features(relevance: np.ndarray) -> List[int]:
    """Indices by descending relevance; equal values keep ascending index order."""
    return np.argsort(-relevance, kind="stable").tolist()


def normalize_magnitudes(values: np.ndarray) -> np.ndarray:
    magnitudes = np.abs(values)
    mass = magnitudes.sum()
    if not mass > 0:
        raise ZeroRelevanceMass("every attribution is zero")
    return magnitudes / mass


def build_explanation(
    method: ExplanationMethod,
    relevance: np.ndarray,
    elapsed_ns: int,
    **extra: Any
) -> Explanation:
    fields: Dict[str, Any] = {key: value for key, value in extra.items() if value is not None}
    for key, value in fields.items():
        if isinstance(value, np.ndarray):
            fields[key] = value.tolist()
    # fields are produced here, so validation is skipped
    return Explanation.model_construct(
        method=method,
        relevance=relevance.tolist(),
        ranking=rank_features(relevance),
        elapsed_ns=elapsed_ns,
        **fields
    )


def top_k(expl: Explanation, k: int) -> List[Tuple[int, float]]:
    """
    The k most relevant features with their weights.

    Args:
        expl: Explanation to read
        k: Number of entries, 1 <= k <= M

    Returns:
        List of (feature index, relevance) pairs in ranking order
    """
    n_features = len(expl.relevance)
    if not 1 <= k <= n_features:
        raise InvalidArgument(f"k must lie in [1, {n_features}], got {k}")
    return [(index, expl.relevance[index]) for index in expl.ranking[:k]]
