import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.core.exceptions import DimensionError, EmptyDataset, InvalidArgument, ZeroRelevanceMass
from app.detector.autoencoder import Detector
from app.explain.base import BaseExplainer, build_explanation
from app.models.schemas import Explanation, ExplanationMethod, ResidualStatsDocument, ZScoreMode

DEFAULT_EPSILON = 1e-9


@dataclass(frozen=True, eq=False)
class ResidualStats:
    """Per-feature mean and floored standard deviation used by the z-score."""

    mean: np.ndarray
    std: np.ndarray
    epsilon: float = DEFAULT_EPSILON
    source_count: int = 0
    mode: ZScoreMode = ZScoreMode.RESIDUAL_STATS

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.ndim != 1 or mean.shape != std.shape:
            raise DimensionError(f"mean {mean.shape} and std {std.shape} must be equal-length vectors")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std))):
            raise InvalidArgument("residual statistics must be finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", np.where(std < self.epsilon, self.epsilon, std))

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    def to_document(self) -> ResidualStatsDocument:
        return ResidualStatsDocument(
            mean=self.mean.tolist(),
            std=self.std.tolist(),
            epsilon=self.epsilon,
            source_count=self.source_count,
            mode=self.mode
        )

    @classmethod
    def from_document(cls, doc: ResidualStatsDocument) -> "ResidualStats":
        return cls(
            mean=np.asarray(doc.mean),
            std=np.asarray(doc.std),
            epsilon=doc.epsilon,
            source_count=doc.source_count,
            mode=doc.mode
        )


def fit_residual_stats(
    det: Detector,
    training,
    mode: ZScoreMode = ZScoreMode.RESIDUAL_STATS,
    epsilon: float = DEFAULT_EPSILON
) -> ResidualStats:
    """
    Gather per-feature mean and population std from the training set.

    Args:
        det: Trained detector
        training: Scaled training matrix
        mode: RESIDUAL_STATS uses signed residuals x - x'; INPUT_STATS uses raw inputs
        epsilon: Floor for the standard deviation

    Returns:
        ResidualStats over all training rows
    """
    matrix = np.asarray(training, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise EmptyDataset("residual statistics need a non-empty training matrix")
    if matrix.shape[1] != det.input_dim:
        raise DimensionError(f"training has {matrix.shape[1]} columns, detector expects {det.input_dim}")

    if mode == ZScoreMode.RESIDUAL_STATS:
        values = matrix - det.reconstruct(matrix)
    else:
        values = matrix
    return ResidualStats(
        mean=values.mean(axis=0),
        std=values.std(axis=0),
        epsilon=epsilon,
        source_count=matrix.shape[0],
        mode=mode
    )


def zscore(stats: ResidualStats, x) -> np.ndarray:
    # raw input against the fitted mean/std, as in z = (x - u) / sigma
    record = np.asarray(x, dtype=np.float64)
    if record.shape != stats.mean.shape:
        raise DimensionError(f"record must have length {stats.n_features}, got shape {record.shape}")
    return (record - stats.mean) / stats.std


def residual_relevance(signed: np.ndarray, z: np.ndarray) -> np.ndarray:
    """log1p(|z|) times the squared residual, normalized to sum to 1."""
    terms = np.log1p(np.abs(z)) * (signed * signed)
    mass = terms.sum()
    if not mass > 0:
        raise ZeroRelevanceMass("no feature carries relevance (zero residual or zero deviation everywhere)")
    return terms / mass


def explain_rxp(det: Detector, stats: ResidualStats, x) -> Explanation:
    """
    Log-smoothed, z-score-weighted squared residual per feature, normalized to sum to 1.

    Args:
        det: Trained detector
        stats: Fitted residual statistics
        x: Scaled record

    Returns:
        Explanation with relevance, z-scores and ranking
    """
    start = time.perf_counter_ns()
    record = np.asarray(x, dtype=np.float64)
    if record.ndim != 1 or record.shape[0] != det.input_dim:
        raise DimensionError(f"record must have length {det.input_dim}, got shape {record.shape}")

    diff = record - det.reconstruct(record)
    z = zscore(stats, record)
    relevance = residual_relevance(diff, z)
    elapsed = time.perf_counter_ns() - start
    return build_explanation(ExplanationMethod.RXP, relevance, elapsed, zscores=z)


class RXPExplainer(BaseExplainer):
    """Deterministic residual explainer."""

    def __init__(self, detector: Detector, stats: ResidualStats):
        if stats.n_features != detector.input_dim:
            raise DimensionError(f"stats cover {stats.n_features} features, detector has {detector.input_dim}")
        self.detector = detector
        self.stats = stats

    def explain(self, x: np.ndarray, seed: Optional[int] = None) -> Explanation:
        return explain_rxp(self.detector, self.stats, x)

    @property
    def method_name(self) -> str:
        return "rxp"

    @property
    def is_deterministic(self) -> bool:
        return True
