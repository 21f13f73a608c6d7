import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from app.core.exceptions import (
    DetectorNotFitted,
    DimensionError,
    EmptyDataset,
    InvalidArchitecture,
    InvalidArgument,
)
from app.models.schemas import DetectorConfig
from app.nn.network import Network, freeze_layers, init_network, run_frozen, train

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ResidualVector:
    signed: np.ndarray
    squared: np.ndarray
    score: float


@dataclass(frozen=True, eq=False)
class Classification:
    score: float
    is_anomaly: bool
    residual: ResidualVector


class Detector:
    """Trained autoencoder plus its residual threshold. Read-only once built."""

    def __init__(
        self,
        net: Network,
        threshold_delta: float = math.inf,
        contamination: float = 0.01,
        feature_names: Optional[Sequence[str]] = None
    ):
        if net.output_dim != net.input_dim:
            raise InvalidArchitecture("an autoencoder must reconstruct its own input size")
        self._net = net
        self._frozen = freeze_layers(net)
        self._delta = float(threshold_delta)
        self._contamination = float(contamination)
        self._feature_names = list(feature_names) if feature_names is not None else [
            f"f{index}" for index in range(net.input_dim)
        ]
        if len(self._feature_names) != net.input_dim:
            raise DimensionError(f"{len(self._feature_names)} feature names for {net.input_dim} inputs")

    @property
    def net(self) -> Network:
        return self._net

    @property
    def threshold_delta(self) -> float:
        return self._delta

    @property
    def contamination(self) -> float:
        return self._contamination

    @property
    def input_dim(self) -> int:
        return self._net.input_dim

    @property
    def feature_names(self) -> List[str]:
        return list(self._feature_names)

    @property
    def is_fitted(self) -> bool:
        return math.isfinite(self._delta)

    def reconstruct(self, data: np.ndarray) -> np.ndarray:
        array = np.asarray(data, dtype=np.float64)
        if array.ndim == 1:
            # single records skip the torch dispatch
            return run_frozen(self._frozen, array)
        return self._net.reconstruct(array)

    def residuals(self, x) -> ResidualVector:
        return residuals(self, x)

    def score_batch(self, data) -> np.ndarray:
        """Mean squared reconstruction error for every row of a matrix."""
        matrix = _as_matrix(data, self.input_dim)
        diff = matrix - self._net.reconstruct(matrix)
        return np.mean(diff * diff, axis=1)

    def detect_batch(self, data) -> tuple:
        """Return (scores, flags) for every row of a matrix."""
        if not self.is_fitted:
            raise DetectorNotFitted("detector threshold has not been fitted")
        scores = self.score_batch(data)
        return scores, scores >= self._delta

    def classify(self, x) -> Classification:
        return classify(self, x)


def _as_record(x, dim: int) -> np.ndarray:
    array = np.asarray(x, dtype=np.float64)
    if array.ndim != 1 or array.shape[0] != dim:
        raise DimensionError(f"record must have length {dim}, got shape {array.shape}")
    return array


def _as_matrix(data, dim: int) -> np.ndarray:
    array = np.asarray(data, dtype=np.float64)
    if array.ndim != 2 or array.shape[1] != dim:
        raise DimensionError(f"data must be an (N, {dim}) matrix, got shape {array.shape}")
    return array


def build_autoencoder(cfg: DetectorConfig) -> Network:
    """
    Mirror the encoder sizes into a symmetric autoencoder.

    Args:
        cfg: Detector configuration; layer_sizes runs from input size to latent size

    Returns:
        Initialized Network whose hidden layers use the latent activation
    """
    sizes = list(cfg.layer_sizes)
    if len(sizes) < 2:
        raise InvalidArchitecture("layer_sizes needs the input size and at least one encoder size")
    if sizes[-1] > sizes[0]:
        raise InvalidArchitecture(f"latent size {sizes[-1]} exceeds input size {sizes[0]}")

    full = sizes + sizes[-2::-1]
    activations = [cfg.latent_activation] * (len(full) - 2) + [cfg.output_activation]
    compression = 1.0 - min(sizes) / sizes[0]
    logger.info(f"Autoencoder stack {full} ({len(full) - 1} weight layers, compression {compression:.2%})")
    return init_network(full, activations, cfg.train.seed)


def residuals(det: Detector, x) -> ResidualVector:
    record = _as_record(x, det.input_dim)
    signed = record - det.reconstruct(record)
    squared = signed * signed
    return ResidualVector(signed=signed, squared=squared, score=float(np.mean(squared)))


def fit_threshold(training_scores, contamination: float) -> float:
    """
    Smallest score inside the top contamination fraction.

    Args:
        training_scores: Residual scores of the training records
        contamination: Assumed anomalous fraction, in (0, 1)

    Returns:
        The ceil(contamination * N)-th largest score
    """
    scores = np.asarray(training_scores, dtype=np.float64).ravel()
    if scores.size == 0:
        raise EmptyDataset("cannot fit a threshold on zero scores")
    if not 0.0 < contamination < 1.0:
        raise InvalidArgument(f"contamination must lie in (0, 1), got {contamination}")

    n = scores.size
    k = min(max(math.ceil(round(contamination * n, 9)), 1), n)
    return float(np.sort(scores)[n - k])


def classify(det: Detector, x) -> Classification:
    if not det.is_fitted:
        raise DetectorNotFitted("detector threshold has not been fitted")
    residual = residuals(det, x)
    return Classification(score=residual.score, is_anomaly=residual.score >= det.threshold_delta, residual=residual)


def train_detector(
    cfg: DetectorConfig,
    data,
    feature_names: Optional[Sequence[str]] = None
) -> Detector:
    """
    Train the autoencoder and place the contamination threshold.

    Args:
        cfg: Detector configuration
        data: Scaled training matrix in [0, 1]
        feature_names: Optional column names

    Returns:
        Fitted Detector
    """
    matrix = np.asarray(data, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise EmptyDataset("training data must be a non-empty matrix")
    if matrix.shape[1] != cfg.layer_sizes[0]:
        raise DimensionError(f"data has {matrix.shape[1]} features, config expects {cfg.layer_sizes[0]}")
    if matrix.shape[0] < cfg.train.batch_size:
        raise InvalidArgument(f"{matrix.shape[0]} rows is fewer than one batch of {cfg.train.batch_size}")

    net = build_autoencoder(cfg)
    train(net, matrix, cfg.train)

    detector = Detector(net, contamination=cfg.contamination, feature_names=feature_names)
    scores = detector.score_batch(matrix)
    delta = fit_threshold(scores, cfg.contamination)
    flagged = int(np.count_nonzero(scores >= delta))
    logger.info(f"Threshold delta={delta:.6g} flags {flagged}/{len(scores)} training records")
    return Detector(net, threshold_delta=delta, contamination=cfg.contamination, feature_names=detector.feature_names)
