import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from pydantic import ValidationError

from app.core.exceptions import IoError, ParseError
from app.data.scaling import MinMaxScaler
from app.detector.autoencoder import Detector
from app.explain.rxp import ResidualStats
from app.models.schemas import DetectorDocument, ShapPreset
from app.nn.network import network_from_document, network_to_document

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class DetectorArtifact:
    """A detector with everything needed to explain records without the training CSV."""

    detector: Detector
    scaler: Optional[MinMaxScaler] = None
    stats: Optional[ResidualStats] = None
    background: Optional[np.ndarray] = None
    presets: List[ShapPreset] = field(default_factory=list)
    seed: Optional[int] = None


def artifact_to_document(artifact: DetectorArtifact) -> DetectorDocument:
    det = artifact.detector
    return DetectorDocument(
        network=network_to_document(det.net),
        delta=det.threshold_delta if det.is_fitted else None,
        contamination=det.contamination,
        feature_names=det.feature_names,
        scaler=artifact.scaler.to_document() if artifact.scaler is not None else None,
        residual_stats=artifact.stats.to_document() if artifact.stats is not None else None,
        background=artifact.background.tolist() if artifact.background is not None else None,
        shap_presets=list(artifact.presets) or None,
        seed=artifact.seed
    )


def artifact_from_document(doc: DetectorDocument) -> DetectorArtifact:
    net = network_from_document(doc.network)
    detector = Detector(
        net,
        threshold_delta=doc.delta if doc.delta is not None else float("inf"),
        contamination=doc.contamination,
        feature_names=doc.feature_names
    )
    return DetectorArtifact(
        detector=detector,
        scaler=MinMaxScaler.from_document(doc.scaler) if doc.scaler is not None else None,
        stats=ResidualStats.from_document(doc.residual_stats) if doc.residual_stats is not None else None,
        background=np.asarray(doc.background, dtype=np.float64) if doc.background else None,
        presets=list(doc.shap_presets or []),
        seed=doc.seed
    )


def save_detector(artifact: DetectorArtifact, path: Union[str, Path]) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(artifact_to_document(artifact).model_dump_json(indent=2), encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write detector to {path}: {e}") from e
    logger.info(f"Saved detector to {path}")


def load_detector(path: Union[str, Path]) -> DetectorArtifact:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read detector {path}: {e}") from e
    try:
        doc = DetectorDocument.model_validate_json(text)
    except ValidationError as e:
        raise ParseError(f"invalid detector document {path}: {e.error_count()} errors") from e
    return artifact_from_document(doc)
