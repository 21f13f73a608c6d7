from .autoencoder import (
    Detector,
    ResidualVector,
    Classification,
    build_autoencoder,
    residuals,
    fit_threshold,
    classify,
    train_detector,
)

__all__ = [
    "Detector",
    "ResidualVector",
    "Classification",
    "build_autoencoder",
    "residuals",
    "fit_threshold",
    "classify",
    "train_detector",
]
