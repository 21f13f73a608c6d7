import numpy as np
import pytest

from app.data.generator import generate
from app.data.scaling import apply_scale, fit_minmax
from app.detector.autoencoder import train_detector
from app.explain.rxp import fit_residual_stats
from app.models.schemas import (
    DatasetSpec,
    DetectorConfig,
    FeatureKind,
    FeatureSpec,
    ProtocolConfig,
    RunConfig,
    ShapPreset,
    TrainConfig,
)


def small_features():
    features = []
    for axle in (1, 2):
        for side in ("LEFT", "RIGHT"):
            features.append(FeatureSpec(
                name=f"HEAT_WHEEL_{side}_AXLE{axle}", kind=FeatureKind.THERMAL, mean=45.0 + axle, std=5.0
            ))
            features.append(FeatureSpec(
                name=f"VERTICAL_LOAD_{side}_AXLE{axle}", kind=FeatureKind.IMPACT, mean=160.0, std=10.0 + axle
            ))
    return features


def small_run_config(**overrides) -> RunConfig:
    cfg = RunConfig(
        dataset_spec=DatasetSpec(
            features=small_features(),
            n_normal=400,
            n_fault=30,
            magnitude_range=(10.0, 10.0),
            flip_probability=0.0
        ),
        detector=DetectorConfig(
            layer_sizes=[8, 4],
            contamination=0.05,
            train=TrainConfig(learning_rate=0.5, epochs=8, batch_size=16)
        ),
        shap_presets=[
            ShapPreset(name="shap1", n_coalition_samples=40, n_background=10),
            ShapPreset(name="shap3", n_coalition_samples=20, n_background=5),
        ],
        protocol=ProtocolConfig(
            rounds=3,
            samples_per_round=8,
            timing_samples=2,
            timing_repeats=1,
            stability_records=2,
            stability_repeats=2,
            chart_samples=1
        ),
        seed=11
    )
    return cfg.model_copy(update=overrides)


@pytest.fixture(scope="session")
def features():
    return small_features()


@pytest.fixture(scope="session")
def bundle(features):
    return generate(features, n_normal=400, n_fault=20, magnitude_range=(10.0, 10.0), seed=7, flip_probability=0.0)


@pytest.fixture(scope="session")
def scaled(bundle):
    return apply_scale(fit_minmax(bundle.data), bundle.data)


@pytest.fixture(scope="session")
def detector(scaled):
    cfg = DetectorConfig(
        layer_sizes=[8, 4],
        contamination=0.05,
        train=TrainConfig(learning_rate=0.5, epochs=5, batch_size=16, seed=1)
    )
    return train_detector(cfg, scaled)


@pytest.fixture(scope="session")
def stats(detector, scaled):
    return fit_residual_stats(detector, scaled)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
