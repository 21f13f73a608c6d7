import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from sklearn.model_selection import train_test_split

from app.core.exceptions import ConfigError, EmptyDataset
from app.core.seeding import derive_seed
from app.data.csv_io import load_csv
from app.data.generator import DatasetBundle, generate_from_spec
from app.data.scaling import MinMaxScaler, apply_scale, fit_minmax
from app.detector.autoencoder import Detector, train_detector
from app.explain.kernel_shap import select_background
from app.explain.rxp import ResidualStats, fit_residual_stats
from app.models.schemas import RunConfig

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class Experiment:
    """Everything a run derives from its RunConfig before explanations start."""

    config: RunConfig
    bundle: DatasetBundle
    scaler: MinMaxScaler
    train: DatasetBundle
    test: DatasetBundle
    detector: Detector
    stats: ResidualStats
    background: np.ndarray


def load_dataset(cfg: RunConfig) -> DatasetBundle:
    if cfg.dataset is not None:
        return load_csv(cfg.dataset)
    return generate_from_spec(cfg.dataset_spec, derive_seed(cfg.seed, "dataset"))


def split_dataset(bundle: DatasetBundle, test_fraction: float, seed: int) -> Tuple[DatasetBundle, DatasetBundle]:
    """
    Stratified train/test split keeping the fault fraction in both halves.

    Args:
        bundle: Full dataset
        test_fraction: Share of records held out
        seed: Split seed

    Returns:
        Tuple of (train, test) bundles
    """
    if bundle.n_records < 2:
        raise EmptyDataset("need at least 2 records to split")
    labels = bundle.ground_truth.is_fault
    counts = np.bincount(labels.astype(np.int64), minlength=2)
    stratify: Optional[np.ndarray] = labels if counts.min() >= 2 else None
    # sklearn only accepts 32-bit seeds
    train_idx, test_idx = train_test_split(
        np.arange(bundle.n_records),
        test_size=test_fraction,
        random_state=seed % (2 ** 32),
        stratify=stratify
    )
    return bundle.subset(np.sort(train_idx)), bundle.subset(np.sort(test_idx))


def background_size(cfg: RunConfig) -> int:
    return max((preset.n_background for preset in cfg.shap_presets), default=1)


def prepare_experiment(cfg: RunConfig) -> Experiment:
    """
    Load or generate the data, split it, scale it and train the detector.

    Args:
        cfg: Run configuration

    Returns:
        Prepared Experiment with scaled train/test bundles
    """
    bundle = load_dataset(cfg)
    if cfg.detector.layer_sizes[0] != bundle.n_features:
        raise ConfigError(
            f"detector input size {cfg.detector.layer_sizes[0]} does not match {bundle.n_features} dataset features"
        )

    train, test = split_dataset(bundle, cfg.protocol.test_fraction, derive_seed(cfg.seed, "split"))
    scaler = fit_minmax(train.data)
    train = _scaled(train, scaler)
    test = _scaled(test, scaler)
    logger.info(
        f"Split {bundle.n_records} records: {train.n_records} train "
        f"({int(train.ground_truth.is_fault.sum())} faults), {test.n_records} test "
        f"({int(test.ground_truth.is_fault.sum())} faults)"
    )

    detector_cfg = cfg.detector.model_copy(deep=True)
    detector_cfg.train.seed = derive_seed(cfg.seed, "detector.train")
    detector = train_detector(detector_cfg, train.data, feature_names=bundle.feature_names)
    stats = fit_residual_stats(detector, train.data, mode=cfg.rxp.zscore_mode, epsilon=cfg.rxp.epsilon)
    background = select_background(
        train.data,
        min(background_size(cfg), train.n_records),
        derive_seed(cfg.seed, "background")
    )
    return Experiment(
        config=cfg,
        bundle=bundle,
        scaler=scaler,
        train=train,
        test=test,
        detector=detector,
        stats=stats,
        background=background
    )


def _scaled(bundle: DatasetBundle, scaler: MinMaxScaler) -> DatasetBundle:
    data = apply_scale(scaler, bundle.data) if bundle.n_records else bundle.data
    return DatasetBundle(
        data=data,
        feature_names=bundle.feature_names,
        ground_truth=bundle.ground_truth,
        scaler=scaler,
        features=bundle.features
    )
