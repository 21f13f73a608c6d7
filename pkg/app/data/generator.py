import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import DimensionError, InvalidArgument
from app.data.scaling import MinMaxScaler
from app.models.schemas import DatasetSpec, FeatureKind, FeatureSpec

logger = logging.getLogger(__name__)

AXLES = (1, 2, 3, 4)
SIDES = ("LEFT", "RIGHT")
# per-bit alarm rate on normal records, far below the detector contamination
ALARM_RATE = 1e-4


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Per-record fault flag and the feature indices that caused it."""

    is_fault: np.ndarray
    causes: Tuple[Tuple[int, ...], ...]
    magnitudes: Tuple[Tuple[float, ...], ...] = ()

    def __post_init__(self):
        flags = np.asarray(self.is_fault, dtype=bool)
        object.__setattr__(self, "is_fault", flags)
        object.__setattr__(self, "causes", tuple(tuple(sorted(int(i) for i in c)) for c in self.causes))
        if len(self.causes) != flags.shape[0]:
            raise DimensionError(f"{len(self.causes)} cause sets for {flags.shape[0]} records")
        if self.magnitudes and len(self.magnitudes) != flags.shape[0]:
            raise DimensionError(f"{len(self.magnitudes)} magnitude sets for {flags.shape[0]} records")
        for index, (fault, causes) in enumerate(zip(flags, self.causes)):
            if bool(fault) != bool(causes):
                raise InvalidArgument(f"record {index}: faults need causes and normals must have none")

    def __len__(self) -> int:
        return self.is_fault.shape[0]

    @property
    def max_cause_count(self) -> int:
        return max((len(c) for c in self.causes), default=0)

    def subset(self, indices: Sequence[int]) -> "GroundTruth":
        indices = list(indices)
        return GroundTruth(
            is_fault=self.is_fault[indices],
            causes=tuple(self.causes[i] for i in indices),
            magnitudes=tuple(self.magnitudes[i] for i in indices) if self.magnitudes else ()
        )

    @classmethod
    def all_normal(cls, n_records: int) -> "GroundTruth":
        return cls(is_fault=np.zeros(n_records, dtype=bool), causes=((),) * n_records)


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    data: np.ndarray
    feature_names: Tuple[str, ...]
    ground_truth: GroundTruth
    scaler: Optional[MinMaxScaler] = None
    features: Optional[Tuple[FeatureSpec, ...]] = field(default=None, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if data.ndim != 2 or data.shape[1] != len(self.feature_names):
            raise DimensionError(f"data shape {data.shape} does not match {len(self.feature_names)} feature names")
        if len(self.ground_truth) != data.shape[0]:
            raise DimensionError(f"ground truth covers {len(self.ground_truth)} of {data.shape[0]} records")

    @property
    def n_records(self) -> int:
        return self.data.shape[0]

    @property
    def n_features(self) -> int:
        return self.data.shape[1]

    def subset(self, indices: Sequence[int]) -> "DatasetBundle":
        indices = np.asarray(indices, dtype=np.int64)
        return DatasetBundle(
            data=self.data[indices],
            feature_names=self.feature_names,
            ground_truth=self.ground_truth.subset(indices.tolist()),
            scaler=self.scaler,
            features=self.features
        )


def default_wayside_features() -> List[FeatureSpec]:
    """
    64 rail-car level features over 4 axles x 2 sides.

    16 thermal (wheel and bearing temperature), 32 impact (load detector
    readings) and 16 acoustic (8 bearing signatures plus 8 binary alarms).
    """
    features = []
    for axle in AXLES:
        for side in SIDES:
            features.append(FeatureSpec(name=f"HEAT_WHEEL_{side}_AXLE{axle}", kind=FeatureKind.THERMAL, mean=45.0, std=6.0))
            features.append(FeatureSpec(name=f"HEAT_BEARING_{side}_AXLE{axle}", kind=FeatureKind.THERMAL, mean=38.0, std=4.0))
    for axle in AXLES:
        for side in SIDES:
            features.append(FeatureSpec(name=f"DIR_IMPACT_MAX_{side}_AXLE{axle}", kind=FeatureKind.IMPACT, mean=120.0, std=15.0))
            features.append(FeatureSpec(name=f"DIR_IMPACT_AVG_{side}_AXLE{axle}", kind=FeatureKind.IMPACT, mean=80.0, std=10.0))
            features.append(FeatureSpec(name=f"VERTICAL_LOAD_{side}_AXLE{axle}", kind=FeatureKind.IMPACT, mean=160.0, std=12.0))
            features.append(FeatureSpec(name=f"DYNAMIC_RATIO_{side}_AXLE{axle}", kind=FeatureKind.IMPACT, mean=1.4, std=0.15))
    for axle in AXLES:
        for side in SIDES:
            short = side[0]
            features.append(FeatureSpec(name=f"RS_{short}_AXLE{axle}", kind=FeatureKind.ACOUSTIC, mean=0.35, std=0.08))
            features.append(FeatureSpec(
                name=f"ABD_ALARM_{short}_AXLE{axle}", kind=FeatureKind.ACOUSTIC, mean=ALARM_RATE, std=0.0, binary=True
            ))
    return features


def _draw_normal(rng: np.random.Generator, features: Sequence[FeatureSpec], n: int, correlation: float) -> np.ndarray:
    kinds = sorted({feature.kind.value for feature in features})
    group = np.array([kinds.index(feature.kind.value) for feature in features])
    binary = np.array([feature.binary for feature in features])
    mean = np.array([feature.mean for feature in features])
    std = np.array([feature.std for feature in features])

    # shared factor per kind gives pairwise correlation `correlation` within a kind
    factors = rng.standard_normal((n, len(kinds)))
    noise = rng.standard_normal((n, len(features)))
    latent = math.sqrt(correlation) * factors[:, group] + math.sqrt(1.0 - correlation) * noise
    data = mean + std * latent

    flips = rng.random((n, len(features)))
    data[:, binary] = (flips[:, binary] < mean[binary]).astype(np.float64)
    return data


def inject_faults(
    base: np.ndarray,
    features: Sequence[FeatureSpec],
    causes_per_fault: Tuple[int, int],
    magnitude_range: Tuple[float, float],
    flip_probability: float,
    rng: np.random.Generator
) -> Tuple[np.ndarray, List[Tuple[int, ...]], List[Tuple[float, ...]]]:
    """
    Shift chosen continuous features of each row by a number of sigmas.

    Args:
        base: Normal draws, one fault per row
        features: Feature specifications
        causes_per_fault: Inclusive range of shifted features per fault
        magnitude_range: Inclusive range of the shift in sigmas
        flip_probability: Chance each binary feature flips
        rng: Random generator

    Returns:
        Tuple of (faulty rows, cause indices per row, magnitudes per row)
    """
    continuous = np.array([i for i, feature in enumerate(features) if not feature.binary], dtype=np.int64)
    binary = [i for i, feature in enumerate(features) if feature.binary]
    low, high = causes_per_fault
    if high > len(continuous):
        raise InvalidArgument(f"{high} causes per fault but only {len(continuous)} continuous features")

    faulty = np.array(base, dtype=np.float64, copy=True)
    all_causes, all_magnitudes = [], []
    for row in range(faulty.shape[0]):
        count = int(rng.integers(low, high + 1))
        chosen = rng.choice(continuous, size=count, replace=False)
        sigmas = rng.uniform(magnitude_range[0], magnitude_range[1], size=count)
        causes = {int(i): float(s) for i, s in zip(chosen, sigmas)}
        for index, sigma in causes.items():
            faulty[row, index] += sigma * features[index].std

        for index in binary:
            if rng.random() < flip_probability:
                faulty[row, index] = 1.0 - faulty[row, index]
                p = min(max(features[index].mean, 1e-6), 1.0 - 1e-6)
                causes[index] = 1.0 / math.sqrt(p * (1.0 - p))

        ordered = sorted(causes)
        all_causes.append(tuple(ordered))
        all_magnitudes.append(tuple(causes[i] for i in ordered))
    return faulty, all_causes, all_magnitudes


def generate(
    spec: Sequence[FeatureSpec],
    n_normal: int,
    n_fault: int,
    causes_per_fault: Tuple[int, int] = (1, 1),
    magnitude_range: Tuple[float, float] = (8.0, 8.0),
    seed: int = 0,
    correlation: float = 0.3,
    flip_probability: float = 0.0
) -> DatasetBundle:
    """
    Generate normal records and faults with known causes.

    Args:
        spec: Feature specifications
        n_normal: Number of normal records (>= 1)
        n_fault: Number of fault records
        causes_per_fault: Inclusive range of causes per fault
        magnitude_range: Inclusive range of fault shifts in sigmas
        seed: Generator seed
        correlation: Within-kind correlation of normal behaviour
        flip_probability: Chance each binary feature flips on a fault

    Returns:
        Unscaled DatasetBundle with rows in shuffled order
    """
    features = list(spec)
    if not features:
        raise InvalidArgument("need at least one feature")
    if n_normal < 1 or n_fault < 0:
        raise InvalidArgument(f"need n_normal >= 1 and n_fault >= 0, got {n_normal}, {n_fault}")
    if magnitude_range[0] <= 0 or magnitude_range[1] < magnitude_range[0]:
        raise InvalidArgument(f"magnitude range must be positive and increasing, got {magnitude_range}")
    if causes_per_fault[1] > len(features):
        raise InvalidArgument(f"{causes_per_fault[1]} causes per fault exceeds {len(features)} features")

    rng = np.random.default_rng(seed)
    data = _draw_normal(rng, features, n_normal + n_fault, correlation)
    causes: List[Tuple[int, ...]] = [()] * n_normal
    magnitudes: List[Tuple[float, ...]] = [()] * n_normal
    if n_fault:
        data[n_normal:], fault_causes, fault_magnitudes = inject_faults(
            data[n_normal:], features, causes_per_fault, magnitude_range, flip_probability, rng
        )
        causes += fault_causes
        magnitudes += fault_magnitudes

    order = rng.permutation(n_normal + n_fault)
    is_fault = np.arange(n_normal + n_fault) >= n_normal
    logger.info(f"Generated {n_normal} normal and {n_fault} fault records over {len(features)} features")
    return DatasetBundle(
        data=data[order],
        feature_names=tuple(feature.name for feature in features),
        ground_truth=GroundTruth(
            is_fault=is_fault[order],
            causes=tuple(causes[i] for i in order),
            magnitudes=tuple(magnitudes[i] for i in order)
        ),
        features=tuple(features)
    )


def generate_from_spec(dataset_spec: DatasetSpec, seed: int) -> DatasetBundle:
    features = dataset_spec.features if dataset_spec.features is not None else default_wayside_features()
    return generate(
        features,
        n_normal=dataset_spec.n_normal,
        n_fault=dataset_spec.n_fault,
        causes_per_fault=dataset_spec.causes_per_fault,
        magnitude_range=dataset_spec.magnitude_range,
        seed=seed,
        correlation=dataset_spec.correlation,
        flip_probability=dataset_spec.flip_probability
    )
