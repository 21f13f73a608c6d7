from pydantic import BaseModel, Field, field_validator, model_validator
from typing import Optional, List, Dict, Any, Tuple
from enum import Enum


class Activation(str, Enum):
    TANH = "tanh"
    SIGMOID = "sigmoid"
    IDENTITY = "identity"


class ZScoreMode(str, Enum):
    RESIDUAL_STATS = "residual_stats"
    INPUT_STATS = "input_stats"


class ExplanationMethod(str, Enum):
    RXP = "RXP"
    KERNEL_SHAP = "KernelSHAP"
    EXACT_SHAPLEY = "ExactShapley"


class ExplainerMethod(str, Enum):
    RXP = "rxp"
    SHAP1 = "shap1"
    SHAP2 = "shap2"
    SHAP3 = "shap3"
    EXACT = "exact"

    @property
    def is_shap_preset(self) -> bool:
        return self in (ExplainerMethod.SHAP1, ExplainerMethod.SHAP2, ExplainerMethod.SHAP3)


class FeatureKind(str, Enum):
    THERMAL = "thermal"
    IMPACT = "impact"
    ACOUSTIC = "acoustic"


# ============== Network / Detector ==============

class TrainConfig(BaseModel):
    learning_rate: float = Field(0.5, gt=0, description="Plain SGD step size")
    epochs: int = Field(20, ge=1, description="Number of passes over the training data")
    batch_size: int = Field(32, ge=1, description="Mini-batch size")
    seed: int = Field(0, ge=0, description="Seed for initialization and batch shuffling")


class DetectorConfig(BaseModel):
    layer_sizes: List[int] = Field(
        default_factory=lambda: [64, 32, 16],
        description="Encoder sizes from input dimension down to the latent size; mirrored for the decoder"
    )
    latent_activation: Activation = Field(Activation.TANH, description="Activation of every hidden layer")
    output_activation: Activation = Field(Activation.SIGMOID, description="Activation of the reconstruction layer")
    contamination: float = Field(0.01, gt=0, lt=1, description="Assumed fraction of anomalous training records")
    train: TrainConfig = Field(default_factory=TrainConfig)

    @field_validator("layer_sizes")
    @classmethod
    def _positive_sizes(cls, sizes: List[int]) -> List[int]:
        if not sizes:
            raise ValueError("layer_sizes must not be empty")
        if any(size < 1 for size in sizes):
            raise ValueError("layer sizes must be >= 1")
        return sizes


class LayerDocument(BaseModel):
    rows: int
    cols: int
    weights: List[float] = Field(..., description="Row-major (rows x cols) weight matrix")
    biases: List[float]
    activation: Activation


class NetworkDocument(BaseModel):
    version: int = 1
    input_dim: int
    layers: List[LayerDocument]


class ScalerDocument(BaseModel):
    min: List[float]
    max: List[float]


class ResidualStatsDocument(BaseModel):
    mean: List[float]
    std: List[float]
    epsilon: float
    source_count: int
    mode: ZScoreMode


# ============== Explanations ==============

DEFAULT_MAX_FEATURES = 10


class ShapConfig(BaseModel):
    n_coalition_samples: int = Field(..., ge=2, description="Number of coalitions evaluated, anchors included")
    n_background: int = Field(..., ge=1, description="Number of background rows filling absent features")
    seed: int = Field(0, ge=0)
    max_features: Optional[int] = Field(
        DEFAULT_MAX_FEATURES,
        ge=1,
        description="Features kept by least-angle selection on sampled designs; None solves for every feature"
    )


class ShapPreset(BaseModel):
    name: ExplainerMethod
    n_coalition_samples: int = Field(..., ge=2)
    n_background: int = Field(..., ge=1)
    max_features: Optional[int] = Field(DEFAULT_MAX_FEATURES, ge=1)

    @field_validator("name")
    @classmethod
    def _shap_name(cls, name: ExplainerMethod) -> ExplainerMethod:
        if not name.is_shap_preset:
            raise ValueError(f"{name.value} is not a SHAP preset name")
        return name

    def to_config(self, seed: int) -> ShapConfig:
        return ShapConfig(
            n_coalition_samples=self.n_coalition_samples,
            n_background=self.n_background,
            seed=seed,
            max_features=self.max_features
        )


class DetectorDocument(BaseModel):
    version: int = 1
    network: NetworkDocument
    delta: Optional[float] = Field(None, description="Residual threshold; null when the detector is unfit")
    contamination: float
    feature_names: List[str]
    scaler: Optional[ScalerDocument] = None
    residual_stats: Optional[ResidualStatsDocument] = None
    background: Optional[List[List[float]]] = Field(
        None, description="Seeded shuffle of scaled training rows; SHAP presets use the leading rows"
    )
    shap_presets: Optional[List[ShapPreset]] = Field(None, description="Presets the detector was trained with")
    seed: Optional[int] = Field(None, ge=0, description="Top-level seed of the training run")


class RXPConfig(BaseModel):
    zscore_mode: ZScoreMode = Field(ZScoreMode.RESIDUAL_STATS, description="Source of the z-score mean/std")
    epsilon: float = Field(1e-9, gt=0, description="Floor applied to per-feature standard deviations")


class Explanation(BaseModel):
    method: ExplanationMethod
    relevance: List[float] = Field(..., description="Per-feature relevance, non-negative and summing to 1")
    ranking: List[int] = Field(..., description="Feature indices by descending relevance, ties by index")
    zscores: Optional[List[float]] = None
    elapsed_ns: Optional[int] = Field(None, description="Wall-clock time spent producing the explanation")
    phi_raw: Optional[List[float]] = Field(None, description="Signed Shapley estimates")
    phi0: Optional[float] = Field(None, description="Base value (mean score over the background)")
    config: Optional[Dict[str, Any]] = None


# ============== Dataset ==============

class FeatureSpec(BaseModel):
    name: str
    kind: FeatureKind
    mean: float = Field(..., description="Normal-behaviour mean; for binary features the probability of 1")
    std: float = Field(..., ge=0)
    binary: bool = False

    @model_validator(mode="after")
    def _check_distribution(self) -> "FeatureSpec":
        if self.binary:
            if not 0.0 <= self.mean <= 1.0:
                raise ValueError(f"{self.name}: binary probability must lie in [0, 1]")
        elif self.std <= 0:
            raise ValueError(f"{self.name}: continuous features need std > 0")
        return self


class DatasetSpec(BaseModel):
    features: Optional[List[FeatureSpec]] = Field(None, description="Feature list; None selects the default wayside layout")
    n_normal: int = Field(20000, ge=1)
    n_fault: int = Field(200, ge=0)
    causes_per_fault: Tuple[int, int] = Field((1, 1), description="Inclusive range of injected causes per fault")
    magnitude_range: Tuple[float, float] = Field((8.0, 8.0), description="Inclusive range of fault shifts in sigmas")
    correlation: float = Field(0.3, ge=0, lt=1, description="Within-kind correlation of normal behaviour")
    flip_probability: float = Field(0.0, ge=0, le=1, description="Chance a binary feature flips on a fault")

    @model_validator(mode="after")
    def _check_ranges(self) -> "DatasetSpec":
        low, high = self.causes_per_fault
        if low < 1 or high < low:
            raise ValueError("causes_per_fault must be an increasing range starting at >= 1")
        low, high = self.magnitude_range
        if low <= 0 or high < low:
            raise ValueError("magnitude_range must be a positive increasing range")
        if self.features is not None:
            names = [feature.name for feature in self.features]
            if len(set(names)) != len(names):
                raise ValueError("feature names must be unique")
        return self


# ============== Evaluation ==============

class Query(BaseModel):
    record: int
    ranking: List[int] = Field(..., description="Feature indices by descending relevance")
    relevant: List[int] = Field(..., description="Ground-truth cause features")


class PrecisionRecall(BaseModel):
    precision: float
    recall: float
    precision_defined: bool = True
    recall_defined: bool = True
    tp: int
    fp: int
    fn: int
    tn: int


class TTestResult(BaseModel):
    t_statistic: float
    p_value: float = Field(..., ge=0, le=1)
    dof: int


class TimingResult(BaseModel):
    mean_ms: float
    std_ms: float
    per_sample_ms: List[float]


class MethodSummary(BaseModel):
    map: float = Field(..., ge=0, le=1, description="Mean over rounds of per-round MAP")
    map_std: float
    per_round_map: List[float]
    mean_response_ms: float
    std_response_ms: float
    stability: Optional[float] = Field(None, description="Mean pairwise Jaccard of top-K sets across repeated runs")
    failures: int = 0


class RunMetadata(BaseModel):
    seed: int
    rounds: int
    samples_per_round: int
    top_k: int
    pool_size: int
    false_positives_excluded: int
    round_seeds: List[int]


class EvalReport(BaseModel):
    methods: Dict[str, MethodSummary]
    pairwise: Dict[str, Optional[TTestResult]] = Field(..., description="Paired t-test of RXP vs each SHAP preset")
    detection: PrecisionRecall
    runs: RunMetadata


# ============== Run configuration ==============

class ProtocolConfig(BaseModel):
    rounds: int = Field(30, ge=1)
    samples_per_round: int = Field(200, ge=1)
    top_k: Optional[int] = Field(None, ge=1, description="MAP cutoff; None uses the largest cause count in the pool")
    test_fraction: float = Field(0.2, gt=0, lt=1)
    include_false_negatives: bool = True
    timing_samples: int = Field(20, ge=1)
    timing_repeats: int = Field(3, ge=1)
    stability_records: int = Field(10, ge=0)
    stability_repeats: int = Field(5, ge=2)
    chart_samples: int = Field(3, ge=0, description="Records rendered as per-method SVG bar charts")
    methods: Optional[List[ExplainerMethod]] = Field(None, description="None runs RXP and every configured SHAP preset")


def _desk_presets() -> List[ShapPreset]:
    return [
        ShapPreset(name=ExplainerMethod.SHAP1, n_coalition_samples=200, n_background=50),
        ShapPreset(name=ExplainerMethod.SHAP2, n_coalition_samples=200, n_background=25),
        ShapPreset(name=ExplainerMethod.SHAP3, n_coalition_samples=80, n_background=10),
    ]


class RunConfig(BaseModel):
    dataset: Optional[str] = Field(None, description="Path to a dataset CSV")
    dataset_spec: Optional[DatasetSpec] = None
    detector: DetectorConfig = Field(default_factory=DetectorConfig)
    rxp: RXPConfig = Field(default_factory=RXPConfig)
    shap_presets: List[ShapPreset] = Field(default_factory=_desk_presets)
    protocol: ProtocolConfig = Field(default_factory=ProtocolConfig)
    seed: int = Field(42, ge=0)
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _one_dataset_source(self) -> "RunConfig":
        if self.dataset is not None and self.dataset_spec is not None:
            raise ValueError("give either dataset or dataset_spec, not both")
        if self.dataset is None and self.dataset_spec is None:
            self.dataset_spec = DatasetSpec()
        names = [preset.name for preset in self.shap_presets]
        if len(set(names)) != len(names):
            raise ValueError("SHAP preset names must be unique")
        return self

    def preset(self, method: ExplainerMethod) -> ShapPreset:
        for preset in self.shap_presets:
            if preset.name == method:
                return preset
        raise KeyError(method.value)
