from .scaling import MinMaxScaler, fit_minmax, apply_scale, invert_scale
from .generator import (
    GroundTruth,
    DatasetBundle,
    default_wayside_features,
    inject_faults,
    generate,
    generate_from_spec,
)
from .csv_io import save_csv, load_csv

__all__ = [
    "MinMaxScaler",
    "fit_minmax",
    "apply_scale",
    "invert_scale",
    "GroundTruth",
    "DatasetBundle",
    "default_wayside_features",
    "inject_faults",
    "generate",
    "generate_from_spec",
    "save_csv",
    "load_csv",
]
