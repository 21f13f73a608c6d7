from dataclasses import dataclass

import numpy as np

from app.core.exceptions import DimensionError, EmptyDataset
from app.models.schemas import ScalerDocument


@dataclass(frozen=True, eq=False)
class MinMaxScaler:
    min: np.ndarray
    max: np.ndarray

    @property
    def span(self) -> np.ndarray:
        return self.max - self.min

    @property
    def constant(self) -> np.ndarray:
        return ~(self.span > 0)

    def to_document(self) -> ScalerDocument:
        return ScalerDocument(min=self.min.tolist(), max=self.max.tolist())

    @classmethod
    def from_document(cls, doc: ScalerDocument) -> "MinMaxScaler":
        if len(doc.min) != len(doc.max):
            raise DimensionError("scaler min/max lengths differ")
        return cls(min=np.asarray(doc.min, dtype=np.float64), max=np.asarray(doc.max, dtype=np.float64))


def _check(scaler: MinMaxScaler, data) -> np.ndarray:
    matrix = np.asarray(data, dtype=np.float64)
    if matrix.shape[-1] != scaler.min.shape[0]:
        raise DimensionError(f"data has {matrix.shape[-1]} columns, scaler fitted on {scaler.min.shape[0]}")
    return matrix


def fit_minmax(data) -> MinMaxScaler:
    matrix = np.asarray(data, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise EmptyDataset("cannot fit a scaler on an empty matrix")
    return MinMaxScaler(min=matrix.min(axis=0), max=matrix.max(axis=0))


def apply_scale(scaler: MinMaxScaler, data) -> np.ndarray:
    """Map into [0, 1]; constant columns map to 0.5 and out-of-range values are clamped."""
    matrix = _check(scaler, data)
    constant = scaler.constant
    span = np.where(constant, 1.0, scaler.span)
    scaled = (matrix - scaler.min) / span
    scaled[..., constant] = 0.5
    return np.clip(scaled, 0.0, 1.0)


def invert_scale(scaler: MinMaxScaler, data) -> np.ndarray:
    matrix = _check(scaler, data)
    restored = matrix * scaler.span + scaler.min
    restored[..., scaler.constant] = scaler.min[scaler.constant]
    return restored
