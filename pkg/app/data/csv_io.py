import logging
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
import pandas as pd

from app.core.exceptions import IoError, ParseError
from app.data.generator import DatasetBundle, GroundTruth

logger = logging.getLogger(__name__)

FAULT_COLUMN = "__is_fault"
CAUSES_COLUMN = "__causes"
CAUSE_SEPARATOR = ";"

PathLike = Union[str, Path]


def _format_causes(causes: Tuple[int, ...]) -> str:
    return CAUSE_SEPARATOR.join(str(index) for index in causes)


def save_csv(bundle: DatasetBundle, path: PathLike) -> None:
    """
    Write raw feature values plus the two ground-truth columns.

    Args:
        bundle: Dataset to persist
        path: Destination CSV file
    """
    frame = pd.DataFrame(bundle.data, columns=list(bundle.feature_names))
    frame[FAULT_COLUMN] = bundle.ground_truth.is_fault.astype(np.int64)
    frame[CAUSES_COLUMN] = [_format_causes(causes) for causes in bundle.ground_truth.causes]
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.17g", encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    logger.info(f"Saved {bundle.n_records} records x {bundle.n_features} features to {path}")


def _parse_causes(text: str, n_features: int, line: int) -> Tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        causes = tuple(sorted(int(token) for token in text.split(CAUSE_SEPARATOR)))
    except ValueError as e:
        raise ParseError(f"bad cause list {text!r}", line=line) from e
    if any(not 0 <= index < n_features for index in causes):
        raise ParseError(f"cause index out of range in {text!r}", line=line)
    return causes


def _parse_values(frame: pd.DataFrame) -> np.ndarray:
    try:
        return frame.astype(np.float64).to_numpy()
    except ValueError:
        numeric = frame.apply(pd.to_numeric, errors="coerce")
        bad_rows = numeric.isna().any(axis=1).to_numpy().nonzero()[0]
        row = int(bad_rows[0]) if bad_rows.size else 0
        # header is line 1, first data row is line 2
        raise ParseError("non-numeric feature value", line=row + 2)


def load_csv(path: PathLike, require_ground_truth: bool = True) -> DatasetBundle:
    """
    Read a dataset CSV written by save_csv.

    Args:
        path: Source CSV file
        require_ground_truth: Reject files without the ground-truth columns; when False
            such files load as all-normal records

    Returns:
        Unscaled DatasetBundle
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except FileNotFoundError as e:
        raise IoError(f"dataset not found: {path}") from e
    except pd.errors.EmptyDataError as e:
        raise ParseError("file is empty, header row missing", line=1) from e
    except pd.errors.ParserError as e:
        raise ParseError(f"malformed CSV: {e}") from e
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e

    columns: List[str] = list(frame.columns)
    has_truth = FAULT_COLUMN in columns and CAUSES_COLUMN in columns
    if require_ground_truth and not has_truth:
        raise ParseError(f"header lacks {FAULT_COLUMN} and {CAUSES_COLUMN} columns", line=1)
    feature_names = [name for name in columns if name not in (FAULT_COLUMN, CAUSES_COLUMN)]
    if not feature_names:
        raise ParseError("header has no feature columns", line=1)
    if any(name.startswith("Unnamed:") for name in feature_names):
        raise ParseError("header has an empty column name", line=1)

    data = _parse_values(frame[feature_names])
    if not np.all(np.isfinite(data)):
        row = int(np.nonzero(~np.isfinite(data).all(axis=1))[0][0])
        raise ParseError("non-finite feature value", line=row + 2)

    if not has_truth:
        return DatasetBundle(data=data, feature_names=feature_names, ground_truth=GroundTruth.all_normal(len(data)))

    flags, causes = [], []
    for row, (flag, cause_text) in enumerate(zip(frame[FAULT_COLUMN], frame[CAUSES_COLUMN])):
        line = row + 2
        if flag.strip() not in ("0", "1"):
            raise ParseError(f"{FAULT_COLUMN} must be 0 or 1, got {flag!r}", line=line)
        is_fault = flag.strip() == "1"
        record_causes = _parse_causes(cause_text, len(feature_names), line)
        if is_fault != bool(record_causes):
            raise ParseError("fault records need causes and normal records must have none", line=line)
        flags.append(is_fault)
        causes.append(record_causes)

    logger.info(f"Loaded {len(data)} records x {len(feature_names)} features from {path}")
    return DatasetBundle(
        data=data,
        feature_names=feature_names,
        ground_truth=GroundTruth(is_fault=np.array(flags, dtype=bool), causes=tuple(causes))
    )
