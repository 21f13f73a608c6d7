import logging
import math
import time
from typing import Callable, Optional, Tuple

import numpy as np
from sklearn.linear_model import lars_path

from app.core.exceptions import DimensionError, InvalidArgument, SingularSystem
from app.core.seeding import derive_seed
from app.detector.autoencoder import Detector, residuals
from app.explain.base import BaseExplainer, build_explanation, normalize_magnitudes
from app.models.schemas import Explanation, ExplanationMethod, ShapConfig

logger = logging.getLogger(__name__)

# Score functions take a row-major batch (n, M) and return n scores;
# a 1-D record returns a scalar.
ScoreFunction = Callable[[np.ndarray], np.ndarray]

ANCHOR_WEIGHT = 1e6
RIDGE_JITTER = 1e-10
MAX_ENUMERATED_FEATURES = 20
_CHUNK_ROWS = 1 << 16


def score_fn(det: Detector) -> ScoreFunction:
    """Anomaly score (mean squared reconstruction error) as a value function."""

    def f(x: np.ndarray):
        array = np.asarray(x, dtype=np.float64)
        if array.ndim == 1:
            return residuals(det, array).score
        return det.score_batch(array)

    return f


def shap_kernel_weight(M: int, s: int) -> float:
    if not 0 <= s <= M:
        raise InvalidArgument(f"coalition size {s} outside [0, {M}]")
    if s == 0 or s == M:
        return ANCHOR_WEIGHT
    return (M - 1) / (math.comb(M, s) * s * (M - s))


def _size_distribution(M: int) -> np.ndarray:
    # total kernel mass of each size s in [1, M-1]: C(M, s) * w(s) = (M-1) / (s (M-s))
    sizes = np.arange(1, M)
    mass = (M - 1) / (sizes * (M - sizes))
    return mass / mass.sum()


def sample_coalitions(M: int, n: int, seed: int) -> np.ndarray:
    """
    Draw coalition masks, anchors first.

    Args:
        M: Number of features
        n: Number of masks, anchors included
        seed: Sampling seed

    Returns:
        Boolean (n, M) matrix; row 0 is all-true, row 1 all-false. With M == 1
        only the two anchors exist and exactly those are returned.
    """
    if n < 2:
        raise InvalidArgument(f"need at least the two anchor coalitions, got n={n}")
    if M < 1:
        raise InvalidArgument("need at least one feature")

    n_drawn = n - 2 if M > 1 else 0
    masks = np.zeros((2 + n_drawn, M), dtype=bool)
    masks[0] = True
    if n_drawn:
        rng = np.random.default_rng(seed)
        sizes = rng.choice(np.arange(1, M), size=n_drawn, p=_size_distribution(M))
        # uniform subset of each size: rank of i.i.d. keys below the size
        ranks = rng.random((n_drawn, M)).argsort(axis=1).argsort(axis=1)
        masks[2:] = ranks < sizes[:, None]
    return masks


def all_coalitions(M: int) -> np.ndarray:
    """Every mask of M features; row index bit i set means feature i present."""
    codes = np.arange(1 << M)
    return ((codes[:, None] >> np.arange(M)) & 1).astype(bool)


def check_game_inputs(x, background) -> Tuple[np.ndarray, np.ndarray]:
    record = np.asarray(x, dtype=np.float64)
    matrix = np.asarray(background, dtype=np.float64)
    if record.ndim != 1:
        raise DimensionError(f"record must be a vector, got shape {record.shape}")
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise InvalidArgument("background must be a non-empty matrix")
    if matrix.shape[1] != record.shape[0]:
        raise DimensionError(f"background has {matrix.shape[1]} columns, record has {record.shape[0]}")
    return record, matrix


def coalition_values(f: ScoreFunction, x, background, masks: np.ndarray) -> np.ndarray:
    """Mean score over the background of every hybrid, one value per mask."""
    record, matrix = check_game_inputs(x, background)
    n_background, M = matrix.shape
    values = np.empty(masks.shape[0])
    per_chunk = max(1, _CHUNK_ROWS // n_background)
    for start in range(0, masks.shape[0], per_chunk):
        block = masks[start:start + per_chunk]
        hybrids = np.where(block[:, None, :], record[None, None, :], matrix[None, :, :])
        scores = np.asarray(f(hybrids.reshape(-1, M)), dtype=np.float64)
        values[start:start + block.shape[0]] = scores.reshape(block.shape[0], n_background).mean(axis=1)
    return values


def masked_eval(f: ScoreFunction, x, background, mask) -> float:
    """Value of one coalition: present features from x, absent ones from each background row."""
    return float(coalition_values(f, x, background, np.asarray(mask, dtype=bool)[None, :])[0])


def _solve_constrained(masks: np.ndarray, weights: np.ndarray, values: np.ndarray, phi0: float, fx: float) -> np.ndarray:
    M = masks.shape[1]
    delta = fx - phi0
    if M == 1:
        return np.array([delta])
    Z = masks.astype(np.float64)

    # eliminate the last coefficient with sum(phi) = f(x) - phi0
    X = Z[:, :-1] - Z[:, -1:]
    y = (values - phi0) - Z[:, -1] * delta

    WX = weights[:, None] * X
    normal = X.T @ WX
    if np.linalg.matrix_rank(normal) < M - 1:
        raise SingularSystem(f"coalition design has rank below {M - 1}; raise n_coalition_samples")
    normal[np.diag_indices_from(normal)] += RIDGE_JITTER
    try:
        coef = np.linalg.solve(normal, WX.T @ y)
    except np.linalg.LinAlgError as e:
        raise SingularSystem(str(e)) from e

    phi = np.empty(M)
    phi[:-1] = coef
    phi[-1] = delta - coef.sum()
    return phi


def select_features(
    masks: np.ndarray,
    weights: np.ndarray,
    values: np.ndarray,
    phi0: float,
    fx: float,
    max_features: int
) -> np.ndarray:
    """
    Pick the features worth solving for with a least-angle path over the coalition design.

    Each coalition appears twice, once against phi0 and once against f(x), so the
    path sees both ends of the efficiency constraint.

    Returns:
        Sorted indices of at most max_features selected features
    """
    M = masks.shape[1]
    sizes = masks.sum(axis=1)
    root = np.sqrt(np.concatenate([weights * (M - sizes), weights * sizes]))
    design = root[:, None] * np.vstack([masks, masks - 1.0])
    target = values - phi0
    target = root * np.concatenate([target, target - (fx - phi0)])
    active = lars_path(design, target, max_iter=max_features)[1]
    return np.sort(np.asarray(active, dtype=np.int64))


def kernel_shap_values(
    f: ScoreFunction,
    x,
    background,
    n_coalition_samples: int,
    seed: int,
    max_features: Optional[int] = None
) -> Tuple[np.ndarray, float, float]:
    """
    Kernel SHAP estimate of the Shapley values of f at x.

    Args:
        f: Batch score function
        x: Record to explain
        background: Rows supplying absent features
        n_coalition_samples: Coalitions evaluated, anchors included
        seed: Coalition sampling seed
        max_features: When sampling and M exceeds it, solve only for the features
            a least-angle path selects; the rest get phi = 0

    Returns:
        Tuple of (phi, phi0, f(x))
    """
    record, matrix = check_game_inputs(x, background)
    M = record.shape[0]
    fx = float(np.asarray(f(record[None, :]), dtype=np.float64).ravel()[0])

    if M == 1:
        phi0 = masked_eval(f, record, matrix, np.zeros(1, dtype=bool))
        return np.array([fx - phi0]), phi0, fx
    if n_coalition_samples < M + 2:
        raise InvalidArgument(f"{n_coalition_samples} coalitions cannot determine {M} attributions; need >= {M + 2}")

    if M <= MAX_ENUMERATED_FEATURES and n_coalition_samples >= (1 << M):
        logger.debug(f"Enumerating all {1 << M} coalitions for M={M}")
        masks = all_coalitions(M)
        sizes = masks.sum(axis=1)
        weights = np.array([shap_kernel_weight(M, int(s)) for s in sizes])
        empty_row = 0
    else:
        masks = sample_coalitions(M, n_coalition_samples, seed)
        # sizes are drawn in proportion to kernel mass, so kernel weight over
        # sampling probability is the same constant for every drawn mask
        sizes = np.arange(1, M)
        total_mass = float(np.sum((M - 1) / (sizes * (M - sizes))))
        weights = np.full(masks.shape[0], total_mass)
        weights[:2] = ANCHOR_WEIGHT
        empty_row = 1

    values = coalition_values(f, record, matrix, masks)
    phi0 = float(values[empty_row])
    if empty_row == 1 and max_features is not None and M > max_features:
        selected = select_features(masks, weights, values, phi0, fx, max_features)
        logger.debug(f"Least-angle selection kept {selected.size} of {M} features")
        phi = np.zeros(M)
        if selected.size:
            phi[selected] = _solve_constrained(masks[:, selected], weights, values, phi0, fx)
        return phi, phi0, fx
    phi = _solve_constrained(masks, weights, values, phi0, fx)
    return phi, phi0, fx


def select_background(training, n_background: int, seed: int) -> np.ndarray:
    """First n_background rows of a seeded shuffle of the training matrix."""
    matrix = np.asarray(training, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise InvalidArgument("training must be a non-empty matrix")
    if n_background > matrix.shape[0]:
        raise InvalidArgument(f"n_background={n_background} exceeds {matrix.shape[0]} available rows")
    order = np.random.default_rng(seed).permutation(matrix.shape[0])
    return matrix[order[:n_background]]


def kernel_shap_explain(det: Detector, x, training, cfg: ShapConfig) -> Explanation:
    """
    Kernel SHAP explanation of the detector's anomaly score.

    Args:
        det: Trained detector
        x: Scaled record
        training: Scaled training matrix the background is drawn from
        cfg: Sampling configuration

    Returns:
        Explanation whose relevance is |phi| normalized; raw phi and phi0 retained
    """
    background = select_background(training, cfg.n_background, derive_seed(cfg.seed, "background"))
    return _explain_with_background(det, x, background, cfg, derive_seed(cfg.seed, "coalitions"))


def _explain_with_background(det: Detector, x, background: np.ndarray, cfg: ShapConfig, coalition_seed: int) -> Explanation:
    start = time.perf_counter_ns()
    record = np.asarray(x, dtype=np.float64)
    if record.ndim != 1 or record.shape[0] != det.input_dim:
        raise DimensionError(f"record must have length {det.input_dim}, got shape {record.shape}")
    phi, phi0, _ = kernel_shap_values(
        score_fn(det), record, background, cfg.n_coalition_samples, coalition_seed, max_features=cfg.max_features
    )
    relevance = normalize_magnitudes(phi)
    elapsed = time.perf_counter_ns() - start
    return build_explanation(
        ExplanationMethod.KERNEL_SHAP,
        relevance,
        elapsed,
        phi_raw=phi,
        phi0=phi0,
        config=cfg.model_dump()
    )


class KernelShapExplainer(BaseExplainer):
    """Kernel SHAP over the anomaly score with a fixed background sample."""

    def __init__(
        self,
        detector: Detector,
        training,
        config: ShapConfig,
        name: str = "kernel_shap",
        shuffled: bool = False
    ):
        """
        Args:
            detector: Trained detector
            training: Scaled training rows
            config: Sampling configuration
            name: Method name used in reports
            shuffled: Rows are already a seeded shuffle; take the leading n_background as they are
        """
        self.detector = detector
        self.config = config
        self.name = name
        if shuffled:
            rows = np.asarray(training, dtype=np.float64)
            if config.n_background > len(rows):
                raise InvalidArgument(f"n_background={config.n_background} exceeds {len(rows)} stored background rows")
            self.background = rows[:config.n_background]
        else:
            self.background = select_background(training, config.n_background, derive_seed(config.seed, "background"))

    def explain(self, x: np.ndarray, seed: Optional[int] = None) -> Explanation:
        coalition_seed = derive_seed(self.config.seed if seed is None else seed, "coalitions")
        return _explain_with_background(self.detector, x, self.background, self.config, coalition_seed)

    @property
    def method_name(self) -> str:
        return self.name
