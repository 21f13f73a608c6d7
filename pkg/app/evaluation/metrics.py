import itertools
import logging
from typing import Optional, Sequence

import numpy as np
from scipy import special
from sklearn.metrics import confusion_matrix

from app.core.exceptions import DegenerateVariance, DimensionError, InvalidArgument, InvalidQuery
from app.core.seeding import derive_seed
from app.explain.base import BaseExplainer
from app.models.schemas import PrecisionRecall, Query, TTestResult

logger = logging.getLogger(__name__)


def average_precision(q: Query, top_k: Optional[int] = None) -> float:
    """
    Sum over ranking positions of recall increment times precision at that cutoff.

    Args:
        q: Query with a ranking and its relevant feature set
        top_k: Only the first top_k ranks count; relevant features ranked lower
            contribute their recall mass with precision 0

    Returns:
        Average precision in [0, 1]
    """
    relevant = set(q.relevant)
    if not relevant:
        raise InvalidQuery(f"record {q.record} has no relevant features")
    ranking = q.ranking if top_k is None else q.ranking[:top_k]

    hits = np.isin(np.asarray(ranking, dtype=np.int64), list(relevant))
    if not hits.any():
        return 0.0
    precision_at_k = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(np.sum(precision_at_k[hits]) / len(relevant))


def mean_average_precision(queries: Sequence[Query], top_k: Optional[int] = None) -> float:
    if not queries:
        raise InvalidArgument("MAP needs at least one query")
    return float(np.mean([average_precision(q, top_k) for q in queries]))


def precision_recall(truth, predicted) -> PrecisionRecall:
    """Detection precision TP/(TP+FP) and recall TP/(TP+FN); 0/0 reports 0 with its defined flag cleared."""
    truth = np.asarray(truth, dtype=bool).ravel()
    predicted = np.asarray(predicted, dtype=bool).ravel()
    if truth.shape != predicted.shape:
        raise DimensionError(f"truth has {truth.size} entries, prediction has {predicted.size}")

    tn, fp, fn, tp = (int(v) for v in confusion_matrix(truth, predicted, labels=[False, True]).ravel())
    return PrecisionRecall(
        precision=tp / (tp + fp) if tp + fp else 0.0,
        recall=tp / (tp + fn) if tp + fn else 0.0,
        precision_defined=bool(tp + fp),
        recall_defined=bool(tp + fn),
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn
    )


def student_t_two_sided(t: float, dof: int) -> float:
    # P(|T| >= |t|) = I_{dof / (dof + t^2)}(dof / 2, 1 / 2)
    x = dof / (dof + t * t)
    return float(min(max(special.betainc(dof / 2.0, 0.5, x), 0.0), 1.0))


def paired_t_test(a, b) -> TTestResult:
    """
    Two-sided paired Student t-test on a - b.

    Args:
        a: First sample
        b: Second sample, paired element-wise with a

    Returns:
        TTestResult with t, p and dof = n - 1
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"paired samples differ in length: {a.size} vs {b.size}")
    if a.size < 2:
        raise InvalidArgument("a paired t-test needs at least 2 pairs")

    d = a - b
    dof = d.size - 1
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(t_statistic=0.0, p_value=1.0, dof=dof)
        raise DegenerateVariance(f"all {d.size} differences equal {mean}")

    t = mean / (sd / np.sqrt(d.size))
    return TTestResult(t_statistic=float(t), p_value=student_t_two_sided(float(t), dof), dof=dof)


def jaccard(a, b) -> float:
    a, b = set(a), set(b)
    union = a | b
    return len(a & b) / len(union) if union else 1.0


def ranking_stability(
    explainer: BaseExplainer,
    records,
    repeats: int,
    top_k: int,
    seed: int = 0
) -> float:
    """
    Mean pairwise Jaccard similarity of top-K feature sets across repeated runs.

    Args:
        explainer: Explainer under test
        records: Scaled records, one per row
        repeats: Runs per record, each with its own seed (>= 2)
        top_k: Size of the compared feature sets
        seed: Base seed for the per-run seeds

    Returns:
        Similarity in [0, 1]; 1 means every run picked the same top-K set
    """
    if repeats < 2:
        raise InvalidArgument("stability needs at least 2 repeats")
    matrix = np.atleast_2d(np.asarray(records, dtype=np.float64))
    if matrix.shape[0] == 0:
        raise InvalidArgument("stability needs at least one record")

    scores = []
    for row, record in enumerate(matrix):
        tops = [
            explainer.explain(record, seed=derive_seed(seed, f"stability.{row}.{run}")).ranking[:top_k]
            for run in range(repeats)
        ]
        scores.extend(jaccard(x, y) for x, y in itertools.combinations(tops, 2))
    logger.debug(f"Stability of {explainer.method_name} over {matrix.shape[0]} records: {np.mean(scores):.4f}")
    return float(np.mean(scores))
