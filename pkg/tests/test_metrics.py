from typing import Optional

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as scipy_stats

from app.core.exceptions import DegenerateVariance, DimensionError, InvalidArgument, InvalidQuery
from app.evaluation import (
    average_precision,
    mean_average_precision,
    paired_t_test,
    precision_recall,
    ranking_stability,
    time_explainer,
)
from app.evaluation.metrics import jaccard, student_t_two_sided
from app.explain.base import BaseExplainer, build_explanation
from app.models.schemas import Explanation, ExplanationMethod, Query


def _recall_increment_ap(ranking, relevant):
    # sum over positions of (S_k - S_{k-1}) * P_k
    hits, previous_recall, total = 0, 0.0, 0.0
    for k, item in enumerate(ranking, start=1):
        hits += item in relevant
        recall = hits / len(relevant)
        total += (recall - previous_recall) * (hits / k)
        previous_recall = recall
    return total


def test_average_precision_examples():
    assert average_precision(Query(record=0, ranking=[0, 1, 2], relevant=[0])) == 1.0
    assert average_precision(Query(record=0, ranking=[1, 0], relevant=[0])) == 0.5
    assert average_precision(Query(record=0, ranking=[0, 2, 1], relevant=[0, 1])) == pytest.approx(0.8333, abs=1e-4)


def test_truncated_ranking_gives_missing_items_zero_precision():
    query = Query(record=0, ranking=[0, 2, 1], relevant=[0, 1])
    assert average_precision(query, top_k=2) == 0.5
    assert average_precision(Query(record=0, ranking=[3, 2, 1], relevant=[0]), top_k=3) == 0.0


def test_empty_relevant_set_is_invalid():
    with pytest.raises(InvalidQuery):
        average_precision(Query(record=0, ranking=[0, 1], relevant=[]))


@settings(max_examples=1000, deadline=None)
@given(
    st.integers(2, 20).flatmap(lambda m: st.tuples(
        st.permutations(list(range(m))),
        st.sets(st.integers(0, m - 1), min_size=1),
    ))
)
def test_both_average_precision_formulas_agree(case):
    ranking, relevant = case
    ap = average_precision(Query(record=0, ranking=ranking, relevant=sorted(relevant)))
    assert ap == pytest.approx(_recall_increment_ap(ranking, relevant), abs=1e-12)
    assert 0.0 <= ap <= 1.0
    assert (ap == pytest.approx(1.0, abs=1e-12)) == (set(ranking[:len(relevant)]) == relevant)


def test_mean_average_precision():
    perfect = Query(record=0, ranking=[0, 1], relevant=[0])
    half = Query(record=1, ranking=[1, 0], relevant=[0])
    assert mean_average_precision([perfect]) == 1.0
    assert mean_average_precision([perfect, half]) == 0.75
    assert mean_average_precision([half, perfect]) == 0.75
    with pytest.raises(InvalidArgument):
        mean_average_precision([])


def test_precision_recall_examples():
    same = precision_recall([1, 0, 1], [1, 0, 1])
    assert same.precision == same.recall == 1.0
    mixed = precision_recall([1, 1, 0, 0], [1, 0, 1, 0])
    assert (mixed.precision, mixed.recall) == (0.5, 0.5)
    assert (mixed.tp, mixed.fp, mixed.fn, mixed.tn) == (1, 1, 1, 1)
    none = precision_recall([1, 0], [0, 0])
    assert not none.precision_defined and none.precision == 0.0
    assert none.recall_defined and none.recall == 0.0
    with pytest.raises(DimensionError):
        precision_recall([1, 0], [1])


def test_paired_t_test_examples():
    same = paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert (same.t_statistic, same.p_value, same.dof) == (0.0, 1.0, 2)
    result = paired_t_test([2.0, 4.0, 6.0], [1.0, 2.0, 3.0])
    assert result.t_statistic == pytest.approx(3.4641, abs=1e-4)
    assert result.dof == 2


def test_t_table_value():
    assert student_t_two_sided(2.776, 4) == pytest.approx(0.05, abs=1e-3)


def test_paired_t_test_matches_scipy(rng):
    a = rng.normal(size=25)
    b = a + rng.normal(loc=0.2, size=25)
    ours = paired_t_test(a, b)
    reference = scipy_stats.ttest_rel(a, b)
    assert ours.t_statistic == pytest.approx(reference.statistic, rel=1e-10)
    assert ours.p_value == pytest.approx(reference.pvalue, rel=1e-8)


def test_paired_t_test_errors():
    with pytest.raises(DegenerateVariance):
        paired_t_test([2.0, 3.0], [1.0, 2.0])
    with pytest.raises(DimensionError):
        paired_t_test([1.0, 2.0], [1.0])
    with pytest.raises(InvalidArgument):
        paired_t_test([1.0], [2.0])


@given(st.integers(1, 50), st.floats(0.0, 20.0), st.floats(0.0, 20.0))
def test_p_value_decreases_with_abs_t(dof, t1, t2):
    low, high = sorted((t1, t2))
    assert student_t_two_sided(high, dof) <= student_t_two_sided(low, dof) + 1e-12
    assert student_t_two_sided(-high, dof) == student_t_two_sided(high, dof)


def test_time_explainer_counts_and_excludes_warm_up():
    calls = []
    result = time_explainer(lambda x: calls.append(x), np.zeros((4, 3)), repeats=2)
    assert len(result.per_sample_ms) == 8
    assert len(calls) == 9
    assert result.mean_ms >= 0


def test_single_timed_call_has_zero_std():
    result = time_explainer(lambda x: None, np.zeros((1, 3)), repeats=1)
    assert result.std_ms == 0.0
    with pytest.raises(InvalidArgument):
        time_explainer(lambda x: None, np.zeros((1, 3)), repeats=0)


class _SeededExplainer(BaseExplainer):
    """Random relevance per seed; constant when fixed."""

    def __init__(self, fixed: bool):
        self.fixed = fixed

    def explain(self, x: np.ndarray, seed: Optional[int] = None) -> Explanation:
        rng = np.random.default_rng(0 if self.fixed else seed)
        relevance = rng.dirichlet(np.ones(len(x)))
        return build_explanation(ExplanationMethod.KERNEL_SHAP, relevance, 0)

    @property
    def method_name(self) -> str:
        return "seeded"


def test_ranking_stability():
    records = np.zeros((3, 12))
    assert ranking_stability(_SeededExplainer(fixed=True), records, repeats=4, top_k=3) == 1.0
    unstable = ranking_stability(_SeededExplainer(fixed=False), records, repeats=4, top_k=3, seed=1)
    assert 0.0 <= unstable < 1.0
    with pytest.raises(InvalidArgument):
        ranking_stability(_SeededExplainer(fixed=True), records, repeats=1, top_k=3)


def test_jaccard():
    assert jaccard([1, 2], [2, 3]) == pytest.approx(1 / 3)
    assert jaccard([], []) == 1.0
