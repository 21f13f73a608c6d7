import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import DegenerateVariance, EmptyEvaluationPool, SingularSystem, ZeroRelevanceMass
from app.core.seeding import derive_seed, numpy_rng
from app.data.generator import GroundTruth
from app.detector.autoencoder import Detector
from app.explain.base import BaseExplainer
from app.explain.exact import MAX_EXACT_FEATURES
from app.explain.factory import ExplainerFactory
from app.explain.rxp import ResidualStats
from app.evaluation.metrics import mean_average_precision, paired_t_test, precision_recall, ranking_stability
from app.evaluation.timing import time_explainer
from app.models.schemas import (
    EvalReport,
    ExplainerMethod,
    Explanation,
    MethodSummary,
    Query,
    RunConfig,
    RunMetadata,
    TTestResult,
)

logger = logging.getLogger(__name__)

_EXPLANATION_FAILURES = (SingularSystem, ZeroRelevanceMass)


@dataclass(eq=False)
class ProtocolInputs:
    detector: Detector
    stats: ResidualStats
    training: np.ndarray
    test_data: np.ndarray
    test_truth: GroundTruth
    # seeded shuffle of training rows; SHAP presets take their leading rows
    background: Optional[np.ndarray] = None


@dataclass(eq=False)
class ProtocolResult:
    report: EvalReport
    # record index -> method name -> explanation, for the chart samples
    charts: Dict[int, Dict[str, Explanation]] = field(default_factory=dict)


def protocol_methods(cfg: RunConfig, input_dim: int) -> List[ExplainerMethod]:
    if cfg.protocol.methods is not None:
        methods = list(dict.fromkeys(cfg.protocol.methods))
    else:
        methods = [ExplainerMethod.RXP] + [preset.name for preset in cfg.shap_presets]
    if ExplainerMethod.EXACT in methods and input_dim > MAX_EXACT_FEATURES:
        logger.warning(f"Dropping exact Shapley: {input_dim} features exceeds {MAX_EXACT_FEATURES}")
        methods.remove(ExplainerMethod.EXACT)
    return methods


def evaluation_pool(truth: GroundTruth, flags: np.ndarray, include_false_negatives: bool) -> Tuple[np.ndarray, int]:
    """
    Records whose explanations get ranked: detected faults, plus missed faults when asked.

    Returns:
        Tuple of (pool indices, number of false positives left out for lack of causes)
    """
    faults = truth.is_fault
    if not flags.any():
        raise EmptyEvaluationPool("the detector flagged no test record")
    selected = faults & flags
    if include_false_negatives:
        selected |= faults & ~flags
    pool = np.flatnonzero(selected)
    if pool.size == 0:
        raise EmptyEvaluationPool("no flagged record carries ground-truth causes")
    return pool, int(np.count_nonzero(flags & ~faults))


def _round_scores(
    explainer: BaseExplainer,
    data: np.ndarray,
    truth: GroundTruth,
    sample: np.ndarray,
    top_k: int,
    round_seed: int
) -> Tuple[float, int]:
    queries, failures = [], 0
    for position, record in enumerate(sample):
        record = int(record)
        try:
            expl = explainer.explain(data[record], seed=derive_seed(round_seed, f"{explainer.method_name}.{position}"))
        except _EXPLANATION_FAILURES as e:
            logger.warning(f"{explainer.method_name} failed on record {record}: {e}")
            failures += 1
            continue
        queries.append(Query(record=record, ranking=expl.ranking, relevant=list(truth.causes[record])))
    if not queries:
        return 0.0, failures
    # failed explanations count as AP 0
    return mean_average_precision(queries, top_k) * len(queries) / len(sample), failures


def _run_round(
    round_index: int,
    round_seed: int,
    explainers: Dict[str, BaseExplainer],
    inputs: ProtocolInputs,
    pool: np.ndarray,
    samples: int,
    top_k: int
) -> Dict[str, Tuple[float, int]]:
    sample = numpy_rng(round_seed).choice(pool, size=samples, replace=True)
    results = {
        name: _round_scores(explainer, inputs.test_data, inputs.test_truth, sample, top_k, round_seed)
        for name, explainer in explainers.items()
    }
    logger.debug(f"Round {round_index}: " + ", ".join(f"{name}={res[0]:.4f}" for name, res in results.items()))
    return results


def _pairwise(summaries: Dict[str, List[float]]) -> Dict[str, Optional[TTestResult]]:
    rxp = summaries.get(ExplainerMethod.RXP.value)
    pairwise: Dict[str, Optional[TTestResult]] = {}
    if rxp is None:
        return pairwise
    for name, per_round in summaries.items():
        if not ExplainerMethod(name).is_shap_preset:
            continue
        if len(per_round) < 2:
            pairwise[name] = None
            continue
        try:
            pairwise[name] = paired_t_test(rxp, per_round)
        except DegenerateVariance as e:
            logger.warning(f"No t-test for rxp vs {name}: {e}")
            pairwise[name] = None
    return pairwise


def run_protocol(cfg: RunConfig, inputs: ProtocolInputs) -> ProtocolResult:
    """
    Detect on the test split, then compare explainers on resampled fault records.

    Args:
        cfg: Run configuration; protocol, presets and seed are read from it
        inputs: Trained detector, fitted statistics and scaled splits

    Returns:
        ProtocolResult with the EvalReport and per-method explanations for chart records
    """
    protocol = cfg.protocol
    detector = inputs.detector

    # Step A: detection
    _, flags = detector.detect_batch(inputs.test_data)
    detection = precision_recall(inputs.test_truth.is_fault, flags)
    logger.info(
        f"Detection on {len(flags)} test records: precision={detection.precision:.4f} recall={detection.recall:.4f}"
    )

    pool, excluded = evaluation_pool(inputs.test_truth, flags, protocol.include_false_negatives)
    top_k = protocol.top_k or inputs.test_truth.subset(pool.tolist()).max_cause_count
    logger.info(f"Evaluation pool: {pool.size} fault records, {excluded} false positives excluded, top-{top_k}")

    methods = protocol_methods(cfg, detector.input_dim)
    explainers = {
        method.value: ExplainerFactory.create(
            method,
            detector,
            stats=inputs.stats,
            training=inputs.training,
            presets=cfg.shap_presets,
            seed=cfg.seed,
            background=inputs.background
        )
        for method in methods
    }

    # Step B: resampling rounds
    round_seeds = [derive_seed(cfg.seed, f"protocol.round.{r}") for r in range(protocol.rounds)]
    jobs = [
        (r, seed, explainers, inputs, pool, protocol.samples_per_round, top_k)
        for r, seed in enumerate(round_seeds)
    ]
    threads = get_settings().threads
    if threads > 0:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            rounds = list(executor.map(lambda job: _run_round(*job), jobs))
    else:
        rounds = [_run_round(*job) for job in jobs]

    # Step C: timing and stability, always serial
    timing_rows = inputs.test_data[pool[:protocol.timing_samples]]
    stability_rows = inputs.test_data[pool[:protocol.stability_records]]
    summaries: Dict[str, MethodSummary] = {}
    per_round: Dict[str, List[float]] = {}
    for name, explainer in explainers.items():
        scores = [result[name][0] for result in rounds]
        per_round[name] = scores
        timing = time_explainer(_safe_explain(explainer), timing_rows, protocol.timing_repeats)
        stability = None
        if len(stability_rows):
            try:
                stability = ranking_stability(
                    explainer,
                    stability_rows,
                    protocol.stability_repeats,
                    top_k,
                    seed=derive_seed(cfg.seed, f"stability.{name}")
                )
            except _EXPLANATION_FAILURES as e:
                logger.warning(f"No stability score for {name}: {e}")
        summaries[name] = MethodSummary(
            map=float(np.mean(scores)),
            map_std=float(np.std(scores, ddof=1)) if len(scores) > 1 else 0.0,
            per_round_map=scores,
            mean_response_ms=timing.mean_ms,
            std_response_ms=timing.std_ms,
            stability=stability,
            failures=sum(result[name][1] for result in rounds)
        )
        logger.info(
            f"{name}: MAP={summaries[name].map:.4f} (std {summaries[name].map_std:.4f}), "
            f"{timing.mean_ms:.3f} ms per explanation"
        )

    report = EvalReport(
        methods=summaries,
        pairwise=_pairwise(per_round),
        detection=detection,
        runs=RunMetadata(
            seed=cfg.seed,
            rounds=protocol.rounds,
            samples_per_round=protocol.samples_per_round,
            top_k=top_k,
            pool_size=int(pool.size),
            false_positives_excluded=excluded,
            round_seeds=round_seeds
        )
    )
    return ProtocolResult(report=report, charts=_chart_explanations(explainers, inputs.test_data, pool, protocol.chart_samples, cfg.seed))


def _safe_explain(explainer: BaseExplainer):
    def explain(record: np.ndarray) -> Optional[Explanation]:
        try:
            return explainer.explain(record)
        except _EXPLANATION_FAILURES:
            return None

    return explain


def _chart_explanations(
    explainers: Dict[str, BaseExplainer],
    data: np.ndarray,
    pool: Sequence[int],
    count: int,
    seed: int
) -> Dict[int, Dict[str, Explanation]]:
    charts: Dict[int, Dict[str, Explanation]] = {}
    for record in list(pool)[:count]:
        record = int(record)
        charts[record] = {}
        for name, explainer in explainers.items():
            try:
                charts[record][name] = explainer.explain(data[record], seed=derive_seed(seed, f"chart.{record}"))
            except _EXPLANATION_FAILURES as e:
                logger.warning(f"No chart for {name} on record {record}: {e}")
    return charts
