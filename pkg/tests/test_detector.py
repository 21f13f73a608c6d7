import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.core.exceptions import DetectorNotFitted, DimensionError, EmptyDataset, InvalidArchitecture, InvalidArgument
from app.detector import Detector, build_autoencoder, classify, fit_threshold, residuals, train_detector
from app.detector.artifact import DetectorArtifact, load_detector, save_detector
from app.data.scaling import fit_minmax
from app.models.schemas import Activation, DetectorConfig, TrainConfig
from app.nn import init_network


def test_autoencoder_mirrors_encoder_sizes():
    net = build_autoencoder(DetectorConfig(layer_sizes=[8, 4, 2]))
    assert net.layer_sizes == [8, 4, 2, 4, 8]
    assert net.activation_tags == [Activation.TANH] * 3 + [Activation.SIGMOID]


@pytest.mark.parametrize("sizes", [[8], [4, 6]])
def test_autoencoder_rejects_bad_stacks(sizes):
    with pytest.raises(InvalidArchitecture):
        build_autoencoder(DetectorConfig(layer_sizes=sizes))


def test_detector_needs_matching_output():
    net = init_network([4, 2], [Activation.SIGMOID], seed=0)
    with pytest.raises(InvalidArchitecture):
        Detector(net)


@pytest.mark.parametrize("contamination,expected", [(0.01, 100.0), (0.05, 96.0), (0.5, 51.0)])
def test_threshold_is_kth_largest_score(contamination, expected):
    scores = np.arange(1, 101, dtype=np.float64)
    assert fit_threshold(np.random.default_rng(0).permutation(scores), contamination) == expected


def test_threshold_errors():
    with pytest.raises(EmptyDataset):
        fit_threshold([], 0.1)
    with pytest.raises(InvalidArgument):
        fit_threshold([1.0, 2.0], 1.0)


def test_unfitted_detector_cannot_classify():
    net = init_network([4, 2, 4], [Activation.TANH, Activation.SIGMOID], seed=0)
    det = Detector(net)
    assert not det.is_fitted
    with pytest.raises(DetectorNotFitted):
        classify(det, np.zeros(4))
    with pytest.raises(DetectorNotFitted):
        det.detect_batch(np.zeros((2, 4)))


def test_residuals_and_batch_scores_agree(detector, scaled):
    rows = scaled[:20]
    batch = detector.score_batch(rows)
    for row, score in zip(rows, batch):
        residual = residuals(detector, row)
        np.testing.assert_allclose(residual.squared, residual.signed ** 2)
        assert residual.score == pytest.approx(float(np.mean(residual.squared)), abs=1e-15)
        assert residual.score == pytest.approx(score, rel=1e-12)


def test_residuals_reject_wrong_length(detector):
    with pytest.raises(DimensionError):
        residuals(detector, np.zeros(detector.input_dim + 1))


def test_trained_threshold_flags_contamination_fraction(detector, scaled):
    scores, flags = detector.detect_batch(scaled)
    expected = math.ceil(round(detector.contamination * len(scaled), 9))
    assert int(flags.sum()) >= expected
    assert np.all(scores[flags] >= detector.threshold_delta)
    assert classify(detector, scaled[int(np.argmax(scores))]).is_anomaly


def test_training_rejects_too_few_rows(scaled):
    cfg = DetectorConfig(layer_sizes=[8, 4], train=TrainConfig(batch_size=64))
    with pytest.raises(InvalidArgument):
        train_detector(cfg, scaled[:10])


def test_training_rejects_wrong_width(scaled):
    with pytest.raises(DimensionError):
        train_detector(DetectorConfig(layer_sizes=[6, 3]), scaled)


def test_artifact_round_trip(tmp_path, detector, stats, scaled, bundle):
    scaler = fit_minmax(bundle.data)
    path = tmp_path / "detector.json"
    save_detector(DetectorArtifact(detector=detector, scaler=scaler, stats=stats, background=scaled[:5]), path)
    loaded = load_detector(path)

    assert loaded.detector.threshold_delta == detector.threshold_delta
    assert loaded.detector.feature_names == detector.feature_names
    assert np.array_equal(loaded.detector.reconstruct(scaled[:3]), detector.reconstruct(scaled[:3]))
    assert np.array_equal(loaded.scaler.min, scaler.min)
    assert np.array_equal(loaded.stats.std, stats.std)
    assert loaded.stats.mode == stats.mode
    assert np.array_equal(loaded.background, scaled[:5])


def test_tied_scores_give_the_shared_value():
    assert fit_threshold([1.0, 1.0, 1.0, 1.0], 0.25) == 1.0


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(0.0, 1e3), min_size=1, max_size=200),
    st.floats(0.001, 0.998),
    st.floats(0.0, 0.5)
)
def test_threshold_never_rises_with_contamination(scores, low, gap):
    high = min(low + gap, 0.999)
    assert fit_threshold(scores, high) <= fit_threshold(scores, low)


def test_retraining_with_the_same_seed_repeats_delta(scaled):
    cfg = DetectorConfig(
        layer_sizes=[8, 4],
        contamination=0.05,
        train=TrainConfig(learning_rate=0.5, epochs=2, batch_size=16, seed=9)
    )
    assert train_detector(cfg, scaled).threshold_delta == train_detector(cfg, scaled).threshold_delta


def test_single_record_reconstruction_matches_batch(detector, scaled):
    batch = detector.reconstruct(scaled[:6])
    for row, expected in zip(scaled[:6], batch):
        np.testing.assert_allclose(detector.reconstruct(row), expected, rtol=1e-12, atol=1e-14)
