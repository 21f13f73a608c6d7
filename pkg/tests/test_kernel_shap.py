import numpy as np
import pytest

from app.core.exceptions import InvalidArgument, TooManyFeatures
from app.detector import Detector
from app.explain import (
    ExactShapleyExplainer,
    ExplainerFactory,
    KernelShapExplainer,
    RXPExplainer,
    exact_shapley,
    kernel_shap_explain,
    kernel_shap_values,
    masked_eval,
    sample_coalitions,
    score_fn,
    shap_kernel_weight,
)
from app.explain.kernel_shap import _size_distribution
from app.models.schemas import Activation, ExplainerMethod, ExplanationMethod, ShapConfig, ShapPreset
from app.nn import init_network


def _quadratic_game(rng, M):
    A = rng.normal(size=(M, M))
    w = rng.normal(size=M)

    def f(z):
        z = np.atleast_2d(z)
        return np.einsum("ni,ij,nj->n", z, A, z) + z @ w

    return f


def _linear_game(w):
    def f(z):
        return np.atleast_2d(z) @ w

    return f


def test_kernel_weight_values():
    assert shap_kernel_weight(4, 1) == pytest.approx(3 / (4 * 1 * 3))
    assert shap_kernel_weight(4, 2) == pytest.approx(3 / (6 * 2 * 2))
    assert shap_kernel_weight(4, 0) == shap_kernel_weight(4, 4) == 1e6
    with pytest.raises(InvalidArgument):
        shap_kernel_weight(4, 5)


def test_sampled_coalitions_shape_and_anchors():
    masks = sample_coalitions(10, 50, seed=3)
    assert masks.shape == (50, 10)
    assert masks[0].all() and not masks[1].any()
    sizes = masks[2:].sum(axis=1)
    assert sizes.min() >= 1 and sizes.max() <= 9
    assert np.array_equal(masks, sample_coalitions(10, 50, seed=3))
    assert sample_coalitions(1, 10, seed=0).shape == (2, 1)


def test_masked_eval_mixes_record_and_background():
    f = _linear_game(np.array([1.0, 10.0, 100.0]))
    x = np.array([1.0, 1.0, 1.0])
    background = np.array([[0.0, 0.0, 0.0], [2.0, 2.0, 2.0]])
    assert masked_eval(f, x, background, [True, False, False]) == pytest.approx(1.0 + 110.0)
    assert masked_eval(f, x, background, [True, True, True]) == pytest.approx(111.0)


def test_exact_shapley_axioms():
    rng = np.random.default_rng(8)
    for _ in range(100):
        M = int(rng.integers(2, 9))
        f = _quadratic_game(rng, M)
        x = rng.normal(size=M)
        background = rng.normal(size=(int(rng.integers(1, 4)), M))
        phi = exact_shapley(f, x, background)
        phi0 = float(np.mean(f(background)))
        assert abs(phi.sum() - (f(x)[0] - phi0)) < 1e-10


def test_exact_shapley_symmetry_and_dummy():
    def f(z):
        z = np.atleast_2d(z)
        return z[:, 0] * z[:, 1] + 3.0 * z[:, 2]

    x = np.array([2.0, 2.0, 1.0, 5.0])
    background = np.array([[0.5, 0.5, 0.0, -1.0], [1.0, 1.0, 2.0, 3.0]])
    phi = exact_shapley(f, x, background)
    assert phi[0] == pytest.approx(phi[1], abs=1e-12)
    assert phi[3] == pytest.approx(0.0, abs=1e-12)


def test_exact_shapley_refuses_wide_inputs():
    with pytest.raises(TooManyFeatures):
        exact_shapley(_linear_game(np.ones(13)), np.zeros(13), np.zeros((1, 13)))


def test_enumerated_kernel_shap_recovers_exact_values():
    rng = np.random.default_rng(5)
    errors, scales = [], []
    for seed in range(30):
        f = _quadratic_game(rng, 8)
        x = rng.normal(size=8)
        background = rng.normal(size=(3, 8))
        exact = exact_shapley(f, x, background)
        phi, _, _ = kernel_shap_values(f, x, background, n_coalition_samples=2 ** 8, seed=seed)
        errors.append(np.mean(np.abs(phi - exact)))
        scales.append(np.mean(np.abs(exact)))
    assert np.mean(errors) < 0.05 * np.mean(scales)


def test_sampled_kernel_shap_is_exact_for_additive_games():
    rng = np.random.default_rng(6)
    w = rng.normal(size=12)
    x = rng.normal(size=12)
    background = rng.normal(size=(4, 12))
    phi, phi0, fx = kernel_shap_values(_linear_game(w), x, background, n_coalition_samples=200, seed=1)
    np.testing.assert_allclose(phi, w * (x - background.mean(axis=0)), atol=1e-6)
    assert phi0 == pytest.approx(float(np.mean(background @ w)))
    assert fx == pytest.approx(float(x @ w))


def test_local_accuracy_on_detector_score(detector, scaled):
    f = score_fn(detector)
    phi, phi0, fx = kernel_shap_values(f, scaled[0], scaled[10:20], n_coalition_samples=30, seed=4)
    assert phi.sum() == pytest.approx(fx - phi0, abs=1e-8)
    assert phi0 == pytest.approx(float(np.mean(detector.score_batch(scaled[10:20]))), abs=1e-12)


def test_single_feature_game():
    f = _linear_game(np.array([2.0]))
    phi, phi0, fx = kernel_shap_values(f, np.array([3.0]), np.array([[1.0]]), n_coalition_samples=2, seed=0)
    assert phi[0] == pytest.approx(4.0)
    assert phi0 == pytest.approx(2.0)


def test_too_few_coalitions(detector, scaled):
    with pytest.raises(InvalidArgument):
        kernel_shap_values(score_fn(detector), scaled[0], scaled[:5], n_coalition_samples=5, seed=0)


def test_same_seed_same_explanation(detector, scaled):
    cfg = ShapConfig(n_coalition_samples=30, n_background=8, seed=17)
    a = kernel_shap_explain(detector, scaled[2], scaled, cfg)
    b = kernel_shap_explain(detector, scaled[2], scaled, cfg)
    assert a.relevance == b.relevance
    assert a.method == ExplanationMethod.KERNEL_SHAP
    assert sum(a.relevance) == pytest.approx(1.0)
    assert a.phi0 is not None and len(a.phi_raw) == detector.input_dim


def test_different_seeds_change_rankings_on_wide_inputs():
    net = init_network([64, 16, 64], [Activation.TANH, Activation.SIGMOID], seed=2)
    det = Detector(net)
    rng = np.random.default_rng(9)
    training = rng.uniform(size=(200, 64))
    x = rng.uniform(size=64)
    differing = 0
    for trial in range(20):
        a = kernel_shap_explain(det, x, training, ShapConfig(n_coalition_samples=80, n_background=10, seed=2 * trial))
        b = kernel_shap_explain(det, x, training, ShapConfig(n_coalition_samples=80, n_background=10, seed=2 * trial + 1))
        differing += a.ranking != b.ranking
    assert differing >= 1


def test_explainer_seed_controls_sampling(detector, scaled):
    explainer = KernelShapExplainer(detector, scaled, ShapConfig(n_coalition_samples=20, n_background=5, seed=1))
    assert explainer.explain(scaled[0], seed=3).relevance == explainer.explain(scaled[0], seed=3).relevance
    assert not explainer.is_deterministic


def test_exact_explainer_matches_enumerated_kernel_shap(detector, scaled):
    exact = ExactShapleyExplainer(detector, scaled, n_background=6, seed=0)
    expl = exact.explain(scaled[1])
    f = score_fn(detector)
    phi, _, _ = kernel_shap_values(f, scaled[1], exact.background, n_coalition_samples=2 ** 8, seed=0)
    np.testing.assert_allclose(expl.phi_raw, phi, atol=1e-6)
    assert expl.method == ExplanationMethod.EXACT_SHAPLEY


def test_factory_builds_each_method(detector, stats, scaled):
    presets = [ShapPreset(name="shap3", n_coalition_samples=20, n_background=5)]
    assert isinstance(ExplainerFactory.create(ExplainerMethod.RXP, detector, stats=stats), RXPExplainer)
    shap = ExplainerFactory.create(ExplainerMethod.SHAP3, detector, training=scaled, presets=presets, seed=1)
    assert isinstance(shap, KernelShapExplainer) and shap.method_name == "shap3"
    assert isinstance(ExplainerFactory.create("exact", detector, training=scaled), ExactShapleyExplainer)
    with pytest.raises(InvalidArgument):
        ExplainerFactory.create(ExplainerMethod.SHAP1, detector, training=scaled, presets=presets)
    with pytest.raises(InvalidArgument):
        ExplainerFactory.create(ExplainerMethod.RXP, detector)


def test_available_methods_report():
    presets = [ShapPreset(name="shap1", n_coalition_samples=200, n_background=50)]
    status = ExplainerFactory.get_available_methods(64, presets)
    assert status["rxp"]["available"]
    assert not status["exact"]["available"]
    assert status["shap1"]["available"]
    assert not status["shap2"]["available"]


def test_sampled_estimates_converge_towards_exact_values():
    rng = np.random.default_rng(12)
    budgets = (2 ** 8 // 8, 2 ** 8 // 4, 2 ** 8)
    errors = {n: [] for n in budgets}
    for seed in range(20):
        f = _quadratic_game(rng, 8)
        x = rng.normal(size=8)
        background = rng.normal(size=(3, 8))
        exact = exact_shapley(f, x, background)
        scale = np.mean(np.abs(exact))
        for n in budgets:
            phi, _, _ = kernel_shap_values(f, x, background, n_coalition_samples=n, seed=seed)
            errors[n].append(np.mean(np.abs(phi - exact)) / scale)
    means = [np.mean(errors[n]) for n in budgets]
    assert means[0] > means[1] > means[2]
    assert means[2] < 0.05


def test_coalition_sizes_follow_kernel_mass():
    M = 10
    masks = sample_coalitions(M, 100_002, seed=21)
    sizes = masks[2:].sum(axis=1)
    empirical = np.bincount(sizes, minlength=M)[1:M] / sizes.size
    total_variation = 0.5 * np.abs(empirical - _size_distribution(M)).sum()
    assert total_variation < 0.02


def test_enumerated_additive_game_matches_closed_form():
    rng = np.random.default_rng(13)
    c = rng.normal(size=6)
    x = rng.normal(size=6)
    background = rng.normal(size=(5, 6))
    expected = c * (x - background.mean(axis=0))
    phi, _, _ = kernel_shap_values(_linear_game(c), x, background, n_coalition_samples=2 ** 6, seed=0)
    exact = exact_shapley(_linear_game(c), x, background)
    np.testing.assert_allclose(exact, expected, atol=1e-10)
    assert np.all(np.abs(phi - exact) <= 0.05 * np.abs(exact) + 1e-9)


def test_wide_inputs_solve_for_selected_features_only():
    net = init_network([64, 16, 64], [Activation.TANH, Activation.SIGMOID], seed=4)
    det = Detector(net)
    rng = np.random.default_rng(14)
    background = rng.uniform(size=(10, 64))
    x = rng.uniform(size=64)
    phi, phi0, fx = kernel_shap_values(score_fn(det), x, background, n_coalition_samples=80, seed=3, max_features=10)
    assert 1 <= np.count_nonzero(phi) <= 10
    assert phi.sum() == pytest.approx(fx - phi0, abs=1e-8)

    full, _, _ = kernel_shap_values(score_fn(det), x, background, n_coalition_samples=80, seed=3)
    assert np.count_nonzero(full) > 10


def test_selection_keeps_the_features_that_carry_the_game():
    w = np.zeros(30)
    w[[4, 17]] = [5.0, 3.0]
    rng = np.random.default_rng(15)
    background = rng.normal(size=(4, 30))
    x = rng.normal(size=30)
    x[[4, 17]] = background[:, [4, 17]].mean(axis=0) + 2.0
    phi, _, _ = kernel_shap_values(_linear_game(w), x, background, n_coalition_samples=200, seed=2, max_features=10)
    np.testing.assert_allclose(phi[[4, 17]], w[[4, 17]] * (x - background.mean(axis=0))[[4, 17]], atol=1e-6)
    assert np.all(np.abs(np.delete(phi, [4, 17])) < 1e-6)


def test_stored_background_is_used_as_is(detector, scaled):
    presets = [ShapPreset(name="shap3", n_coalition_samples=20, n_background=5)]
    shap = ExplainerFactory.create(ExplainerMethod.SHAP3, detector, presets=presets, seed=1, background=scaled[:12])
    assert np.array_equal(shap.background, scaled[:5])
    exact = ExplainerFactory.create(ExplainerMethod.EXACT, detector, background=scaled[:12])
    assert exact.background.shape == (12, 8)
    with pytest.raises(InvalidArgument):
        KernelShapExplainer(detector, scaled[:3], ShapConfig(n_coalition_samples=20, n_background=5, seed=0), shuffled=True)
