# tests/test_latent_analysis.py
import numpy as np
import pytest
from scipy.special import logsumexp

from src.latent_analysis import (
    ConvergenceError,
    GaussianMixture,
    active_units,
    encode_dataset,
    fit_gmm,
    per_unit_kl,
    sample_gmm,
)
from src.latent_analysis import gmm as gmm_module


def _two_clusters(rng, count=400):
    half = count // 2
    return np.vstack([
        rng.normal([-4.0, 0.0], 0.5, size=(half, 2)),
        rng.normal([4.0, 1.0], 0.5, size=(count - half, 2)),
    ])


def test_fit_recovers_two_separated_clusters(rng):
    mixture = fit_gmm(_two_clusters(rng), n_components=2, seed=0)
    order = np.argsort(mixture.means[:, 0])
    np.testing.assert_allclose(mixture.means[order], [[-4.0, 0.0], [4.0, 1.0]], atol=0.15)
    np.testing.assert_allclose(mixture.weights, [0.5, 0.5], atol=0.02)
    for j in range(2):
        np.testing.assert_allclose(np.diag(mixture.covariances[j]), [0.25, 0.25], atol=0.08)


@pytest.mark.parametrize("problem", range(20))
def test_em_log_likelihood_never_decreases(problem, monkeypatch):
    rng = np.random.default_rng(100 + problem)
    latents = rng.standard_normal((120, 3)) * rng.uniform(0.5, 2.0, size=3)
    latents[:40] += 3.0
    history = []
    original = gmm_module._m_step

    def recording_m_step(points, resp, previous, floor, covariance_type):
        mixture = original(points, resp, previous, floor, covariance_type)
        history.append(float(np.mean(logsumexp(mixture.component_log_prob(points), axis=1))))
        return mixture

    monkeypatch.setattr(gmm_module, "_m_step", recording_m_step)
    fit_gmm(latents, n_components=3, max_iters=50, tol=0.0, seed=problem)
    # the first entry follows the hard initial assignment
    diffs = np.diff(history[1:])
    assert np.all(diffs >= -1e-9 * np.maximum(1.0, np.abs(history[2:])))


def test_fit_rejects_fewer_points_than_components(rng):
    with pytest.raises(ValueError, match="at least"):
        fit_gmm(rng.standard_normal((3, 2)), n_components=5)


def test_fit_rejects_non_finite_latents():
    latents = np.zeros((10, 2))
    latents[3, 1] = np.nan
    with pytest.raises(ValueError):
        fit_gmm(latents, n_components=2)


def test_fit_is_deterministic_for_a_seed(rng):
    latents = _two_clusters(rng, 200)
    a, b = fit_gmm(latents, 3, seed=9), fit_gmm(latents, 3, seed=9)
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.covariances, b.covariances)


def test_diag_covariances_stay_diagonal(rng):
    mixture = fit_gmm(_two_clusters(rng), n_components=2, covariance_type="diag", seed=1)
    for cov in mixture.covariances:
        np.testing.assert_array_equal(cov, np.diag(np.diag(cov)))


def test_covariances_respect_the_floor():
    latents = np.repeat(np.array([[1.0, 1.0], [5.0, 5.0]]), 10, axis=0)
    mixture = fit_gmm(latents, n_components=2, seed=0)
    for cov in mixture.covariances:
        assert np.min(np.linalg.eigvalsh(cov)) >= gmm_module.COVARIANCE_FLOOR * (1 - 1e-9)


def test_sampling_reproduces_mixture_moments():
    mixture = GaussianMixture(
        weights=[0.3, 0.7],
        means=[[-2.0, 0.0], [1.0, 3.0]],
        covariances=[np.eye(2) * 0.5, [[1.0, 0.4], [0.4, 0.8]]],
    )
    samples = sample_gmm(mixture, 200000, seed=4)
    expected_mean = 0.3 * np.array([-2.0, 0.0]) + 0.7 * np.array([1.0, 3.0])
    np.testing.assert_allclose(samples.mean(axis=0), expected_mean, atol=0.02)
    second = 0.3 * (np.eye(2) * 0.5 + np.outer([-2.0, 0.0], [-2.0, 0.0])) + \
        0.7 * (np.array([[1.0, 0.4], [0.4, 0.8]]) + np.outer([1.0, 3.0], [1.0, 3.0]))
    expected_cov = second - np.outer(expected_mean, expected_mean)
    np.testing.assert_allclose(np.cov(samples, rowvar=False), expected_cov, atol=0.05)


def test_sampling_is_deterministic_for_a_seed():
    mixture = GaussianMixture(weights=[1.0], means=[[0.0]], covariances=[[[2.0]]])
    np.testing.assert_array_equal(sample_gmm(mixture, 10, 3), sample_gmm(mixture, 10, 3))


def test_mixture_validates_weights():
    with pytest.raises(ValueError):
        GaussianMixture(weights=[0.6, 0.6], means=np.zeros((2, 1)), covariances=np.ones((2, 1, 1)))


def test_convergence_error_is_a_runtime_error():
    assert issubclass(ConvergenceError, RuntimeError)


# --- active units ---

def test_collapsed_unit_is_flagged():
    mu = np.zeros((50, 3))
    mu[:, 0] = np.linspace(-2.0, 2.0, 50)
    logvar = np.zeros((50, 3))
    logvar[:, 1] = -1.0
    kl = per_unit_kl(mu, logvar)
    assert kl[2] < 1e-9
    count, collapsed = active_units(kl, threshold=0.01)
    assert count == 2
    np.testing.assert_array_equal(collapsed, [False, False, True])


def test_active_units_threshold_must_be_positive():
    with pytest.raises(ValueError):
        active_units(np.ones(3), threshold=0.0)


def test_encode_dataset_matches_direct_encoding(make_model, rng):
    model = make_model(latent_dim=3)
    images = rng.random((10, 8, 8, 1))
    batch = encode_dataset(model, images, batch_size=4)
    assert batch.count == 10 and batch.dim == 3
    direct = model.encode(images, training=False)
    np.testing.assert_allclose(batch.codes, direct.mu.data, atol=1e-12)
    np.testing.assert_allclose(batch.kl_per_unit, per_unit_kl(direct.mu.data, direct.logvar.data), atol=1e-12)
    assert encode_dataset(model, images, limit=6).count == 6


def test_single_component_fit_is_the_sample_moments(rng):
    latents = rng.standard_normal((300, 3)) @ np.array([[1.0, 0.3, 0.0], [0.0, 0.8, 0.2], [0.0, 0.0, 0.5]])
    mixture = fit_gmm(latents, 1, seed=4)
    np.testing.assert_allclose(mixture.weights, [1.0])
    np.testing.assert_allclose(mixture.means[0], latents.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(mixture.covariances[0], np.cov(latents, rowvar=False, bias=True), atol=1e-10)


def test_refit_on_own_samples_keeps_the_log_likelihood(rng):
    latents = _two_clusters(rng)
    mixture = fit_gmm(latents, 2, seed=1)
    refit = fit_gmm(sample_gmm(mixture, 4000, seed=6), 2, seed=1)
    original, refitted = mixture.log_likelihood(latents), refit.log_likelihood(latents)
    assert abs(refitted - original) <= 0.05 * abs(original)


def test_active_units_ignore_unit_order():
    kl = np.array([0.5, 0.001, 2.0, 0.0, 0.02])
    count, collapsed = active_units(kl)
    permutation = np.array([3, 0, 4, 2, 1])
    permuted_count, permuted_collapsed = active_units(kl[permutation])
    assert permuted_count == count == 3
    np.testing.assert_array_equal(permuted_collapsed, collapsed[permutation])


def test_zero_weight_component_is_never_sampled():
    mixture = GaussianMixture(weights=[1.0, 0.0], means=np.array([[0.0, 0.0], [100.0, 100.0]]),
                              covariances=np.stack([np.eye(2), np.eye(2)]))
    samples = sample_gmm(mixture, 2000, seed=9)
    assert np.all(np.abs(samples) < 10.0)
    np.testing.assert_allclose(samples.mean(axis=0), [0.0, 0.0], atol=0.1)
