# tests/test_fid_metric.py
import numpy as np
import pytest
from scipy.stats import ortho_group

from src.data_management.persistence import save_matrix
from src.fid_metric import (
    FeatureMatrix,
    FromFileExtractor,
    PCAExtractor,
    RandomConvExtractor,
    build_extractor,
    fid_between_sets,
    fid_from_features,
    frechet_distance,
    gaussian_stats,
    parse_extractor_spec,
    sqrtm_psd,
)


def _random_spd(rng, d):
    a = rng.standard_normal((d, d))
    return a @ a.T + 0.1 * np.eye(d)


def test_identical_statistics_give_zero(rng):
    mu, cov = rng.standard_normal(5), _random_spd(rng, 5)
    report = frechet_distance((mu, cov), (mu, cov))
    assert abs(report.fid) < 1e-8


def test_one_dimensional_shift():
    report = frechet_distance((np.array([0.0]), np.array([[1.0]])), (np.array([1.0]), np.array([[1.0]])))
    assert report.fid == pytest.approx(1.0)
    assert report.mean_term == pytest.approx(1.0)
    assert report.trace_term == pytest.approx(0.0, abs=1e-12)


def test_diagonal_covariances_match_closed_form():
    rng = np.random.default_rng(7)
    for _ in range(50):
        d = int(rng.integers(1, 9))
        mu1, mu2 = rng.standard_normal(d), rng.standard_normal(d)
        a, b = rng.uniform(0.1, 3.0, size=d), rng.uniform(0.1, 3.0, size=d)
        expected = np.sum((mu1 - mu2) ** 2) + np.sum((np.sqrt(a) - np.sqrt(b)) ** 2)
        report = frechet_distance((mu1, np.diag(a)), (mu2, np.diag(b)))
        assert report.fid == pytest.approx(expected, abs=1e-8)


def test_distance_is_symmetric(rng):
    s1 = (rng.standard_normal(4), _random_spd(rng, 4))
    s2 = (rng.standard_normal(4), _random_spd(rng, 4))
    assert frechet_distance(s1, s2).fid == pytest.approx(frechet_distance(s2, s1).fid, rel=1e-8)


def test_distance_is_rotation_invariant(rng):
    features_a = rng.standard_normal((200, 6))
    features_b = rng.standard_normal((200, 6)) * 1.5 + 0.3
    rotation = ortho_group.rvs(6, random_state=3)
    plain = fid_from_features(FeatureMatrix(features_a), FeatureMatrix(features_b)).fid
    rotated = fid_from_features(FeatureMatrix(features_a @ rotation), FeatureMatrix(features_b @ rotation)).fid
    assert rotated == pytest.approx(plain, rel=1e-8)


def test_gaussian_stats_of_two_points():
    mu, cov = gaussian_stats(FeatureMatrix([[0.0], [2.0]]))
    np.testing.assert_allclose(mu, [1.0])
    np.testing.assert_allclose(cov, [[2.0]])


def test_gaussian_stats_needs_two_rows():
    with pytest.raises(ValueError):
        gaussian_stats(FeatureMatrix([[1.0, 2.0]]))


def test_gaussian_stats_shrinks_rank_deficient_covariance(rng):
    _, cov = gaussian_stats(FeatureMatrix(rng.standard_normal((3, 5))))
    assert np.min(np.linalg.eigvalsh(cov)) > 0.0


def test_sqrtm_psd_squares_back(rng):
    matrix = _random_spd(rng, 4)
    root = sqrtm_psd(matrix)
    np.testing.assert_allclose(root @ root, matrix, atol=1e-10)


def test_sqrtm_psd_rejects_asymmetric_input():
    with pytest.raises(ValueError):
        sqrtm_psd(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_dimension_mismatch_is_rejected(rng):
    with pytest.raises(ValueError):
        fid_from_features(FeatureMatrix(rng.random((5, 2))), FeatureMatrix(rng.random((5, 3))))


def test_non_finite_statistics_are_rejected():
    with pytest.raises(ValueError):
        frechet_distance((np.array([np.inf]), np.eye(1)), (np.zeros(1), np.eye(1)))


# --- extractors ---

@pytest.mark.parametrize("spec, expected", [
    ("identity", ("identity", None)),
    ("pca(16)", ("pca", 16)),
    ("random_conv(64)", ("random_conv", 64)),
    ("from_file:/tmp/features.svmx", ("from_file", "/tmp/features.svmx")),
])
def test_parse_extractor_spec(spec, expected):
    assert parse_extractor_spec(spec) == expected


@pytest.mark.parametrize("spec", ["pca", "pca(0)", "pca(x)", "inception", "from_file:"])
def test_parse_extractor_spec_rejects_malformed(spec):
    with pytest.raises(ValueError):
        parse_extractor_spec(spec)


def test_pca_must_be_fitted_first(rng):
    with pytest.raises(RuntimeError):
        PCAExtractor(2).extract(rng.random((4, 3, 3, 1)))


def test_pca_features_of_the_reference_are_centered(rng):
    images = rng.random((30, 4, 4, 1))
    features = PCAExtractor(3).fit(images).extract(images)
    assert features.values.shape == (30, 3)
    np.testing.assert_allclose(features.values.mean(axis=0), 0.0, atol=1e-12)


def test_random_conv_depends_only_on_seed(rng):
    images = rng.random((5, 8, 8, 1))
    a = RandomConvExtractor(4, seed=2).extract(images).values
    b = RandomConvExtractor(4, seed=2).extract(images).values
    c = RandomConvExtractor(4, seed=3).extract(images).values
    assert a.shape == (5, 4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_dataset_against_itself_scores_zero(rng):
    images = rng.random((60, 4, 4, 1))
    extractor = build_extractor("pca(4)").fit(images)
    assert fid_between_sets(images, images, extractor).fid < 1e-6


def test_shifted_images_score_higher(rng):
    images = rng.random((60, 4, 4, 1))
    extractor = build_extractor("identity")
    near = fid_between_sets(images, rng.random((60, 4, 4, 1)), extractor).fid
    far = fid_between_sets(images, rng.random((60, 4, 4, 1)) * 0.2, extractor).fid
    assert far > near


def test_from_file_extractor_reads_matrix(tmp_path, rng):
    values = rng.standard_normal((12, 3))
    path = save_matrix(values, str(tmp_path / "features.svmx"))
    extractor = build_extractor(f"from_file:{path}")
    assert isinstance(extractor, FromFileExtractor)
    np.testing.assert_array_equal(extractor.extract().values, values)
    with pytest.raises(ValueError):
        FromFileExtractor(path, expected_dim=4).extract()


def test_from_file_extractor_refuses_images(tmp_path, rng):
    path = save_matrix(rng.standard_normal((20, 3)), str(tmp_path / "features.svmx"))
    extractor = build_extractor(f"from_file:{path}")
    low, high = rng.uniform(0.0, 0.1, (20, 8, 8, 1)), rng.uniform(0.9, 1.0, (20, 8, 8, 1))
    with pytest.raises(ValueError, match="cannot featurize"):
        fid_between_sets(low, high, extractor)


def test_distance_is_translation_invariant(rng):
    features_a = rng.standard_normal((150, 5))
    features_b = rng.standard_normal((150, 5)) * 0.7 - 0.4
    shift = rng.uniform(-10.0, 10.0, size=5)
    plain = fid_from_features(FeatureMatrix(features_a), FeatureMatrix(features_b)).fid
    moved = fid_from_features(FeatureMatrix(features_a + shift), FeatureMatrix(features_b + shift)).fid
    assert moved == pytest.approx(plain, abs=1e-8)


def test_pca_components_are_orthonormal(rng):
    extractor = PCAExtractor(5).fit(rng.random((40, 4, 4, 1)))
    assert extractor.components.shape == (5, 16)
    np.testing.assert_allclose(extractor.components @ extractor.components.T, np.eye(5), atol=1e-10)


@pytest.mark.parametrize("spec", ["identity", "pca(3)"])
def test_fid_between_sets_is_symmetric(rng, spec):
    images_a = rng.random((50, 4, 4, 1))
    images_b = rng.random((50, 4, 4, 1)) ** 2
    extractor = build_extractor(spec)
    if extractor.needs_fit:
        extractor.fit(np.concatenate([images_a, images_b]))
    forward = fid_between_sets(images_a, images_b, extractor).fid
    backward = fid_between_sets(images_b, images_a, extractor).fid
    assert forward > 0.0
    assert backward == pytest.approx(forward, rel=1e-8, abs=1e-10)
