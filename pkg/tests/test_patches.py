import numpy as np
import pytest

from spectraseg.errors import DataError, DimError, RankError, SizeError
from spectraseg.patches import (
    PatchDataset,
    extract_patches,
    fit_baselines,
    jacobi_eigh,
    nearest_neighbor_predict,
    pca_fit,
    pca_project,
    separability_report,
)
from spectraseg.spectral import N_BANDS, SpectralCube


def cube_of(data):
    return SpectralCube(data=data)


class TestExtractPatches:
    def test_exact_fit_gives_one_patch(self):
        rng = np.random.default_rng(0)
        cube = cube_of(rng.random((N_BANDS, 7, 7)))
        labels = rng.integers(0, 3, size=(7, 7))
        ds = extract_patches(cube, labels, size=7, stride=1)
        assert ds.vectors.shape == (1, 7 * 7 * 36)
        assert ds.labels[0] == labels[3, 3]

    def test_patch_count_formula_16x16(self):
        rng = np.random.default_rng(1)
        cube = cube_of(rng.random((N_BANDS, 16, 16)))
        ds = extract_patches(cube, np.zeros((16, 16), np.int64), size=7, stride=1)
        assert ds.vectors.shape[0] == 100  # (16 - 6)^2

    @pytest.mark.parametrize("h,w,size,stride", [(16, 20, 7, 3), (17, 16, 5, 2), (31, 33, 9, 4)])
    def test_patch_count_formula_general(self, h, w, size, stride):
        rng = np.random.default_rng(2)
        cube = cube_of(rng.random((N_BANDS, h, w)))
        ds = extract_patches(cube, np.zeros((h, w), np.int64), size=size, stride=stride)
        expected = int(np.ceil((h - size + 1) / stride)) * int(np.ceil((w - size + 1) / stride))
        assert ds.vectors.shape[0] == expected

    def test_center_labels(self):
        rng = np.random.default_rng(3)
        cube = cube_of(rng.random((N_BANDS, 9, 9)))
        labels = np.arange(81).reshape(9, 9)
        ds = extract_patches(cube, labels, size=3, stride=2)
        centers = [labels[y + 1, x + 1] for y in range(0, 7, 2) for x in range(0, 7, 2)]
        np.testing.assert_array_equal(ds.labels, centers)

    def test_patch_values_match_block(self):
        rng = np.random.default_rng(4)
        cube = cube_of(rng.random((N_BANDS, 10, 10)))
        ds = extract_patches(cube, np.zeros((10, 10), np.int64), size=3, stride=4)
        block = cube.data[:, 4:7, 4:7].reshape(-1)  # patch at (y=4, x=4) is index 1*2+1
        np.testing.assert_array_equal(ds.vectors[3], block)

    def test_even_size_raises(self):
        cube = cube_of(np.zeros((N_BANDS, 8, 8)))
        with pytest.raises(SizeError):
            extract_patches(cube, np.zeros((8, 8), np.int64), size=4)

    def test_oversize_raises(self):
        cube = cube_of(np.zeros((N_BANDS, 8, 8)))
        with pytest.raises(SizeError):
            extract_patches(cube, np.zeros((8, 8), np.int64), size=9)


class TestJacobiEigh:
    def test_matches_numpy_eigh(self):
        rng = np.random.default_rng(5)
        for n in (3, 8, 20):
            a = rng.normal(size=(n, n))
            a = a @ a.T
            vals, vecs = jacobi_eigh(a)
            ref = np.linalg.eigvalsh(a)[::-1]
            np.testing.assert_allclose(vals, ref, atol=1e-10 * max(1, abs(ref).max()))
            np.testing.assert_allclose(vecs.T @ vecs, np.eye(n), atol=1e-10)
            np.testing.assert_allclose(a @ vecs, vecs * vals[None], atol=1e-8)


class TestPcaFit:
    def test_rank1_data_first_component_captures_variance(self):
        rng = np.random.default_rng(6)
        direction = rng.normal(size=12)
        direction /= np.linalg.norm(direction)
        t = rng.normal(size=50)
        data = PatchDataset(1, 3.0 + t[:, None] * direction[None], np.zeros(50, np.int64))
        model = pca_fit(data, k=3)
        total = model.eigenvalues.sum()
        assert model.eigenvalues[0] / total >= 0.999

    def test_k_equals_d_reconstructs_exactly(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(200, 2))
        data = PatchDataset(1, x, np.zeros(200, np.int64))
        model = pca_fit(data, k=2)
        np.testing.assert_allclose(model.components @ model.components.T, np.eye(2), atol=1e-10)
        proj = pca_project(model, x)
        lifted = proj @ model.components + model.mean
        np.testing.assert_allclose(lifted, x, atol=1e-10)

    def test_eigenvalues_match_dense_eigensolver_oracle(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(50, 12))
        data = PatchDataset(1, x, np.zeros(50, np.int64))
        model = pca_fit(data, k=3)
        cov = np.cov(x, rowvar=False)
        ref = np.linalg.eigvalsh(cov)[::-1][:3]
        np.testing.assert_allclose(model.eigenvalues, ref, atol=1e-8)

    def test_gram_dual_agrees_with_covariance_route(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(10, 40))  # N < D forces the Gram dual
        data = PatchDataset(1, x, np.zeros(10, np.int64))
        model = pca_fit(data, k=4)
        cov = np.cov(x, rowvar=False)
        ref = np.linalg.eigvalsh(cov)[::-1][:4]
        np.testing.assert_allclose(model.eigenvalues, ref, atol=1e-8)
        np.testing.assert_allclose(
            model.components @ model.components.T, np.eye(4), atol=1e-10
        )

    def test_orthonormality_tolerance(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(60, 15))
        model = pca_fit(PatchDataset(1, x, np.zeros(60, np.int64)), k=6)
        gram = model.components @ model.components.T
        assert np.abs(gram - np.eye(6)).max() < 1e-10

    def test_eigenvalues_nonincreasing_nonnegative(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(30, 9))
        model = pca_fit(PatchDataset(1, x, np.zeros(30, np.int64)), k=9)
        assert np.all(np.diff(model.eigenvalues) <= 1e-12)
        assert np.all(model.eigenvalues >= -1e-12)

    def test_rank_error(self):
        x = np.zeros((5, 8))
        with pytest.raises(RankError):
            pca_fit(PatchDataset(1, x, np.zeros(5, np.int64)), k=6)


class TestPcaProject:
    def setup_method(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(40, 10))
        self.model = pca_fit(PatchDataset(1, x, np.zeros(40, np.int64)), k=3)

    def test_mean_projects_to_zero(self):
        np.testing.assert_allclose(pca_project(self.model, self.model.mean), 0.0, atol=1e-12)

    def test_component_projects_to_unit_vector(self):
        y = pca_project(self.model, self.model.mean + self.model.components[0])
        np.testing.assert_allclose(y, [1.0, 0.0, 0.0], atol=1e-10)

    def test_matches_dot_product_loop(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=10)
        y = pca_project(self.model, x)
        for i in range(3):
            acc = 0.0
            for j in range(10):
                acc += self.model.components[i, j] * (x[j] - self.model.mean[j])
            assert abs(y[i] - acc) < 1e-12

    def test_dim_mismatch(self):
        with pytest.raises(DimError):
            pca_project(self.model, np.zeros(11))


def two_blob_dataset(rng, n_per=40, dim=6, separation=10.0, noise=1.0):
    a = rng.normal(scale=noise, size=(n_per, dim))
    b = rng.normal(scale=noise, size=(n_per, dim)) + separation / np.sqrt(dim)
    x = np.vstack([a, b])
    y = np.array([0] * n_per + [1] * n_per)
    return x, y


class TestFitBaselines:
    def test_disjoint_constant_classes_are_perfectly_classified(self):
        x = np.vstack([np.zeros((20, 12)), np.ones((20, 12))])
        y = np.array([0] * 20 + [1] * 20)
        report = fit_baselines(PatchDataset(1, x, y), split_seed=0)
        assert set(report.accuracies) == {"1nn", "nearest_centroid", "logistic_regression"}
        for name, acc in report.accuracies.items():
            assert acc == 1.0, name

    def test_shuffled_labels_score_at_chance(self):
        rng = np.random.default_rng(14)
        x = rng.normal(size=(400, 8))
        y = np.array([0, 1] * 200)
        # chance band [0.35, 0.65] covers ~99% of permutation outcomes:
        # simulate random label assignments on the same held-out size
        sim = []
        for _ in range(2000):
            pred = rng.integers(0, 2, size=80)
            truth = rng.permutation(np.array([0, 1] * 40))
            sim.append((pred == truth).mean())
        lo, hi = np.quantile(sim, [0.01, 0.99])
        assert 0.35 <= lo and hi <= 0.65
        report = fit_baselines(PatchDataset(1, x, y), split_seed=1)
        for name, acc in report.accuracies.items():
            assert 0.35 <= acc <= 0.65, (name, acc)

    def test_small_class_raises(self):
        x = np.zeros((15, 4))
        y = np.array([0] * 9 + [1] * 6)
        with pytest.raises(DataError):
            fit_baselines(PatchDataset(1, x, y), split_seed=0)

    def test_single_class_raises(self):
        with pytest.raises(DataError):
            fit_baselines(PatchDataset(1, np.zeros((30, 4)), np.zeros(30, np.int64)), 0)

    def test_split_is_deterministic(self):
        rng = np.random.default_rng(15)
        x, y = two_blob_dataset(rng, separation=3.0)
        a = fit_baselines(PatchDataset(1, x, y), split_seed=5)
        b = fit_baselines(PatchDataset(1, x, y), split_seed=5)
        assert a.accuracies == b.accuracies

    def test_one_nn_on_training_set_is_exact(self):
        rng = np.random.default_rng(16)
        x = rng.normal(size=(50, 6))
        y = rng.integers(0, 3, size=50)
        preds = nearest_neighbor_predict(x, y, x)
        np.testing.assert_array_equal(preds, y)

    def test_one_nn_tie_breaks_to_lowest_index(self):
        x = np.array([[0.0], [0.0], [2.0]])
        y = np.array([2, 1, 0])
        pred = nearest_neighbor_predict(x, y, np.array([[0.0]]))
        assert pred[0] == 2  # index 0 wins the tie


class TestSeparabilityReport:
    def test_well_separated_clouds(self):
        rng = np.random.default_rng(17)
        x, y = two_blob_dataset(rng, separation=10.0)
        rep = separability_report(x, y)
        assert rep.mean_silhouette > 0.5
        assert rep.overlap_fraction < 0.05
        assert rep.centroid_distances[0, 1] > 5.0

    def test_identical_distributions_overlap_near_half(self):
        rng = np.random.default_rng(18)
        x = rng.normal(size=(600, 5))
        y = np.array([0, 1] * 300)
        rep = separability_report(x, y)
        assert 0.4 <= rep.overlap_fraction <= 0.6
        assert abs(rep.mean_silhouette) < 0.1

    def test_singleton_classes_score_zero_silhouette(self):
        x = np.array([[0.0, 0.0], [5.0, 5.0]])
        y = np.array([0, 1])
        rep = separability_report(x, y)
        assert rep.mean_silhouette == 0.0

    def test_label_mismatch(self):
        with pytest.raises(DimError):
            separability_report(np.zeros((4, 2)), np.zeros(5, np.int64))
