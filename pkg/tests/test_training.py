import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectraseg.errors import ConfigError, DimError, FormatError
from spectraseg.net.unet import UNetConfig, serialize_model, unet_init
from spectraseg.spectral import N_BANDS, SpectralCube
from spectraseg.synth import DegradationConfig, SceneConfig, default_tissue_library, generate_dataset
from spectraseg.training import (
    History,
    TrainConfig,
    augment,
    checkpoint_load,
    checkpoint_save,
    compute_class_weights,
    iou,
    predict_mask,
    split_dataset,
    train,
)


def brute_force_iou(pred, gt, n_classes):
    """Set-counting oracle: per-class |intersection| / |union| over pixel sets."""
    per_class = []
    for c in range(n_classes):
        p = {(y, x) for y, x in zip(*np.nonzero(pred == c))}
        g = {(y, x) for y, x in zip(*np.nonzero(gt == c))}
        union = p | g
        if not union:
            per_class.append(None)
        else:
            per_class.append(len(p & g) / len(union))
    defined = [v for v in per_class if v is not None]
    return per_class, sum(defined) / len(defined)


class TestClassWeights:
    def test_90_10_counts(self):
        labels = np.array([0] * 90 + [1] * 10)
        w = compute_class_weights([labels], 2)
        np.testing.assert_allclose(w, [0.5556, 5.0], atol=1e-4)

    def test_balanced_counts_give_unit_weights(self):
        labels = np.repeat(np.arange(4), 25)
        np.testing.assert_allclose(compute_class_weights([labels], 4), 1.0)

    def test_matches_hand_formula_on_skewed_counts(self):
        labels = np.array([0] * 997 + [1] * 2 + [2] * 1)
        w = compute_class_weights([labels], 3)
        n = 1000
        expected = [n / (3 * 997), n / (3 * 2), n / (3 * 1)]
        np.testing.assert_allclose(w, expected, rtol=1e-12)

    def test_absent_class_gets_zero(self):
        labels = np.array([0, 0, 2])
        w = compute_class_weights([labels], 3)
        assert w[1] == 0.0 and w[0] > 0 and w[2] > 0


def one_scene(seed=0, h=32, w=32, jitter=0.03, shading=0.2):
    cfg = SceneConfig(
        height=h,
        width=w,
        classes=default_tissue_library(4, jitter=jitter),
        n_regions=10,
        shading_strength=shading,
        seed=seed,
    )
    return generate_dataset(cfg, DegradationConfig(), 1, seed)[0]


class TestAugment:
    def test_eight_variants_square(self):
        variants = augment(one_scene())
        assert len(variants) == 8

    def test_identity_variant_unchanged(self):
        scene = one_scene()
        first = augment(scene)[0]
        np.testing.assert_array_equal(first.cube.data, scene.cube.data)
        np.testing.assert_array_equal(first.labels, scene.labels)

    def test_rot90_four_times_is_identity(self):
        scene = one_scene()
        cube, labels = scene.cube.data, scene.labels
        for _ in range(4):
            cube = np.rot90(cube, axes=(1, 2))
            labels = np.rot90(labels)
        np.testing.assert_array_equal(cube, scene.cube.data)
        np.testing.assert_array_equal(labels, scene.labels)

    def test_per_class_pixel_counts_preserved(self):
        scene = one_scene(seed=5)
        base_counts = np.bincount(scene.labels.ravel(), minlength=4)
        for v in augment(scene):
            np.testing.assert_array_equal(np.bincount(v.labels.ravel(), minlength=4), base_counts)

    def test_spectrum_label_pairs_preserved(self):
        scene = one_scene(seed=6, h=16, w=16)
        def pair_set(s):
            flat = s.cube.data.reshape(N_BANDS, -1).T
            return sorted((tuple(v), int(l)) for v, l in zip(flat, s.labels.ravel()))
        base = pair_set(scene)
        for v in augment(scene)[1:]:
            assert pair_set(v) == base

    def test_variants_are_distinct(self):
        scene = one_scene(seed=7)
        blobs = {v.cube.data.tobytes() for v in augment(scene)}
        assert len(blobs) == 8

    def test_non_square_gets_four_flip_variants(self):
        scene = one_scene(seed=8, h=16, w=32)
        variants = augment(scene)
        assert len(variants) == 4
        for v in variants:
            assert v.labels.shape == (16, 32)


class TestIou:
    def test_identical_masks(self):
        rng = np.random.default_rng(0)
        m = rng.integers(0, 4, size=(8, 8))
        rep = iou(m, m, 4)
        present = np.unique(m)
        for c in present:
            assert rep.per_class_iou[c] == 1.0
        assert rep.mean_iou == 1.0
        assert rep.confusion.sum() == 64

    def test_hand_counted_binary_example(self):
        pred = np.array([[1, 1], [0, 0]])
        gt = np.array([[0, 1], [0, 1]])
        rep = iou(pred, gt, 2)
        assert rep.per_class_iou[1] == pytest.approx(1 / 3)
        assert rep.per_class_iou[0] == pytest.approx(1 / 3)

    def test_disjoint_single_class_masks(self):
        pred = np.zeros((4, 4), np.int64)
        gt = np.ones((4, 4), np.int64)
        rep = iou(pred, gt, 2)
        assert rep.per_class_iou[0] == 0.0 and rep.per_class_iou[1] == 0.0

    def test_absent_class_is_nan_and_excluded(self):
        pred = np.zeros((2, 2), np.int64)
        gt = np.zeros((2, 2), np.int64)
        rep = iou(pred, gt, 3)
        assert np.isnan(rep.per_class_iou[1]) and np.isnan(rep.per_class_iou[2])
        assert rep.mean_iou == 1.0

    def test_symmetry_and_dim_error(self):
        rng = np.random.default_rng(1)
        a = rng.integers(0, 3, size=(6, 6))
        b = rng.integers(0, 3, size=(6, 6))
        np.testing.assert_array_equal(iou(a, b, 3).per_class_iou, iou(b, a, 3).per_class_iou)
        with pytest.raises(DimError):
            iou(a, rng.integers(0, 3, size=(5, 6)), 3)

    def test_brute_force_oracle_100_random_pairs(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n_classes = int(rng.integers(2, 5))
            pred = rng.integers(0, n_classes, size=(8, 8))
            gt = rng.integers(0, n_classes, size=(8, 8))
            rep = iou(pred, gt, n_classes)
            oracle_per_class, oracle_mean = brute_force_iou(pred, gt, n_classes)
            for c in range(n_classes):
                if oracle_per_class[c] is None:
                    assert np.isnan(rep.per_class_iou[c])
                else:
                    assert rep.per_class_iou[c] == oracle_per_class[c]
            assert rep.mean_iou == oracle_mean

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(2, 5))
    def test_property_matches_oracle(self, seed, n_classes):
        rng = np.random.default_rng(seed)
        pred = rng.integers(0, n_classes, size=(5, 7))
        gt = rng.integers(0, n_classes, size=(5, 7))
        rep = iou(pred, gt, n_classes)
        oracle_per_class, oracle_mean = brute_force_iou(pred, gt, n_classes)
        assert rep.mean_iou == oracle_mean

    def test_permuting_ids_permutes_per_class(self):
        rng = np.random.default_rng(2)
        pred = rng.integers(0, 3, size=(8, 8))
        gt = rng.integers(0, 3, size=(8, 8))
        perm = np.array([2, 0, 1])
        rep = iou(pred, gt, 3)
        rep_p = iou(perm[pred], perm[gt], 3)
        np.testing.assert_array_equal(rep_p.per_class_iou[perm], rep.per_class_iou)


def tiny_dataset(n=6, seed=0):
    cfg = SceneConfig(
        height=16,
        width=16,
        classes=default_tissue_library(3, jitter=0.02),
        n_regions=6,
        shading_strength=0.1,
        seed=seed,
    )
    return generate_dataset(cfg, DegradationConfig(), n, seed)


def tiny_model(seed=1):
    return unet_init(UNetConfig(in_channels=36, n_classes=3, base_filters=2, seed=seed))


class TestTrain:
    def test_bad_config_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=0)
        with pytest.raises(ConfigError):
            TrainConfig(val_fraction=1.5)
        with pytest.raises(ConfigError):
            TrainConfig(optimizer="rmsprop")

    def test_too_few_scenes_rejected(self):
        with pytest.raises(ConfigError):
            train(tiny_model(), tiny_dataset(3), TrainConfig(epochs=1, seed=0))

    def test_same_seed_bit_identical_checkpoints_and_history(self):
        cfgs = TrainConfig(epochs=2, batch_size=2, seed=9, augment=False)
        m1, h1 = train(tiny_model(), tiny_dataset(), cfgs)
        m2, h2 = train(tiny_model(), tiny_dataset(), cfgs)
        assert serialize_model(m1) == serialize_model(m2)
        assert h1 == h2

    def test_history_lengths(self):
        cfg = TrainConfig(epochs=3, batch_size=2, seed=1, augment=False)
        _, hist = train(tiny_model(), tiny_dataset(), cfg)
        assert len(hist.train_loss) == len(hist.val_loss) == len(hist.val_mean_iou) == 3

    def test_adam_path_runs(self):
        cfg = TrainConfig(epochs=1, batch_size=2, seed=1, optimizer="adam", augment=False)
        _, hist = train(tiny_model(), tiny_dataset(), cfg)
        assert len(hist.train_loss) == 1

    def test_split_deterministic_and_disjoint(self):
        scenes = tiny_dataset(8)
        cfg = TrainConfig(epochs=1, seed=4)
        tr1, va1 = split_dataset(scenes, cfg)
        tr2, va2 = split_dataset(scenes, cfg)
        assert [s.fingerprint for s in tr1] == [s.fingerprint for s in tr2]
        assert [s.fingerprint for s in va1] == [s.fingerprint for s in va2]
        assert len(tr1) + len(va1) == 8
        fp_tr = {s.fingerprint for s in tr1}
        assert all(s.fingerprint not in fp_tr for s in va1)


class TestPredictMask:
    def test_shape_and_tie_rule(self):
        model = tiny_model()
        scene = tiny_dataset(1)[0]
        mask = predict_mask(model, scene.cube)
        assert mask.shape == (16, 16)
        assert mask.min() >= 0 and mask.max() < 3

    def test_uniform_logits_pick_class_zero(self):
        model = tiny_model()
        for name in model.param_names:
            model.params[name][:] = 0.0
        scene = tiny_dataset(1)[0]
        mask = predict_mask(model, scene.cube)
        assert not mask.any()

    def test_argmax_matches_probability_scan(self):
        from spectraseg.net.unet import unet_forward

        model = tiny_model()
        scene = tiny_dataset(1)[0]
        mask = predict_mask(model, scene.cube)
        probs = unet_forward(model, scene.cube.data[None])[0]
        for y in range(16):
            for x in range(16):
                best, best_p = 0, probs[0, y, x]
                for c in range(1, 3):
                    if probs[c, y, x] > best_p:
                        best, best_p = c, probs[c, y, x]
                assert mask[y, x] == best


class TestCheckpointFiles:
    def test_save_load_save_identical(self, tmp_path):
        model = tiny_model()
        p1 = tmp_path / "a.unet"
        p2 = tmp_path / "b.unet"
        checkpoint_save(p1, model)
        checkpoint_save(p2, checkpoint_load(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_file(self, tmp_path):
        p = tmp_path / "a.unet"
        checkpoint_save(p, tiny_model())
        p.write_bytes(p.read_bytes()[:100])
        with pytest.raises(FormatError):
            checkpoint_load(p)

    def test_version_mismatch_message(self, tmp_path):
        p = tmp_path / "a.unet"
        checkpoint_save(p, tiny_model())
        raw = bytearray(p.read_bytes())
        raw[4:8] = (7).to_bytes(4, "little")
        p.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="7"):
            checkpoint_load(p)
