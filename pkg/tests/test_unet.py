import hashlib

import numpy as np
import pytest
from helpers import harden_relu_margins, min_positive_pool_gap, relu_margin

from spectraseg.errors import FormatError, ShapeError
from spectraseg.net.ops import weighted_ce_loss
from spectraseg.net.unet import (
    UNetConfig,
    deserialize_model,
    parameter_count,
    serialize_model,
    unet_backward,
    unet_forward,
    unet_forward_cached,
    unet_init,
)


def tiny_config(**kw):
    defaults = dict(in_channels=36, n_classes=3, base_filters=2, seed=42)
    defaults.update(kw)
    return UNetConfig(**defaults)


def checksum(model):
    h = hashlib.blake2b(digest_size=16)
    for name in model.param_names:
        h.update(model.params[name].tobytes())
    return h.hexdigest()


class TestInit:
    def test_same_seed_same_checksum(self):
        assert checksum(unet_init(tiny_config())) == checksum(unet_init(tiny_config()))

    def test_different_seed_different_checksum(self):
        assert checksum(unet_init(tiny_config(seed=1))) != checksum(unet_init(tiny_config(seed=2)))

    def test_he_normal_std(self):
        cfg = UNetConfig(in_channels=36, n_classes=2, base_filters=16, seed=0)
        model = unet_init(cfg)
        w = model.params["enc2.conv1.w"]  # 64*64*9 = 36864 weights
        assert w.size > 10_000
        fan_in = w.shape[1] * 9
        expected = np.sqrt(2.0 / fan_in)
        assert abs(w.std() - expected) / expected < 0.1

    def test_biases_zero(self):
        model = unet_init(tiny_config())
        for name in model.param_names:
            if name.endswith(".b"):
                assert not model.params[name].any()


class TestForward:
    def test_output_shape_and_normalization(self):
        model = unet_init(tiny_config())
        x = np.random.default_rng(0).random((1, 36, 32, 32))
        probs = unet_forward(model, x)
        assert probs.shape == (1, 3, 32, 32)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_inference_is_bitwise_deterministic(self):
        model = unet_init(tiny_config())
        x = np.random.default_rng(1).random((2, 36, 16, 16))
        a = unet_forward(model, x)
        b = unet_forward(model, x)
        assert a.tobytes() == b.tobytes()

    def test_training_dropout_seed_changes_output(self):
        model = unet_init(tiny_config(dropout_rate=0.3))
        x = np.random.default_rng(2).random((1, 36, 16, 16))
        a = unet_forward(model, x, training=True, dropout_seed=1)
        b = unet_forward(model, x, training=True, dropout_seed=2)
        c = unet_forward(model, x, training=True, dropout_seed=1)
        assert not np.array_equal(a, b)
        np.testing.assert_array_equal(a, c)

    def test_rejects_bad_inputs(self):
        model = unet_init(tiny_config())
        with pytest.raises(ShapeError):
            unet_forward(model, np.zeros((1, 35, 16, 16)))
        with pytest.raises(ShapeError):
            unet_forward(model, np.zeros((1, 36, 20, 16)))


class TestParameterCount:
    def test_dilation_does_not_change_count(self):
        for base in (4, 8):
            c1 = parameter_count(UNetConfig(n_classes=4, base_filters=base, dilation=1))
            c2 = parameter_count(UNetConfig(n_classes=4, base_filters=base, dilation=2))
            assert c1 == c2

    def test_count_matches_model(self):
        cfg = tiny_config()
        assert unet_init(cfg).parameter_count() == parameter_count(cfg)


def fd_ready_model_and_input(input_seed=2, n_classes=3):
    """A model/input pair whose activations are bounded >= 1e-3 away from
    every ReLU and positive pool tie, as the FD contract requires."""
    rng = np.random.default_rng(input_seed)
    model = unet_init(tiny_config(n_classes=n_classes))
    for name in model.param_names:
        if name.endswith(".b"):
            model.params[name] += rng.uniform(0.05, 0.15, size=model.params[name].shape)
    x = rng.random((1, 36, 16, 16))
    harden_relu_margins(model, x)
    return model, x


class TestEndToEndGradients:
    def test_twenty_random_parameter_gradients(self):
        rng = np.random.default_rng(7)
        model, x = fd_ready_model_and_input()
        targets = rng.integers(0, 3, size=(1, 16, 16))
        weights = np.array([1.0, 2.0, 0.7])

        probs, cache = unet_forward_cached(model, x, training=False)
        assert relu_margin(cache) >= 1e-3
        assert min_positive_pool_gap(cache) >= 1e-3
        loss = weighted_ce_loss(probs, targets, weights)
        grads = unet_backward(model, cache, loss.grad_logits)

        def loss_fn():
            p = unet_forward(model, x, training=False)
            return weighted_ce_loss(p, targets, weights).value

        h = 1e-5
        checked = 0
        worst = 0.0
        for name in model.param_names:
            arr = model.params[name]
            flat = arr.ravel()
            n_samples = 1 if arr.size < 10 else 2
            for pos in rng.choice(arr.size, size=min(n_samples, arr.size), replace=False):
                orig = flat[pos]
                flat[pos] = orig + h
                fp = loss_fn()
                flat[pos] = orig - h
                fm = loss_fn()
                flat[pos] = orig
                fd = (fp - fm) / (2 * h)
                an = grads[name].ravel()[pos]
                scale = max(abs(fd), abs(an), 1e-8)
                rel = abs(fd - an) / scale
                worst = max(worst, rel)
                checked += 1
                if checked >= 20:
                    break
            if checked >= 20:
                break
        assert checked == 20
        assert worst < 1e-4, f"worst end-to-end gradient rel err {worst}"


class TestCheckpoint:
    def test_round_trip_bit_exact(self):
        model = unet_init(tiny_config())
        blob = serialize_model(model)
        again = serialize_model(deserialize_model(blob))
        assert blob == again

    def test_magic_and_version(self):
        blob = serialize_model(unet_init(tiny_config()))
        assert blob[:4] == b"UNET"
        assert int.from_bytes(blob[4:8], "little") == 1

    def test_truncated_raises(self):
        blob = serialize_model(unet_init(tiny_config()))
        with pytest.raises(FormatError):
            deserialize_model(blob[:-7])

    def test_version_mismatch_names_version(self):
        blob = bytearray(serialize_model(unet_init(tiny_config())))
        blob[4:8] = (9).to_bytes(4, "little")
        with pytest.raises(FormatError, match="9"):
            deserialize_model(bytes(blob))

    def test_bad_magic(self):
        blob = bytearray(serialize_model(unet_init(tiny_config())))
        blob[:4] = b"XXXX"
        with pytest.raises(FormatError):
            deserialize_model(bytes(blob))
