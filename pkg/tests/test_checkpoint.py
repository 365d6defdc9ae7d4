import numpy as np
import pytest

from artcoord.errors import FormatError
from artcoord.models import (
    ModelConfig,
    best_config,
    build_model,
    model_from_checkpoint,
    model_to_checkpoint,
)
from artcoord.nn.checkpoint import read_checkpoint, write_checkpoint
from artcoord.nn.optim import Adam


class TestContainerFormat:
    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        tensors = {
            "a/w": rng.normal(size=(3, 4)).astype(np.float32),
            "a/b": rng.normal(size=4).astype(np.float64),
            "count": np.array([7], dtype=np.int64),
        }
        config = {"alpha": 1, "nested": {"k": [3, 1]}, "name": "x"}
        blob = write_checkpoint(config, tensors)
        config2, tensors2 = read_checkpoint(blob)
        assert config2 == config
        assert set(tensors2) == set(tensors)
        for k in tensors:
            np.testing.assert_array_equal(tensors2[k], tensors[k])
            assert tensors2[k].dtype == tensors[k].dtype

    def test_serialization_deterministic(self):
        tensors = {"b": np.ones(3, dtype=np.float32), "a": np.zeros(2, dtype=np.float32)}
        assert write_checkpoint({"x": 1}, tensors) == write_checkpoint({"x": 1}, dict(reversed(tensors.items())))

    def test_bad_magic(self):
        with pytest.raises(FormatError, match="magic"):
            read_checkpoint(b"XXXX" + b"\x00" * 32)

    def test_tampered_bytes_detected(self):
        blob = bytearray(write_checkpoint({"v": 1}, {"w": np.arange(5, dtype=np.float32)}))
        blob[10] ^= 0xFF
        with pytest.raises(FormatError, match="checksum"):
            read_checkpoint(bytes(blob))

    def test_truncation_detected(self):
        blob = write_checkpoint({"v": 1}, {"w": np.arange(5, dtype=np.float32)})
        with pytest.raises(FormatError):
            read_checkpoint(blob[: len(blob) // 2])


class TestModelCheckpoints:
    @staticmethod
    def tiny_config(**kw):
        base = dict(feature_mode="tv8", max_delay=11, branch_filters=2, conv6_filters=2,
                    dense1_units=4, dense2_units=2, seed=5)
        base.update(kw)
        return ModelConfig(**base)

    def test_save_load_save_identical(self):
        config = self.tiny_config()
        model = build_model(config)
        opt = Adam(lr=1e-4)
        params = model.named_params()
        grads = {k: np.ones_like(v) for k, v in params.items()}
        opt.step(params, grads)
        blob = model_to_checkpoint(model, config, optimizer=opt, meta={"note": "t"})
        loaded = model_from_checkpoint(blob)
        blob2 = model_to_checkpoint(loaded.model, loaded.config, optimizer=loaded.optimizer,
                                    meta=loaded.meta)
        assert blob == blob2

    def test_forward_equality_after_roundtrip(self):
        config = self.tiny_config()
        model = build_model(config)
        x = np.random.default_rng(1).normal(size=(3, 64, 12, 1)).astype(np.float32)
        before = model.forward([x], train=False)
        loaded = model_from_checkpoint(model_to_checkpoint(model, config))
        after = loaded.model.forward([x], train=False)
        np.testing.assert_array_equal(before, after)

    def test_restores_running_statistics(self):
        config = self.tiny_config()
        model = build_model(config)
        rng = np.random.default_rng(2)
        x = rng.normal(size=(8, 64, 12, 1)).astype(np.float32)
        model.forward([x], train=True, rng=rng)  # moves BN running stats
        loaded = model_from_checkpoint(model_to_checkpoint(model, config))
        for key, value in model.named_state().items():
            np.testing.assert_array_equal(loaded.model.named_state()[key], value)

    def test_optimizer_state_roundtrip(self):
        config = self.tiny_config()
        model = build_model(config)
        opt = Adam(lr=3e-4, beta1=0.85)
        params = model.named_params()
        for _ in range(3):
            opt.step(params, {k: np.full_like(v, 0.1) for k, v in params.items()})
        loaded = model_from_checkpoint(model_to_checkpoint(model, config, optimizer=opt))
        assert loaded.optimizer.step_count == 3
        assert loaded.optimizer.lr == 3e-4
        assert loaded.optimizer.beta1 == 0.85
        for name in params:
            np.testing.assert_array_equal(loaded.optimizer.m[name], opt.m[name])
            np.testing.assert_array_equal(loaded.optimizer.v[name], opt.v[name])

    def test_config_roundtrip_types(self):
        config = self.tiny_config(conv6_kernel=(4, 1))
        loaded = model_from_checkpoint(model_to_checkpoint(build_model(config), config))
        assert loaded.config == config
        assert isinstance(loaded.config.conv6_kernel, tuple)

    def test_shape_mismatch_rejected(self):
        config = self.tiny_config()
        blob = model_to_checkpoint(build_model(config), config)
        header, tensors = read_checkpoint(blob)
        # claim a different architecture than the stored tensors
        header["model_config"]["conv6_filters"] = 4
        bad = write_checkpoint(header, tensors)
        with pytest.raises(FormatError, match="shape"):
            model_from_checkpoint(bad)

    def test_missing_tensor_rejected(self):
        config = self.tiny_config()
        blob = model_to_checkpoint(build_model(config), config)
        header, tensors = read_checkpoint(blob)
        tensors.pop(sorted(tensors)[0])
        with pytest.raises(FormatError, match="missing"):
            model_from_checkpoint(write_checkpoint(header, tensors))

    def test_best_config_checkpoints(self):
        for mode in ("tv8", "mfcc12", "fused"):
            config = best_config(mode, seed=3)
            model = build_model(config)
            loaded = model_from_checkpoint(model_to_checkpoint(model, config))
            assert loaded.config == config
            assert loaded.model.num_params() == model.num_params()
