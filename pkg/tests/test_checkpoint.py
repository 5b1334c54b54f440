import numpy as np
import pytest

import codeflow as cf
from codeflow.checkpoint import read_checkpoint, write_checkpoint
from codeflow.errors import FormatError

CONFIG = cf.EstimatorConfig(
    dim=8, num_condition_layers=2, trunk_depth=1, trunk_width=8, time_embed_dim=4
)


class TestModelCheckpoint:
    def test_round_trip_values(self, tmp_path):
        params = cf.EstimatorParams.initialize(CONFIG, 5)
        path = tmp_path / "model.ckpt"
        cf.save_model(path, params)
        loaded = cf.load_model(path)
        assert loaded.config == CONFIG
        # parameters live on the float32 grid, so the trip is lossless
        np.testing.assert_array_equal(loaded.flat, params.flat)

    def test_save_load_save_is_byte_identical(self, tmp_path):
        params = cf.EstimatorParams.initialize(CONFIG, 5)
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        cf.save_model(p1, params)
        cf.save_model(p2, cf.load_model(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"XXXX" + b"\x00" * 64)
        with pytest.raises(FormatError, match="magic"):
            cf.load_model(path)

    def test_bad_version(self, tmp_path):
        params = cf.EstimatorParams.initialize(CONFIG, 0)
        path = tmp_path / "model.ckpt"
        cf.save_model(path, params)
        raw = bytearray(path.read_bytes())
        raw[4] = 9
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version"):
            cf.load_model(path)

    def test_truncated_section(self, tmp_path):
        params = cf.EstimatorParams.initialize(CONFIG, 0)
        path = tmp_path / "model.ckpt"
        cf.save_model(path, params)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(FormatError, match="truncated"):
            cf.load_model(path)

    def test_wrong_section_shape_rejected_on_write(self, tmp_path):
        with pytest.raises(FormatError, match="shape"):
            write_checkpoint(
                tmp_path / "x.ckpt", CONFIG, {"params": np.zeros(3)}
            )

    def test_header_declares_ordering(self, tmp_path):
        params = cf.EstimatorParams.initialize(CONFIG, 0)
        path = tmp_path / "model.ckpt"
        cf.save_model(path, params)
        _, _, header = read_checkpoint(path)
        names = [n for n, _ in header["param_order"]]
        assert names == params.names()
        assert header["param_count"] == params.num_params


class TestTrainStateCheckpoint:
    def test_round_trip(self, tmp_path):
        cfg = cf.TrainConfig(batch_size=4, total_steps=2, seed=3)
        state = cf.TrainState.fresh(CONFIG, cfg)
        state.adam_m[:] = np.float32(0.25)
        state.adam_v[:] = np.float32(0.125)
        state.step = 17
        path = tmp_path / "state.ckpt"
        state.save(path)
        loaded = cf.TrainState.load(path)
        assert loaded.step == 17
        np.testing.assert_array_equal(loaded.params.flat, state.params.flat)
        np.testing.assert_array_equal(loaded.adam_m, state.adam_m)
        np.testing.assert_array_equal(loaded.adam_v, state.adam_v)
        # restored generator continues the same stream
        np.testing.assert_array_equal(
            loaded.rng.standard_normal(5), state.rng.standard_normal(5)
        )
