import numpy as np
import pytest

import codeflow as cf
from codeflow.errors import InvalidArgumentError, NumericError

TINY_MLP = cf.EstimatorConfig(
    dim=8, num_condition_layers=2, trunk_depth=1, trunk_width=8, time_embed_dim=4
)
TINY_TRANSFORMER = cf.EstimatorConfig(
    dim=8,
    num_condition_layers=2,
    trunk_variant="staged-transformer",
    trunk_depth=1,
    trunk_width=8,
    num_heads=2,
    num_tokens=4,
    time_embed_dim=4,
)


class TestFuseConditions:
    def test_singleton_stack_passthrough(self, rng):
        stack = rng.normal(size=(1, 6))
        np.testing.assert_allclose(
            cf.fuse_conditions(stack, np.array([17.0])), stack[0], rtol=1e-12
        )

    def test_equal_weights_average(self, rng):
        stack = rng.normal(size=(2, 6))
        got = cf.fuse_conditions(stack, np.zeros(2))
        np.testing.assert_allclose(got, stack.mean(axis=0), rtol=1e-12)

    def test_softmax_weighting_hand_computed(self):
        stack = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        w = np.array([2.0, 0.0, 0.0])
        z = np.exp(2.0) + 2.0  # softmax(2,0,0) = (e^2, 1, 1)/z
        expected = (np.exp(2.0) * stack[0] + stack[1] + stack[2]) / z
        np.testing.assert_allclose(cf.fuse_conditions(stack, w), expected, rtol=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            cf.fuse_conditions(np.zeros((3, 4)), np.zeros(2))


class TestTimestepEmbedding:
    def test_zero_time_alternates(self):
        np.testing.assert_allclose(
            cf.timestep_embedding(0.0, 6), [0, 1, 0, 1, 0, 1], atol=1e-15
        )

    def test_deterministic(self):
        np.testing.assert_array_equal(
            cf.timestep_embedding(0.37, 16), cf.timestep_embedding(0.37, 16)
        )

    def test_direct_evaluation_dim8(self):
        # oracle: evaluate each pair from the defining formula
        t, dim = 0.5, 8
        expected = np.empty(8)
        for j in range(4):
            div = 10000.0 ** (2 * j / dim)
            expected[2 * j] = np.sin(t / div)
            expected[2 * j + 1] = np.cos(t / div)
        np.testing.assert_allclose(cf.timestep_embedding(t, dim), expected, rtol=1e-15)

    def test_odd_dim_rejected(self):
        with pytest.raises(InvalidArgumentError):
            cf.timestep_embedding(0.5, 7)

    def test_batched(self):
        emb = cf.timestep_embedding(np.array([0.1, 0.9]), 8)
        assert emb.shape == (2, 8)
        np.testing.assert_allclose(emb[0], cf.timestep_embedding(0.1, 8))


class TestForward:
    @pytest.mark.parametrize("config", [TINY_MLP, TINY_TRANSFORMER])
    def test_finite_and_bounded_at_init(self, config, rng):
        params = cf.EstimatorParams.initialize(config, 0)
        out = cf.forward(params, rng.normal(size=8), rng.normal(size=(2, 8)), 0.5)
        assert out.shape == (8,)
        assert np.isfinite(out).all()
        assert np.linalg.norm(out) < 1e3

    @pytest.mark.parametrize("config", [TINY_MLP, TINY_TRANSFORMER])
    def test_deterministic_replay(self, config, rng):
        params = cf.EstimatorParams.initialize(config, 1)
        xt = rng.normal(size=(3, 8))
        xc = rng.normal(size=(3, 2, 8))
        t = rng.uniform(0.1, 0.9, 3)
        np.testing.assert_array_equal(
            cf.forward(params, xt, xc, t), cf.forward(params, xt, xc, t)
        )

    def test_same_seed_same_params(self):
        a = cf.EstimatorParams.initialize(TINY_TRANSFORMER, 7)
        b = cf.EstimatorParams.initialize(TINY_TRANSFORMER, 7)
        np.testing.assert_array_equal(a.flat, b.flat)

    def test_nonfinite_inputs_identified(self, rng):
        params = cf.EstimatorParams.initialize(TINY_MLP, 0)
        bad = rng.normal(size=8)
        bad[3] = np.nan
        with pytest.raises(NumericError, match="x_t"):
            cf.forward(params, bad, np.zeros((2, 8)), 0.5)
        with pytest.raises(NumericError, match="condition_stack"):
            cf.forward(params, np.zeros(8), np.full((2, 8), np.inf), 0.5)

    def test_shape_validation(self):
        params = cf.EstimatorParams.initialize(TINY_MLP, 0)
        with pytest.raises(InvalidArgumentError):
            cf.forward(params, np.zeros(9), np.zeros((2, 9)), 0.5)
        with pytest.raises(InvalidArgumentError):
            cf.forward(params, np.zeros(8), np.zeros((3, 8)), 0.5)

    def test_trained_model_predicts_codeword(self, trained_model):
        # forward at t_eps on a held-out sample approximates its codeword
        test = trained_model["test"]
        codebook = trained_model["codebook"]
        state = trained_model["state"]
        rec = test.record(0)
        est = cf.forward(
            state.params,
            rec.terminal_vector.astype(np.float64),
            rec.condition_stack.astype(np.float64),
            trained_model["train_config"].schedule.t_eps,
        )
        cw = codebook.codewords[rec.label_index]
        cos = est @ cw / (np.linalg.norm(est) * np.linalg.norm(cw))
        assert cos >= 0.9


class TestLossAndGradients:
    def test_zero_loss_at_exact_target(self, rng):
        params = cf.EstimatorParams.initialize(TINY_MLP, 0)
        xt = rng.normal(size=(2, 8))
        xc = rng.normal(size=(2, 2, 8))
        t = rng.uniform(0.1, 0.9, 2)
        target = cf.forward(params, xt, xc, t)
        loss, grads = cf.loss_and_gradients(params, xt, xc, t, target)
        assert loss == pytest.approx(0.0, abs=1e-24)
        np.testing.assert_allclose(grads.flat, 0.0, atol=1e-12)

    def test_batch_duplication_preserves_loss(self, rng):
        params = cf.EstimatorParams.initialize(TINY_MLP, 2)
        xt = rng.normal(size=(3, 8))
        xc = rng.normal(size=(3, 2, 8))
        t = rng.uniform(0.1, 0.9, 3)
        x0 = rng.normal(size=(3, 8))
        loss1, _ = cf.loss_and_gradients(params, xt, xc, t, x0)
        loss2, _ = cf.loss_and_gradients(
            params,
            np.vstack([xt, xt]),
            np.vstack([xc, xc]),
            np.concatenate([t, t]),
            np.vstack([x0, x0]),
        )
        assert loss1 == pytest.approx(loss2, rel=1e-12)

    def test_empty_batch_rejected(self):
        params = cf.EstimatorParams.initialize(TINY_MLP, 0)
        with pytest.raises(InvalidArgumentError):
            cf.loss_and_gradients(
                params, np.zeros((0, 8)), np.zeros((0, 2, 8)), np.zeros(0), np.zeros((0, 8))
            )

    def test_gradient_structure_mirrors_params(self, rng):
        params = cf.EstimatorParams.initialize(TINY_TRANSFORMER, 0)
        _, grads = cf.loss_and_gradients(
            params,
            rng.normal(size=(2, 8)),
            rng.normal(size=(2, 2, 8)),
            rng.uniform(0.1, 0.9, 2),
            rng.normal(size=(2, 8)),
        )
        assert grads.names() == params.names()
        for name in params.names():
            assert grads[name].shape == params[name].shape


def finite_difference_worst_error(config, seed=7, batch=3):
    """Max relative disagreement between analytic and FD gradients.

    Gradients whose analytic and FD values are both below 1e-8 count as
    agreeing (the FD noise floor dominates there).
    """
    params = cf.EstimatorParams.initialize(config, 3)
    rng = np.random.default_rng(seed)
    params.flat[:] = params.flat + rng.normal(0, 0.05, params.num_params)
    xt = rng.normal(size=(batch, config.dim))
    xc = rng.normal(size=(batch, config.num_condition_layers, config.dim))
    t = rng.uniform(0.1, 0.9, batch)
    x0 = rng.normal(size=(batch, config.dim))
    _, grads = cf.loss_and_gradients(params, xt, xc, t, x0)
    worst = 0.0
    flat, gflat = params.flat, grads.flat
    for i in range(flat.size):
        h = 1e-5 * max(1.0, abs(flat[i]))
        orig = flat[i]
        flat[i] = orig + h
        lp, _ = cf.loss_and_gradients(params, xt, xc, t, x0)
        flat[i] = orig - h
        lm, _ = cf.loss_and_gradients(params, xt, xc, t, x0)
        flat[i] = orig
        fd = (lp - lm) / (2 * h)
        scale = max(abs(gflat[i]), abs(fd))
        if scale < 1e-8:
            continue
        worst = max(worst, abs(gflat[i] - fd) / scale)
    return worst


@pytest.mark.parametrize("config", [TINY_MLP, TINY_TRANSFORMER], ids=["mlp", "transformer"])
def test_gradients_match_finite_differences(config):
    assert finite_difference_worst_error(config) <= 1e-4


class TestParameterCount:
    def test_analytic_count_matches_buffer(self):
        for config in (TINY_MLP, TINY_TRANSFORMER):
            params = cf.EstimatorParams.zeros(config)
            assert params.num_params == cf.parameter_count(config)
            assert params.num_params == sum(v.size for v in params.views.values())

    def test_large_speech_config_order_of_magnitude(self):
        # the published large configuration lands near 7e7 parameters;
        # check the analytic count alone, never instantiating buffers
        config = cf.EstimatorConfig(
            dim=1024,
            num_condition_layers=23,
            trunk_variant="staged-transformer",
            trunk_depth=4,
            trunk_width=1024,
            num_heads=16,
            num_tokens=16,
            time_embed_dim=256,
        )
        count = cf.parameter_count(config)
        assert 7.14e6 < count < 7.14e8


class TestConfigValidation:
    def test_tokens_must_divide_dim(self):
        with pytest.raises(InvalidArgumentError):
            cf.EstimatorConfig(
                dim=10, num_condition_layers=1, trunk_variant="staged-transformer",
                num_tokens=3,
            )

    def test_heads_must_divide_width(self):
        with pytest.raises(InvalidArgumentError):
            cf.EstimatorConfig(
                dim=8, num_condition_layers=1, trunk_variant="staged-transformer",
                trunk_width=10, num_heads=4, num_tokens=4,
            )

    def test_round_trip(self):
        assert cf.EstimatorConfig.from_dict(TINY_TRANSFORMER.to_dict()) == TINY_TRANSFORMER
