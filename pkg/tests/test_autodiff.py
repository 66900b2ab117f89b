"""Tensor ops, layers and the split model."""

import numpy as np
import pytest

from src.autodiff import (
    LayerSpec,
    ModelConfig,
    RunningStats,
    SplitModel,
    Tensor,
    batchnorm_forward,
    conv2d_forward,
    dense_forward,
    latent_sites,
    maxpool2d,
    no_grad,
    one_hot,
    relu,
    set_debug,
    softmax_cross_entropy,
)
from src.errors import (
    BatchSizeError,
    ConfigurationError,
    DimensionError,
    NonFiniteError,
    UsageError,
    ValidationError,
)


class TestTensor:
    """Elementwise ops and graph traversal."""

    def test_shared_subexpression_accumulates(self):
        """A tensor used twice receives both gradient contributions."""
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        y = (x * x + x).sum()
        y.backward()
        np.testing.assert_allclose(x.grad, 2 * x.data + 1)

    def test_broadcast_gradient_sums_down(self):
        """Broadcast operands get gradients summed back to their shape."""
        a = Tensor(np.ones((3, 2)), requires_grad=True)
        b = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        (a * b).sum().backward()
        np.testing.assert_allclose(b.grad, [3.0, 3.0])
        np.testing.assert_allclose(a.grad, np.tile([1.0, 2.0], (3, 1)))

    def test_backward_needs_scalar(self):
        """Non-scalar roots are rejected."""
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(UsageError):
            (x * 2).backward()

    def test_no_grad_records_nothing(self):
        """Ops inside no_grad produce leaves."""
        x = Tensor(np.ones(2), requires_grad=True)
        with no_grad():
            y = x * 3
        assert not y.requires_grad, "no_grad output should not require grad"
        assert y.is_leaf

    def test_matmul_axis_error_names_axes(self):
        """Inner-axis mismatch names both axes."""
        with pytest.raises(DimensionError, match="axis 1 has 3.*axis 0 has 4"):
            Tensor(np.ones((2, 3))) @ Tensor(np.ones((4, 2)))

    def test_debug_mode_flags_non_finite(self):
        """Debug checks catch NaN from finite inputs."""
        set_debug(True)
        try:
            with pytest.raises(NonFiniteError, match="log"):
                Tensor([-1.0]).log()
        finally:
            set_debug(False)


class TestLayers:
    """Layer ops against hand-computed values."""

    def test_dense_example(self):
        """x=[[1,2]], W=[[1,0],[0,1]], b=[0.5,-0.5] gives [[1.5, 1.5]]."""
        out = dense_forward(Tensor([[1.0, 2.0]]), Tensor(np.eye(2)), Tensor([0.5, -0.5]))
        np.testing.assert_allclose(out.data, [[1.5, 1.5]])

    def test_dense_shape_mismatch(self):
        with pytest.raises(DimensionError):
            dense_forward(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))), Tensor(np.zeros(2)))

    def test_conv_identity_kernel(self):
        """A 1x1 unit kernel reproduces its input."""
        x = np.random.default_rng(0).random((2, 1, 5, 5))
        out = conv2d_forward(Tensor(x), Tensor(np.ones((1, 1, 1, 1))), Tensor(np.zeros(1)))
        np.testing.assert_allclose(out.data, x)

    def test_conv_sums_window(self):
        """A 3x3 all-ones kernel with padding 1 sums each neighbourhood."""
        x = np.arange(9.0).reshape(1, 1, 3, 3)
        kernel = Tensor(np.ones((1, 1, 3, 3)))
        out = conv2d_forward(Tensor(x), kernel, Tensor(np.zeros(1)), padding=1)
        assert out.shape == (1, 1, 3, 3)
        assert out.data[0, 0, 1, 1] == pytest.approx(36.0), "centre should sum every input"
        assert out.data[0, 0, 0, 0] == pytest.approx(0 + 1 + 3 + 4)

    def test_conv_non_integral_output(self):
        """Stride that does not divide the padded extent is a configuration error."""
        with pytest.raises(ConfigurationError, match="non-integral"):
            conv2d_forward(
                Tensor(np.ones((1, 1, 6, 6))),
                Tensor(np.ones((1, 1, 3, 3))),
                Tensor(np.zeros(1)),
                stride=2,
            )

    def test_batchnorm_train_statistics(self):
        """Train-mode output has zero mean and unit variance per channel."""
        x = np.random.default_rng(1).normal(3.0, 2.0, size=(16, 2, 3, 3))
        stats = RunningStats.identity(2)
        out = batchnorm_forward(
            Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), stats, training=True
        )
        np.testing.assert_allclose(out.data.mean(axis=(0, 2, 3)), 0.0, atol=1e-10)
        np.testing.assert_allclose(out.data.var(axis=(0, 2, 3)), 1.0, atol=1e-3)
        assert np.all(stats.mean != 0), "running mean should move towards the batch mean"

    def test_batchnorm_eval_uses_running_stats(self):
        """Eval mode leaves running statistics untouched and applies them."""
        stats = RunningStats(mean=np.array([1.0]), var=np.array([4.0]), epsilon=0.0)
        x = Tensor(np.full((1, 1), 5.0))
        out = batchnorm_forward(x, Tensor([1.0]), Tensor([0.0]), stats, training=False)
        assert out.data[0, 0] == pytest.approx(2.0)
        assert stats.mean[0] == 1.0

    def test_batchnorm_single_example_train(self):
        with pytest.raises(BatchSizeError):
            batchnorm_forward(
                Tensor(np.ones((1, 2))),
                Tensor(np.ones(2)),
                Tensor(np.zeros(2)),
                RunningStats.identity(2),
                True,
            )

    def test_relu_subgradient_at_zero(self):
        """ReLU passes gradient only where the input is positive."""
        x = Tensor([-1.0, 0.0, 2.0], requires_grad=True)
        relu(x).sum().backward()
        np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])

    def test_maxpool_routes_to_winner(self):
        x = Tensor(np.array([[[[1.0, 4.0], [3.0, 2.0]]]]), requires_grad=True)
        out = maxpool2d(x, 2)
        out.sum().backward()
        assert out.data.item() == 4.0
        np.testing.assert_array_equal(x.grad[0, 0], [[0.0, 1.0], [0.0, 0.0]])


class TestCrossEntropy:
    """Softmax cross-entropy values and label checks."""

    def test_uniform_logits(self):
        """Equal logits over K classes give log K."""
        result = softmax_cross_entropy(Tensor(np.zeros((2, 4))), one_hot(np.array([0, 3]), 4))
        assert result.loss.item() == pytest.approx(np.log(4))
        np.testing.assert_allclose(result.probabilities, 0.25)

    def test_large_logits_are_stable(self):
        """Max-shifting keeps huge logits finite."""
        result = softmax_cross_entropy(Tensor([[1000.0, 0.0]]), np.array([[1.0, 0.0]]))
        assert result.loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_gradient_is_probabilities_minus_labels(self):
        logits = Tensor(np.array([[1.0, 2.0, 0.5]]), requires_grad=True)
        labels = np.array([[0.0, 1.0, 0.0]])
        result = softmax_cross_entropy(logits, labels)
        result.loss.backward()
        np.testing.assert_allclose(logits.grad, result.probabilities - labels)

    def test_unnormalized_labels_rejected(self):
        with pytest.raises(ValidationError, match="row 1"):
            softmax_cross_entropy(Tensor(np.zeros((2, 2))), np.array([[1.0, 0.0], [0.6, 0.6]]))


class TestSplitModel:
    """Latent placement, modes and copies."""

    def test_latent_sites_follow_batchnorm(self):
        """Each site sits directly after a batchnorm, before its ReLU."""
        config = ModelConfig(
            input_shape=(1, 8, 8), num_classes=3, conv_channels=(2, 3), head_units=0
        )
        specs = config.architecture()
        sites = latent_sites(specs)
        assert len(sites) == 2
        for split in sites:
            assert specs[split - 1].kind.label == "batchnorm"
            assert specs[split].kind.label == "relu"

    def test_default_site_is_last_conv_block(self, tiny_model):
        assert tiny_model.latent_site.depth == 1
        assert tiny_model.latent_site.shape == (3, 4, 4)
        assert tiny_model.latent_dim == 48

    def test_invalid_depth(self, tiny_model_config):
        with pytest.raises(ConfigurationError, match="not a valid site"):
            SplitModel.build(tiny_model_config, latent_depth=5)

    def test_encode_decode_equals_forward(self, tiny_model):
        """The mean pass composes encode and decode."""
        x = np.random.default_rng(0).random((3, 1, 8, 8))
        with tiny_model.evaluating():
            whole = tiny_model.forward(x).logits.data
            split = tiny_model.decode(tiny_model.encode(x)).data
        np.testing.assert_array_equal(whole, split)

    def test_input_shape_checked(self, tiny_model):
        with pytest.raises(DimensionError):
            tiny_model.encode(np.zeros((2, 1, 7, 8)))

    def test_freeze_detaches_parameters(self, tiny_model):
        tiny_model.freeze()
        assert not tiny_model.training
        assert all(not t.requires_grad for _, t in tiny_model.parameters())

    def test_clone_is_independent(self, tiny_model):
        """Clones share values, not arrays, and can move the latent site."""
        copy = tiny_model.clone(latent_depth=0)
        assert copy.fingerprint() == tiny_model.fingerprint()
        assert copy.latent_site.depth == 0
        copy.parameters()[0][1].data += 1.0
        assert (
            copy.fingerprint() != tiny_model.fingerprint()
        ), "editing the clone must not touch the original"

    def test_predict_logits_restores_mode(self, tiny_model):
        tiny_model.train()
        logits = tiny_model.predict_logits(np.zeros((5, 1, 8, 8)), batch_size=2)
        assert logits.shape == (5, 3)
        assert tiny_model.training, "predict_logits should restore train mode"

    def test_same_seed_same_weights(self, tiny_model_config):
        first = SplitModel.build(tiny_model_config)
        second = SplitModel.build(tiny_model_config)
        assert first.fingerprint() == second.fingerprint()

    def test_dense_only_model(self):
        """A dense head alone still hosts a latent site."""
        specs = [
            LayerSpec.flatten(),
            LayerSpec.dense(4),
            LayerSpec.batchnorm(),
            LayerSpec.relu(),
            LayerSpec.dense(2),
        ]
        model = SplitModel(specs, (1, 2, 2))
        assert model.latent_site.shape == (4,)
        assert model.num_classes == 2
