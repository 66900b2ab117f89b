"""Learning-rate schedule, mixup, SGD and the training drivers."""

from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from src.autodiff import Tensor, softmax_cross_entropy
from src.data import batches_from_samples, stack_features
from src.errors import (
    ConfigurationError,
    DimensionError,
    TrainingError,
    UsageError,
    ValidationError,
)
from src.training import (
    DIVERGENCE_FACTOR,
    LOG_COLUMNS,
    SGD,
    MixupConfig,
    TrainingLog,
    TrainSchedule,
    clip_grad_norm,
    cosine_decay,
    cosine_restart_lr,
    cycle_position,
    draw_mixup,
    initial_target,
    mixup_batch,
    pretrain_source,
    steps_per_epoch,
    train_transfer,
)
from src.training.trainer import _fit
from src.transfer import LossBreakdown, TransferConfig, TransferMethod

SHORT = TrainSchedule(total_epochs=1, cycle_length_epochs=1, batch_size=8)


class TestSchedule:
    """Test cosine decay with warm restarts."""

    def test_starts_at_max(self):
        assert cosine_restart_lr(0, TrainSchedule()) == pytest.approx(0.1)

    def test_midpoint(self):
        """Half-way through a 20-epoch cycle sits at the mean of max and min."""
        assert cosine_decay(10, 20, 0.1, 1e-5) == pytest.approx(0.050005)
        assert cosine_restart_lr(10, TrainSchedule()) == pytest.approx(0.050005)

    def test_restart_at_cycle_end(self):
        schedule = TrainSchedule()
        assert cosine_restart_lr(19, schedule) < 0.001
        assert cosine_restart_lr(20, schedule) == pytest.approx(
            0.1
        ), "rate should jump back to max_lr"
        assert cosine_restart_lr(40, schedule) == pytest.approx(0.1)

    def test_monotone_within_a_cycle(self):
        rates = [cosine_restart_lr(step, TrainSchedule()) for step in range(20)]
        assert all(a > b for a, b in zip(rates, rates[1:]))
        assert min(rates) > 1e-5

    def test_growing_cycles(self):
        """With cycle_mult 2 the second cycle is twice as long."""
        assert cycle_position(25, 10, 2) == (15, 20)
        assert cycle_position(30, 10, 2) == (0, 40)

    def test_steps_per_epoch_scaling(self):
        """Cycle length is counted in epochs and converted to steps."""
        schedule = TrainSchedule(cycle_length_epochs=2)
        assert cosine_restart_lr(6, schedule, steps_per_epoch=3) == pytest.approx(0.1)
        assert cosine_restart_lr(3, schedule, steps_per_epoch=3) == pytest.approx(0.050005)

    def test_negative_step(self):
        with pytest.raises(ConfigurationError):
            cycle_position(-1, 10, 1)

    @pytest.mark.parametrize(
        "overrides",
        [
            {"min_lr": 0.2},
            {"cycle_length_epochs": 0},
            {"cycle_mult": 0},
            {"batch_size": 1},
            {"momentum": 1.0},
        ],
    )
    def test_invalid_schedule(self, overrides):
        with pytest.raises(ConfigurationError):
            TrainSchedule(**overrides)

    def test_steps_per_epoch(self):
        """A trailing singleton batch is not a step."""
        assert steps_per_epoch(18, 8) == 3
        assert steps_per_epoch(17, 8) == 2
        assert steps_per_epoch(16, 8) == 2


class TestMixup:
    """Test batch mixing."""

    def test_paired_halves_share_lambda_and_permutation(self, paired_batch):
        mixed = mixup_batch(paired_batch, 0.3)
        x_target, x_source = paired_batch.x_target, paired_batch.x_source
        np.testing.assert_allclose(mixed.x_target[0], 0.3 * x_target[0] + 0.7 * x_target[3])
        np.testing.assert_allclose(mixed.x_source[0], 0.3 * x_source[0] + 0.7 * x_source[3])
        np.testing.assert_allclose(mixed.soft_labels[1], [0.0, 0.3, 0.7])
        assert mixed.mixed
        np.testing.assert_array_equal(mixed.target_ids, paired_batch.target_ids)

    def test_lambda_one_is_identity(self, paired_batch):
        mixed = mixup_batch(paired_batch, 1.0, np.array([1, 0, 3, 2]))
        np.testing.assert_array_equal(mixed.x_target, paired_batch.x_target)
        np.testing.assert_array_equal(mixed.soft_labels, paired_batch.soft_labels)

    def test_soft_labels_stay_normalized(self, paired_batch):
        lam, perm = draw_mixup(np.random.default_rng(0), paired_batch.size, 0.2)
        mixed = mixup_batch(paired_batch, lam, perm)
        np.testing.assert_allclose(mixed.soft_labels.sum(axis=1), 1.0)

    def test_draw_is_seeded(self):
        first = draw_mixup(np.random.default_rng(4), 6, 0.2)
        second = draw_mixup(np.random.default_rng(4), 6, 0.2)
        assert first[0] == second[0]
        np.testing.assert_array_equal(first[1], second[1])
        assert 0.0 <= first[0] <= 1.0

    def test_lambda_out_of_range(self, paired_batch):
        with pytest.raises(ValidationError):
            mixup_batch(paired_batch, 1.5)

    def test_bad_permutation(self, paired_batch):
        with pytest.raises(DimensionError):
            mixup_batch(paired_batch, 0.5, np.array([0, 0, 1, 2]))

    def test_alpha_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            MixupConfig(enabled=True, alpha=0.0)
        assert not MixupConfig(enabled=False, alpha=0.0).enabled

    def test_symmetric_beta_mean(self):
        """Beta(alpha, alpha) weights average one half."""
        rng = np.random.default_rng(9)
        lams = np.array([draw_mixup(rng, 2, 0.2)[0] for _ in range(100_000)])
        assert lams.mean() == pytest.approx(0.5, rel=0.01)


class TestSGD:
    """Test the momentum update."""

    def test_two_steps_by_hand(self):
        """v = 0.9 v + (g + 0.1 p); p -= 0.5 v."""
        param = Tensor([1.0], requires_grad=True)
        optimizer = SGD([("p", param)], momentum=0.9, weight_decay=0.1)
        param.grad = np.array([2.0])
        optimizer.step(0.5)
        assert param.data[0] == pytest.approx(-0.05)
        param.grad = np.array([2.0])
        optimizer.step(0.5)
        assert param.data[0] == pytest.approx(-0.05 - 0.5 * (0.9 * 2.1 + 1.995))

    def test_skips_missing_and_frozen(self):
        live = Tensor([1.0], requires_grad=True)
        frozen = Tensor([1.0])
        optimizer = SGD([("live", live), ("frozen", frozen)])
        assert [name for name, _ in optimizer.parameters] == ["live"]
        optimizer.step(0.1)
        assert live.data[0] == 1.0, "a parameter without a gradient must not move"

    def test_zero_grad(self):
        param = Tensor([1.0], requires_grad=True)
        param.grad = np.array([1.0])
        SGD([("p", param)]).zero_grad()
        assert param.grad is None


class TestStability:
    """Test gradient-norm clipping and the divergence guard."""

    def test_clip_rescales_to_max_norm(self):
        a = Tensor([0.0], requires_grad=True)
        b = Tensor([0.0], requires_grad=True)
        a.grad, b.grad = np.array([3.0]), np.array([4.0])
        assert clip_grad_norm([("a", a), ("b", b)], 1.0) == pytest.approx(5.0)
        np.testing.assert_allclose([a.grad[0], b.grad[0]], [0.6, 0.8])

    @pytest.mark.parametrize("max_norm", [0.0, 10.0])
    def test_clip_leaves_small_or_unclipped_gradients(self, max_norm):
        param = Tensor([0.0, 0.0], requires_grad=True)
        param.grad = np.array([3.0, 4.0])
        assert clip_grad_norm([("p", param)], max_norm) == pytest.approx(5.0)
        np.testing.assert_array_equal(param.grad, [3.0, 4.0])

    def test_sgd_clip_bounds_the_step(self):
        param = Tensor([0.0], requires_grad=True)
        optimizer = SGD([("p", param)], momentum=0.0, weight_decay=0.0)
        param.grad = np.array([100.0])
        optimizer.clip(2.0)
        optimizer.step(0.5)
        assert param.data[0] == pytest.approx(-1.0)

    def test_negative_clip_norm(self):
        with pytest.raises(ConfigurationError, match="clip_norm"):
            TrainSchedule(clip_norm=-1.0)

    def test_blow_up_aborts_the_run(self, tiny_model, tiny_dataset):
        """A finite total far above the first step's is reported as divergence."""

        def batches(epoch):
            return batches_from_samples(tiny_dataset.source, 8, [0, epoch], 3)

        def loss_fn(batch, epoch, index):
            logits = tiny_model.forward(batch.x_target).logits
            ce = softmax_cross_entropy(logits, batch.soft_labels).loss
            scale = 1.0 if index == 0 else 10 * DIVERGENCE_FACTOR**2
            return LossBreakdown.assemble(TransferMethod.NONE, ce * scale)

        with pytest.raises(TrainingError, match="step 1 .*exceeds"):
            _fit(
                tiny_model,
                batches,
                loss_fn,
                len(tiny_dataset.source),
                SHORT,
                MixupConfig(enabled=False),
                TrainingLog(),
                "blow-up",
                False,
            )

    def test_default_transfer_run_stays_bounded(self, frozen_source, tiny_dataset):
        """VBKT at the transfer learning rate never trips the guard on a conv-block latent."""
        schedule = replace(SHORT, max_lr=1e-3, total_epochs=3, cycle_length_epochs=3)
        cfg = TransferConfig(method=TransferMethod.VBKT)
        target = initial_target(frozen_source, cfg)
        result = train_transfer(target, frozen_source, tiny_dataset, "b", cfg, schedule)
        totals = result.log.frame["total"]
        assert np.isfinite(totals).all()
        assert totals.max() < DIVERGENCE_FACTOR * max(totals.iloc[0], 1.0)


class TestPretrain:
    """Test source pretraining."""

    def test_freezes_and_logs(self, tiny_model, tiny_dataset, tmp_path):
        schedule = TrainSchedule(total_epochs=2, cycle_length_epochs=2, batch_size=8)
        result = pretrain_source(
            tiny_model,
            tiny_dataset.source,
            schedule,
            test_samples=tiny_dataset.source_test,
            log_path=tmp_path / "pre.csv",
        )
        assert result.model.frozen and not result.model.training
        assert all(not t.requires_grad for _, t in result.model.parameters())
        assert {"final_loss", "source_test_accuracy"} <= set(result.metrics)
        log = pd.read_csv(tmp_path / "pre.csv")
        assert list(log.columns) == LOG_COLUMNS
        assert len(log) == 2 * steps_per_epoch(36, 8)
        assert log["lr"].iloc[0] == pytest.approx(0.1)
        assert list(result.epoch_means().index) == [0, 1]

    def test_loss_decreases(self, tiny_model, tiny_dataset):
        schedule = TrainSchedule(total_epochs=6, cycle_length_epochs=6, batch_size=8, max_lr=0.05)
        result = pretrain_source(tiny_model, tiny_dataset.source, schedule)
        means = result.epoch_means()["total"]
        assert means.iloc[-1] < means.iloc[0]

    def test_empty_source(self, tiny_model):
        with pytest.raises(UsageError):
            pretrain_source(tiny_model, [], SHORT)

    def test_divergence_names_the_step(self, tiny_model, tiny_dataset):
        broken = [s.with_features(np.full(s.features.shape, np.nan)) for s in tiny_dataset.source]
        with pytest.raises(TrainingError, match="step 0"):
            pretrain_source(tiny_model, broken, SHORT)


class TestTransfer:
    """Test target-model training."""

    def test_source_is_left_untouched(self, frozen_source, tiny_dataset):
        before = frozen_source.fingerprint()
        target = initial_target(frozen_source, TransferConfig())
        result = train_transfer(target, frozen_source, tiny_dataset, "b", TransferConfig(), SHORT)
        assert frozen_source.fingerprint() == before
        assert result.model.fingerprint() != before, "the target copy should have moved"
        assert len(result.history) == steps_per_epoch(18, 8)

    def test_unfrozen_source(self, tiny_model, tiny_dataset):
        with pytest.raises(UsageError, match="frozen"):
            target = tiny_model.clone()
            train_transfer(target, tiny_model, tiny_dataset, "b", TransferConfig(), SHORT)

    def test_missing_source(self, tiny_model, tiny_dataset):
        with pytest.raises(UsageError):
            cfg = TransferConfig(method=TransferMethod.TSL)
            train_transfer(tiny_model, None, tiny_dataset, "b", cfg, SHORT)

    def test_target_must_be_a_copy(self, frozen_source, tiny_dataset):
        with pytest.raises(UsageError, match="separate copy"):
            train_transfer(frozen_source, frozen_source, tiny_dataset, "b", TransferConfig(), SHORT)

    def test_no_transfer_runs_without_source(self, tiny_model, tiny_dataset):
        cfg = TransferConfig(method=TransferMethod.NONE)
        result = train_transfer(tiny_model, None, tiny_dataset, "s6", cfg, SHORT)
        assert all(b.kl_latent == 0.0 and b.tsl_term == 0.0 for b in result.history)

    def test_deterministic(self, frozen_source, tiny_dataset, tmp_path):
        """Same seeds give the same weights and the same log."""
        mixup = MixupConfig(enabled=True, alpha=0.2)
        runs = []
        for name in ("first", "second"):
            target = initial_target(frozen_source, TransferConfig())
            runs.append(
                train_transfer(
                    target,
                    frozen_source,
                    tiny_dataset,
                    "b",
                    TransferConfig(),
                    SHORT,
                    mixup,
                    tmp_path / f"{name}.csv",
                )
            )
        assert runs[0].model.fingerprint() == runs[1].model.fingerprint()
        pd.testing.assert_frame_equal(
            pd.read_csv(tmp_path / "first.csv"), pd.read_csv(tmp_path / "second.csv")
        )

    def test_log_breakdown_is_consistent(self, frozen_source, tiny_dataset):
        cfg = TransferConfig(method=TransferMethod.VBKT, combine_with_tsl=True)
        target = initial_target(frozen_source, cfg)
        result = train_transfer(target, frozen_source, tiny_dataset, "b", cfg, SHORT)
        frame = result.log.frame
        np.testing.assert_allclose(frame["total"], frame["likelihood"] + frame["kl_latent"])
        assert (frame["tsl_term"] > 0).all()

    def test_cache_matches_uncached_run(self, frozen_source, tiny_dataset):
        """Reusing source outputs changes nothing but the work done."""
        schedule = replace(SHORT, total_epochs=2, cycle_length_epochs=2)
        x = stack_features(tiny_dataset.target_tests["b"])
        logits = {}
        for cache in (False, True):
            cfg = TransferConfig(cache_source=cache)
            target = initial_target(frozen_source, cfg)
            result = train_transfer(target, frozen_source, tiny_dataset, "b", cfg, schedule)
            logits[cache] = result.model.predict_logits(x)
            if cache:
                assert (
                    result.metrics["cache_hits"] == 18
                ), "every source sample is reused in the second epoch"
        np.testing.assert_allclose(logits[True], logits[False], atol=1e-8)


class TestInitialTarget:
    """Test where target training starts."""

    def test_copy_of_source(self, frozen_source):
        target = initial_target(frozen_source, TransferConfig())
        assert target.fingerprint() == frozen_source.fingerprint()
        assert target is not frozen_source
        assert not target.frozen

    def test_scratch_for_no_transfer(self, frozen_source):
        target = initial_target(frozen_source, TransferConfig(method=TransferMethod.NONE), seed=3)
        assert target.fingerprint() != frozen_source.fingerprint()
        assert target.latent_site == frozen_source.latent_site

    def test_other_latent_depth(self, frozen_source):
        target = initial_target(frozen_source, TransferConfig(), latent_depth=0)
        assert target.latent_site.depth == 0
        assert target.fingerprint() == frozen_source.fingerprint()
