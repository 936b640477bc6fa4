import dataclasses
import math

import numpy as np
import pytest

from otafl.channel import RoundMode, sample_channels, sample_distances
from otafl.errors import ExperimentError, ParameterError
from otafl.flsim.data import Dataset, make_gaussian_clusters, partition_iid
from otafl.flsim.model import ModelState, cross_entropy_loss, loss_gradient
from otafl.flsim.training import FederatedTrainer, Federation, TrainingConfig, global_loss, run_training
from otafl.objective import AggregationParams, DeviceProfile
from otafl.selection import SelectionMethod
from otafl.streams import stream


def make_federation(seed=0, num_devices=4, num_antennas=3, per_device=12, noise_power=0.0, num_classes=3, feature_dim=4):
    data_rng = np.random.default_rng(seed)
    per_class = math.ceil(per_device / num_classes) * num_devices
    train, centers = make_gaussian_clusters(num_classes, feature_dim, per_class, data_rng, separation=2.0)
    test, _ = make_gaussian_clusters(num_classes, feature_dim, 20, data_rng, centers=centers)
    shards = partition_iid(train, num_devices, per_device, data_rng)
    geometry = sample_distances(num_devices, 10.0, 100.0, stream(seed, "geometry"))
    fading = stream(seed, "fading")
    channels = sample_channels(geometry, num_antennas, fading).channels
    profiles = [DeviceProfile(i, per_device, channels[i]) for i in range(num_devices)]
    return Federation(
        shards=shards,
        test_set=test,
        geometry=geometry,
        profiles=profiles,
        params=AggregationParams.for_profiles(profiles, 1e-3, noise_power),
        fading_rng=fading,
        noise_rng=stream(seed, "noise"),
        batch_rng=stream(seed, "batch"),
    )


def union(shards):
    return Dataset(
        np.vstack([s.features for s in shards]),
        np.concatenate([s.labels for s in shards]),
        shards[0].num_classes,
    )


class CountingGenerator:
    """Forwards permutation draws to a real generator and counts them."""

    def __init__(self, rng):
        self.rng = rng
        self.draws = 0

    def permutation(self, n):
        self.draws += 1
        return self.rng.permutation(n)


def without_timing(trace):
    return [dataclasses.replace(m, wall_ms=0.0) for m in trace]


class TestTrainingConfig:
    @pytest.mark.parametrize("kwargs", [{"learning_rate": 0.0}, {"rounds": 0}, {"batch_size": -1}])
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterError):
            TrainingConfig(**kwargs)


class TestRound:
    def test_noiseless_select_all_is_gradient_descent(self):
        federation = make_federation()
        config = TrainingConfig(learning_rate=0.05, rounds=5, method=SelectionMethod.SELECT_ALL)
        trainer = FederatedTrainer(config, federation)
        data = union(federation.shards)
        state = reference = ModelState.zeros(3, 4)
        for round_index in range(5):
            state, metrics = trainer.run_round(state, round_index)
            reference = ModelState(reference.weights - 0.05 * loss_gradient(reference, data), 3)
            np.testing.assert_allclose(state.weights, reference.weights, rtol=0, atol=1e-9)
            assert metrics.num_selected == 4

    def test_noiseless_single_device(self):
        federation = make_federation()
        trainer = FederatedTrainer(TrainingConfig(method=SelectionMethod.TOP_ONE), federation)
        state, metrics = trainer.run_round(ModelState.zeros(3, 4), 0)
        device = int(np.argmax([np.linalg.norm(p.channel) for p in federation.profiles]))
        expected = -0.05 * loss_gradient(ModelState.zeros(3, 4), federation.shards[device])
        np.testing.assert_allclose(state.weights, expected, rtol=0, atol=1e-12)
        assert metrics.num_selected == 1

    def test_metrics(self):
        federation = make_federation(noise_power=1e-12)
        state, metrics = FederatedTrainer(TrainingConfig(method=SelectionMethod.GSDS), federation).run_round(
            ModelState.zeros(3, 4), 0
        )
        assert metrics.round == 1 and metrics.epoch == 1
        assert metrics.test_loss == pytest.approx(cross_entropy_loss(state, federation.test_set))
        assert metrics.train_loss == pytest.approx(global_loss(state, federation.shards))
        assert 0.0 <= metrics.test_accuracy <= 1.0
        assert metrics.wall_ms > 0

    def test_failure_carries_round(self):
        federation = make_federation()
        federation.profiles[0] = DeviceProfile(0, 12, np.zeros(3, dtype=complex))
        trainer = FederatedTrainer(TrainingConfig(method=SelectionMethod.SELECT_ALL), federation)
        with pytest.raises(ExperimentError) as info:
            trainer.run_round(ModelState.zeros(3, 4), 0)
        assert info.value.round_index == 0


class TestTraining:
    def test_trace_length(self):
        trace = run_training(TrainingConfig(rounds=4, method=SelectionMethod.TOP_ONE), make_federation(noise_power=1e-9))
        assert [m.round for m in trace] == [1, 2, 3, 4]

    def test_single_round_matches_run_round(self):
        config = TrainingConfig(rounds=1, method=SelectionMethod.ADSBF)
        trace = run_training(config, make_federation(noise_power=1e-9))
        _, metrics = FederatedTrainer(config, make_federation(noise_power=1e-9)).run_round(ModelState.zeros(3, 4), 0)
        assert without_timing(trace) == without_timing([metrics])

    def test_deterministic(self):
        config = TrainingConfig(rounds=3, method=SelectionMethod.GSDS)
        first = run_training(config, make_federation(seed=5, noise_power=1e-9))
        second = run_training(config, make_federation(seed=5, noise_power=1e-9))
        assert without_timing(first) == without_timing(second)

    def test_noiseless_loss_decreases(self):
        trace = run_training(TrainingConfig(rounds=10, method=SelectionMethod.SELECT_ALL), make_federation())
        losses = [m.train_loss for m in trace]
        assert np.all(np.diff(losses) < 0)

    def test_static_channels_solve_once(self):
        trace = run_training(TrainingConfig(rounds=3, method=SelectionMethod.SELECT_ALL), make_federation(noise_power=1e-9))
        assert trace[0].wall_ms > 0
        assert [m.wall_ms for m in trace[1:]] == [0.0, 0.0]

    def test_per_round_channels(self):
        federation = make_federation(noise_power=1e-9)
        initial = [p.channel.copy() for p in federation.profiles]
        config = TrainingConfig(rounds=3, method=SelectionMethod.TOP_ONE, round_mode=RoundMode.PER_ROUND)
        trace = run_training(config, federation)
        assert all(m.wall_ms > 0 for m in trace)
        assert not np.allclose(initial[0], federation.profiles[0].channel)

    def test_mini_batch_epochs(self):
        config = TrainingConfig(rounds=6, batch_size=5, method=SelectionMethod.TOP_ONE)
        federation = make_federation(noise_power=1e-9)
        trainer = FederatedTrainer(config, federation)
        assert trainer.rounds_per_epoch == 3
        _, trace = trainer.run_training()
        assert [m.epoch for m in trace] == [1, 1, 1, 2, 2, 2]

    def test_one_permutation_per_device_per_epoch(self):
        config = TrainingConfig(rounds=6, batch_size=5, method=SelectionMethod.TOP_ONE)
        federation = make_federation(noise_power=1e-9)
        federation.batch_rng = CountingGenerator(federation.batch_rng)
        trainer = FederatedTrainer(config, federation)
        trainer.run_training()
        assert federation.batch_rng.draws == 2 * federation.num_devices

    def test_epoch_batches_cover_each_shard_once(self):
        config = TrainingConfig(rounds=3, batch_size=5, method=SelectionMethod.TOP_ONE)
        trainer = FederatedTrainer(config, make_federation(noise_power=1e-9))
        state = ModelState.zeros(3, 4)
        batches = []
        for round_index in range(3):
            state, _ = trainer.run_round(state, round_index)
            batches.append(trainer._batch(1, round_index))
        assert sorted(np.concatenate(batches).tolist()) == list(range(12))


class TestGlobalLoss:
    def test_weighted_mean_of_local_losses(self, rng):
        federation = make_federation()
        state = ModelState(rng.standard_normal(15), 3)
        assert global_loss(state, federation.shards) == pytest.approx(
            cross_entropy_loss(state, union(federation.shards)), rel=1e-12
        )
