"""
Federated training loop with over-the-air gradient aggregation.

A communication round: pick devices and the receive beamformer, broadcast w,
compute local gradients at the selected devices, aggregate them over the air,
and step w <- w - lr / (sum of selected K_m) * Re[r].
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..aggregation import ota_aggregate
from ..beamforming import SCASettings
from ..channel import Geometry, RoundMode, path_loss_linear, sample_fading
from ..errors import ExperimentError, OtaflError, ParameterError
from ..objective import AggregationParams, DeviceProfile, dataset_sizes, selected_indices
from ..selection import SelectionMethod, SelectionOutcome, select
from .data import Dataset
from .model import ModelState, accuracy, cross_entropy_loss, local_gradient

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    """How one federated run is driven.

    batch_size 0 means the full local dataset is used every round, so one
    round is one epoch.
    """

    learning_rate: float = 0.05
    rounds: int = 100
    batch_size: int = 0
    method: SelectionMethod = SelectionMethod.GSDS
    round_mode: RoundMode = RoundMode.STATIC
    sca: SCASettings = field(default_factory=SCASettings)
    adsbf_eps: float = 1e-6
    adsbf_max_iters: int = 10

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ParameterError(f"Learning rate must be positive, got {self.learning_rate}")
        if self.rounds < 1:
            raise ParameterError(f"Rounds must be >= 1, got {self.rounds}")
        if self.batch_size < 0:
            raise ParameterError(f"Batch size must be >= 0, got {self.batch_size}")


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    epoch: int
    test_loss: float
    test_accuracy: float
    train_loss: float
    d_value: float
    num_selected: int
    wall_ms: float


@dataclass
class Federation:
    """Everything fixed for one replica: data shards, devices and RNG streams."""

    shards: List[Dataset]
    test_set: Dataset
    geometry: Geometry
    profiles: List[DeviceProfile]
    params: AggregationParams
    fading_rng: np.random.Generator
    noise_rng: np.random.Generator
    batch_rng: np.random.Generator

    @property
    def num_devices(self) -> int:
        return len(self.profiles)


def global_loss(state: ModelState, shards: List[Dataset]) -> float:
    """K_m-weighted mean of local losses, i.e. the loss over the union of shards."""
    sizes = np.array([len(s) for s in shards], dtype=float)
    losses = np.array([cross_entropy_loss(state, s) for s in shards])
    return float(sizes @ losses / sizes.sum())


class FederatedTrainer:
    """Runs communication rounds for one method on one federation."""

    def __init__(self, config: TrainingConfig, federation: Federation):
        self.config = config
        self.federation = federation
        self.outcome: Optional[SelectionOutcome] = None
        self._batch_orders: List[np.ndarray] = []
        largest = max(len(s) for s in federation.shards)
        if config.batch_size and config.batch_size < largest:
            self.rounds_per_epoch = math.ceil(largest / config.batch_size)
        else:
            self.rounds_per_epoch = 1

    def _refresh_channels(self):
        """Redraws small-scale fading for every device (per-round mode)."""
        fed = self.federation
        gains = np.array([1.0 / path_loss_linear(d) for d in fed.geometry.distances])
        channels = sample_fading(gains, fed.profiles[0].channel.shape[0], fed.fading_rng)
        fed.profiles = [
            DeviceProfile(p.index, p.dataset_size, channels[i]) for i, p in enumerate(fed.profiles)
        ]

    def _decide(self, round_index: int) -> Tuple[SelectionOutcome, float]:
        """Returns the selection in force and the solver time spent this round."""
        if self.config.round_mode is RoundMode.PER_ROUND and round_index > 0:
            self._refresh_channels()
            self.outcome = None
        if self.outcome is not None:
            return self.outcome, 0.0
        fed = self.federation
        self.outcome = select(
            self.config.method,
            fed.profiles,
            fed.params,
            self.config.sca,
            eps=self.config.adsbf_eps,
            max_iters=self.config.adsbf_max_iters,
        )
        return self.outcome, self.outcome.wall_ms

    def _shuffle_epoch(self, round_index: int):
        """Draws one permutation per device at the start of each epoch.

        Every device gets one, selected or not, so the batch stream does not
        depend on the selection.
        """
        if self.rounds_per_epoch == 1 or round_index % self.rounds_per_epoch != 0:
            return
        self._batch_orders = [self.federation.batch_rng.permutation(len(s)) for s in self.federation.shards]

    def _batch(self, device: int, round_index: int) -> Optional[np.ndarray]:
        if self.rounds_per_epoch == 1:
            return None
        position = round_index % self.rounds_per_epoch
        size = self.config.batch_size
        return self._batch_orders[device][position * size:(position + 1) * size]

    def run_round(self, state: ModelState, round_index: int) -> Tuple[ModelState, RoundMetrics]:
        fed = self.federation
        try:
            outcome, solver_ms = self._decide(round_index)
            self._shuffle_epoch(round_index)
            chosen = selected_indices(outcome.selection)
            batches = [self._batch(device, round_index) for device in range(fed.num_devices)]
            messages = [local_gradient(state, fed.shards[i], batches[i]) for i in chosen]
            selected = [fed.profiles[i] for i in chosen]
            aggregate = ota_aggregate(messages, outcome.beamformer, selected, fed.params, fed.noise_rng)
        except OtaflError as e:
            raise ExperimentError(f"Round failed: {e}", round_index=round_index) from e

        total = float(np.sum(dataset_sizes(selected)))
        new_state = ModelState(
            state.weights - self.config.learning_rate / total * aggregate.estimate,
            state.num_classes,
        )
        metrics = RoundMetrics(
            round=round_index + 1,
            epoch=round_index // self.rounds_per_epoch + 1,
            test_loss=cross_entropy_loss(new_state, fed.test_set),
            test_accuracy=accuracy(new_state, fed.test_set),
            train_loss=global_loss(new_state, fed.shards),
            d_value=outcome.d_value,
            num_selected=outcome.num_selected,
            wall_ms=solver_ms,
        )
        LOGGER.debug(
            f"Round {metrics.round}: loss={metrics.test_loss:.4f}, acc={metrics.test_accuracy:.4f}, "
            f"selected={metrics.num_selected}"
        )
        return new_state, metrics

    def run_training(self, state: Optional[ModelState] = None) -> Tuple[ModelState, List[RoundMetrics]]:
        fed = self.federation
        if state is None:
            state = ModelState.zeros(fed.test_set.num_classes, fed.test_set.feature_dim)
        trace = []
        started = time.perf_counter()
        for round_index in range(self.config.rounds):
            state, metrics = self.run_round(state, round_index)
            trace.append(metrics)
        LOGGER.info(
            f"{self.config.method.value}: {self.config.rounds} rounds in "
            f"{time.perf_counter() - started:.1f}s, final accuracy {trace[-1].test_accuracy:.4f}"
        )
        return state, trace


def run_training(config: TrainingConfig, federation: Federation) -> List[RoundMetrics]:
    """Trains from w = 0 for config.rounds rounds and returns the per-round trace."""
    _, trace = FederatedTrainer(config, federation).run_training()
    return trace
