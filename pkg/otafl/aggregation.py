"""
Over-the-air analog gradient aggregation.

Each selected device normalizes its gradient by v_m = ||g_m|| / sqrt(D) and
pre-equalizes its channel with weight a_m; the server combines the antenna
signals with f, rescales by 1/sqrt(eta) and keeps the real part. Without noise
the result is exactly sum_m K_m g_m.
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, ParameterError
from .objective import AggregationParams, Beamformer, DeviceProfile, channel_matrix, dataset_sizes

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class GradientMessage:
    """A local gradient and its normalizer, sent over the digital side channel."""

    gradient: np.ndarray
    normalizer: float

    @classmethod
    def from_gradient(cls, gradient: np.ndarray) -> "GradientMessage":
        gradient = np.asarray(gradient, dtype=float)
        return cls(gradient, float(np.linalg.norm(gradient) / np.sqrt(gradient.size)))

    @property
    def dimension(self) -> int:
        return int(self.gradient.size)


@dataclass(frozen=True)
class AggregateResult:
    estimate: np.ndarray
    scaling: float
    weights: np.ndarray


def _gains(beamformer: Beamformer, profiles: Sequence[DeviceProfile]) -> np.ndarray:
    """f^H h_m for each profile."""
    return channel_matrix(profiles) @ beamformer.vector.conj()


def receive_scaling(
    beamformer: Beamformer,
    profiles: Sequence[DeviceProfile],
    normalizers: Sequence[float],
    power_limit: float,
) -> float:
    """eta = min_m P0 |f^H h_m|^2 / (K_m^2 v_m^2) over devices with v_m > 0.

    Devices with a zero gradient transmit nothing and do not bound eta.

    Raises:
        DomainError: if every normalizer is zero or a transmitting device has
            zero beamforming gain.
    """
    normalizers = np.asarray(normalizers, dtype=float)
    if np.any(normalizers < 0):
        raise DomainError("Gradient normalizers must be non-negative")
    active = normalizers > 0
    if not np.any(active):
        raise DomainError("Every selected device has a zero gradient")
    gains = np.abs(_gains(beamformer, profiles)) ** 2
    if np.any(gains[active] == 0.0):
        raise DomainError("A transmitting device has zero beamforming gain")
    sizes = dataset_sizes(profiles)
    return float(np.min(power_limit * gains[active] / (sizes[active] ** 2 * normalizers[active] ** 2)))


def transmit_weights(
    beamformer: Beamformer,
    scaling: float,
    profiles: Sequence[DeviceProfile],
    normalizers: Sequence[float],
) -> np.ndarray:
    """a_m = sqrt(eta) K_m v_m / (f^H h_m); zero for devices with v_m = 0."""
    normalizers = np.asarray(normalizers, dtype=float)
    gains = _gains(beamformer, profiles)
    active = normalizers > 0
    if np.any(gains[active] == 0):
        raise DomainError("A transmitting device has zero beamforming gain")
    weights = np.zeros(len(profiles), dtype=complex)
    sizes = dataset_sizes(profiles)
    weights[active] = np.sqrt(scaling) * sizes[active] * normalizers[active] / gains[active]
    return weights


def ota_aggregate(
    messages: Sequence[GradientMessage],
    beamformer: Beamformer,
    profiles: Sequence[DeviceProfile],
    params: AggregationParams,
    rng: np.random.Generator,
) -> AggregateResult:
    """Simulates D channel uses of analog aggregation with receiver noise.

    Args:
        messages: One message per selected device, aligned with profiles.
        beamformer: Receive beamformer f.
        profiles: Selected devices.
        params: Power limit and noise power.
        rng: Generator of the noise stream.

    Returns:
        Re[f^H y / sqrt(eta)] per gradient entry, plus eta and the weights.
    """
    if len(messages) != len(profiles):
        raise ParameterError(f"{len(messages)} messages for {len(profiles)} devices")
    if not messages:
        raise DomainError("Aggregation needs at least one selected device")
    dimensions = {m.dimension for m in messages}
    if len(dimensions) != 1:
        raise ParameterError(f"Gradient dimensions differ across devices: {sorted(dimensions)}")
    dimension = dimensions.pop()
    num_antennas = profiles[0].channel.shape[0]

    normalizers = np.array([m.normalizer for m in messages])
    noise_scale = np.sqrt(params.noise_power / 2.0)
    noise = noise_scale * (
        rng.standard_normal((num_antennas, dimension)) + 1j * rng.standard_normal((num_antennas, dimension))
    )
    if not np.any(normalizers > 0):
        LOGGER.warning("All selected gradients are zero, nothing is transmitted")
        return AggregateResult(np.zeros(dimension), np.inf, np.zeros(len(profiles), dtype=complex))

    scaling = receive_scaling(beamformer, profiles, normalizers, params.power_limit)
    weights = transmit_weights(beamformer, scaling, profiles, normalizers)

    symbols = np.zeros((len(messages), dimension))
    for row, message in enumerate(messages):
        if message.normalizer > 0:
            symbols[row] = message.gradient / message.normalizer
    received = channel_matrix(profiles).T @ (weights[:, None] * symbols) + noise
    estimate = np.real(beamformer.vector.conj() @ received) / np.sqrt(scaling)
    return AggregateResult(estimate, scaling, weights)
