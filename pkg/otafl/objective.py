"""
Joint beamforming / selection data model and the aggregation error metric.

The metric d(f, s; H) combines a data-exclusion penalty with a worst-device
noise penalty:

    d = (4/K^2) * (sum_m (1 - s_m) K_m)^2
        + sigma^2 / (P0 * (sum_m s_m K_m)^2) * max_{m selected} K_m^2 / |f^H h_m|^2

Both selection algorithms minimize it.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .errors import DomainError, ParameterError

LOGGER = logging.getLogger(__name__)

UNIT_NORM_TOL = 1e-9


@dataclass(frozen=True)
class DeviceProfile:
    """One device: its dataset size K_m and uplink channel h_m."""

    index: int
    dataset_size: int
    channel: np.ndarray

    def __post_init__(self):
        if self.dataset_size < 1:
            raise ParameterError(f"Device {self.index}: dataset size must be >= 1, got {self.dataset_size}")

    def __repr__(self) -> str:
        return f"DeviceProfile(index={self.index}, K={self.dataset_size}, |h|={np.linalg.norm(self.channel):.3e})"


@dataclass(frozen=True)
class SelectionVector:
    """Binary participation mask over all M devices."""

    mask: np.ndarray

    @classmethod
    def all_selected(cls, num_devices: int) -> "SelectionVector":
        return cls(np.ones(num_devices, dtype=bool))

    @classmethod
    def from_indices(cls, indices: Sequence[int], num_devices: int) -> "SelectionVector":
        mask = np.zeros(num_devices, dtype=bool)
        mask[list(indices)] = True
        return cls(mask)

    def __post_init__(self):
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))

    def __len__(self) -> int:
        return int(self.mask.shape[0])

    def __eq__(self, other) -> bool:
        return isinstance(other, SelectionVector) and np.array_equal(self.mask, other.mask)


@dataclass(frozen=True)
class Beamformer:
    """Unit-norm receive beamforming vector f."""

    vector: np.ndarray

    def __post_init__(self):
        norm = float(np.linalg.norm(self.vector))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ParameterError(f"Beamformer must have unit norm, got {norm}")

    @classmethod
    def from_direction(cls, direction: np.ndarray) -> "Beamformer":
        norm = float(np.linalg.norm(direction))
        if norm == 0.0:
            raise DomainError("Cannot normalize a zero beamforming direction")
        return cls(np.asarray(direction, dtype=complex) / norm)

    def gains(self, profiles: Sequence[DeviceProfile]) -> np.ndarray:
        """Returns |f^H h_m|^2 for every profile."""
        return np.abs(channel_matrix(profiles) @ self.vector.conj()) ** 2


@dataclass(frozen=True)
class AggregationParams:
    """Power limit P0 and noise power sigma^2 in watts, total samples K."""

    power_limit: float
    noise_power: float
    total_samples: int

    def __post_init__(self):
        if not self.power_limit > 0:
            raise ParameterError(f"Power limit must be positive, got {self.power_limit}")
        if self.noise_power < 0:
            raise ParameterError(f"Noise power must be non-negative, got {self.noise_power}")
        if self.total_samples < 1:
            raise ParameterError(f"Total samples must be positive, got {self.total_samples}")

    @classmethod
    def for_profiles(cls, profiles: Sequence[DeviceProfile], power_limit: float, noise_power: float) -> "AggregationParams":
        return cls(power_limit, noise_power, sum(p.dataset_size for p in profiles))


def channel_matrix(profiles: Sequence[DeviceProfile]) -> np.ndarray:
    """Stacks channels into an (M, N) complex array."""
    return np.stack([np.asarray(p.channel, dtype=complex) for p in profiles])


def dataset_sizes(profiles: Sequence[DeviceProfile]) -> np.ndarray:
    return np.array([p.dataset_size for p in profiles], dtype=float)


def selected_indices(selection: SelectionVector) -> List[int]:
    """Indices of selected devices in ascending order."""
    return [int(i) for i in np.flatnonzero(selection.mask)]


def error_metric_d(
    beamformer: Beamformer,
    selection: SelectionVector,
    profiles: Sequence[DeviceProfile],
    params: AggregationParams,
) -> float:
    """Evaluates d(f, s; H).

    Returns +inf when a selected device has zero beamforming gain so search
    loops can rank such candidates last.

    Raises:
        DomainError: if no device is selected.
    """
    if len(selection) != len(profiles):
        raise ParameterError(f"Selection has {len(selection)} entries for {len(profiles)} devices")
    if selection.count == 0:
        raise DomainError("Error metric is undefined for an empty selection")

    sizes = dataset_sizes(profiles)
    mask = selection.mask
    excluded = float(np.sum(sizes[~mask]))
    included = float(np.sum(sizes[mask]))
    exclusion_term = 4.0 / params.total_samples ** 2 * excluded ** 2

    gains = beamformer.gains([p for p, chosen in zip(profiles, mask) if chosen])
    if np.any(gains == 0.0):
        return math.inf
    worst = float(np.max(sizes[mask] ** 2 / gains))
    return exclusion_term + params.noise_power / (params.power_limit * included ** 2) * worst
