"""
Device geometry, path loss and fading channel generation.

Distances are uniform on [r_min, r_max]; large-scale loss follows the COST Hata
urban model and small-scale fading is i.i.d. circularly-symmetric complex
Gaussian.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ParameterError

LOGGER = logging.getLogger(__name__)

HATA_INTERCEPT_DB = 139.1
HATA_SLOPE_DB = 35.22


class RoundMode(Enum):
    STATIC = "static"
    PER_ROUND = "per_round"


@dataclass(frozen=True)
class Geometry:
    """Device-to-server distances in meters."""

    distances: np.ndarray
    r_min: float
    r_max: float

    @property
    def num_devices(self) -> int:
        return int(self.distances.shape[0])


@dataclass(frozen=True)
class ChannelSet:
    """Uplink channels, one complex N-vector per row."""

    channels: np.ndarray
    round_mode: RoundMode = RoundMode.STATIC

    @property
    def num_devices(self) -> int:
        return int(self.channels.shape[0])

    @property
    def num_antennas(self) -> int:
        return int(self.channels.shape[1])


def sample_distances(num_devices: int, r_min: float, r_max: float, rng: np.random.Generator) -> Geometry:
    """Draws i.i.d. uniform device distances on [r_min, r_max].

    Args:
        num_devices: Number of devices M (at least 1).
        r_min: Inner radius in meters, strictly positive.
        r_max: Outer radius in meters, not below r_min.
        rng: Generator of the geometry stream.
    """
    if num_devices < 1:
        raise ParameterError(f"Number of devices must be at least 1, got {num_devices}")
    if not (r_min > 0 and r_max >= r_min):
        raise ParameterError(f"Need 0 < r_min <= r_max, got r_min={r_min}, r_max={r_max}")
    if r_min == r_max:
        return Geometry(np.full(num_devices, float(r_min)), float(r_min), float(r_max))
    distances = rng.uniform(r_min, r_max, size=num_devices)
    return Geometry(distances, float(r_min), float(r_max))


def path_loss_db(distance: float) -> float:
    """COST Hata path loss for a distance given in meters."""
    if not distance > 0:
        raise ParameterError(f"Distance must be positive, got {distance}")
    return HATA_INTERCEPT_DB + HATA_SLOPE_DB * float(np.log10(distance / 1000.0))


def path_loss_linear(distance: float) -> float:
    return 10.0 ** (path_loss_db(distance) / 10.0)


def sample_fading(gains: np.ndarray, num_antennas: int, rng: np.random.Generator) -> np.ndarray:
    """Draws CN(0, gain * I_N) vectors, one row per entry of gains."""
    if num_antennas < 1:
        raise ParameterError(f"Number of antennas must be at least 1, got {num_antennas}")
    gains = np.asarray(gains, dtype=float)
    shape = (gains.shape[0], num_antennas)
    unit = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return unit * np.sqrt(gains)[:, None]


def sample_channels(
    geometry: Geometry,
    num_antennas: int,
    rng: np.random.Generator,
    round_mode: RoundMode = RoundMode.STATIC,
) -> ChannelSet:
    """Draws one channel vector per device with per-entry variance 1/PL.

    Args:
        geometry: Device distances.
        num_antennas: Receive antennas N at the server.
        rng: Generator of the fading stream.
        round_mode: Recorded on the result; resampling is the caller's job.
    """
    gains = np.array([1.0 / path_loss_linear(d) for d in geometry.distances])
    channels = sample_fading(gains, num_antennas, rng)
    LOGGER.debug(
        f"Sampled {geometry.num_devices} channels with N={num_antennas}, "
        f"mean gain {float(np.mean(gains)):.3e}"
    )
    return ChannelSet(channels, round_mode)
