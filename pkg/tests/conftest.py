import numpy as np
import pytest

from otafl.objective import AggregationParams, DeviceProfile


def random_profiles(rng, num_devices, num_antennas, sizes=None, scale=1.0):
    """Devices with CN(0, scale^2) channels and the given (or random) dataset sizes."""
    if sizes is None:
        sizes = rng.integers(1, 50, size=num_devices)
    channels = scale * (
        rng.standard_normal((num_devices, num_antennas)) + 1j * rng.standard_normal((num_devices, num_antennas))
    ) / np.sqrt(2.0)
    return [DeviceProfile(i, int(sizes[i]), channels[i]) for i in range(num_devices)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def profiles(rng):
    return random_profiles(rng, 8, 4)


@pytest.fixture
def params(profiles):
    return AggregationParams.for_profiles(profiles, power_limit=1.0, noise_power=0.1)
