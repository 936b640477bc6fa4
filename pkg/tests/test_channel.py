import numpy as np
import pytest

from otafl.channel import (
    Geometry,
    RoundMode,
    path_loss_db,
    path_loss_linear,
    sample_channels,
    sample_distances,
    sample_fading,
)
from otafl.errors import ParameterError
from otafl.streams import STREAM_KEYS, stream


class TestDistances:
    def test_range(self, rng):
        geometry = sample_distances(200, 10.0, 100.0, rng)
        assert geometry.num_devices == 200
        assert np.all(geometry.distances >= 10.0)
        assert np.all(geometry.distances <= 100.0)

    def test_degenerate_interval(self, rng):
        geometry = sample_distances(7, 50.0, 50.0, rng)
        np.testing.assert_array_equal(geometry.distances, np.full(7, 50.0))

    def test_deterministic(self):
        first = sample_distances(20, 10.0, 100.0, stream(3, "geometry"))
        second = sample_distances(20, 10.0, 100.0, stream(3, "geometry"))
        np.testing.assert_array_equal(first.distances, second.distances)

    @pytest.mark.parametrize("num_devices,r_min,r_max", [(0, 10, 100), (5, 0, 100), (5, -1, 100), (5, 100, 10)])
    def test_invalid(self, rng, num_devices, r_min, r_max):
        with pytest.raises(ParameterError):
            sample_distances(num_devices, r_min, r_max, rng)


class TestPathLoss:
    @pytest.mark.parametrize("distance,expected", [(1000.0, 139.1), (100.0, 103.88), (10.0, 68.66)])
    def test_values(self, distance, expected):
        assert path_loss_db(distance) == pytest.approx(expected, abs=1e-9)

    def test_increasing(self):
        distances = np.linspace(1.0, 5000.0, 500)
        losses = np.array([path_loss_db(d) for d in distances])
        assert np.all(np.diff(losses) > 0)

    @pytest.mark.parametrize("distance", [0.0, -5.0])
    def test_nonpositive_distance(self, distance):
        with pytest.raises(ParameterError):
            path_loss_db(distance)

    def test_linear(self):
        assert path_loss_linear(1000.0) == pytest.approx(10 ** 13.91, rel=1e-12)


class TestChannels:
    def test_mean_power(self, rng):
        num_draws, num_antennas = 100_000, 4
        geometry = Geometry(np.full(num_draws, 1000.0), 1000.0, 1000.0)
        channels = sample_channels(geometry, num_antennas, rng).channels
        normalized = np.sum(np.abs(channels) ** 2, axis=1) * path_loss_linear(1000.0)
        assert np.mean(normalized) == pytest.approx(num_antennas, rel=0.02)

    def test_circular_symmetry(self, rng):
        channels = sample_fading(np.ones(100_000), 1, rng)[:, 0]
        assert np.var(channels.real) == pytest.approx(0.5, rel=0.03)
        assert np.var(channels.imag) == pytest.approx(0.5, rel=0.03)
        assert abs(np.mean(channels.real * channels.imag)) < 0.01

    def test_unit_path_loss(self, rng):
        channels = sample_fading(np.ones(100_000), 1, rng)
        assert np.mean(np.abs(channels) ** 2) == pytest.approx(1.0, rel=0.02)

    def test_shape_and_mode(self, rng):
        geometry = sample_distances(5, 10.0, 100.0, rng)
        channel_set = sample_channels(geometry, 3, rng, RoundMode.PER_ROUND)
        assert channel_set.num_devices == 5
        assert channel_set.num_antennas == 3
        assert channel_set.round_mode is RoundMode.PER_ROUND
        assert np.all(np.linalg.norm(channel_set.channels, axis=1) > 0)

    def test_deterministic(self):
        geometry = sample_distances(10, 10.0, 100.0, stream(0, "geometry"))
        first = sample_channels(geometry, 4, stream(0, "fading")).channels
        second = sample_channels(geometry, 4, stream(0, "fading")).channels
        np.testing.assert_array_equal(first, second)

    def test_invalid_antennas(self, rng):
        with pytest.raises(ParameterError):
            sample_fading(np.ones(3), 0, rng)


class TestStreams:
    def test_named_streams_are_independent(self):
        draws = {name: stream(7, name).standard_normal(4) for name in STREAM_KEYS}
        names = list(draws)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                assert not np.array_equal(draws[a], draws[b])

    def test_request_order_does_not_matter(self):
        stream(1, "data").standard_normal(100)
        after = stream(1, "noise").standard_normal(3)
        np.testing.assert_array_equal(after, stream(1, "noise").standard_normal(3))

    def test_unknown_stream(self):
        with pytest.raises(KeyError):
            stream(0, "weather")
