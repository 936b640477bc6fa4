import itertools
import math
import warnings

import numpy as np
import pytest

from conftest import random_profiles
from otafl.errors import DomainError, ParameterError
from otafl.objective import AggregationParams, Beamformer, DeviceProfile, SelectionVector, error_metric_d
from otafl.selection import (
    SelectionMethod,
    SolverStatus,
    adsbf,
    baseline_select_all,
    baseline_top_one,
    gsds,
    optimal_selection_given_f,
    projection_norm,
    select,
)
from otafl.selection.gsds import SpanBasis, greedy_order


def brute_force_d(beamformer, profiles, params):
    best = np.inf
    for mask in itertools.product([False, True], repeat=len(profiles)):
        if any(mask):
            best = min(best, error_metric_d(beamformer, SelectionVector(np.array(mask)), profiles, params))
    return best


def random_direction(rng, num_antennas):
    return Beamformer.from_direction(rng.standard_normal(num_antennas) + 1j * rng.standard_normal(num_antennas))


class TestProjectionNorm:
    def test_orthogonal(self):
        assert projection_norm(np.array([0, 0, 1j]), [np.array([1, 0, 0]), np.array([0, 1, 0])]) == pytest.approx(0.0, abs=1e-15)

    def test_inside_span(self, rng):
        basis = [rng.standard_normal(4) + 1j * rng.standard_normal(4) for _ in range(2)]
        candidate = 0.3 * basis[0] - 2j * basis[1]
        assert projection_norm(candidate, basis) == pytest.approx(np.linalg.norm(candidate), rel=1e-12)

    def test_normal_equations(self, rng):
        B = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
        x = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        expected = np.linalg.norm(B @ np.linalg.solve(B.conj().T @ B, B.conj().T @ x))
        assert projection_norm(x, list(B.T)) == pytest.approx(expected, rel=1e-10)

    def test_empty_basis(self):
        assert projection_norm(np.array([1.0, 2.0]), []) == 0.0

    def test_span_basis_agrees(self, rng):
        channels = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
        basis = SpanBasis(3)
        basis.add(channels[0])
        basis.add(channels[1])
        expected = [projection_norm(c, [channels[0], channels[1]]) for c in channels]
        np.testing.assert_allclose(basis.projection_norms(channels), expected, rtol=1e-10)


class TestGreedyOrder:
    def test_orthogonal_channels(self):
        channels = np.array([[2.0, 0.0], [0.0, 1.0]], dtype=complex)
        order, metrics = greedy_order(channels)
        assert order == [0, 1]
        assert metrics[1] == pytest.approx(0.0, abs=1e-15)

    def test_collinear_channels(self):
        h1 = np.array([1.0, 1j, -0.5])
        order, metrics = greedy_order(np.stack([h1, 2 * h1]))
        assert order == [1, 0]
        assert metrics[1] == pytest.approx(np.linalg.norm(h1), rel=1e-12)

    def test_picks_match_exhaustive_argmax(self, rng):
        channels = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
        order, _ = greedy_order(channels)
        assert order[0] == int(np.argmax(np.linalg.norm(channels, axis=1)))
        for step in range(1, 6):
            remaining = [m for m in range(6) if m not in order[:step]]
            scores = [projection_norm(channels[m], [channels[i] for i in order[:step]]) for m in remaining]
            assert order[step] == remaining[int(np.argmax(scores))]

    def test_phase_rotation(self, rng):
        channels = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
        assert greedy_order(channels)[0] == greedy_order(channels * np.exp(1j * 1.3))[0]


class TestGSDS:
    def test_outcome(self, rng):
        profiles = random_profiles(rng, 6, 3)
        params = AggregationParams.for_profiles(profiles, power_limit=1.0, noise_power=0.5)
        outcome = gsds(profiles, params)
        diagnostics = outcome.diagnostics
        assert len(diagnostics["step_d"]) == 6
        assert outcome.d_value == min(diagnostics["step_d"])
        assert outcome.num_selected == diagnostics["best_step"]
        expected = SelectionVector.from_indices(diagnostics["order"][: diagnostics["best_step"]], 6)
        assert outcome.selection == expected
        assert outcome.d_value == pytest.approx(
            error_metric_d(outcome.beamformer, outcome.selection, profiles, params), rel=1e-10
        )
        assert outcome.wall_ms > 0

    def test_single_device(self, rng):
        profiles = random_profiles(rng, 1, 3)
        params = AggregationParams.for_profiles(profiles, 1.0, 0.1)
        outcome = gsds(profiles, params)
        assert outcome.num_selected == 1
        h = profiles[0].channel
        assert abs(np.vdot(outcome.beamformer.vector, h)) == pytest.approx(np.linalg.norm(h), rel=1e-9)

    def test_no_devices(self):
        with pytest.raises(ParameterError):
            gsds([], AggregationParams(1.0, 1.0, 1))

    def test_steps_are_nested_prefixes_of_the_order(self, rng):
        profiles = random_profiles(rng, 7, 3)
        params = AggregationParams.for_profiles(profiles, 1.0, 0.5)
        outcome = gsds(profiles, params)
        order = outcome.diagnostics["order"]
        assert sorted(order) == list(range(7))
        assert len(outcome.diagnostics["step_d"]) == 7
        for step in range(2, 8):
            assert set(order[: step - 1]) < set(order[:step])
        assert outcome.selection == SelectionVector.from_indices(order[: outcome.diagnostics["best_step"]], 7)

    def test_never_worse_than_select_all(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            profiles = random_profiles(rng, 6, 3)
            params = AggregationParams.for_profiles(profiles, 1.0, float(rng.uniform(0.1, 5.0)))
            best = min(gsds(profiles, params).diagnostics["step_d"])
            assert best <= baseline_select_all(profiles, params).d_value * (1 + 1e-12)

    def test_zero_channel_step_recorded_as_inf(self, rng):
        profiles = random_profiles(rng, 3, 3)
        profiles[2] = DeviceProfile(2, profiles[2].dataset_size, np.zeros(3, dtype=complex))
        params = AggregationParams.for_profiles(profiles, 1.0, 0.1)
        outcome = gsds(profiles, params)
        assert outcome.diagnostics["order"][-1] == 2
        assert math.isinf(outcome.diagnostics["step_d"][-1])
        assert not outcome.selection.mask[2]
        assert math.isfinite(outcome.d_value)


class TestOptimalSelection:
    def test_single_device(self, rng):
        profiles = random_profiles(rng, 1, 2)
        params = AggregationParams.for_profiles(profiles, 1.0, 1.0)
        selection = optimal_selection_given_f(random_direction(rng, 2), profiles, params)
        assert selection == SelectionVector.all_selected(1)

    def test_hand_evaluated_prefixes(self):
        profiles = [DeviceProfile(0, 1, np.array([1.0 + 0j])), DeviceProfile(1, 1, np.array([0.1 + 0j]))]
        params = AggregationParams.for_profiles(profiles, power_limit=1.0, noise_power=1.0)
        f = Beamformer(np.array([1.0 + 0j]))
        selection = optimal_selection_given_f(f, profiles, params)
        assert selection == SelectionVector.from_indices([0], 2)
        assert error_metric_d(f, selection, profiles, params) == pytest.approx(2.0)
        assert error_metric_d(f, SelectionVector.all_selected(2), profiles, params) == pytest.approx(25.0)

    def test_matches_brute_force(self, rng):
        profiles = random_profiles(rng, 10, 4)
        params = AggregationParams.for_profiles(profiles, power_limit=1.0, noise_power=2.0)
        f = random_direction(rng, 4)
        selection = optimal_selection_given_f(f, profiles, params)
        assert error_metric_d(f, selection, profiles, params) == pytest.approx(
            brute_force_d(f, profiles, params), rel=1e-10
        )

    def test_optimal_on_random_instances(self):
        rng = np.random.default_rng(2024)
        for _ in range(200):
            num_devices = int(rng.integers(2, 13))
            num_antennas = int(rng.integers(1, 7))
            profiles = random_profiles(rng, num_devices, num_antennas)
            params = AggregationParams.for_profiles(profiles, 1.0, float(rng.uniform(0.01, 10.0)))
            f = random_direction(rng, num_antennas)
            selection = optimal_selection_given_f(f, profiles, params)
            assert error_metric_d(f, selection, profiles, params) == pytest.approx(
                brute_force_d(f, profiles, params), rel=1e-10
            )

    def test_phase_rotation(self, rng, profiles, params):
        f = random_direction(rng, 4)
        rotated = [DeviceProfile(p.index, p.dataset_size, p.channel * np.exp(-0.4j)) for p in profiles]
        assert optimal_selection_given_f(f, profiles, params) == optimal_selection_given_f(f, rotated, params)

    def test_all_gains_zero(self):
        profiles = [DeviceProfile(0, 1, np.array([0.0, 1.0 + 0j]))]
        params = AggregationParams.for_profiles(profiles, 1.0, 1.0)
        with pytest.raises(DomainError):
            optimal_selection_given_f(Beamformer(np.array([1.0 + 0j, 0.0])), profiles, params)

    def test_zero_gain_device_without_noise(self):
        profiles = [DeviceProfile(0, 1, np.array([1.0 + 0j, 0.0])), DeviceProfile(1, 1, np.array([0.0, 1.0 + 0j]))]
        params = AggregationParams.for_profiles(profiles, power_limit=1.0, noise_power=0.0)
        f = Beamformer(np.array([1.0 + 0j, 0.0]))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            selection = optimal_selection_given_f(f, profiles, params)
        assert selection == SelectionVector.from_indices([0], 2)
        assert error_metric_d(f, selection, profiles, params) == pytest.approx(1.0)


class TestADSBF:
    def test_single_device(self, rng):
        profiles = random_profiles(rng, 1, 3)
        params = AggregationParams.for_profiles(profiles, 1.0, 0.1)
        outcome = adsbf(profiles, params)
        assert outcome.selection == SelectionVector.all_selected(1)
        assert outcome.diagnostics["iterations"] == 1
        assert outcome.status is SolverStatus.CONVERGED
        h = profiles[0].channel
        assert abs(np.vdot(outcome.beamformer.vector, h)) == pytest.approx(np.linalg.norm(h), rel=1e-9)

    def test_trace_non_increasing(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            profiles = random_profiles(rng, 8, 4)
            params = AggregationParams.for_profiles(profiles, 1.0, float(rng.uniform(0.1, 5.0)))
            outcome = adsbf(profiles, params)
            trace = outcome.diagnostics["d_trace"]
            assert np.all(np.diff(trace) <= 0)
            assert outcome.d_value == trace[-1]
            assert outcome.d_value == pytest.approx(
                error_metric_d(outcome.beamformer, outcome.selection, profiles, params), rel=1e-10
            )

    @pytest.mark.slow
    def test_terminates_on_random_instances(self):
        rng = np.random.default_rng(5)
        converged = 0
        for _ in range(100):
            profiles = random_profiles(rng, 20, 8)
            params = AggregationParams.for_profiles(profiles, 1.0, float(rng.uniform(0.1, 5.0)))
            outcome = adsbf(profiles, params, eps=1e-6, max_iters=10)
            assert np.all(np.diff(outcome.diagnostics["d_trace"]) <= 0)
            assert outcome.diagnostics["iterations"] <= 10
            converged += outcome.status is SolverStatus.CONVERGED
        assert converged >= 95

    def test_invalid_iterations(self, profiles, params):
        with pytest.raises(ParameterError):
            adsbf(profiles, params, max_iters=0)


class TestBaselines:
    def test_select_all_single_device(self, rng):
        profiles = random_profiles(rng, 1, 4)
        params = AggregationParams.for_profiles(profiles, 1.0, 0.1)
        outcome = baseline_select_all(profiles, params)
        h = profiles[0].channel
        assert abs(np.vdot(outcome.beamformer.vector, h)) == pytest.approx(np.linalg.norm(h), rel=1e-9)

    def test_select_all_has_only_noise_term(self, profiles, params):
        outcome = baseline_select_all(profiles, params)
        assert outcome.selection == SelectionVector.all_selected(len(profiles))
        sizes = np.array([p.dataset_size for p in profiles], dtype=float)
        gains = outcome.beamformer.gains(profiles)
        expected = params.noise_power / (params.power_limit * sizes.sum() ** 2) * np.max(sizes ** 2 / gains)
        assert outcome.d_value == pytest.approx(expected, rel=1e-12)

    def test_top_one(self):
        h1 = np.array([0.5, 0.5j])
        h2 = np.array([1.0, -1.0])
        profiles = [DeviceProfile(0, 3, h1), DeviceProfile(1, 2, h2)]
        params = AggregationParams.for_profiles(profiles, power_limit=1e-3, noise_power=1e-5)
        outcome = baseline_top_one(profiles, params)
        assert outcome.selection == SelectionVector.from_indices([1], 2)
        assert outcome.diagnostics["device"] == 1
        expected = 4 / 25 * 9 + 1e-5 / (1e-3 * 4) * 4 / 2.0
        assert outcome.d_value == pytest.approx(expected, rel=1e-12)

    def test_top_one_single_device(self, rng):
        profiles = random_profiles(rng, 1, 3)
        params = AggregationParams.for_profiles(profiles, 1.0, 1.0)
        assert baseline_top_one(profiles, params).num_selected == 1


class TestDispatch:
    @pytest.mark.parametrize("method", list(SelectionMethod))
    def test_outcome_is_consistent(self, method, profiles, params):
        outcome = select(method, profiles, params)
        assert 1 <= outcome.num_selected <= len(profiles)
        assert outcome.d_value == pytest.approx(
            error_metric_d(outcome.beamformer, outcome.selection, profiles, params), rel=1e-10
        )

    @pytest.mark.parametrize("method", [SelectionMethod.GSDS, SelectionMethod.ADSBF])
    def test_common_phase_rotation_keeps_selection(self, method):
        rng = np.random.default_rng(17)
        for _ in range(10):
            profiles = random_profiles(rng, 6, 3)
            params = AggregationParams.for_profiles(profiles, 1.0, float(rng.uniform(0.1, 5.0)))
            rotated = [DeviceProfile(p.index, p.dataset_size, p.channel * np.exp(0.7j)) for p in profiles]
            assert select(method, profiles, params).selection == select(method, rotated, params).selection
