"""
Experiment runner: replicas over seeds and methods, plus the selection-only study.

Every replica rebuilds its federation from the master seed through the named
streams, so all methods under one seed see the same geometry, fading, data and
receiver noise.
"""

import asyncio
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .channel import Geometry, sample_channels, sample_distances
from .config import EnvSettings, ExperimentConfig, serialize_config
from .errors import ExperimentError, OtaflError
from .flsim.data import Dataset, load_mnist, make_gaussian_clusters, partition_iid
from .flsim.training import Federation, RoundMetrics, run_training
from .objective import AggregationParams, DeviceProfile
from .results import ResultWriter, json_number
from .selection import SelectionMethod, select
from .streams import stream

LOGGER = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    output_dir: Path
    traces: Dict[str, Dict[int, List[RoundMetrics]]]
    failures: List[ExperimentError] = field(default_factory=list)


def build_devices(config: ExperimentConfig, seed: int) -> Tuple[Geometry, List[DeviceProfile], np.random.Generator]:
    """Draws geometry and the first channel realization for a seed.

    Returns the fading generator too, positioned after the first draw, for
    per-round channel refreshes.
    """
    geometry = sample_distances(config.M, config.r_min_m, config.r_max_m, stream(seed, "geometry"))
    fading_rng = stream(seed, "fading")
    channels = sample_channels(geometry, config.N, fading_rng, config.round_mode)
    profiles = [
        DeviceProfile(index, config.samples_per_device, channels.channels[index])
        for index in range(config.M)
    ]
    return geometry, profiles, fading_rng


def build_datasets(config: ExperimentConfig, seed: int) -> Tuple[List[Dataset], Dataset]:
    """Local shards and the held-out test set for a seed."""
    data_rng = stream(seed, "data")
    if config.dataset == "mnist":
        train, test = load_mnist(config.mnist_dir)
    else:
        per_class = math.ceil(config.samples_per_device / config.num_classes) * config.M
        train, centers = make_gaussian_clusters(
            config.num_classes, config.feature_dim, per_class, data_rng, separation=config.cluster_separation
        )
        test, _ = make_gaussian_clusters(
            config.num_classes,
            config.feature_dim,
            math.ceil(config.test_samples / config.num_classes),
            data_rng,
            centers=centers,
        )
    shards = partition_iid(train, config.M, config.samples_per_device, data_rng)
    return shards, test


def build_federation(config: ExperimentConfig, seed: int) -> Federation:
    geometry, profiles, fading_rng = build_devices(config, seed)
    shards, test_set = build_datasets(config, seed)
    params = AggregationParams.for_profiles(profiles, config.power_limit_w, config.noise_power_w)
    return Federation(
        shards=shards,
        test_set=test_set,
        geometry=geometry,
        profiles=profiles,
        params=params,
        fading_rng=fading_rng,
        noise_rng=stream(seed, "noise"),
        batch_rng=stream(seed, "batch"),
    )


def run_replica(config: ExperimentConfig, seed: int, method: SelectionMethod) -> List[RoundMetrics]:
    """Trains one method under one seed.

    Raises:
        ExperimentError: carrying the seed, the method and, for failures inside
            a round, the round index.
    """
    LOGGER.info(f"Replica {method.value}/seed {seed} started")
    try:
        trace = run_training(config.training_config(method), build_federation(config, seed))
    except ExperimentError as e:
        cause = e.__cause__ or e
        raise ExperimentError(
            f"Replica failed: {cause}", seed=seed, method=method.value, round_index=e.round_index
        ) from e
    except (OtaflError, ValueError, ArithmeticError) as e:
        raise ExperimentError(f"Replica failed: {e}", seed=seed, method=method.value) from e
    LOGGER.info(f"Replica {method.value}/seed {seed} done: accuracy {trace[-1].test_accuracy:.4f}")
    return trace


async def run_experiment(
    config: ExperimentConfig,
    output_dir: Optional[str] = None,
    workers: Optional[int] = None,
) -> ExperimentResult:
    """Runs every (seed, method) replica and writes the metric files.

    Replicas run in worker threads, at most `workers` at a time. A failing
    replica does not stop the others; once all have finished, the completed
    traces and the summary are written and the first failure is raised.

    Raises:
        ExperimentError: if any replica failed.
    """
    env = EnvSettings()
    workers = workers or env.workers
    directory = Path(output_dir or config.output or env.output_dir)
    writer = ResultWriter(directory)
    semaphore = asyncio.Semaphore(workers)
    traces: Dict[str, Dict[int, List[RoundMetrics]]] = {m.value: {} for m in config.method}

    LOGGER.info(
        f"Experiment: methods={[m.value for m in config.method]}, seeds={list(config.seeds)}, "
        f"M={config.M}, N={config.N}, T={config.T}, workers={workers}"
    )

    async def run_job(seed: int, method: SelectionMethod):
        async with semaphore:
            trace = await asyncio.to_thread(run_replica, config, seed, method)
        traces[method.value][seed] = trace
        await writer.write_trace(method.value, seed, trace, config.csv_wall_time)

    jobs = [run_job(seed, method) for method in config.method for seed in config.seeds]
    outcomes = await asyncio.gather(*jobs, return_exceptions=True)

    failures = []
    for outcome in outcomes:
        if isinstance(outcome, ExperimentError):
            failures.append(outcome)
        elif isinstance(outcome, BaseException):
            failures.append(ExperimentError(f"Replica crashed: {outcome!r}"))
            failures[-1].__cause__ = outcome
    for failure in failures:
        LOGGER.error(str(failure))

    await writer.write_summary(traces, serialize_config(config), [str(f) for f in failures])
    result = ExperimentResult(directory, traces, failures)
    if failures:
        raise failures[0]
    return result


def run_selection_study(
    config: ExperimentConfig,
    draws: int,
    methods: Optional[Sequence[SelectionMethod]] = None,
) -> Dict:
    """Runs selection only, over `draws` channel realizations.

    Draw i uses master seed config.seeds[0] + i. Reports, per method, the
    mean selected-device count, mean d and mean solver wall time.
    """
    if draws < 1:
        raise ExperimentError(f"Need at least one draw, got {draws}")
    methods = list(methods or config.method)
    sca = config.sca_settings()
    records: Dict[str, Dict[str, list]] = {
        m.value: {"num_selected": [], "d_value": [], "wall_ms": [], "status": []} for m in methods
    }
    for draw in range(draws):
        seed = config.seeds[0] + draw
        _, profiles, _ = build_devices(config, seed)
        params = AggregationParams.for_profiles(profiles, config.power_limit_w, config.noise_power_w)
        for method in methods:
            try:
                outcome = select(
                    method, profiles, params, sca, eps=config.adsbf_eps, max_iters=config.adsbf_max_iters
                )
            except OtaflError as e:
                raise ExperimentError(f"Selection failed: {e}", seed=seed, method=method.value) from e
            record = records[method.value]
            record["num_selected"].append(outcome.num_selected)
            record["d_value"].append(outcome.d_value)
            record["wall_ms"].append(outcome.wall_ms)
            record["status"].append(outcome.status.value)
        LOGGER.debug(f"Selection draw {draw + 1}/{draws} done")

    return {
        "draws": draws,
        "M": config.M,
        "N": config.N,
        "methods": {
            name: {
                "mean_selected": float(np.mean(record["num_selected"])),
                "mean_d": json_number(float(np.mean(record["d_value"]))),
                "mean_wall_ms": float(np.mean(record["wall_ms"])),
                **record,
                "d_value": [json_number(d) for d in record["d_value"]],
            }
            for name, record in records.items()
        },
    }
