"""
Metric files: one CSV per (method, seed) and one summary JSON per experiment.

CSV values are written with repr() so identical traces give identical bytes.
"""

import asyncio
import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .flsim.training import RoundMetrics

LOGGER = logging.getLogger(__name__)

CSV_COLUMNS = ("round", "test_loss", "test_accuracy", "d_value", "num_selected", "wall_ms")
CONFIDENCE = 0.95

# method -> seed -> per-round trace
Traces = Mapping[str, Mapping[int, Sequence[RoundMetrics]]]


def csv_name(method: str, seed: int) -> str:
    return f"{method}_seed{seed}.csv"


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_csv(trace: Sequence[RoundMetrics], include_wall_time: bool = False) -> str:
    """Renders a trace in the fixed CSV schema.

    wall_ms is written as 0 unless include_wall_time is set, since solver
    timings differ between otherwise identical runs.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for metrics in trace:
        writer.writerow([
            _cell(metrics.round),
            _cell(metrics.test_loss),
            _cell(metrics.test_accuracy),
            _cell(metrics.d_value),
            _cell(metrics.num_selected),
            _cell(metrics.wall_ms if include_wall_time else 0),
        ])
    return buffer.getvalue()


def read_csv(path: Union[str, Path]) -> List[Dict[str, float]]:
    """Reads a metrics CSV back as one dict of floats per row."""
    with open(path, newline="", encoding="utf-8") as f:
        return [{key: float(value) for key, value in row.items()} for row in csv.DictReader(f)]


def mean_ci(values: Sequence[float], confidence: float = CONFIDENCE) -> Tuple[float, float, float]:
    """Sample mean and Student-t confidence interval.

    With a single value, or values that are all identical, the interval
    collapses to the mean.
    """
    data = np.asarray(values, dtype=float)
    mean = float(np.mean(data))
    if data.size < 2 or not np.all(np.isfinite(data)):
        return mean, mean, mean
    sem = float(stats.sem(data))
    if sem == 0.0:
        return mean, mean, mean
    low, high = stats.t.interval(confidence, data.size - 1, loc=mean, scale=sem)
    return mean, float(low), float(high)


def json_number(value: float):
    """JSON has no infinity; non-finite values are written as null."""
    return value if math.isfinite(value) else None


def _stat(values: Sequence[float]) -> Dict[str, float]:
    mean, low, high = mean_ci(values)
    return {"mean": json_number(mean), "ci_low": json_number(low), "ci_high": json_number(high)}


def summarize_method(per_seed: Mapping[int, Sequence[RoundMetrics]]) -> Dict:
    """Per-round statistics across seeds plus per-method averages."""
    seeds = sorted(per_seed)
    num_rounds = min(len(per_seed[s]) for s in seeds)
    rounds = []
    for r in range(num_rounds):
        rows = [per_seed[s][r] for s in seeds]
        rounds.append({
            "round": rows[0].round,
            "epoch": rows[0].epoch,
            "test_loss": _stat([m.test_loss for m in rows]),
            "test_accuracy": _stat([m.test_accuracy for m in rows]),
            "train_loss": _stat([m.train_loss for m in rows]),
            "d_value": _stat([m.d_value for m in rows]),
        })
    selected = [m.num_selected for s in seeds for m in per_seed[s]]
    solver_ms = [sum(m.wall_ms for m in per_seed[s]) for s in seeds]
    return {
        "seeds": seeds,
        "rounds": rounds,
        "mean_selected": float(np.mean(selected)),
        "mean_solver_wall_ms": float(np.mean(solver_ms)),
    }


def summarize(traces: Traces) -> Dict:
    return {method: summarize_method(per_seed) for method, per_seed in sorted(traces.items()) if per_seed}


def format_summary(traces: Traces, config_text: str = "", failures: Sequence[str] = ()) -> str:
    document = {"config": config_text, "methods": summarize(traces), "failures": list(failures)}
    return json.dumps(document, indent=2, sort_keys=True) + "\n"


class ResultWriter:
    """Writes result files under one directory, serializing writes per file."""

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)
        self._locks: Dict[Path, asyncio.Lock] = {}

    def _lock(self, path: Path) -> asyncio.Lock:
        if path not in self._locks:
            self._locks[path] = asyncio.Lock()
        return self._locks[path]

    async def write_text(self, name: str, text: str) -> Path:
        path = self.directory / name
        async with self._lock(path):
            await asyncio.to_thread(self._write, path, text)
        LOGGER.info(f"Wrote {path}")
        return path

    def _write(self, path: Path, text: str):
        self.directory.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)

    async def write_trace(self, method: str, seed: int, trace: Sequence[RoundMetrics], include_wall_time: bool) -> Path:
        return await self.write_text(csv_name(method, seed), format_csv(trace, include_wall_time))

    async def write_summary(self, traces: Traces, config_text: str = "", failures: Sequence[str] = ()) -> Path:
        return await self.write_text("summary.json", format_summary(traces, config_text, failures))
