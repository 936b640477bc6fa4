"""
Greedy spatial device selection.

Starting from the strongest channel, each step adds the unselected device whose
channel has the largest projection onto the span of the already selected
channels, then re-solves the receive beamformer for the grown set. The step
with the smallest error metric wins.
"""

import logging
import math
import time
from typing import List, Optional, Sequence

import numpy as np

from ..beamforming import MulticastQoSSolver, MulticastResult, SCASettings, UnscaledBeamformer
from ..errors import DomainError, ParameterError, SolverError
from ..objective import AggregationParams, DeviceProfile, SelectionVector, channel_matrix, error_metric_d
from .common import SelectionOutcome, SolverStatus

LOGGER = logging.getLogger(__name__)

RANK_TOL = 1e-10


class SpanBasis:
    """Orthonormal basis of the selected channels, grown one vector per step."""

    def __init__(self, dimension: int):
        self.vectors = np.zeros((dimension, 0), dtype=complex)

    @property
    def rank(self) -> int:
        return self.vectors.shape[1]

    def projection_norms(self, channels: np.ndarray) -> np.ndarray:
        """||Proj(h_m)|| for each row of channels."""
        if self.rank == 0:
            return np.zeros(channels.shape[0])
        return np.linalg.norm(channels @ self.vectors.conj(), axis=1)

    def add(self, channel: np.ndarray):
        if self.rank == self.vectors.shape[0]:
            return
        residual = np.asarray(channel, dtype=complex)
        # Two Gram-Schmidt passes keep the basis orthonormal to working precision.
        for _ in range(2):
            residual = residual - self.vectors @ (self.vectors.conj().T @ residual)
        norm = float(np.linalg.norm(residual))
        if norm > RANK_TOL * float(np.linalg.norm(channel)):
            self.vectors = np.column_stack([self.vectors, residual / norm])


def greedy_order(channels: np.ndarray):
    """Returns the GSDS device order and the metric each pick was chosen with."""
    num_devices, dimension = channels.shape
    norms = np.linalg.norm(channels, axis=1)
    first = int(np.argmax(norms))
    order = [first]
    metrics = [float(norms[first])]
    unselected = np.ones(num_devices, dtype=bool)
    unselected[first] = False
    basis = SpanBasis(dimension)
    basis.add(channels[first])

    while np.any(unselected):
        candidates = np.flatnonzero(unselected)
        projections = basis.projection_norms(channels[candidates])
        pick = int(candidates[int(np.argmax(projections))])
        order.append(pick)
        metrics.append(float(np.max(projections)))
        unselected[pick] = False
        basis.add(channels[pick])
    return order, metrics


def _solve_step(
    chosen: Sequence[DeviceProfile],
    sca: Optional[SCASettings],
    warm: Optional[UnscaledBeamformer],
) -> MulticastResult:
    """Solves from a fresh start and from the previous step, keeping the lower objective.

    The fresh start comes first, so on a tie the step over all devices
    matches what select-all computes.
    """
    solver = MulticastQoSSolver(chosen, sca)
    starts = [None] if warm is None else [None, warm]
    results: List[MulticastResult] = []
    failure: Optional[Exception] = None
    for start in starts:
        try:
            results.append(solver.solve(start))
        except (SolverError, DomainError) as e:
            failure = failure or e
    if not results:
        raise failure
    return min(results, key=lambda r: r.objective)


def gsds(
    profiles: Sequence[DeviceProfile],
    params: AggregationParams,
    sca: Optional[SCASettings] = None,
) -> SelectionOutcome:
    """Runs greedy spatial device selection over all M nested device sets."""
    if not profiles:
        raise ParameterError("GSDS needs at least one device")
    started = time.perf_counter()
    num_devices = len(profiles)
    order, metrics = greedy_order(channel_matrix(profiles))

    step_d: List[float] = []
    step_objective: List[float] = []
    step_results: List[Optional[MulticastResult]] = []
    warm: Optional[UnscaledBeamformer] = None
    for step in range(1, num_devices + 1):
        chosen = sorted(order[:step])
        selection = SelectionVector.from_indices(chosen, num_devices)
        try:
            result = _solve_step([profiles[i] for i in chosen], sca, warm)
        except (SolverError, DomainError) as e:
            LOGGER.warning(f"GSDS step {step}: beamforming failed ({e}), recording +inf")
            step_d.append(math.inf)
            step_objective.append(math.inf)
            step_results.append(None)
            warm = None
            continue
        warm = result.unscaled
        d_value = error_metric_d(result.beamformer, selection, profiles, params)
        LOGGER.debug(f"GSDS step {step}: added device {order[step - 1]}, d={d_value:.6e}")
        step_d.append(d_value)
        step_objective.append(result.objective)
        step_results.append(result)

    if all(math.isinf(d) for d in step_d):
        raise SolverError("GSDS: beamforming failed at every step")

    best_step = int(np.argmin(step_d))
    best = step_results[best_step]
    selection = SelectionVector.from_indices(order[: best_step + 1], num_devices)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    LOGGER.info(f"GSDS selected {best_step + 1}/{num_devices} devices, d={step_d[best_step]:.6e}")
    return SelectionOutcome(
        selection=selection,
        beamformer=best.beamformer,
        d_value=step_d[best_step],
        status=SolverStatus.CONVERGED,
        wall_ms=elapsed_ms,
        diagnostics={
            "order": order,
            "metrics": metrics,
            "step_d": step_d,
            "step_objective": step_objective,
            "best_step": best_step + 1,
        },
    )
