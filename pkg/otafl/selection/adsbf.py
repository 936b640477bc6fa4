"""
Alternating device selection and beamforming.

Alternates between the receive beamformer for the current selection (SCA,
warm-started at the previous beamformer) and the optimal selection for the new
beamformer, until the error metric stops moving.
"""

import logging
import time
from typing import Optional, Sequence

import numpy as np

from ..beamforming import MulticastQoSSolver, SCASettings, UnscaledBeamformer
from ..errors import DomainError, ParameterError, SolverError
from ..objective import (
    AggregationParams,
    Beamformer,
    DeviceProfile,
    SelectionVector,
    channel_matrix,
    error_metric_d,
)
from .common import SelectionOutcome, SolverStatus, optimal_selection_given_f

LOGGER = logging.getLogger(__name__)

DEFAULT_EPS = 1e-6
DEFAULT_MAX_ITERS = 10


def adsbf(
    profiles: Sequence[DeviceProfile],
    params: AggregationParams,
    sca: Optional[SCASettings] = None,
    eps: float = DEFAULT_EPS,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> SelectionOutcome:
    """Runs alternating minimization of d over (f, s).

    The recorded d trace never increases: an iteration that would raise d is
    discarded and the loop stops. A beamforming failure stops the loop with
    the best iterate so far and a DEGRADED status.
    """
    if max_iters < 1:
        raise ParameterError(f"ADSBF needs max_iters >= 1, got {max_iters}")
    started = time.perf_counter()
    num_devices = len(profiles)

    norms = np.linalg.norm(channel_matrix(profiles), axis=1)
    beamformer = Beamformer.from_direction(profiles[int(np.argmax(norms))].channel)
    selection = SelectionVector.all_selected(num_devices)
    d_value = error_metric_d(beamformer, selection, profiles, params)
    d_trace = [d_value]
    counts = [selection.count]
    status = SolverStatus.MAX_ITERATIONS
    iterations = 0

    for iterations in range(1, max_iters + 1):
        chosen = [profiles[i] for i in np.flatnonzero(selection.mask)]
        try:
            result = MulticastQoSSolver(chosen, sca).solve(UnscaledBeamformer(beamformer.vector))
            next_selection = optimal_selection_given_f(result.beamformer, profiles, params)
        except (SolverError, DomainError) as e:
            LOGGER.warning(f"ADSBF iteration {iterations} failed ({e}), keeping best iterate")
            status = SolverStatus.DEGRADED
            break
        next_d = error_metric_d(result.beamformer, next_selection, profiles, params)
        LOGGER.debug(f"ADSBF iteration {iterations}: d={next_d:.6e}, selected={next_selection.count}")
        if next_d > d_value:
            status = SolverStatus.CONVERGED
            break

        change = abs(d_value - next_d)
        beamformer, selection, d_value = result.beamformer, next_selection, next_d
        d_trace.append(d_value)
        counts.append(selection.count)
        if change <= eps:
            status = SolverStatus.CONVERGED
            break

    elapsed_ms = (time.perf_counter() - started) * 1000.0
    LOGGER.info(
        f"ADSBF finished after {iterations} iterations ({status.value}): "
        f"{selection.count}/{num_devices} devices, d={d_value:.6e}"
    )
    return SelectionOutcome(
        selection=selection,
        beamformer=beamformer,
        d_value=d_value,
        status=status,
        wall_ms=elapsed_ms,
        diagnostics={"d_trace": d_trace, "selected_counts": counts, "iterations": iterations},
    )
