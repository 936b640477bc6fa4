"""Reference schemes: every device, or only the strongest one."""

import logging
import time
from typing import Optional, Sequence

import numpy as np

from ..beamforming import MulticastQoSSolver, SCASettings
from ..errors import ParameterError
from ..objective import AggregationParams, Beamformer, DeviceProfile, SelectionVector, channel_matrix
from .common import SelectionOutcome, SolverStatus, make_outcome

LOGGER = logging.getLogger(__name__)


def baseline_select_all(
    profiles: Sequence[DeviceProfile],
    params: AggregationParams,
    sca: Optional[SCASettings] = None,
) -> SelectionOutcome:
    started = time.perf_counter()
    result = MulticastQoSSolver(profiles, sca).solve()
    status = SolverStatus.CONVERGED if result.converged else SolverStatus.MAX_ITERATIONS
    return make_outcome(
        result.beamformer,
        SelectionVector.all_selected(len(profiles)),
        profiles,
        params,
        status=status,
        wall_ms=(time.perf_counter() - started) * 1000.0,
        diagnostics={"sca_iterations": result.iterations, "objective": result.objective},
    )


def baseline_top_one(profiles: Sequence[DeviceProfile], params: AggregationParams) -> SelectionOutcome:
    """Selects the device with the largest ||h_m|| and matches f to its channel."""
    if not profiles:
        raise ParameterError("Top-one selection needs at least one device")
    started = time.perf_counter()
    strongest = int(np.argmax(np.linalg.norm(channel_matrix(profiles), axis=1)))
    return make_outcome(
        Beamformer.from_direction(profiles[strongest].channel),
        SelectionVector.from_indices([strongest], len(profiles)),
        profiles,
        params,
        wall_ms=(time.perf_counter() - started) * 1000.0,
        diagnostics={"device": strongest},
    )
