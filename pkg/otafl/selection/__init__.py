"""Device selection and receive beamforming schemes, looked up by name."""

from enum import Enum
from typing import Optional, Sequence

from ..beamforming import SCASettings
from ..objective import AggregationParams, DeviceProfile
from .adsbf import DEFAULT_EPS, DEFAULT_MAX_ITERS, adsbf
from .baselines import baseline_select_all, baseline_top_one
from .common import (
    SelectionOutcome,
    SolverStatus,
    optimal_selection_given_f,
    prefix_scores,
    projection_norm,
)
from .gsds import gsds


class SelectionMethod(Enum):
    GSDS = "gsds"
    ADSBF = "adsbf"
    SELECT_ALL = "select_all"
    TOP_ONE = "top_one"


def select(
    method: SelectionMethod,
    profiles: Sequence[DeviceProfile],
    params: AggregationParams,
    sca: Optional[SCASettings] = None,
    eps: float = DEFAULT_EPS,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> SelectionOutcome:
    """Runs the named scheme on one channel realization."""
    if method is SelectionMethod.GSDS:
        return gsds(profiles, params, sca)
    if method is SelectionMethod.ADSBF:
        return adsbf(profiles, params, sca, eps=eps, max_iters=max_iters)
    if method is SelectionMethod.SELECT_ALL:
        return baseline_select_all(profiles, params, sca)
    if method is SelectionMethod.TOP_ONE:
        return baseline_top_one(profiles, params)
    raise ValueError(f"Unknown selection method: {method}")


__all__ = [
    "SelectionMethod",
    "SelectionOutcome",
    "SolverStatus",
    "adsbf",
    "baseline_select_all",
    "baseline_top_one",
    "gsds",
    "optimal_selection_given_f",
    "prefix_scores",
    "projection_norm",
    "select",
]
