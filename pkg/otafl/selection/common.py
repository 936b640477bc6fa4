"""Types and building blocks shared by the device selection algorithms."""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Sequence

import numpy as np
from scipy.linalg import orth

from ..errors import DomainError
from ..objective import (
    AggregationParams,
    Beamformer,
    DeviceProfile,
    SelectionVector,
    channel_matrix,
    dataset_sizes,
    error_metric_d,
)

LOGGER = logging.getLogger(__name__)


class SolverStatus(Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    DEGRADED = "degraded"


@dataclass
class SelectionOutcome:
    """A joint (selection, beamformer) decision and how it was reached."""

    selection: SelectionVector
    beamformer: Beamformer
    d_value: float
    status: SolverStatus = SolverStatus.CONVERGED
    wall_ms: float = 0.0
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def num_selected(self) -> int:
        return self.selection.count

    def __repr__(self) -> str:
        return (
            f"SelectionOutcome(selected={self.num_selected}/{len(self.selection)}, "
            f"d={self.d_value:.6e}, status='{self.status.value}')"
        )


def make_outcome(
    beamformer: Beamformer,
    selection: SelectionVector,
    profiles: Sequence[DeviceProfile],
    params: AggregationParams,
    **kwargs,
) -> SelectionOutcome:
    """Builds an outcome whose d_value is evaluated from its own (f, s)."""
    d_value = error_metric_d(beamformer, selection, profiles, params)
    return SelectionOutcome(selection, beamformer, d_value, **kwargs)


def projection_norm(candidate: np.ndarray, basis_channels: Sequence[np.ndarray]) -> float:
    """Norm of the projection of candidate onto span(basis_channels).

    An empty basis spans only the zero vector, so the result is 0.
    """
    if len(basis_channels) == 0:
        return 0.0
    basis = orth(np.column_stack([np.asarray(b, dtype=complex) for b in basis_channels]))
    if basis.size == 0:
        return 0.0
    coefficients = basis.conj().T @ np.asarray(candidate, dtype=complex)
    return float(np.linalg.norm(coefficients))


def prefix_scores(
    beamformer: Beamformer,
    profiles: Sequence[DeviceProfile],
    params: AggregationParams,
):
    """Sorts devices by K_m^2 / |f^H h_m|^2 and scores every sorted prefix.

    Returns:
        (order, scores): device order (stable, so ties keep the lower index
        first) and d for the selection of the first j+1 devices in that order.
    """
    sizes = dataset_sizes(profiles)
    gains = np.abs(channel_matrix(profiles) @ beamformer.vector.conj()) ** 2
    if not np.any(gains > 0.0):
        raise DomainError("Beamformer is orthogonal to every device channel")
    with np.errstate(divide="ignore"):
        ratios = np.where(gains > 0.0, sizes ** 2 / np.where(gains > 0.0, gains, 1.0), math.inf)
    order = np.argsort(ratios, kind="stable")
    included = np.cumsum(sizes[order])
    exclusion = 4.0 / params.total_samples ** 2 * (np.sum(sizes) - included) ** 2
    worst = ratios[order]
    # A zero-gain device makes its prefix infeasible even when sigma^2 = 0.
    noise = np.where(
        np.isinf(worst),
        math.inf,
        params.noise_power / (params.power_limit * included ** 2) * np.where(np.isinf(worst), 0.0, worst),
    )
    return order, exclusion + noise


def optimal_selection_given_f(
    beamformer: Beamformer,
    profiles: Sequence[DeviceProfile],
    params: AggregationParams,
) -> SelectionVector:
    """Globally optimal selection for a fixed receive beamformer.

    With devices sorted by K_m^2 / |f^H h_m|^2, an optimal selection is always
    a prefix of that order, so only M candidates are scored.
    """
    order, scores = prefix_scores(beamformer, profiles, params)
    best = int(np.argmin(scores))
    return SelectionVector.from_indices(order[: best + 1], len(profiles))
