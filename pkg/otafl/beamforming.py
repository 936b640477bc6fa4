"""
Receive beamforming for a fixed device selection.

Minimizing max_m K_m^2 / |f^H h_m|^2 over unit-norm f is the single-group
multicast QoS problem

    min ||f_t||^2   s.t.  |f_t^H h_m|^2 >= K_m^2  for every selected m,

with f = f_t / ||f_t||. The nonconvex constraints are linearized around the
current iterate (successive convex approximation); each linearized problem is a
least-distance QP solved through its NNLS dual.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import nnls

from .errors import DomainError, ParameterError, SolverError
from .objective import Beamformer, DeviceProfile, channel_matrix, dataset_sizes

LOGGER = logging.getLogger(__name__)

INIT_MAX_RETRIES = 8
ORTHOGONAL_GAIN_TOL = 1e-12
COMPLEMENTARITY_TOL = 1e-8


@dataclass(frozen=True)
class SCASettings:
    """Stopping rules of the SCA loop.

    objective_tol is relative; constraint_tol is absolute on the normalized
    constraints |f_t^H h_m|^2 / K_m^2 >= 1.
    """

    max_iters: int = 50
    objective_tol: float = 1e-6
    constraint_tol: float = 1e-8

    def __post_init__(self):
        if self.max_iters < 1:
            raise ParameterError(f"SCA max_iters must be >= 1, got {self.max_iters}")
        if not (self.objective_tol > 0 and self.constraint_tol > 0):
            raise ParameterError("SCA tolerances must be positive")

    @classmethod
    def from_env(cls) -> "SCASettings":
        """Reads process-wide defaults from OTAFL_SCA_* environment variables."""
        return cls(
            max_iters=int(os.getenv("OTAFL_SCA_MAX_ITERS", "50")),
            objective_tol=float(os.getenv("OTAFL_SCA_OBJECTIVE_TOL", "1e-6")),
            constraint_tol=float(os.getenv("OTAFL_SCA_CONSTRAINT_TOL", "1e-8")),
        )


@dataclass(frozen=True)
class UnscaledBeamformer:
    """The multicast variable f_t = sqrt(c) * f."""

    vector: np.ndarray

    @property
    def objective(self) -> float:
        return float(np.linalg.norm(self.vector) ** 2)

    def constraint_margins(self, profiles: Sequence[DeviceProfile]) -> np.ndarray:
        """Returns |f_t^H h_m|^2 / K_m^2 - 1 for each profile."""
        gains = np.abs(channel_matrix(profiles) @ self.vector.conj()) ** 2
        return gains / dataset_sizes(profiles) ** 2 - 1.0

    def is_feasible(self, profiles: Sequence[DeviceProfile], tol: float = 1e-8) -> bool:
        return bool(np.all(self.constraint_margins(profiles) >= -tol))

    def normalized(self) -> Beamformer:
        return Beamformer.from_direction(self.vector)


@dataclass
class MulticastResult:
    """Outcome of one multicast QoS solve."""

    beamformer: Beamformer
    unscaled: UnscaledBeamformer
    objective: float
    iterations: int
    converged: bool
    trace: List[float] = field(default_factory=list)


def least_distance_qp(A: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Solves min ||x||^2 s.t. A x >= b via the NNLS dual.

    Returns the minimizer and its KKT multipliers for 1/2 ||x||^2.

    Raises:
        SolverError: if the constraints are inconsistent, NNLS hits its
            iteration limit, or the KKT conditions fail.
    """
    num_constraints, dim = A.shape
    E = np.vstack([A.T, b[None, :]])
    target = np.zeros(dim + 1)
    target[-1] = 1.0
    try:
        u, _ = nnls(E, target, maxiter=50 * (dim + num_constraints + 1))
    except RuntimeError as e:
        raise SolverError(f"NNLS did not converge: {e}") from e

    residual = E @ u - target
    denominator = -residual[-1]
    if denominator <= np.finfo(float).eps:
        raise SolverError("Linearized constraints are inconsistent")
    x = -residual[:dim] / residual[-1]
    multipliers = u / denominator

    slack = A @ x - b
    complementarity = float(np.max(np.abs(multipliers * slack))) if num_constraints else 0.0
    if complementarity > COMPLEMENTARITY_TOL * max(1.0, float(x @ x)):
        raise SolverError(f"QP complementarity violated ({complementarity:.3e})")
    return x, multipliers


class MulticastQoSSolver:
    """Solver workspace for one set of selected devices.

    Works internally on g_m = h_m / (K_m * scale) with scale = max_m ||h_m|| / K_m,
    so the constraints read |x^H g_m|^2 >= 1 with x = scale * f_t. One instance
    is not reentrant.
    """

    def __init__(self, profiles: Sequence[DeviceProfile], settings: Optional[SCASettings] = None):
        if not profiles:
            raise DomainError("Multicast QoS problem needs at least one selected device")
        self.profiles = list(profiles)
        self.settings = settings or SCASettings()
        raw = channel_matrix(self.profiles)
        norms = np.linalg.norm(raw, axis=1)
        if np.any(norms == 0.0):
            zero = [p.index for p, n in zip(self.profiles, norms) if n == 0.0]
            raise DomainError(f"Devices {zero} have zero channels")
        self._raw_norms = norms
        scaled = raw / dataset_sizes(self.profiles)[:, None]
        self.scale = float(np.max(np.linalg.norm(scaled, axis=1)))
        self.G = scaled / self.scale

    # --- coordinate changes ---

    def to_scaled(self, unscaled: UnscaledBeamformer) -> np.ndarray:
        return np.asarray(unscaled.vector, dtype=complex) * self.scale

    def to_unscaled(self, x: np.ndarray) -> UnscaledBeamformer:
        return UnscaledBeamformer(x / self.scale)

    def _inner(self, x: np.ndarray) -> np.ndarray:
        """x^H g_m for every selected device."""
        return self.G @ x.conj()

    def _tighten(self, x: np.ndarray) -> np.ndarray:
        """Rescales x so the weakest constraint holds with equality."""
        weakest = float(np.min(np.abs(self._inner(x))))
        if weakest <= ORTHOGONAL_GAIN_TOL:
            raise DomainError("Direction is orthogonal to a selected channel")
        return x / weakest

    # --- initialization ---

    def initial_point(self) -> np.ndarray:
        """Scale-to-feasibility start in scaled coordinates.

        Candidates are the strongest channel's direction and the principal
        eigenvector of sum_m g_m g_m^H; the one needing less power is kept.
        """
        strongest = int(np.argmax(self._raw_norms))
        candidates = [self.G[strongest] / np.linalg.norm(self.G[strongest])]
        if len(self.profiles) > 1:
            gram = self.G.T @ self.G.conj()
            _, vectors = np.linalg.eigh(gram)
            candidates.append(vectors[:, -1])

        best = None
        for attempt in range(INIT_MAX_RETRIES + 1):
            for direction in candidates:
                if np.min(np.abs(self._inner(direction))) <= ORTHOGONAL_GAIN_TOL:
                    continue
                point = self._tighten(direction)
                if best is None or np.vdot(point, point).real < np.vdot(best, best).real:
                    best = point
            if best is not None:
                return best
            LOGGER.warning(f"Initial direction orthogonal to a selected channel, retry {attempt + 1}")
            perturb = np.random.default_rng(attempt)
            dim = self.G.shape[1]
            candidates = [
                c + 0.1 * (perturb.standard_normal(dim) + 1j * perturb.standard_normal(dim))
                for c in candidates
            ]
        raise DomainError(f"No feasible initial direction after {INIT_MAX_RETRIES} retries")

    def warm_point(self, warm_start: UnscaledBeamformer) -> np.ndarray:
        """Rescales a previous solution to be tight for the current devices."""
        return self._tighten(self.to_scaled(warm_start))

    # --- SCA ---

    def step(self, x: np.ndarray, tighten: bool = True) -> np.ndarray:
        """One SCA iteration from a feasible x.

        With tighten, the minimizer is rescaled so its weakest true constraint
        is active; this never increases the objective.
        """
        inner = self._inner(x)
        coupling = inner[:, None] * self.G.conj()
        A = 2.0 * np.hstack([coupling.real, -coupling.imag])
        b = 1.0 + np.abs(inner) ** 2
        dim = self.G.shape[1]
        try:
            solution, _ = least_distance_qp(A, b)
        except SolverError as e:
            raise SolverError(str(e), best_iterate=self.to_unscaled(x)) from e
        candidate = solution[:dim] + 1j * solution[dim:]
        margins = np.abs(self._inner(candidate)) ** 2 - 1.0
        if np.min(margins) < -self.settings.constraint_tol:
            raise SolverError(
                f"SCA iterate violates constraints by {-np.min(margins):.3e}",
                best_iterate=self.to_unscaled(x),
            )
        return self._tighten(candidate) if tighten else candidate

    def solve(self, warm_start: Optional[UnscaledBeamformer] = None) -> MulticastResult:
        x = None
        if warm_start is not None:
            try:
                x = self.warm_point(warm_start)
            except DomainError:
                LOGGER.debug("Warm start orthogonal to a selected channel, using fresh initialization")
        if x is None:
            x = self.initial_point()

        objective = float(np.vdot(x, x).real)
        trace = [objective]
        converged = False
        iterations = 0
        for iterations in range(1, self.settings.max_iters + 1):
            candidate = self.step(x)
            candidate_objective = float(np.vdot(candidate, candidate).real)
            if candidate_objective >= objective:
                # No numerical progress left.
                converged = True
                break
            change = (objective - candidate_objective) / objective
            x, objective = candidate, candidate_objective
            trace.append(objective)
            if change < self.settings.objective_tol:
                converged = True
                break

        unscaled = self.to_unscaled(x)
        scale_sq = self.scale ** 2
        LOGGER.debug(
            f"SCA over {len(self.profiles)} devices: {iterations} iterations, "
            f"objective {objective / scale_sq:.6e}, converged={converged}"
        )
        return MulticastResult(
            beamformer=unscaled.normalized(),
            unscaled=unscaled,
            objective=objective / scale_sq,
            iterations=iterations,
            converged=converged,
            trace=[value / scale_sq for value in trace],
        )


def feasible_init(profiles: Sequence[DeviceProfile]) -> UnscaledBeamformer:
    """Returns f_t with |f_t^H h_m|^2 >= K_m^2 for every given device."""
    solver = MulticastQoSSolver(profiles)
    return solver.to_unscaled(solver.initial_point())


def sca_step(current: UnscaledBeamformer, profiles: Sequence[DeviceProfile]) -> UnscaledBeamformer:
    """Minimizes ||f_t||^2 under the constraints linearized at current."""
    solver = MulticastQoSSolver(profiles)
    return solver.to_unscaled(solver.step(solver.to_scaled(current), tighten=False))


def solve_multicast_qos(
    profiles: Sequence[DeviceProfile],
    settings: Optional[SCASettings] = None,
    warm_start: Optional[UnscaledBeamformer] = None,
) -> Tuple[Beamformer, float]:
    """Solves the multicast QoS problem for the given selected devices.

    Returns:
        The unit-norm receive beamformer and the final ||f_t||^2, which equals
        max_m K_m^2 / |f^H h_m|^2.
    """
    result = MulticastQoSSolver(profiles, settings).solve(warm_start)
    return result.beamformer, result.objective
