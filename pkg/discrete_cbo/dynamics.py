"""
The synchronous CBO update and the run loop.

All particles move toward the same consensus point with the same noise vector
eta_n, so pairwise differences evolve by the scalar products of (1 - gamma - eta).
The replay helpers check that recursion and the related mean identities on
recorded runs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from .ensemble import Ensemble, ensemble_stats, gibbs_consensus
from .errors import CBOError, DynamicsError, ParameterError, UsageError
from .noise import NoiseKind, NoiseScheme, NoiseStream
from .objectives import Objective

logger = logging.getLogger(__name__)

DEFAULT_MAX_STEPS = 10_000
DEFAULT_CONSENSUS_TOL = 1e-8


@dataclass(frozen=True)
class RunConfig:
    """
    Parameters of a single run.

    Attributes:
        beta: Inverse temperature of the Gibbs weights
        scheme: Effective drift and noise
        max_steps: Step limit
        consensus_tol: Stop once the diameter is at most this
        record_noise: Keep eta_n in the trace for replay
        seed: Key of the noise streams
    """
    beta: float
    scheme: NoiseScheme
    max_steps: int = DEFAULT_MAX_STEPS
    consensus_tol: float = DEFAULT_CONSENSUS_TOL
    record_noise: bool = False
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ParameterError(f"beta must be positive, got {self.beta}")
        if self.max_steps < 1:
            raise ParameterError(f"max_steps must be >= 1, got {self.max_steps}")
        if not (math.isfinite(self.consensus_tol) and self.consensus_tol > 0):
            raise ParameterError(f"consensus_tol must be positive, got {self.consensus_tol}")


@dataclass(frozen=True, eq=False)
class StepRecord:
    """Diagnostics of the ensemble at step n, with the noise used to leave it."""
    step: int
    consensus: np.ndarray
    mean: np.ndarray
    diameter: float
    spread: float
    eta: Optional[np.ndarray] = None


@dataclass
class RunTrace:
    """Per-step records; the last record is the terminal state and has no noise."""
    records: List[StepRecord] = field(default_factory=list)
    noise_recorded: bool = False

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: StepRecord) -> None:
        self.records.append(record)

    @property
    def diameters(self) -> np.ndarray:
        return np.array([r.diameter for r in self.records])

    @property
    def means(self) -> np.ndarray:
        return np.array([r.mean for r in self.records])

    @property
    def consensus_points(self) -> np.ndarray:
        return np.array([r.consensus for r in self.records])

    @property
    def noise(self) -> np.ndarray:
        """(T, d) array of recorded eta_n for the T steps taken."""
        if not self.noise_recorded:
            raise UsageError(
                "trace has no recorded noise",
                suggestions=["Run with record_noise=True to enable replay checks"],
            )
        stepped = [r.eta for r in self.records if r.eta is not None]
        if not stepped:
            dim = self.records[0].mean.shape[0] if self.records else 0
            return np.empty((0, dim))
        return np.array(stepped)


@dataclass(frozen=True, eq=False)
class RunResult:
    """
    Outcome of run().

    Attributes:
        final: Ensemble at termination
        consensus_reached: Whether the diameter fell to consensus_tol
        steps_taken: Number of updates applied
        limit_point: Ensemble mean at termination
        trace: Per-step diagnostics
        replica: Replica index of the noise stream
    """
    final: Ensemble
    consensus_reached: bool
    steps_taken: int
    limit_point: np.ndarray
    trace: RunTrace
    replica: int = 0

    def summary(self, objective: Objective) -> Dict[str, Any]:
        return {
            "limit_point": self.limit_point.tolist(),
            "steps": self.steps_taken,
            "consensus_reached": self.consensus_reached,
            "objective_at_limit": objective.evaluate(self.limit_point),
            "final_diameter": self.trace.records[-1].diameter if self.trace.records else None,
            "replica": self.replica,
        }


def _update(positions: np.ndarray, target: np.ndarray, gamma: float, eta: np.ndarray) -> np.ndarray:
    return positions - (gamma + eta) * (positions - target)


def step(
    ensemble: Ensemble,
    objective: Objective,
    config: RunConfig,
    stream: NoiseStream,
) -> Ensemble:
    """
    Apply one synchronous update.

    The consensus point is computed once from the pre-update ensemble and the noise
    vector eta_n (n = ensemble.step) is shared by all particles.
    """
    consensus = gibbs_consensus(ensemble, objective, config.beta)
    eta = stream.eta(config.scheme, ensemble.step, ensemble.dim)
    return ensemble.with_positions(
        _update(ensemble.positions, consensus.point, config.scheme.gamma, eta)
    )


def native_step(
    ensemble: Ensemble,
    objective: Objective,
    config: RunConfig,
    stream: NoiseStream,
) -> Ensemble:
    """
    One update written in the model's own form rather than the (gamma, eta) reduction.

    Model A is the explicit Euler-Maruyama step, Model B the predictor-corrector step and
    Model C the exponential step. Generic schemes fall back to step().

    Model A and B agree with step() for the same stream. The exponential Model C step
    corresponds to the mirrored draw -eta_n, which has the same mean and variance.
    """
    scheme = config.scheme
    if scheme.params is None:
        return step(ensemble, objective, config, stream)
    lam, sigma, h = scheme.params.lam, scheme.params.sigma, scheme.params.h
    target = gibbs_consensus(ensemble, objective, config.beta).point
    z = stream.normals(ensemble.step, 1, ensemble.dim)[0]
    x = ensemble.positions
    root_h = math.sqrt(h)

    if scheme.kind is NoiseKind.MODEL_A:
        new = x - lam * h * (x - target) - (x - target) * sigma * root_h * z
    elif scheme.kind is NoiseKind.MODEL_B:
        predicted = target + math.exp(-lam * h) * (x - target)
        new = predicted - (predicted - target) * sigma * root_h * z
    else:
        new = target + (x - target) * np.exp(-(lam + 0.5 * sigma * sigma) * h + sigma * root_h * z)
    return ensemble.with_positions(new)


def run(
    initial: Ensemble,
    objective: Objective,
    config: RunConfig,
    replica: int = 0,
    stream: Optional[NoiseStream] = None,
) -> RunResult:
    """
    Iterate the update until the diameter is at most consensus_tol or max_steps is hit.

    Raises:
        DynamicsError: the consensus point could not be formed; carries the step index
    """
    stream = stream if stream is not None else NoiseStream(config.seed, replica)
    scheme = config.scheme
    trace = RunTrace(noise_recorded=config.record_noise)
    ensemble = initial
    taken = 0
    reached = False

    while True:
        stats = ensemble_stats(ensemble)
        try:
            consensus = gibbs_consensus(ensemble, objective, config.beta)
        except CBOError as e:
            raise DynamicsError(f"step {ensemble.step}: {e.message}", step=ensemble.step) from e

        if stats.diameter <= config.consensus_tol or taken >= config.max_steps:
            reached = stats.diameter <= config.consensus_tol
            trace.append(StepRecord(ensemble.step, consensus.point, stats.mean, stats.diameter, stats.spread))
            break

        eta = stream.eta(scheme, ensemble.step, ensemble.dim)
        trace.append(StepRecord(
            ensemble.step, consensus.point, stats.mean, stats.diameter, stats.spread,
            eta if config.record_noise else None,
        ))
        ensemble = ensemble.with_positions(_update(ensemble.positions, consensus.point, scheme.gamma, eta))
        taken += 1

    logger.debug(
        f"replica {replica}: {'consensus' if reached else 'no consensus'} after {taken} steps "
        f"(diameter {trace.records[-1].diameter:.3e})"
    )
    return RunResult(
        final=ensemble,
        consensus_reached=reached,
        steps_taken=taken,
        limit_point=ensemble.positions.mean(axis=0),
        trace=trace,
        replica=replica,
    )


# =============================================================================
# Replay checks
# =============================================================================

def replay_positions(
    trace: RunTrace,
    initial: Ensemble,
    objective: Objective,
    config: RunConfig,
) -> List[np.ndarray]:
    """Re-simulate a recorded run from its stored noise; returns positions for n = 0..T."""
    noise = trace.noise
    positions = initial.positions
    out = [positions]
    for n, eta in enumerate(noise):
        target = gibbs_consensus(Ensemble(positions, initial.step + n), objective, config.beta).point
        positions = _update(positions, target, config.scheme.gamma, eta)
        out.append(positions)
    return out


def _products(trace: RunTrace, gamma: float, dim: int) -> np.ndarray:
    """Row n holds prod_{m<n} (1 - gamma - eta_m) per dimension."""
    factors = 1.0 - gamma - trace.noise
    return np.vstack([np.ones((1, dim)), np.cumprod(factors, axis=0)])


def replay_check(
    trace: RunTrace,
    initial: Ensemble,
    objective: Objective,
    config: RunConfig,
) -> float:
    """
    Largest deviation between simulated pairwise differences and their closed form
    (x_0^i - x_0^j) * prod_{m<n} (1 - gamma - eta_m), over all pairs, steps and dimensions.

    Raises:
        UsageError: the trace has no recorded noise
    """
    replayed = replay_positions(trace, initial, objective, config)
    if initial.n_particles == 1:
        return 0.0
    x0 = replayed[0]
    diff0 = x0[:, None, :] - x0[None, :, :]
    products = _products(trace, config.scheme.gamma, initial.dim)
    worst = 0.0
    for n, positions in enumerate(replayed):
        diff = positions[:, None, :] - positions[None, :, :]
        worst = max(worst, float(np.max(np.abs(diff - diff0 * products[n]))))
    return worst


def mean_deviation_error(
    trace: RunTrace,
    initial: Ensemble,
    objective: Objective,
    config: RunConfig,
) -> float:
    """
    Check |X_n^i - mean_n|^2 = sum_l (x_0^{i,l} - mean_0^l)^2 prod_{m<n} (1 - gamma - eta_m^l)^2.
    """
    replayed = replay_positions(trace, initial, objective, config)
    dev0 = replayed[0] - replayed[0].mean(axis=0)
    products = _products(trace, config.scheme.gamma, initial.dim)
    worst = 0.0
    for n, positions in enumerate(replayed):
        dev = positions - positions.mean(axis=0)
        simulated = np.sum(dev * dev, axis=1)
        predicted = np.sum((dev0 * products[n]) ** 2, axis=1)
        worst = max(worst, float(np.max(np.abs(simulated - predicted))))
    return worst


def consensus_distance_margin(
    trace: RunTrace,
    initial: Ensemble,
    objective: Objective,
    config: RunConfig,
) -> float:
    """
    Smallest slack in (1/N) sum_i |X_n^i - consensus_n|^2 <= 2 sum_l max_i (x_0^{i,l} - mean_0^l)^2
    prod_{m<n} (1 - gamma - eta_m^l)^2 over all steps. Negative means violated.
    """
    replayed = replay_positions(trace, initial, objective, config)
    spread0 = np.max((replayed[0] - replayed[0].mean(axis=0)) ** 2, axis=0)
    products = _products(trace, config.scheme.gamma, initial.dim)
    consensus = trace.consensus_points
    slack = math.inf
    for n, positions in enumerate(replayed):
        bound = 2.0 * float(np.sum(spread0 * products[n] ** 2))
        distance = np.sum((positions - consensus[n]) ** 2, axis=1)
        slack = min(slack, bound - float(np.mean(distance)))
    return slack


def mean_recursion_error(trace: RunTrace, scheme: NoiseScheme) -> float:
    """
    Check mean_{n+1} - mean_n = -(gamma + eta_n)(mean_n - consensus_n) from trace data alone.
    """
    noise = trace.noise
    means = trace.means
    consensus = trace.consensus_points
    if noise.shape[0] == 0:
        return 0.0
    steps = noise.shape[0]
    lhs = means[1: steps + 1] - means[:steps]
    rhs = -(scheme.gamma + noise) * (means[:steps] - consensus[:steps])
    return float(np.max(np.abs(lhs - rhs)))


def cauchy_witness(trace: RunTrace, last: int = 10) -> float:
    """Largest Euclidean distance between any two of the last recorded means."""
    means = trace.means[-last:]
    if means.shape[0] < 2:
        return 0.0
    gaps = means[:, None, :] - means[None, :, :]
    return float(np.sqrt(np.max(np.sum(gaps * gaps, axis=2))))
