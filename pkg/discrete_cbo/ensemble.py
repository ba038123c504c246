"""
Particle ensembles and the Gibbs-weighted consensus point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DegenerateWeightsError, ObjectiveEvaluationError, ParameterError
from .objectives import Objective

logger = logging.getLogger(__name__)


def _frozen_array(values, ndim: int) -> np.ndarray:
    array = np.array(values, dtype=float, order="C")
    if array.ndim != ndim:
        raise ParameterError(f"expected a {ndim}-d array, got shape {array.shape}")
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Ensemble:
    """
    Particle positions at one step of the dynamics.

    Attributes:
        positions: (N, d) array, one particle per row; read-only
        step: Step index n
    """
    positions: np.ndarray
    step: int = 0

    def __post_init__(self):
        positions = _frozen_array(self.positions, 2)
        if positions.shape[0] < 1 or positions.shape[1] < 1:
            raise ParameterError(f"ensemble needs N >= 1 and d >= 1, got shape {positions.shape}")
        if not np.all(np.isfinite(positions)):
            raise ParameterError("ensemble positions must be finite")
        if self.step < 0:
            raise ParameterError(f"step must be non-negative, got {self.step}")
        object.__setattr__(self, "positions", positions)

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def with_positions(self, positions: np.ndarray) -> Ensemble:
        """Return the next-step ensemble."""
        return Ensemble(positions, self.step + 1)

    def permuted(self, order) -> Ensemble:
        return Ensemble(self.positions[np.asarray(order)], self.step)


@dataclass(frozen=True, eq=False)
class ConsensusPoint:
    """
    Gibbs-weighted average of the particles.

    Attributes:
        point: Consensus location, length d
        weights: Normalized weights, length N
    """
    point: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    """Mean, diameter (max pairwise distance) and spread (mean squared deviation)."""
    mean: np.ndarray
    diameter: float
    spread: float

    def to_dict(self) -> Dict[str, object]:
        return {"mean": self.mean.tolist(), "diameter": self.diameter, "spread": self.spread}


def objective_values(ensemble: Ensemble, objective: Objective) -> np.ndarray:
    """Evaluate the objective on every particle, rejecting non-finite values."""
    values = objective.evaluate_many(ensemble.positions)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        index = int(bad[0])
        raise ObjectiveEvaluationError(
            f"objective '{objective.name}' returned {values[index]!r} at particle {index}",
            particle_index=index,
            value=float(values[index]),
        )
    return values


def gibbs_weights(values: np.ndarray, beta: float) -> np.ndarray:
    """Normalized weights proportional to exp(-beta * (L - min L))."""
    if not (np.isfinite(beta) and beta > 0):
        raise ParameterError(f"beta must be positive and finite, got {beta!r}")
    raw = np.exp(-beta * (values - values.min()))
    total = raw.sum()
    if not (np.isfinite(total) and total > 0):
        raise DegenerateWeightsError(f"Gibbs weights sum to {total!r} after stabilization")
    return raw / total


def gibbs_consensus(ensemble: Ensemble, objective: Objective, beta: float) -> ConsensusPoint:
    """
    Gibbs-weighted consensus point of an ensemble.

    The minimum objective value is subtracted inside the exponent, so large beta never
    underflows all weights. Exact ties at the minimum share the weight evenly.
    """
    weights = gibbs_weights(objective_values(ensemble, objective), beta)
    positions = ensemble.positions
    point = weights @ positions
    # stay inside the coordinate-wise hull despite rounding
    point = np.clip(point, positions.min(axis=0), positions.max(axis=0))
    return ConsensusPoint(point=point, weights=weights)


def ensemble_stats(ensemble: Ensemble) -> EnsembleStats:
    positions = ensemble.positions
    mean = positions.mean(axis=0)
    deviations = positions - mean
    spread = float(np.mean(np.sum(deviations * deviations, axis=1)))
    diameter = float(pdist(positions).max(initial=0.0))
    return EnsembleStats(mean=mean, diameter=diameter, spread=spread)


def max_deviation_sq(positions: np.ndarray) -> np.ndarray:
    """Per-dimension max_i (x^{i,l} - mean^l)^2 for an (N, d) array."""
    deviations = positions - positions.mean(axis=0)
    return np.max(deviations * deviations, axis=0)


def consensus_gap(ensemble: Ensemble, consensus: ConsensusPoint) -> Dict[str, float]:
    """
    Compare |mean - consensus|^2 with max_i |X^i - mean|^2.

    The first never exceeds the second for any weights.
    """
    positions = ensemble.positions
    mean = positions.mean(axis=0)
    gap = float(np.sum((mean - consensus.point) ** 2))
    radius = float(np.max(np.sum((positions - mean) ** 2, axis=1)))
    return {"gap_sq": gap, "max_radius_sq": radius}

