"""
Stability conditions, moment laws and their Monte-Carlo witnesses.

The closed-form checks classify a scheme by its mean and L2 contraction factors.
The estimators simulate replicas with counter-based streams, so their output does
not depend on the number of worker threads.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .dynamics import RunConfig, step
from .ensemble import Ensemble
from .errors import ParameterError, PreconditionError
from .executor import ReplicaExecutor
from .noise import NoiseKind, NoiseScheme, NoiseStream, decay_rate, make_scheme, model_decay_rate
from .objectives import Objective, builtin

logger = logging.getLogger(__name__)

# Steps used by the contraction-factor regression; earlier steps are transient
REGRESSION_FIRST = 5
REGRESSION_LAST = 30

# Relative tolerance for classifying a rate or drift factor as on the boundary
BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class ModelCondition:
    """A model-specific stability condition evaluated at concrete parameters."""
    condition_text: str
    holds: bool
    evaluated_lhs: float
    evaluated_rhs: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "condition": self.condition_text,
            "holds": self.holds,
            "lhs": self.evaluated_lhs,
            "rhs": self.evaluated_rhs,
        }


@dataclass(frozen=True)
class StabilityReport:
    """
    Consensus classification of a scheme.

    Attributes:
        mean_consensus: |1 - gamma| < 1
        l2_consensus: (1 - gamma)^2 + zeta^2 < 1, equivalently rate > 0
        rate: 2 gamma - gamma^2 - zeta^2
        boundary: rate or |1 - gamma| - 1 is zero to within BOUNDARY_TOL
        model_condition: The model's own condition in (lambda, sigma, h)
    """
    mean_consensus: bool
    l2_consensus: bool
    rate: float
    boundary: bool = False
    model_condition: Optional[ModelCondition] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mean_consensus": self.mean_consensus,
            "l2_consensus": self.l2_consensus,
            "rate": self.rate,
            "boundary": self.boundary,
            "model_condition": None if self.model_condition is None else self.model_condition.to_dict(),
        }


def stability_boundary_modelA(lam: float, sigma: float) -> float:
    """Largest stable Model A step size (2 lambda - sigma^2) / lambda^2, or 0 if the region is empty."""
    if lam <= 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    if lam <= 0.5 * sigma * sigma:
        return 0.0
    return (2.0 * lam - sigma * sigma) / (lam * lam)


def check_modelB_unconditional(lam: float, sigma: float) -> bool:
    """lambda >= sigma^2 / 2 makes Model B stable for every h > 0."""
    return lam >= 0.5 * sigma * sigma


def _model_condition(scheme: NoiseScheme) -> Optional[ModelCondition]:
    if scheme.params is None:
        return None
    lam, sigma, h = scheme.params.lam, scheme.params.sigma, scheme.params.h
    if scheme.kind is NoiseKind.MODEL_A:
        h_max = stability_boundary_modelA(lam, sigma)
        return ModelCondition(
            "lambda > sigma^2/2 and 0 < h < (2 lambda - sigma^2)/lambda^2",
            lam > 0.5 * sigma * sigma and h < h_max,
            h,
            h_max,
        )
    if scheme.kind is NoiseKind.MODEL_B:
        lhs = (1.0 + sigma * sigma * h) * math.exp(-2.0 * lam * h)
        return ModelCondition("(1 + sigma^2 h) exp(-2 lambda h) < 1", lhs < 1.0, lhs, 1.0)
    return ModelCondition("lambda > sigma^2/2", lam > 0.5 * sigma * sigma, lam, 0.5 * sigma * sigma)


def check_stability(scheme: NoiseScheme) -> StabilityReport:
    """
    Classify a scheme by its decay rate and drift factor.

    Model schemes use the closed-form rate in (lambda, sigma, h), so the report agrees
    with model_condition. Values within BOUNDARY_TOL of a boundary count as on it and
    are reported as not stable.
    """
    rate = model_decay_rate(scheme)
    drift = abs(1.0 - scheme.gamma)
    tol = BOUNDARY_TOL * max(1.0, scheme.gamma ** 2, scheme.zeta ** 2)
    on_rate_boundary = abs(rate) <= tol
    on_drift_boundary = abs(drift - 1.0) <= tol
    return StabilityReport(
        mean_consensus=drift < 1.0 and not on_drift_boundary,
        l2_consensus=rate > 0.0 and not on_rate_boundary,
        rate=rate,
        boundary=on_rate_boundary or on_drift_boundary,
        model_condition=_model_condition(scheme),
    )


def moment_bound(scheme: NoiseScheme, well_preparedness: float, n: int) -> float:
    """Bound 2 ((1-gamma)^2 + zeta^2)^n * well_preparedness on E|X_n^i - consensus_n|^2."""
    return 2.0 * scheme.l2_factor ** n * well_preparedness


def martingale_bound(scheme: NoiseScheme, n_particles: int, well_preparedness: float) -> float:
    """
    Uniform L2 bound 2 N zeta^2 / rate * well_preparedness on the noise-driven part of
    the displacement sum_m (x_m - consensus_m) eta_m.
    """
    rate = decay_rate(scheme)
    if rate <= 0:
        raise PreconditionError(f"martingale bound needs a positive decay rate, got {rate}")
    return 2.0 * n_particles * scheme.zeta ** 2 / rate * well_preparedness


# =============================================================================
# Monte-Carlo estimators
# =============================================================================

@dataclass(frozen=True)
class Estimate:
    """Monte-Carlo value with its standard error."""
    value: float
    stderr: float

    def z_score(self, target: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.value == target else math.inf
        return abs(self.value - target) / self.stderr

    def to_dict(self) -> Dict[str, float]:
        return {"value": self.value, "stderr": self.stderr}


@dataclass(frozen=True, eq=False)
class MomentTable:
    """
    Replica statistics of the first pair difference x^1_n - x^2_n for n = 0..steps.

    mean_diff is the replica mean of the first coordinate of the difference. The
    squared-norm moment is estimated from the exact path identity as
    sum_l d_0^l^2 prod_m mean_r (1 - gamma - eta_{m,r}^l)^2, with a delta-method
    standard error; naive_diff2 is the plain replica mean of |x^1_n - x^2_n|^2, whose
    heavy right tail makes it unreliable for large n.
    """
    steps: np.ndarray
    mean_diff: np.ndarray
    stderr_diff: np.ndarray
    theory_diff: np.ndarray
    diff2: np.ndarray
    stderr_diff2: np.ndarray
    theory_diff2: np.ndarray
    naive_diff2: np.ndarray
    stderr_naive_diff2: np.ndarray

    def max_z(self) -> Dict[str, float]:
        def worst(values, theory, errors) -> float:
            gaps = np.abs(values - theory)
            scaled = np.divide(gaps, errors, out=np.zeros_like(gaps), where=errors > 0)
            scaled[(errors == 0) & (gaps > 0)] = math.inf
            return float(np.max(scaled))

        return {
            "diff": worst(self.mean_diff, self.theory_diff, self.stderr_diff),
            "diff2": worst(self.diff2, self.theory_diff2, self.stderr_diff2),
        }

    def rows(self) -> List[Dict[str, float]]:
        return [
            {
                "n": int(n),
                "empirical_E_diff": float(self.mean_diff[k]),
                "stderr_E_diff": float(self.stderr_diff[k]),
                "theory_E_diff": float(self.theory_diff[k]),
                "empirical_E_diff2": float(self.diff2[k]),
                "stderr_E_diff2": float(self.stderr_diff2[k]),
                "theory_E_diff2": float(self.theory_diff2[k]),
                "naive_E_diff2": float(self.naive_diff2[k]),
                "stderr_naive_E_diff2": float(self.stderr_naive_diff2[k]),
            }
            for k, n in enumerate(self.steps)
        ]


def default_pair() -> Ensemble:
    return Ensemble(np.array([[0.0], [1.0]]))


def pairwise_moments(
    scheme: NoiseScheme,
    steps: int = REGRESSION_LAST,
    replicas: int = 5000,
    seed: int = 0,
    initial: Optional[Ensemble] = None,
    objective: Optional[Objective] = None,
    beta: float = 1.0,
    executor: Optional[ReplicaExecutor] = None,
) -> MomentTable:
    """
    Simulate replicas of the full dynamics from a fixed ensemble and tabulate the
    first and second moments of the difference between particles 1 and 2.
    """
    if replicas < 2:
        raise ParameterError(f"need at least 2 replicas, got {replicas}")
    initial = initial if initial is not None else default_pair()
    if initial.n_particles < 2:
        raise ParameterError("pairwise moments need at least 2 particles")
    objective = objective if objective is not None else builtin("sphere_plus_one", initial.dim)
    config = RunConfig(beta=beta, scheme=scheme, seed=seed)
    executor = executor or ReplicaExecutor()
    dim = initial.dim

    def one_replica(replica: int):
        stream = NoiseStream(seed, replica)
        ensemble = initial
        diffs = np.empty((steps + 1, dim))
        for n in range(steps + 1):
            diffs[n] = ensemble.positions[0] - ensemble.positions[1]
            if n < steps:
                ensemble = step(ensemble, objective, config, stream)
        multipliers = 1.0 - scheme.gamma - stream.eta_block(scheme, initial.step, steps, dim)
        return diffs, multipliers * multipliers

    results = executor.map(one_replica, range(replicas))
    diffs = np.stack([r[0] for r in results])          # (R, steps+1, d)
    sq_multipliers = np.stack([r[1] for r in results])  # (R, steps, d)
    root_r = math.sqrt(replicas)

    first = diffs[:, :, 0]
    d0 = diffs[0, 0]
    n_axis = np.arange(steps + 1)

    sq_norm = np.sum(diffs * diffs, axis=2)
    rho = sq_multipliers.mean(axis=0)                    # (steps, d)
    rho_var = sq_multipliers.var(axis=0, ddof=1) / replicas
    rel_var = np.divide(rho_var, rho * rho, out=np.zeros_like(rho), where=rho > 0)
    products = np.vstack([np.ones((1, dim)), np.cumprod(rho, axis=0)])
    cum_rel_var = np.vstack([np.zeros((1, dim)), np.cumsum(rel_var, axis=0)])
    terms = d0 * d0 * products
    diff2 = terms.sum(axis=1)
    stderr_diff2 = np.sqrt(np.sum(terms * terms * cum_rel_var, axis=1))

    return MomentTable(
        steps=n_axis,
        mean_diff=first.mean(axis=0),
        stderr_diff=first.std(axis=0, ddof=1) / root_r,
        theory_diff=d0[0] * (1.0 - scheme.gamma) ** n_axis,
        diff2=diff2,
        stderr_diff2=stderr_diff2,
        theory_diff2=float(np.sum(d0 * d0)) * scheme.l2_factor ** n_axis,
        naive_diff2=sq_norm.mean(axis=0),
        stderr_naive_diff2=sq_norm.std(axis=0, ddof=1) / root_r,
    )


def l2_contraction_factor(
    scheme: NoiseScheme,
    replicas: int = 2000,
    seed: int = 0,
    first: int = REGRESSION_FIRST,
    last: int = REGRESSION_LAST,
    executor: Optional[ReplicaExecutor] = None,
) -> Estimate:
    """
    Empirical one-step L2 contraction factor of a pair difference.

    A pair difference is multiplied by (1 - gamma - eta_n) at every step, so
    E|d_n|^2 / |d_0|^2 is estimated as the product of per-step replica means of the
    squared multipliers. The factor is exp of the least-squares slope of the log
    moments over steps first..last.
    """
    if not 0 <= first < last:
        raise ParameterError(f"need 0 <= first < last, got {first}, {last}")
    executor = executor or ReplicaExecutor()

    def squared_multipliers(replica: int) -> np.ndarray:
        eta = NoiseStream(seed, replica).eta_block(scheme, 0, last, 1)[:, 0]
        return (1.0 - scheme.gamma - eta) ** 2

    samples = np.stack(executor.map(squared_multipliers, range(replicas)))
    rho = samples.mean(axis=0)
    if np.any(rho <= 0):
        return Estimate(0.0, 0.0)
    log_moments = np.concatenate([[0.0], np.cumsum(np.log(rho))])
    n_axis = np.arange(first, last + 1)
    slope = float(np.polyfit(n_axis, log_moments[first: last + 1], 1)[0])

    # delta method on the per-step log means entering the fit window
    window = slice(first, last)
    log_var = samples[:, window].var(axis=0, ddof=1) / replicas / rho[window] ** 2
    slope_se = math.sqrt(float(np.sum(log_var))) / (last - first)
    factor = math.exp(slope)
    return Estimate(factor, factor * slope_se)


def contraction_crossing(
    kind: NoiseKind,
    lam: float,
    sigma: float,
    h_grid: Sequence[float],
    replicas: int = 2000,
    seed: int = 0,
    executor: Optional[ReplicaExecutor] = None,
) -> Optional[float]:
    """
    Step size at which the empirical contraction factor first crosses 1 along h_grid,
    by linear interpolation of log factors. None if it never crosses.
    """
    grid = sorted(float(h) for h in h_grid)
    logs = []
    for h in grid:
        estimate = l2_contraction_factor(make_scheme(kind, lam, sigma, h), replicas, seed, executor=executor)
        logs.append(math.log(estimate.value) if estimate.value > 0 else -math.inf)
        logger.debug(f"{kind.value} h={h}: contraction factor {estimate.value:.6f}")
    for k in range(1, len(grid)):
        lo, hi = logs[k - 1], logs[k]
        if lo < 0 <= hi:
            if not math.isfinite(lo):
                return grid[k]
            return grid[k - 1] + (grid[k] - grid[k - 1]) * (-lo) / (hi - lo)
    return None


@dataclass(frozen=True, eq=False)
class SllnResult:
    """Per-path running averages of (gamma + eta)(2 - gamma - eta) and their target."""
    values: np.ndarray
    stderrs: np.ndarray
    target: float
    steps: int

    def coverage(self, width: float = 3.0) -> float:
        """Fraction of paths within width standard errors of the target."""
        return float(np.mean(np.abs(self.values - self.target) <= width * self.stderrs))


def slln_statistic(
    scheme: NoiseScheme,
    steps: int = 100_000,
    paths: int = 1000,
    seed: int = 0,
    executor: Optional[ReplicaExecutor] = None,
) -> SllnResult:
    """
    Y_n = (1/n) sum_{m<n} (gamma + eta_m)(2 - gamma - eta_m) on independent paths.

    Y_n converges almost surely to the decay rate 2 gamma - gamma^2 - zeta^2.
    """
    if steps < 2:
        raise ParameterError(f"need at least 2 steps, got {steps}")
    executor = executor or ReplicaExecutor()
    gamma = scheme.gamma

    def one_path(path: int):
        eta = NoiseStream(seed, path).eta_block(scheme, 0, steps, 1)[:, 0]
        terms = (gamma + eta) * (2.0 - gamma - eta)
        return float(terms.mean()), float(terms.std(ddof=1)) / math.sqrt(steps)

    results = executor.map(one_path, range(paths))
    return SllnResult(
        values=np.array([r[0] for r in results]),
        stderrs=np.array([r[1] for r in results]),
        target=decay_rate(scheme),
        steps=steps,
    )
