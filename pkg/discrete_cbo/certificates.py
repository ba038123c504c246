"""
Error certificates toward the global minimum.

Two sufficient conditions are checked numerically:

  * the Laplace certificate, which compares (1 - eps) E exp(-beta L(X_in)) with a
    right-hand side driven by the initial spread and guarantees an error of order
    (d/2) log(beta) / beta once it holds;
  * the support certificate, which additionally asks the objective to be within
    delta of its minimum on the whole support of the initial law and guarantees
    an error of at most delta + |log eps| / beta.

Both sides of each inequality are reported after multiplication by exp(beta L_m),
so neither side underflows for large beta.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .dynamics import RunConfig, RunResult, run
from .ensemble import Ensemble, max_deviation_sq, objective_values
from .errors import ParameterError, PreconditionError, UsageError
from .executor import ReplicaExecutor
from .laws import InitialLaw, LawKind, initial_ensemble
from .noise import SAMPLE_LANE, NoiseKind, NoiseScheme, counter_generator, decay_rate
from .objectives import Objective
from .stability import Estimate, check_stability

logger = logging.getLogger(__name__)

MIN_REPLICAS = 100
LOW_ESS = 10.0
UNRELIABLE_FAILURE_FRACTION = 0.1

# grid points per dimension for the support supremum
SUP_GRID = {1: 2001, 2: 201, 3: 41}
SUP_RANDOM_POINTS = 20_000
SUP_REFINE_LEVELS = 4


@dataclass(frozen=True)
class CertificateResult:
    """
    Outcome of a certificate check.

    Attributes:
        name: Which certificate was checked
        holds: lhs >= rhs and every entry of conditions is true
        lhs: Left-hand side, scaled by exp(normalization)
        rhs: Right-hand side, scaled by exp(normalization)
        epsilon: Confidence parameter in (0, 1)
        bound_value: Guaranteed error bound when the certificate holds
        normalization: Log of the common scale factor, beta * L_m (beta * sup L for the rectangle variant)
        conditions: Side conditions that must also hold
        details: Intermediate estimates
    """
    name: str
    holds: bool
    lhs: float
    rhs: float
    epsilon: float
    bound_value: float
    normalization: float
    conditions: Dict[str, bool] = field(default_factory=dict)
    details: Dict[str, float] = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "holds": self.holds,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "epsilon": self.epsilon,
            "bound_value": self.bound_value,
            "normalization": self.normalization,
            "conditions": dict(self.conditions),
            "details": dict(self.details),
        }


@dataclass(frozen=True)
class LaplaceEstimate:
    """-(1/beta) log E exp(-beta L) with its standard error and effective sample size."""
    value: float
    stderr: float
    ess: float
    concentrated: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {"value": self.value, "stderr": self.stderr, "ess": self.ess, "concentrated": self.concentrated}


@dataclass(frozen=True)
class SupEstimate:
    """Supremum of L on a support: refined grid value, padded upper bound and argmax."""
    value: float
    upper_bound: float
    point: tuple


# =============================================================================
# Initial spread
# =============================================================================

def well_preparedness(
    law: InitialLaw,
    n_particles: int,
    replicas: int = 1000,
    seed: int = 0,
    executor: Optional[ReplicaExecutor] = None,
) -> Estimate:
    """
    Monte-Carlo estimate of sum_l E max_i (x_0^{i,l} - mean_0^l)^2.

    Replica r draws the same initial ensemble that empirical_error uses for replica r.
    """
    if replicas < MIN_REPLICAS:
        raise ParameterError(f"well_preparedness needs at least {MIN_REPLICAS} replicas, got {replicas}")
    executor = executor or ReplicaExecutor()

    def one_replica(replica: int) -> float:
        positions = initial_ensemble(law, n_particles, seed, replica).positions
        return float(np.sum(max_deviation_sq(positions)))

    values = np.array(executor.map(one_replica, range(replicas)))
    return Estimate(float(values.mean()), float(values.std(ddof=1)) / math.sqrt(replicas))


# =============================================================================
# Laplace principle
# =============================================================================

def _law_samples(law: InitialLaw, samples: int, seed: int) -> np.ndarray:
    if samples < 2:
        raise ParameterError(f"need at least 2 samples, got {samples}")
    return law.sample(counter_generator(seed, 0, SAMPLE_LANE), samples)


def _sample_values(objective: Objective, law: InitialLaw, samples: int, seed: int) -> np.ndarray:
    return objective_values(Ensemble(_law_samples(law, samples, seed)), objective)


def laplace_from_values(values: np.ndarray, beta: float) -> LaplaceEstimate:
    """-(1/beta) log of the sample mean of exp(-beta L)."""
    if not (math.isfinite(beta) and beta > 0):
        raise ParameterError(f"beta must be positive, got {beta}")
    value = float(math.log(values.size) - logsumexp(-beta * values)) / beta
    weights = np.exp(-beta * (values - values.min()))
    mean = float(weights.mean())
    stderr = float(weights.std(ddof=1)) / math.sqrt(values.size) / mean / beta
    ess = float(weights.sum() ** 2 / np.sum(weights * weights))
    return LaplaceEstimate(value, stderr, ess, ess < LOW_ESS)


def laplace_estimate(
    objective: Objective,
    law: InitialLaw,
    beta: float,
    samples: int = 100_000,
    seed: int = 0,
) -> LaplaceEstimate:
    """
    Monte-Carlo value of -(1/beta) log E exp(-beta L(X_in)) for X_in drawn from law.

    A warning is logged when the weights concentrate on fewer than LOW_ESS samples.
    """
    estimate = laplace_from_values(_sample_values(objective, law, samples, seed), beta)
    if estimate.concentrated:
        logger.warning(
            f"Laplace estimate at beta={beta} rests on an effective sample size of {estimate.ess:.1f}"
        )
    return estimate


def laplace_quadrature(objective: Objective, law: InitialLaw, beta: float) -> float:
    """Deterministic value of the Laplace functional for a one-dimensional box law."""
    if objective.dim != 1 or law.kind is not LawKind.UNIFORM_BOX:
        raise UsageError("quadrature is available for one-dimensional box laws only")
    lo, hi = (float(v[0]) for v in law.bounding_box())
    points = None
    reference = objective.min_value
    if objective.minimizer is not None and lo < objective.minimizer[0] < hi:
        points = [float(objective.minimizer[0])]
    if reference is None:
        reference = float(np.min(objective.evaluate_many(np.linspace(lo, hi, 1001).reshape(-1, 1))))

    def integrand(x: float) -> float:
        return math.exp(-beta * (objective.evaluate([x]) - reference))

    integral, _ = integrate.quad(integrand, lo, hi, points=points, epsabs=1e-14, epsrel=1e-12, limit=500)
    return reference - math.log(integral / (hi - lo)) / beta


def laplace_leading_term(objective: Objective, beta: float) -> float:
    """L(X*) + (d/2) log(beta) / beta."""
    if objective.minimizer is None:
        raise UsageError(f"objective '{objective.name}' has no known minimizer")
    return objective.evaluate(objective.minimizer) + 0.5 * objective.dim * math.log(beta) / beta


def laplace_constant(objective: Objective, law: InitialLaw) -> float:
    """
    First-order constant c1 in L(X*) + (d/2) log(beta)/beta + c1/beta + o(1/beta):
    c1 = -(d/2) log(2 pi) - log f(X*) + (1/2) log det Hess L(X*).
    """
    if objective.minimizer is None:
        raise UsageError(f"objective '{objective.name}' has no known minimizer")
    if not objective.flags.c2:
        raise PreconditionError(f"objective '{objective.name}' is not twice differentiable at its minimizer")
    density = law.density(objective.minimizer)
    if density <= 0:
        raise PreconditionError("the initial law must put positive density on the minimizer")
    sign, logdet = np.linalg.slogdet(objective.hessian(objective.minimizer))
    if sign <= 0:
        raise PreconditionError("the Hessian at the minimizer must be positive definite")
    d = objective.dim
    return -0.5 * d * math.log(2.0 * math.pi) - math.log(density) + 0.5 * float(logdet)


def laplace_asymptotic(objective: Objective, law: InitialLaw, beta: float) -> float:
    return laplace_leading_term(objective, beta) + laplace_constant(objective, law) / beta


def laplace_residual(value: float, objective: Objective, beta: float) -> float:
    """value - L(X*) - (d/2) log(beta)/beta."""
    return value - laplace_leading_term(objective, beta)


def intermediate_bound(laplace_value: float, beta: float, epsilon: float) -> float:
    """Bound -(1/beta) log E exp(-beta L(X_in)) - (1/beta) log eps that precedes the Laplace step."""
    return laplace_value - math.log(epsilon) / beta


# =============================================================================
# Right-hand side machinery
# =============================================================================

def _require_stable(scheme: NoiseScheme) -> float:
    rate = decay_rate(scheme)
    if not check_stability(scheme).l2_consensus:
        raise PreconditionError(
            f"certificate needs (1-gamma)^2 + zeta^2 < 1, got {scheme.l2_factor!r}",
            suggestions=["Choose a step size inside the stability region"],
        )
    return rate


def rate_prefactor(scheme: NoiseScheme) -> float:
    """2 sqrt((1 + (1-gamma)^2 + zeta^2)(gamma^2 + zeta^2)) / (1 - exp(-rate))."""
    rate = _require_stable(scheme)
    g, z = scheme.gamma, scheme.zeta
    return 2.0 * math.sqrt((1.0 + scheme.l2_factor) * (g * g + z * z)) / -math.expm1(-rate)


def model_rate_prefactor(scheme: NoiseScheme) -> float:
    """rate_prefactor written directly in (lambda, sigma, h)."""
    _require_stable(scheme)
    if scheme.params is None:
        return rate_prefactor(scheme)
    lam, sigma, h = scheme.params.lam, scheme.params.sigma, scheme.params.h
    s2 = sigma * sigma
    if scheme.kind is NoiseKind.MODEL_A:
        product = h * (s2 + lam * lam * h) * (2.0 + h * (s2 + lam * lam * h - 2.0 * lam))
        rate = 2.0 * lam * h - lam * lam * h * h - s2 * h
    elif scheme.kind is NoiseKind.MODEL_B:
        damping = math.exp(-lam * h)
        spread = 1.0 + s2 * h
        product = (1.0 + damping * (-2.0 + damping * spread)) * (1.0 + damping * damping * spread)
        rate = 1.0 - spread * damping * damping
    else:
        growth = math.exp((s2 - 2.0 * lam) * h)
        product = (1.0 + growth) * (1.0 - 2.0 * math.exp(-lam * h) + growth)
        rate = -math.expm1((s2 - 2.0 * lam) * h)
    return 2.0 * math.sqrt(product) / -math.expm1(-rate)


def _require_metadata(objective: Objective) -> None:
    if objective.min_value is None or objective.hessian_bound is None:
        raise UsageError(
            f"objective '{objective.name}' lacks min_value or hessian_bound metadata",
            suggestions=["Use a builtin with a Hessian bound or a polynomial objective"],
        )


def _check_epsilon(epsilon: float) -> None:
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")


def normalized_expectation(
    objective: Objective,
    law: InitialLaw,
    beta: float,
    samples: int = 100_000,
    seed: int = 0,
) -> Estimate:
    """E exp(-beta (L(X_in) - L_m)), which lies in (0, 1]."""
    _require_metadata(objective)
    assert objective.min_value is not None
    values = _sample_values(objective, law, samples, seed)
    weights = np.exp(-beta * (values - objective.min_value))
    return Estimate(float(weights.mean()), float(weights.std(ddof=1)) / math.sqrt(samples))


def check_laplace_certificate(
    objective: Objective,
    law: InitialLaw,
    scheme: NoiseScheme,
    beta: float,
    epsilon: float,
    n_particles: int,
    replicas: int = 1000,
    seed: int = 0,
    samples: int = 100_000,
    executor: Optional[ReplicaExecutor] = None,
) -> CertificateResult:
    """
    Check (1 - eps) E exp(-beta L(X_in)) >= C_L * rate_prefactor * beta * exp(-beta L_m) * W,
    with W the well-preparedness of the initial ensemble. When it holds the limit satisfies
    essinf L(X_inf) <= L(X*) + (d/2) log(beta)/beta + O(1/beta).

    Raises:
        UsageError: the objective lacks L_m or C_L
        PreconditionError: the scheme is not L2 stable
    """
    _require_metadata(objective)
    _check_epsilon(epsilon)
    prefactor = rate_prefactor(scheme)
    assert objective.min_value is not None and objective.hessian_bound is not None

    spread = well_preparedness(law, n_particles, replicas, seed, executor)
    expectation = normalized_expectation(objective, law, beta, samples, seed)
    lhs = (1.0 - epsilon) * expectation.value
    rhs = objective.hessian_bound * prefactor * beta * spread.value
    laplace_value = objective.min_value - math.log(expectation.value) / beta

    result = CertificateResult(
        name="laplace",
        holds=lhs >= rhs,
        lhs=lhs,
        rhs=rhs,
        epsilon=epsilon,
        bound_value=0.5 * objective.dim * math.log(beta) / beta,
        normalization=beta * objective.min_value,
        details={
            "beta": beta,
            "well_preparedness": spread.value,
            "well_preparedness_stderr": spread.stderr,
            "expectation": expectation.value,
            "expectation_stderr": expectation.stderr,
            "rate_prefactor": prefactor,
            "laplace_value": laplace_value,
            "intermediate_bound": intermediate_bound(laplace_value, beta, epsilon),
        },
    )
    logger.info(f"laplace certificate at beta={beta}: holds={result.holds} (lhs={lhs:.6g}, rhs={rhs:.6g})")
    return result


def support_sup(objective: Objective, law: InitialLaw) -> SupEstimate:
    """
    Supremum of L over the support of law by nested grid refinement.

    The padded bound adds |grad L| r + C_L r^2 / 2 at the argmax, r being the
    half-diagonal of the finest cell.
    """
    d = law.dim
    lo, hi = law.bounding_box()
    if d in SUP_GRID:
        count = SUP_GRID[d]
        axes = [np.linspace(lo[k], hi[k], count) for k in range(d)]
        candidates = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        spacing = (hi - lo) / (count - 1)
    else:
        count = 0
        candidates = law.sample(counter_generator(0, 0, SAMPLE_LANE), SUP_RANDOM_POINTS)
        spacing = (hi - lo) / SUP_RANDOM_POINTS ** (1.0 / d)
    candidates = candidates[law.contains(candidates)]
    values = objective.evaluate_many(candidates)
    best = int(np.argmax(values))
    point, value = candidates[best], float(values[best])

    local = 11
    for _ in range(SUP_REFINE_LEVELS):
        axes = [
            np.linspace(max(lo[k], point[k] - spacing[k]), min(hi[k], point[k] + spacing[k]), local)
            for k in range(d)
        ]
        spacing = spacing * 2.0 / (local - 1)
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        grid = grid[law.contains(grid)]
        if grid.size == 0:
            break
        grid_values = objective.evaluate_many(grid)
        k = int(np.argmax(grid_values))
        if grid_values[k] > value:
            point, value = grid[k], float(grid_values[k])

    radius = 0.5 * float(np.linalg.norm(spacing))
    upper = value
    if objective.hessian_bound is not None:
        slope = float(np.linalg.norm(objective.gradient(point)))
        upper = value + slope * radius + 0.5 * objective.hessian_bound * radius * radius
    return SupEstimate(value=value, upper_bound=upper, point=tuple(float(v) for v in point))


def check_support_certificate(
    objective: Objective,
    law: InitialLaw,
    scheme: NoiseScheme,
    beta: float,
    epsilon: float,
    delta: float,
    n_particles: int,
    replicas: int = 1000,
    seed: int = 0,
    samples: int = 100_000,
    variant: str = "well_prepared",
    executor: Optional[ReplicaExecutor] = None,
) -> CertificateResult:
    """
    Check sup_support L - L_m < delta together with the spread inequality.
    Both the delta condition and the rectangle exponent use the padded sup.

    variant="well_prepared" uses the same inequality as the Laplace certificate.
    variant="rectangle" replaces it by (1 - eps) >= C_L * rate_prefactor * beta *
    exp(beta (sup L - L_m)) * diam(R)^2, R the bounding rectangle of the support,
    which implies the first. When the certificate holds the limit satisfies
    essinf L(X_inf) <= L_m + delta + |log eps| / beta.

    Raises:
        PreconditionError: the support does not contain the minimizer
    """
    _require_metadata(objective)
    _check_epsilon(epsilon)
    if not delta > 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    if variant not in ("well_prepared", "rectangle"):
        raise ParameterError(f"unknown variant '{variant}'", suggestions=["Use 'well_prepared' or 'rectangle'"])
    assert objective.min_value is not None and objective.hessian_bound is not None
    if objective.minimizer is None or not bool(law.contains(objective.minimizer.reshape(1, -1))[0]):
        raise PreconditionError("the support of the initial law must contain the minimizer")
    prefactor = rate_prefactor(scheme)

    sup = support_sup(objective, law)
    gap = sup.value - objective.min_value
    # the delta condition and the rectangle exponent use the padded sup
    padded_gap = sup.upper_bound - objective.min_value
    details: Dict[str, float] = {
        "beta": beta,
        "delta": delta,
        "sup_value": sup.value,
        "sup_upper_bound": sup.upper_bound,
        "sup_gap": gap,
        "sup_gap_padded": padded_gap,
        "rate_prefactor": prefactor,
    }

    if variant == "rectangle":
        lo, hi = law.bounding_box()
        diameter_sq = float(np.sum((hi - lo) ** 2))
        exponent = beta * padded_gap
        lhs = 1.0 - epsilon
        rhs = objective.hessian_bound * prefactor * beta * diameter_sq * (
            math.exp(exponent) if exponent < 700 else math.inf
        )
        details["rectangle_diameter_sq"] = diameter_sq
        normalization = beta * sup.value
    else:
        spread = well_preparedness(law, n_particles, replicas, seed, executor)
        normalization = beta * objective.min_value
        expectation = normalized_expectation(objective, law, beta, samples, seed)
        lhs = (1.0 - epsilon) * expectation.value
        rhs = objective.hessian_bound * prefactor * beta * spread.value
        details.update({
            "well_preparedness": spread.value,
            "well_preparedness_stderr": spread.stderr,
            "expectation": expectation.value,
            "expectation_stderr": expectation.stderr,
        })

    conditions = {"sup_gap_below_delta": padded_gap < delta}
    result = CertificateResult(
        name=f"support_{variant}",
        holds=lhs >= rhs and all(conditions.values()),
        lhs=lhs,
        rhs=rhs,
        epsilon=epsilon,
        bound_value=delta + abs(math.log(epsilon)) / beta,
        normalization=normalization,
        conditions=conditions,
        details=details,
    )
    logger.info(f"support certificate ({variant}) at beta={beta}: holds={result.holds}")
    return result


def support_bound(objective: Objective, law: InitialLaw, beta: float, epsilon: float) -> float:
    """sup_support L - (log eps) / beta, the bound available without the delta condition."""
    _check_epsilon(epsilon)
    return support_sup(objective, law).value - math.log(epsilon) / beta


# =============================================================================
# Empirical error
# =============================================================================

@dataclass(frozen=True)
class EmpiricalErrorReport:
    """
    Replica minimum of L at the limit points next to the certified bounds.

    Attributes:
        min_L_at_limit: min over replicas of L(limit point), a proxy for essinf L(X_inf)
        laplace_bound: L(X*) + (d/2) log(beta)/beta
        support_bound: L_m + delta + |log eps|/beta when delta and eps are given
        failures: Replicas that did not reach consensus
        replicas: Number of replicas
        reliable: At most 10% of the replicas failed
        limit_values: L(limit point) per replica
    """
    min_L_at_limit: float
    laplace_bound: float
    support_bound: Optional[float]
    failures: int
    replicas: int
    reliable: bool
    limit_values: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "min_L_at_limit": self.min_L_at_limit,
            "laplace_bound": self.laplace_bound,
            "support_bound": self.support_bound,
            "failures": self.failures,
            "replicas": self.replicas,
            "reliable": self.reliable,
        }


def run_replicas(
    objective: Objective,
    law: InitialLaw,
    config: RunConfig,
    n_particles: int,
    replicas: int,
    executor: Optional[ReplicaExecutor] = None,
) -> List[RunResult]:
    """Independent runs from i.i.d. initial ensembles; result r uses replica index r."""
    executor = executor or ReplicaExecutor()

    def one_replica(replica: int) -> RunResult:
        initial = initial_ensemble(law, n_particles, config.seed, replica)
        return run(initial, objective, config, replica=replica)

    return executor.map(one_replica, range(replicas))


def empirical_error(
    objective: Objective,
    law: InitialLaw,
    scheme: NoiseScheme,
    beta: float,
    n_particles: int,
    replicas: int = MIN_REPLICAS,
    run_config: Optional[RunConfig] = None,
    seed: int = 0,
    epsilon: Optional[float] = None,
    delta: Optional[float] = None,
    executor: Optional[ReplicaExecutor] = None,
) -> EmpiricalErrorReport:
    """
    Run independent replicas and compare min L(limit point) with the certified bounds.

    run_config supplies max_steps and consensus_tol; beta, scheme and seed come from the
    arguments. More than 10% non-consensus replicas mark the report unreliable.
    """
    if replicas < MIN_REPLICAS:
        raise ParameterError(f"empirical_error needs at least {MIN_REPLICAS} replicas, got {replicas}")
    _require_stable(scheme)
    if objective.minimizer is None:
        raise UsageError(f"objective '{objective.name}' has no known minimizer")
    base = run_config if run_config is not None else RunConfig(beta=beta, scheme=scheme)
    config = replace(base, beta=beta, scheme=scheme, seed=seed, record_noise=False)

    results = run_replicas(objective, law, config, n_particles, replicas, executor)
    values = [objective.evaluate(r.limit_point) for r in results]
    failures = sum(1 for r in results if not r.consensus_reached)
    reliable = failures <= UNRELIABLE_FAILURE_FRACTION * replicas
    if not reliable:
        logger.warning(f"{failures} of {replicas} replicas did not reach consensus; report is unreliable")

    bound_support = None
    if delta is not None and epsilon is not None and objective.min_value is not None:
        _check_epsilon(epsilon)
        bound_support = objective.min_value + delta + abs(math.log(epsilon)) / beta

    return EmpiricalErrorReport(
        min_L_at_limit=float(min(values)),
        laplace_bound=laplace_leading_term(objective, beta),
        support_bound=bound_support,
        failures=failures,
        replicas=replicas,
        reliable=reliable,
        limit_values=values,
    )
