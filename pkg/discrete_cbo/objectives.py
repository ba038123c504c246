"""
Benchmark objectives with the metadata the error certificates need.

Every builtin is shifted so its minimum value is exactly 1, which keeps the
minimum strictly positive. Hessian bounds for the oscillatory functions are only
valid on the documented search box.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial as poly

from .errors import MetadataError, ParameterError, UsageError, suggest_names

logger = logging.getLogger(__name__)

BUILTIN_NAMES = ("sphere_plus_one", "rastrigin_shifted", "ackley_shifted", "quadratic_well")

# quadratic_well shape
WELL_CURVATURE = 2.0
WELL_CENTER = 0.5

FD_GRADIENT_STEP = 1e-6
FD_HESSIAN_STEP = 1e-4


@dataclass(frozen=True)
class AssumptionFlags:
    """Regularity assumptions the certificates rely on."""
    c2: bool = True
    unique_min: bool = True
    positive_min: bool = True

    def to_dict(self) -> Dict[str, bool]:
        return {"c2": self.c2, "unique_min": self.unique_min, "positive_min": self.positive_min}


@dataclass(frozen=True)
class Objective:
    """
    A vectorized objective R^d -> R with optional metadata.

    Attributes:
        name: Identifier used in configs and artifacts
        dim: Dimension d
        func: Maps an (M, d) array to an (M,) array of values
        minimizer: Known global minimizer X*
        min_value: Known minimum value L_m
        hessian_bound: Bound C_L on the Hessian spectral norm
        flags: Regularity assumptions
        box: (lower, upper) search box on which the metadata is valid
    """
    name: str
    dim: int
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    minimizer: Optional[np.ndarray] = field(default=None, compare=False)
    min_value: Optional[float] = None
    hessian_bound: Optional[float] = None
    flags: AssumptionFlags = field(default_factory=AssumptionFlags)
    box: Tuple[float, float] = (-5.0, 5.0)

    def __post_init__(self):
        if self.dim < 1:
            raise ParameterError(f"dim must be >= 1, got {self.dim}")
        if self.minimizer is not None:
            point = np.array(self.minimizer, dtype=float).reshape(self.dim)
            point.flags.writeable = False
            object.__setattr__(self, "minimizer", point)

    @property
    def has_metadata(self) -> bool:
        return self.minimizer is not None and self.min_value is not None

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at every row of an (M, d) array."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.dim:
            raise ParameterError(
                f"{self.name} expects points of shape (M, {self.dim}), got {points.shape}"
            )
        return np.asarray(self.func(points), dtype=float).reshape(points.shape[0])

    def evaluate(self, x: Sequence[float]) -> float:
        return float(self.evaluate_many(np.asarray(x, dtype=float).reshape(1, self.dim))[0])

    def gradient(self, x: Sequence[float], step: float = FD_GRADIENT_STEP) -> np.ndarray:
        """Central-difference gradient."""
        x = np.asarray(x, dtype=float).reshape(self.dim)
        offsets = np.eye(self.dim) * step
        values = self.evaluate_many(np.concatenate([x + offsets, x - offsets]))
        return (values[: self.dim] - values[self.dim:]) / (2.0 * step)

    def hessian(self, x: Sequence[float], step: float = FD_HESSIAN_STEP) -> np.ndarray:
        """Central-difference Hessian, symmetrized."""
        d = self.dim
        x = np.asarray(x, dtype=float).reshape(d)
        eye = np.eye(d) * step
        a, b = eye[:, None, :], eye[None, :, :]
        corners = [x + a + b, x + a - b, x - a + b, x - a - b]
        values = self.evaluate_many(np.concatenate([c.reshape(-1, d) for c in corners]))
        fpp, fpm, fmp, fmm = values.reshape(4, d, d)
        hess = (fpp - fpm - fmp + fmm) / (4.0 * step * step)
        return 0.5 * (hess + hess.T)

    def metadata_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "dim": self.dim,
            "minimizer": None if self.minimizer is None else self.minimizer.tolist(),
            "min_value": self.min_value,
            "hessian_bound": self.hessian_bound,
            "flags": self.flags.to_dict(),
            "box": list(self.box),
        }


# =============================================================================
# Builtin suite
# =============================================================================

def _sphere(points: np.ndarray) -> np.ndarray:
    return np.sum(points * points, axis=1) + 1.0


def _quadratic_well(points: np.ndarray) -> np.ndarray:
    shifted = points - WELL_CENTER
    return WELL_CURVATURE * np.sum(shifted * shifted, axis=1) + 1.0


def _rastrigin(points: np.ndarray) -> np.ndarray:
    d = points.shape[1]
    return 10.0 * d + np.sum(points * points - 10.0 * np.cos(2.0 * np.pi * points), axis=1) + 1.0


def _ackley(points: np.ndarray) -> np.ndarray:
    rms = np.sqrt(np.mean(points * points, axis=1))
    cos_mean = np.mean(np.cos(2.0 * np.pi * points), axis=1)
    return -20.0 * np.exp(-0.2 * rms) - np.exp(cos_mean) + 20.0 + math.e + 1.0


def builtin(name: str, dim: int) -> Objective:
    """
    Return a builtin objective with exact metadata.

    Args:
        name: One of BUILTIN_NAMES
        dim: Dimension, at least 1

    Raises:
        ParameterError: unknown name or invalid dimension
    """
    if dim < 1:
        raise ParameterError(f"dim must be >= 1, got {dim}")
    origin = np.zeros(dim)

    if name == "sphere_plus_one":
        return Objective(name, dim, _sphere, origin, 1.0, 2.0)
    if name == "quadratic_well":
        return Objective(
            name, dim, _quadratic_well, np.full(dim, WELL_CENTER), 1.0, 2.0 * WELL_CURVATURE
        )
    if name == "rastrigin_shifted":
        # |d²/dx² (x² - 10 cos 2πx)| <= 2 + 40π² everywhere
        return Objective(
            name, dim, _rastrigin, origin, 1.0, 2.0 + 40.0 * math.pi ** 2, box=(-5.12, 5.12)
        )
    if name == "ackley_shifted":
        # Not twice differentiable at the origin, so no Hessian bound exists
        return Objective(
            name, dim, _ackley, origin, 1.0, None,
            flags=AssumptionFlags(c2=False), box=(-32.768, 32.768),
        )

    raise ParameterError(
        f"Unknown objective '{name}'",
        suggestions=suggest_names(name, BUILTIN_NAMES) or [f"Choose one of: {', '.join(BUILTIN_NAMES)}"],
    )


def polynomial(
    coefficients: Sequence[float],
    dim: int,
    box: Tuple[float, float] = (-5.0, 5.0),
) -> Objective:
    """
    Separable polynomial objective L(x) = sum_l p(x_l).

    Coefficients are in ascending order (c0 + c1 x + c2 x² + ...). The polynomial must
    have even degree and a positive leading coefficient so a global minimum exists.
    The Hessian bound is the maximum of |p''| on the box.
    """
    coeffs = np.trim_zeros(np.asarray(coefficients, dtype=float), trim="b")
    if coeffs.size < 3 or (coeffs.size - 1) % 2 != 0 or coeffs[-1] <= 0:
        raise ParameterError(
            "polynomial objective needs even degree >= 2 with a positive leading coefficient",
            suggestions=["Coefficients are ascending: c0, c1, c2, ..."],
        )
    if not np.all(np.isfinite(coeffs)):
        raise ParameterError("polynomial coefficients must be finite")
    lower, upper = float(box[0]), float(box[1])
    if not lower < upper:
        raise ParameterError(f"box lower must be below upper, got {box}")

    p = Polynomial(coeffs)
    critical = p.deriv().roots()
    critical = np.real(critical[np.abs(np.imag(critical)) < 1e-9])
    values = p(critical)
    order = np.argsort(values)
    x_star = float(critical[order[0]])
    unique = critical.size == 1 or values[order[1]] - values[order[0]] > 1e-12 * max(1.0, abs(values[order[0]]))

    curvature = p.deriv(2)
    candidates = [lower, upper]
    if curvature.degree() >= 1:
        roots = curvature.deriv().roots()
        roots = np.real(roots[np.abs(np.imag(roots)) < 1e-9])
        candidates.extend(float(r) for r in roots if lower <= r <= upper)
    c_bound = float(np.max(np.abs(curvature(np.array(candidates)))))

    def func(points: np.ndarray) -> np.ndarray:
        return np.sum(poly.polyval(points, coeffs), axis=1)

    minimizer = np.full(dim, x_star)
    min_value = float(func(minimizer.reshape(1, dim))[0])
    logger.debug(f"polynomial objective: x*={x_star!r}, L_m={min_value!r}, C_L={c_bound!r}")
    return Objective(
        name="polynomial",
        dim=dim,
        func=func,
        minimizer=minimizer,
        min_value=min_value,
        hessian_bound=c_bound,
        flags=AssumptionFlags(c2=True, unique_min=bool(unique), positive_min=min_value > 0),
        box=(lower, upper),
    )


# =============================================================================
# Metadata validation
# =============================================================================

@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate_metadata."""
    trials: int
    best_value: float
    best_point: Tuple[float, ...]
    max_hessian_norm: Optional[float]
    passed: bool = True

    def to_dict(self) -> Dict[str, object]:
        return {
            "trials": self.trials,
            "best_value": self.best_value,
            "best_point": list(self.best_point),
            "max_hessian_norm": self.max_hessian_norm,
            "passed": self.passed,
        }


def hessian_norms(objective: Objective, points: np.ndarray) -> np.ndarray:
    """Spectral norms of finite-difference Hessians at each row of points."""
    return np.array([np.linalg.norm(objective.hessian(p), 2) for p in np.atleast_2d(points)])


def validate_metadata(
    objective: Objective,
    trials: int = 10_000,
    box: Optional[Tuple[float, float]] = None,
    seed: int = 0,
    hessian_samples: int = 200,
) -> ValidationReport:
    """
    Check an objective's metadata against random search and finite differences.

    Raises:
        UsageError: minimizer or min_value missing
        MetadataError: a sampled point beats min_value, or a Hessian exceeds C_L
    """
    if not objective.has_metadata:
        raise UsageError(f"objective '{objective.name}' has no minimizer/min_value metadata")
    assert objective.minimizer is not None and objective.min_value is not None
    lower, upper = box if box is not None else objective.box

    at_min = objective.evaluate(objective.minimizer)
    if abs(at_min - objective.min_value) > 1e-10:
        raise MetadataError(
            f"L(minimizer) = {at_min!r} differs from min_value = {objective.min_value!r}",
            point=objective.minimizer,
        )

    rng = np.random.default_rng(seed)
    points = rng.uniform(lower, upper, size=(trials, objective.dim))
    values = objective.evaluate_many(points)
    best = int(np.argmin(values))
    if values[best] < objective.min_value - 1e-9:
        raise MetadataError(
            f"found value {values[best]!r} below min_value {objective.min_value!r}",
            point=points[best],
        )

    max_norm: Optional[float] = None
    if objective.hessian_bound is not None and hessian_samples > 0:
        sample = points[: min(hessian_samples, trials)]
        norms = hessian_norms(objective, sample)
        worst = int(np.argmax(norms))
        max_norm = float(norms[worst])
        if max_norm > objective.hessian_bound * (1.0 + 1e-3):
            raise MetadataError(
                f"Hessian norm {max_norm!r} exceeds bound {objective.hessian_bound!r}",
                point=sample[worst],
            )

    logger.info(f"metadata of {objective.name} (d={objective.dim}) passed {trials} trials")
    return ValidationReport(
        trials=trials,
        best_value=float(values[best]),
        best_point=tuple(float(v) for v in points[best]),
        max_hessian_norm=max_norm,
    )
