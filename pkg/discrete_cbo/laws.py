"""
Initial laws for particle ensembles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .ensemble import Ensemble
from .errors import ParameterError
from .noise import INITIAL_LANE, counter_generator

ArrayLike = Union[float, Sequence[float], np.ndarray]


class LawKind(Enum):
    UNIFORM_BOX = "uniform_box"
    UNIFORM_BALL = "uniform_ball"


def _vector(value: ArrayLike, dim: Optional[int]) -> np.ndarray:
    array = np.array(np.atleast_1d(value), dtype=float)
    if array.size == 1 and dim is not None:
        array = np.full(dim, float(array[0]))
    if dim is not None and array.size != dim:
        raise ParameterError(f"expected {dim} values, got {array.size}")
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class InitialLaw:
    """
    Uniform law on a compact box or ball.

    Attributes:
        kind: Box or ball
        lower: Box lower corner (box only)
        upper: Box upper corner (box only)
        center: Ball center (ball only)
        radius: Ball radius (ball only)
    """
    kind: LawKind
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None

    @classmethod
    def box(cls, lower: ArrayLike, upper: ArrayLike, dim: Optional[int] = None) -> InitialLaw:
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        hi = np.atleast_1d(np.asarray(upper, dtype=float))
        dim = dim if dim is not None else max(lo.size, hi.size)
        lo, hi = _vector(lo, dim), _vector(hi, dim)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo < hi)):
            raise ParameterError(f"box needs finite lower < upper, got {lo.tolist()} and {hi.tolist()}")
        return cls(LawKind.UNIFORM_BOX, lower=lo, upper=hi)

    @classmethod
    def ball(cls, center: ArrayLike, radius: float, dim: Optional[int] = None) -> InitialLaw:
        c = _vector(center, dim)
        if not (np.all(np.isfinite(c)) and math.isfinite(radius) and radius > 0):
            raise ParameterError(f"ball needs a finite center and positive radius, got {radius}")
        return cls(LawKind.UNIFORM_BALL, center=c, radius=float(radius))

    @property
    def dim(self) -> int:
        reference = self.lower if self.kind is LawKind.UNIFORM_BOX else self.center
        assert reference is not None
        return int(reference.size)

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        """Smallest closed rectangle containing the support."""
        if self.kind is LawKind.UNIFORM_BOX:
            assert self.lower is not None and self.upper is not None
            return self.lower, self.upper
        assert self.center is not None and self.radius is not None
        return self.center - self.radius, self.center + self.radius

    @property
    def volume(self) -> float:
        if self.kind is LawKind.UNIFORM_BOX:
            lo, hi = self.bounding_box()
            return float(np.prod(hi - lo))
        assert self.radius is not None
        d = self.dim
        return math.exp(0.5 * d * math.log(math.pi) - math.lgamma(0.5 * d + 1.0) + d * math.log(self.radius))

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Boolean mask of rows inside the closed support."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind is LawKind.UNIFORM_BOX:
            lo, hi = self.bounding_box()
            return np.all((points >= lo - tol) & (points <= hi + tol), axis=1)
        assert self.center is not None and self.radius is not None
        return np.linalg.norm(points - self.center, axis=1) <= self.radius + tol

    def density(self, point: Sequence[float]) -> float:
        inside = bool(self.contains(np.asarray(point, dtype=float).reshape(1, self.dim))[0])
        return 1.0 / self.volume if inside else 0.0

    def sample(self, generator: np.random.Generator, n: int) -> np.ndarray:
        """n i.i.d. points as an (n, d) array."""
        d = self.dim
        if self.kind is LawKind.UNIFORM_BOX:
            lo, hi = self.bounding_box()
            return lo + (hi - lo) * generator.random((n, d))
        assert self.center is not None and self.radius is not None
        directions = generator.standard_normal((n, d))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        radii = self.radius * generator.random(n) ** (1.0 / d)
        return self.center + directions * radii[:, None]

    def to_dict(self) -> Dict[str, Any]:
        if self.kind is LawKind.UNIFORM_BOX:
            lo, hi = self.bounding_box()
            return {"kind": self.kind.value, "lower": lo.tolist(), "upper": hi.tolist()}
        assert self.center is not None
        return {"kind": self.kind.value, "center": self.center.tolist(), "radius": self.radius}


def initial_ensemble(law: InitialLaw, n_particles: int, seed: int, replica: int) -> Ensemble:
    """The initial ensemble of one replica, drawn from its own counter lane."""
    if n_particles < 1:
        raise ParameterError(f"need at least one particle, got {n_particles}")
    generator = counter_generator(seed, replica, INITIAL_LANE)
    return Ensemble(law.sample(generator, n_particles))
