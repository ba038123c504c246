"""
Noise schemes and the counter-based noise stream.

A NoiseScheme is the pair (gamma, zeta) of the generalized one-step update plus,
for the three concrete models, the (lambda, sigma, h) it came from. A NoiseStream
produces the standard normals Z_n^l as a pure function of (seed, replica, n, l),
so runs do not depend on scheduling or thread count.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.special import ndtri

from .errors import ParameterError

logger = logging.getLogger(__name__)

# Steps generated per Philox counter block
BLOCK_STEPS = 1024

# Counter lanes keep independent uses of one (seed, replica) apart
NOISE_LANE = 0
INITIAL_LANE = 1
SAMPLE_LANE = 2

UINT64_LIMIT = 2 ** 64


class NoiseKind(Enum):
    """Provenance of a scheme."""
    GENERIC = "GenericGaussian"
    MODEL_A = "ModelA"
    MODEL_B = "ModelB"
    MODEL_C = "ModelC"

    @classmethod
    def from_name(cls, name: str) -> NoiseKind:
        key = name.strip().lower().replace("_", "").replace("-", "")
        aliases = {
            "genericgaussian": cls.GENERIC, "generic": cls.GENERIC,
            "modela": cls.MODEL_A, "a": cls.MODEL_A,
            "modelb": cls.MODEL_B, "b": cls.MODEL_B,
            "modelc": cls.MODEL_C, "c": cls.MODEL_C,
        }
        if key not in aliases:
            raise ParameterError(
                f"Unknown model kind '{name}'",
                suggestions=[f"Choose one of: {', '.join(k.value for k in cls)}"],
            )
        return aliases[key]


@dataclass(frozen=True)
class ModelParams:
    """Continuous-time drift lambda, diffusion sigma and step size h."""
    lam: float
    sigma: float
    h: float

    def to_dict(self) -> Dict[str, float]:
        return {"lambda": self.lam, "sigma": self.sigma, "h": self.h}


@dataclass(frozen=True)
class NoiseScheme:
    """
    Effective drift and noise level of the one-step update.

    Attributes:
        gamma: Effective drift
        zeta: Standard deviation of eta_n^l
        kind: Which model produced the pair
        params: Model parameters, None for generic schemes
    """
    gamma: float
    zeta: float
    kind: NoiseKind = NoiseKind.GENERIC
    params: Optional[ModelParams] = None

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and math.isfinite(self.zeta)):
            raise ParameterError(f"gamma and zeta must be finite, got ({self.gamma}, {self.zeta})")
        if self.zeta < 0:
            raise ParameterError(f"zeta must be non-negative, got {self.zeta}")
        if (self.kind is NoiseKind.GENERIC) != (self.params is None):
            raise ParameterError("model schemes carry params; generic schemes do not")

    @property
    def l2_factor(self) -> float:
        """One-step L2 contraction factor (1 - gamma)^2 + zeta^2."""
        return (1.0 - self.gamma) ** 2 + self.zeta ** 2

    def transform(self, z: np.ndarray) -> np.ndarray:
        """Map standard normals to eta draws."""
        z = np.asarray(z, dtype=float)
        if self.kind is NoiseKind.MODEL_C:
            assert self.params is not None
            lam, sigma, h = self.params.lam, self.params.sigma, self.params.h
            # lognormal multiplier minus its mean, damped by exp(-lambda h)
            return math.exp(-lam * h) * np.expm1(-0.5 * sigma * sigma * h + sigma * math.sqrt(h) * z)
        return self.zeta * z

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "gamma": self.gamma,
            "zeta": self.zeta,
            "params": None if self.params is None else self.params.to_dict(),
        }


def make_scheme(kind: NoiseKind, lam: float, sigma: float, h: float) -> NoiseScheme:
    """
    Build a Model A/B/C scheme from (lambda, sigma, h).

    Raises:
        ParameterError: lambda or h not positive, sigma negative, or kind generic
    """
    if not (math.isfinite(lam) and lam > 0):
        raise ParameterError(f"lambda must be positive, got {lam}")
    if not (math.isfinite(h) and h > 0):
        raise ParameterError(f"h must be positive, got {h}")
    if not (math.isfinite(sigma) and sigma >= 0):
        raise ParameterError(f"sigma must be non-negative, got {sigma}")

    params = ModelParams(lam, sigma, h)
    if kind is NoiseKind.MODEL_A:
        return NoiseScheme(lam * h, sigma * math.sqrt(h), kind, params)
    if kind is NoiseKind.MODEL_B:
        damping = math.exp(-lam * h)
        return NoiseScheme(-math.expm1(-lam * h), damping * sigma * math.sqrt(h), kind, params)
    if kind is NoiseKind.MODEL_C:
        damping = math.exp(-lam * h)
        return NoiseScheme(
            -math.expm1(-lam * h), damping * math.sqrt(math.expm1(sigma * sigma * h)), kind, params
        )
    raise ParameterError("make_scheme needs ModelA, ModelB or ModelC; use generic_scheme for raw (gamma, zeta)")


def generic_scheme(gamma: float, zeta: float) -> NoiseScheme:
    return NoiseScheme(float(gamma), float(zeta), NoiseKind.GENERIC, None)


def decay_rate(scheme: NoiseScheme) -> float:
    """2 gamma - gamma^2 - zeta^2; positive exactly when the scheme is L2 stable."""
    return 2.0 * scheme.gamma - scheme.gamma ** 2 - scheme.zeta ** 2


def model_decay_rate(scheme: NoiseScheme) -> float:
    """Decay rate written directly in the model parameters."""
    if scheme.params is None:
        return decay_rate(scheme)
    lam, sigma, h = scheme.params.lam, scheme.params.sigma, scheme.params.h
    if scheme.kind is NoiseKind.MODEL_A:
        return 2.0 * lam * h - (lam * h) ** 2 - sigma * sigma * h
    if scheme.kind is NoiseKind.MODEL_B:
        return 1.0 - (1.0 + sigma * sigma * h) * math.exp(-2.0 * lam * h)
    return -math.expm1((sigma * sigma - 2.0 * lam) * h)


def _check_u64(name: str, value: int) -> int:
    value = int(value)
    if not 0 <= value < UINT64_LIMIT:
        raise ParameterError(f"{name} must fit in an unsigned 64-bit integer, got {value}")
    return value


def counter_generator(seed: int, replica: int, lane: int, block: int = 0) -> np.random.Generator:
    """Philox generator keyed by seed, positioned at (lane, block, replica)."""
    counter = (_check_u64("replica", replica) << 192) | (block << 128) | (lane << 64)
    return np.random.Generator(np.random.Philox(key=_check_u64("seed", seed), counter=counter))


class NoiseStream:
    """
    Standard normals Z_n^l for one replica.

    Each block of BLOCK_STEPS steps comes from its own Philox counter; dimension l of
    the block occupies raw words [l * BLOCK_STEPS, (l + 1) * BLOCK_STEPS), so a draw does
    not depend on how many dimensions are requested. Normals come from the inverse CDF
    of open-interval uniforms, one raw word each. A stream caches the latest block and
    is meant to be used from one thread.
    """

    def __init__(self, seed: int, replica: int = 0):
        self.seed = _check_u64("seed", seed)
        self.replica = _check_u64("replica", replica)
        self._cached: Optional[Tuple[int, np.ndarray]] = None

    def __repr__(self) -> str:
        return f"NoiseStream(seed={self.seed}, replica={self.replica})"

    def _block(self, block: int, dim: int) -> np.ndarray:
        if self._cached is not None:
            cached_block, values = self._cached
            if cached_block == block and values.shape[0] >= dim:
                return values[:dim]
        bitgen = counter_generator(self.seed, self.replica, NOISE_LANE, block).bit_generator
        raw = bitgen.random_raw(dim * BLOCK_STEPS).reshape(dim, BLOCK_STEPS)
        uniforms = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
        values = ndtri(uniforms)
        self._cached = (block, values)
        return values

    def normal(self, n: int, l: int) -> float:
        if n < 0 or l < 0:
            raise ParameterError(f"counters must be non-negative, got n={n}, l={l}")
        block, offset = divmod(n, BLOCK_STEPS)
        return float(self._block(block, l + 1)[l, offset])

    def normals(self, start: int, count: int, dim: int) -> np.ndarray:
        """(count, dim) array whose row k holds Z_{start+k}."""
        if start < 0 or count < 0 or dim < 1:
            raise ParameterError(f"invalid block request start={start}, count={count}, dim={dim}")
        out = np.empty((count, dim))
        n = start
        while n < start + count:
            block, offset = divmod(n, BLOCK_STEPS)
            take = min(BLOCK_STEPS - offset, start + count - n)
            out[n - start: n - start + take] = self._block(block, dim)[:, offset: offset + take].T
            n += take
        return out

    def eta(self, scheme: NoiseScheme, n: int, dim: int) -> np.ndarray:
        """Noise vector eta_n shared by all particles at step n."""
        return scheme.transform(self.normals(n, 1, dim)[0])

    def eta_block(self, scheme: NoiseScheme, start: int, count: int, dim: int) -> np.ndarray:
        return scheme.transform(self.normals(start, count, dim))


def sample_eta(scheme: NoiseScheme, stream: NoiseStream, n: int, l: int) -> float:
    """Single draw eta_n^l."""
    return float(scheme.transform(np.array(stream.normal(n, l))))
