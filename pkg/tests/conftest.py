"""
Pytest configuration and shared fixtures for discrete-cbo tests.
"""

import shutil
import tempfile
from pathlib import Path
from typing import Generator

import numpy as np
import pytest


# ============================================================================
# Directory Fixtures
# ============================================================================

@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """Create a temporary directory for artifacts."""
    path = Path(tempfile.mkdtemp(prefix="cbo_test_"))
    yield path
    shutil.rmtree(path, ignore_errors=True)


@pytest.fixture
def config_file(temp_dir: Path) -> Path:
    """A minimal valid config file for a short run."""
    path = temp_dir / "experiment.cfg"
    path.write_text(
        "# short ModelC run\n"
        "task = run\n"
        "objective = sphere_plus_one\n"
        "dim = 2\n"
        "model = ModelC\n"
        "lambda = 1\n"
        "sigma = 1\n"
        "h = 0.1\n"
        "beta = 50\n"
        "N = 10\n"
        "seed = 7\n"
        f"out = {temp_dir / 'out'}\n"
    )
    return path


# ============================================================================
# Ensemble Fixtures
# ============================================================================

@pytest.fixture
def rng() -> np.random.Generator:
    """Deterministic generator for randomized test inputs."""
    return np.random.default_rng(20240601)


@pytest.fixture
def small_ensemble():
    """Five particles in two dimensions."""
    from discrete_cbo.ensemble import Ensemble

    return Ensemble(np.array([
        [0.0, 0.0],
        [1.0, 0.5],
        [-0.5, 2.0],
        [0.3, -1.0],
        [2.0, 1.0],
    ]))


@pytest.fixture
def pair_ensemble():
    """Two particles on the line at 0 and 1."""
    from discrete_cbo.ensemble import Ensemble

    return Ensemble(np.array([[0.0], [1.0]]))


# ============================================================================
# Objective Fixtures
# ============================================================================

@pytest.fixture
def sphere2():
    """sphere_plus_one in two dimensions."""
    from discrete_cbo.objectives import builtin

    return builtin("sphere_plus_one", 2)


@pytest.fixture
def well1():
    """quadratic_well in one dimension (minimum 1 at 0.5, C_L = 4)."""
    from discrete_cbo.objectives import builtin

    return builtin("quadratic_well", 1)


# ============================================================================
# Scheme Fixtures
# ============================================================================

@pytest.fixture
def model_a():
    """ModelA with lambda=1, sigma=0.5, h=0.2."""
    from discrete_cbo.noise import NoiseKind, make_scheme

    return make_scheme(NoiseKind.MODEL_A, 1.0, 0.5, 0.2)


@pytest.fixture
def model_b():
    """ModelB with lambda=1, sigma=0.5, h=0.2."""
    from discrete_cbo.noise import NoiseKind, make_scheme

    return make_scheme(NoiseKind.MODEL_B, 1.0, 0.5, 0.2)


@pytest.fixture
def model_c():
    """ModelC with lambda=1, sigma=1, h=0.1."""
    from discrete_cbo.noise import NoiseKind, make_scheme

    return make_scheme(NoiseKind.MODEL_C, 1.0, 1.0, 0.1)


@pytest.fixture
def generic():
    """GenericGaussian with gamma=0.5, zeta=0.6."""
    from discrete_cbo.noise import generic_scheme

    return generic_scheme(0.5, 0.6)
