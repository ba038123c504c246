"""
Acceptance-scale scenarios.

These run thousands of replicas and take seconds to a minute each; select them
with `pytest -m integration` or skip them with `-m "not slow"`.
"""

import math

import numpy as np
import pytest

from discrete_cbo.certificates import (
    check_laplace_certificate,
    check_support_certificate,
    empirical_error,
    laplace_estimate,
    laplace_leading_term,
    laplace_quadrature,
    run_replicas,
)
from discrete_cbo.dynamics import RunConfig, cauchy_witness, replay_check, run
from discrete_cbo.ensemble import ensemble_stats
from discrete_cbo.executor import ReplicaExecutor
from discrete_cbo.laws import InitialLaw, initial_ensemble
from discrete_cbo.noise import NoiseKind, generic_scheme, make_scheme
from discrete_cbo.objectives import builtin
from discrete_cbo.stability import (
    contraction_crossing,
    l2_contraction_factor,
    pairwise_moments,
    slln_statistic,
)

pytestmark = [pytest.mark.slow, pytest.mark.integration]


# ============================================================================
# Dynamics
# ============================================================================

class TestPathIdentity:
    """Replay of the product form on random configurations."""

    def test_random_configs(self):
        """20 mixed ModelA/B/C runs satisfy the pairwise identity to 1e-10 of the diameter."""
        rng = np.random.default_rng(7)
        kinds = [NoiseKind.MODEL_A, NoiseKind.MODEL_B, NoiseKind.MODEL_C]
        for case in range(20):
            n_particles = int(rng.integers(2, 9))
            dim = int(rng.integers(1, 5))
            kind = kinds[case % 3]
            lam = float(rng.uniform(0.6, 2.0))
            sigma = float(rng.uniform(0.1, 1.0))
            if kind is NoiseKind.MODEL_A:
                h = 0.5 * (2.0 * lam - sigma ** 2) / lam ** 2
            else:
                h = float(rng.uniform(0.05, 0.5))
            scheme = make_scheme(kind, lam, sigma, h)
            steps = int(rng.integers(10, 101))
            config = RunConfig(
                beta=float(rng.uniform(0.5, 50.0)), scheme=scheme, max_steps=steps,
                consensus_tol=1e-300, record_noise=True, seed=case,
            )
            objective = builtin("sphere_plus_one", dim)
            initial = initial_ensemble(InitialLaw.box(-2.0, 2.0, dim=dim), n_particles, case, 0)
            result = run(initial, objective, config)
            diameter = ensemble_stats(initial).diameter
            assert replay_check(result.trace, initial, objective, config) <= 1e-10 * diameter, case


class TestMomentLaws:
    """Pair moments against their closed forms."""

    def test_generic_pair(self):
        """gamma=0.5, zeta=0.6: both moments within 4 standard errors at every step."""
        scheme = generic_scheme(0.5, 0.6)
        table = pairwise_moments(scheme, steps=30, replicas=5000, seed=2)
        worst = table.max_z()
        assert worst["diff"] < 4.0
        assert worst["diff2"] < 4.0

    def test_slln(self):
        """Running averages sit within 3 standard errors of 0.35 on 95% of paths."""
        result = slln_statistic(generic_scheme(0.3, 0.4), steps=100_000, paths=1000, seed=3)
        assert result.target == pytest.approx(0.35)
        assert result.coverage(3.0) >= 0.95


class TestStabilityBoundaries:
    """Empirical contraction factors against the closed-form regions."""

    def test_model_a_crossing(self):
        """ModelA (lambda=1, sigma=1) crosses 1 at h = 1."""
        grid = np.round(np.arange(0.7, 1.301, 0.05), 10)
        crossing = contraction_crossing(NoiseKind.MODEL_A, 1.0, 1.0, grid, replicas=5000, seed=4)
        assert crossing == pytest.approx(1.0, abs=0.05)

    @pytest.mark.parametrize("h", [0.1, 1.0, 5.0, 20.0])
    def test_model_c_unconditional(self, h):
        """ModelC (lambda=1, sigma=1) contracts for every step size."""
        estimate = l2_contraction_factor(make_scheme(NoiseKind.MODEL_C, 1.0, 1.0, h), replicas=2000, seed=5)
        assert estimate.value < 1.0


class TestCommonLimit:
    """Replicas of a stable ModelB run collapse to one point."""

    def test_model_b_consensus(self):
        """100/100 replicas reach diameter 1e-8 and their late means agree to 1e-6."""
        objective = builtin("sphere_plus_one", 5)
        config = RunConfig(beta=10.0, scheme=make_scheme(NoiseKind.MODEL_B, 1.0, 0.5, 0.2), seed=6)
        results = run_replicas(objective, InitialLaw.box(-1.0, 1.0, dim=5), config, 20, 100)
        assert all(r.consensus_reached for r in results)
        assert all(r.steps_taken <= 10_000 for r in results)
        assert max(cauchy_witness(r.trace) for r in results) <= 1e-6


# ============================================================================
# Laplace principle and certificates
# ============================================================================

class TestLaplaceResidual:
    """The first-order Laplace residual on the quadratic well."""

    def test_residual_bounded(self, well1):
        """beta |residual| shows no growth between beta = 25 and 400."""
        law = InitialLaw.box(0.0, 1.0, dim=1)
        scaled = [
            beta * abs(laplace_quadrature(well1, law, beta) - laplace_leading_term(well1, beta))
            for beta in (25.0, 50.0, 100.0, 200.0, 400.0)
        ]
        assert max(scaled) < 2.0 * scaled[0]

    def test_monte_carlo_agrees(self, well1):
        """10^6 samples agree with quadrature to 4 standard errors."""
        law = InitialLaw.box(0.0, 1.0, dim=1)
        estimate = laplace_estimate(well1, law, 50.0, samples=1_000_000, seed=7)
        assert abs(estimate.value - laplace_quadrature(well1, law, 50.0)) <= 4.0 * estimate.stderr


class TestCertificates:
    """End-to-end certificate scenarios on the quadratic well."""

    def test_beta_sweep(self, well1, model_a):
        """The Laplace certificate holds for small beta and fails at 625."""
        law = InitialLaw.box(0.45, 0.55, dim=1)
        results = [
            check_laplace_certificate(well1, law, model_a, beta, 0.5, 20, replicas=1000, samples=100_000)
            for beta in (1.0, 5.0, 25.0, 125.0, 625.0)
        ]
        assert any(r.holds for r in results)
        assert not results[-1].holds
        assert all(r.lhs <= 0.5 for r in results)
        ratios = [r.rhs / r.details["beta"] for r in results]
        assert max(ratios) == pytest.approx(min(ratios), rel=1e-12)

    def test_support_end_to_end(self, well1, model_a):
        """The support certificate holds and 200 replicas land below 1.056931."""
        law = InitialLaw.box(0.4, 0.6, dim=1)
        certificate = check_support_certificate(
            well1, law, model_a, beta=100.0, epsilon=0.5, delta=0.05, n_particles=1, replicas=200
        )
        assert certificate.holds
        report = empirical_error(
            well1, law, model_a, beta=100.0, n_particles=5, replicas=200, seed=8, epsilon=0.5, delta=0.05
        )
        assert report.reliable
        assert report.min_L_at_limit <= 1.0 + 0.05 + math.log(2.0) / 100.0

    def test_sphere_error(self, sphere2, model_c):
        """ModelC on sphere_plus_one ends within 0.25 of the minimum."""
        report = empirical_error(
            sphere2, InitialLaw.box(-1.0, 1.0, dim=2), model_c, beta=50.0, n_particles=50, replicas=200, seed=9
        )
        assert report.reliable
        assert report.min_L_at_limit - 1.0 <= 0.25

    def test_tiny_beta_still_collapses(self, sphere2, model_c):
        """Consensus does not depend on beta."""
        report = empirical_error(
            sphere2, InitialLaw.box(-1.0, 1.0, dim=2), model_c, beta=1e-6, n_particles=10, replicas=100, seed=10
        )
        assert report.failures == 0


class TestDeterminism:
    """Artifacts do not depend on the thread count."""

    def test_certify_artifacts(self, temp_dir):
        """certify writes identical bytes with 1 and 4 workers."""
        from discrete_cbo.config import build_config
        from discrete_cbo.tasks import run_task

        values = {
            "task": "certify", "objective": "quadratic_well", "dim": "1",
            "law_lower": "0.4", "law_upper": "0.6", "model": "ModelA",
            "lambda": "1", "sigma": "0.5", "h": "0.2", "beta": "100",
            "N": "5", "replicas": "100", "samples": "20000",
            "certificate": "support", "delta": "0.05", "seed": "12",
        }
        for workers, name in ((1, "one"), (4, "four")):
            config = build_config({**values, "out": str(temp_dir / name)})
            assert run_task(config, ReplicaExecutor(workers)).exit_code == 0
        for artifact in ("certificate.json", "certificate.csv", "limits.csv"):
            assert (temp_dir / "one" / artifact).read_bytes() == (temp_dir / "four" / artifact).read_bytes()
