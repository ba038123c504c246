"""
Unit tests for the update rule, the run loop and the replay checks.
"""

import math

import numpy as np
import pytest

from discrete_cbo.dynamics import (
    RunConfig,
    cauchy_witness,
    consensus_distance_margin,
    mean_deviation_error,
    mean_recursion_error,
    native_step,
    replay_check,
    replay_positions,
    run,
    step,
)
from discrete_cbo.ensemble import Ensemble, gibbs_consensus
from discrete_cbo.errors import DynamicsError, ParameterError, UsageError
from discrete_cbo.laws import InitialLaw, initial_ensemble
from discrete_cbo.noise import NoiseStream, generic_scheme
from discrete_cbo.objectives import Objective


class FixedStream:
    """Stands in for a NoiseStream with a constant eta."""

    def __init__(self, value: float):
        self.value = value

    def eta(self, scheme, n, dim):
        return np.full(dim, self.value)


def square() -> Objective:
    return Objective("square", 1, lambda p: np.sum(p * p, axis=1))


@pytest.fixture
def recorded_run(sphere2, model_c):
    """A ModelC run on sphere_plus_one with recorded noise."""
    initial = initial_ensemble(InitialLaw.box(-1.0, 1.0, dim=2), 10, seed=3, replica=0)
    config = RunConfig(beta=50.0, scheme=model_c, max_steps=150, record_noise=True, seed=3)
    return initial, config, run(initial, sphere2, config)


class TestStep:
    """Tests for step() and native_step()."""

    def test_hand_computed_update(self):
        """One update with gamma=0.5 and eta_0=0.1 moves both particles 60% toward the consensus."""
        ensemble = Ensemble(np.array([[0.0], [2.0]]))
        config = RunConfig(beta=0.25, scheme=generic_scheme(0.5, 0.0))
        nxt = step(ensemble, square(), config, FixedStream(0.1))
        assert nxt.positions[0, 0] == pytest.approx(0.322730, abs=1e-6)
        assert nxt.positions[1, 0] == pytest.approx(1.122730, abs=1e-6)
        assert nxt.step == 1

    def test_difference_scales_by_shared_factor(self, small_ensemble, sphere2, generic):
        """x^i - x^j is multiplied by 1 - gamma - eta_n in every dimension."""
        stream = NoiseStream(4, 0)
        config = RunConfig(beta=2.0, scheme=generic)
        nxt = step(small_ensemble, sphere2, config, stream)
        factor = 1.0 - generic.gamma - stream.eta(generic, 0, 2)
        before = small_ensemble.positions[0] - small_ensemble.positions[3]
        after = nxt.positions[0] - nxt.positions[3]
        np.testing.assert_allclose(after, before * factor, rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize("fixture", ["model_a", "model_b"])
    def test_native_matches_reduction(self, fixture, request, small_ensemble, sphere2):
        """ModelA and ModelB native steps equal the (gamma, eta) update for the same stream."""
        scheme = request.getfixturevalue(fixture)
        config = RunConfig(beta=3.0, scheme=scheme, seed=9)
        ensemble = small_ensemble
        native = small_ensemble
        for _ in range(5):
            ensemble = step(ensemble, sphere2, config, NoiseStream(9, 0))
            native = native_step(native, sphere2, config, NoiseStream(9, 0))
        np.testing.assert_allclose(native.positions, ensemble.positions, rtol=1e-10, atol=1e-12)

    def test_native_model_c_uses_mirrored_noise(self, small_ensemble, sphere2, model_c):
        """The exponential ModelC step equals the reduced update with -eta."""
        config = RunConfig(beta=3.0, scheme=model_c, seed=2)
        stream = NoiseStream(2, 0)
        target = gibbs_consensus(small_ensemble, sphere2, 3.0).point
        eta = stream.eta(model_c, 0, 2)
        expected = target + (small_ensemble.positions - target) * (1.0 - model_c.gamma + eta)
        native = native_step(small_ensemble, sphere2, config, stream)
        np.testing.assert_allclose(native.positions, expected, rtol=1e-12, atol=1e-14)

    def test_native_generic_falls_back(self, small_ensemble, sphere2, generic):
        """Generic schemes have no native form."""
        config = RunConfig(beta=1.0, scheme=generic)
        a = native_step(small_ensemble, sphere2, config, NoiseStream(0))
        b = step(small_ensemble, sphere2, config, NoiseStream(0))
        np.testing.assert_array_equal(a.positions, b.positions)

    def test_permutation_commutes(self, small_ensemble, sphere2, model_c):
        """Relabelling the particles before a step equals relabelling after it."""
        config = RunConfig(beta=4.0, scheme=model_c, seed=6)
        order = [3, 0, 4, 1, 2]
        before = step(small_ensemble.permuted(order), sphere2, config, NoiseStream(6, 0))
        after = step(small_ensemble, sphere2, config, NoiseStream(6, 0)).permuted(order)
        np.testing.assert_allclose(before.positions, after.positions, rtol=1e-12, atol=1e-12)
        assert before.step == after.step == 1


class TestRun:
    """Tests for run()."""

    def test_full_drift_collapses_in_one_step(self, small_ensemble, sphere2):
        """gamma=1 without noise sends every particle to the consensus point."""
        config = RunConfig(beta=1.0, scheme=generic_scheme(1.0, 0.0))
        result = run(small_ensemble, sphere2, config)
        assert result.consensus_reached
        assert result.steps_taken == 1
        assert result.trace.records[-1].diameter == 0.0

    def test_step_limit(self, small_ensemble, sphere2):
        """gamma=0 without noise never moves and stops at max_steps."""
        config = RunConfig(beta=1.0, scheme=generic_scheme(0.0, 0.0), max_steps=7)
        result = run(small_ensemble, sphere2, config)
        assert not result.consensus_reached
        assert result.steps_taken == 7
        assert len(result.trace) == 8
        np.testing.assert_array_equal(result.final.positions, small_ensemble.positions)

    def test_deterministic(self, small_ensemble, sphere2, model_c):
        """The same seed and replica give bit-identical runs."""
        config = RunConfig(beta=10.0, scheme=model_c, max_steps=100, seed=12)
        a = run(small_ensemble, sphere2, config, replica=4)
        b = run(small_ensemble, sphere2, config, replica=4)
        np.testing.assert_array_equal(a.final.positions, b.final.positions)
        assert a.steps_taken == b.steps_taken

    def test_single_particle(self, sphere2, model_c):
        """N=1 has diameter 0 and stops immediately."""
        result = run(Ensemble(np.array([[0.2, 0.3]])), sphere2, RunConfig(beta=1.0, scheme=model_c))
        assert result.consensus_reached
        assert result.steps_taken == 0
        np.testing.assert_array_equal(result.limit_point, [0.2, 0.3])

    def test_summary(self, recorded_run, sphere2):
        """The summary carries the limit and its objective value."""
        _, _, result = recorded_run
        summary = result.summary(sphere2)
        assert summary["steps"] == result.steps_taken
        assert summary["objective_at_limit"] == pytest.approx(sphere2.evaluate(result.limit_point))
        assert len(summary["limit_point"]) == 2

    def test_objective_failure_reports_step(self, model_c):
        """A NaN objective during the run raises DynamicsError with the step."""
        objective = Objective("bad", 1, lambda p: np.where(np.abs(p[:, 0]) < 10.0, p[:, 0] ** 2, np.nan))
        initial = Ensemble(np.array([[0.0], [20.0]]))
        with pytest.raises(DynamicsError) as exc:
            run(initial, objective, RunConfig(beta=1.0, scheme=model_c))
        assert exc.value.step == 0

    @pytest.mark.parametrize("kwargs", [{"beta": 0.0}, {"beta": 1.0, "max_steps": 0}, {"beta": 1.0, "consensus_tol": 0.0}])
    def test_invalid_config(self, kwargs, generic):
        """RunConfig validates its fields."""
        with pytest.raises(ParameterError):
            RunConfig(scheme=generic, **kwargs)

    @pytest.mark.slow
    def test_contracting_factor_reaches_consensus(self, sphere2):
        """(1-gamma)^2 + zeta^2 = 0.81 reaches consensus from diameter 1 on every replica."""
        scheme = generic_scheme(0.2, math.sqrt(0.17))
        assert scheme.l2_factor == pytest.approx(0.81)
        initial = Ensemble(np.array([[0.0, 0.0], [1.0, 0.0]]))
        config = RunConfig(beta=10.0, scheme=scheme, max_steps=2000, consensus_tol=1e-8, seed=21)
        for replica in range(100):
            assert run(initial, sphere2, config, replica=replica).consensus_reached

    @pytest.mark.slow
    def test_expanding_factor_diverges(self, sphere2):
        """(1-gamma)^2 + zeta^2 = 1.21 never reaches consensus and the median diameter grows."""
        scheme = generic_scheme(-0.09, math.sqrt(0.0219))
        assert scheme.l2_factor == pytest.approx(1.21)
        initial = Ensemble(np.array([[0.0, 0.0], [1.0, 0.0]]))
        config = RunConfig(beta=10.0, scheme=scheme, max_steps=500, consensus_tol=1e-8, seed=22)
        results = [run(initial, sphere2, config, replica=replica) for replica in range(100)]
        assert not any(r.consensus_reached for r in results)
        assert np.median([r.trace.records[-1].diameter for r in results]) > 1.0


class TestReplay:
    """Tests for the replay identities on recorded runs."""

    def test_noise_required(self, small_ensemble, sphere2, model_c):
        """A trace without recorded noise cannot be replayed."""
        result = run(small_ensemble, sphere2, RunConfig(beta=1.0, scheme=model_c, max_steps=5))
        with pytest.raises(UsageError):
            result.trace.noise

    def test_replay_reproduces_run(self, recorded_run, sphere2):
        """Replaying the recorded noise reproduces the final ensemble."""
        initial, config, result = recorded_run
        replayed = replay_positions(result.trace, initial, sphere2, config)
        assert len(replayed) == result.steps_taken + 1
        np.testing.assert_allclose(replayed[-1], result.final.positions, rtol=0, atol=1e-12)

    def test_pairwise_closed_form(self, recorded_run, sphere2):
        """Pairwise differences follow the product of shared factors."""
        initial, config, result = recorded_run
        assert replay_check(result.trace, initial, sphere2, config) <= 1e-10

    def test_mean_deviation_identity(self, recorded_run, sphere2):
        """Squared deviations from the mean follow the same products."""
        initial, config, result = recorded_run
        assert mean_deviation_error(result.trace, initial, sphere2, config) <= 1e-10

    def test_consensus_distance_bound(self, recorded_run, sphere2):
        """Mean squared distance to the consensus stays under its bound."""
        initial, config, result = recorded_run
        assert consensus_distance_margin(result.trace, initial, sphere2, config) >= -1e-12

    def test_mean_recursion(self, recorded_run, model_c):
        """Successive means satisfy the mean recursion."""
        _, _, result = recorded_run
        assert mean_recursion_error(result.trace, model_c) <= 1e-10

    def test_cauchy_witness(self, recorded_run):
        """Late means of a ModelC run are close together."""
        _, _, result = recorded_run
        witness = cauchy_witness(result.trace)
        assert 0.0 <= witness < 1e-2
        assert math.isfinite(witness)
