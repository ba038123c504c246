"""
Unit tests for the replica executor.
"""

import pytest

from discrete_cbo.errors import ParameterError
from discrete_cbo.executor import WORKERS_ENV, ReplicaExecutor, default_workers


class TestReplicaExecutor:
    """Tests for ReplicaExecutor."""

    def test_order_preserved(self):
        """Results come back in replica order."""
        executor = ReplicaExecutor(4)
        assert executor.map(lambda r: r * r, range(20)) == [r * r for r in range(20)]

    def test_same_results_any_worker_count(self):
        """Per-replica streams make results independent of threads."""
        from discrete_cbo.noise import NoiseStream

        def draw(replica):
            return NoiseStream(17, replica).normals(0, 5, 2).tolist()

        assert ReplicaExecutor(1).map(draw, range(8)) == ReplicaExecutor(3).map(draw, range(8))

    def test_invalid_workers(self):
        """At least one worker."""
        with pytest.raises(ParameterError):
            ReplicaExecutor(0)

    def test_default_from_env(self, monkeypatch):
        """DISCRETE_CBO_WORKERS sets the default."""
        monkeypatch.setenv(WORKERS_ENV, "3")
        assert default_workers() == 3
        assert ReplicaExecutor().max_workers == 3

    def test_bad_env_ignored(self, monkeypatch):
        """A non-integer value falls back to one worker."""
        monkeypatch.setenv(WORKERS_ENV, "many")
        assert default_workers() == 1

    def test_unset_env(self, monkeypatch):
        """No variable means one worker."""
        monkeypatch.delenv(WORKERS_ENV, raising=False)
        assert default_workers() == 1
