"""
Unit tests for the CLI and the task runners behind it.
"""

import json

import pytest

from discrete_cbo.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main


def run_cli(capsys, *argv):
    """Run main() and return (exit code, stdout JSON)."""
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out)


@pytest.fixture
def well_args(temp_dir):
    """Flags for a one-dimensional quadratic_well on [0.4, 0.6] with a stable ModelA scheme."""
    return [
        "--objective", "quadratic_well", "--dim", "1", "--model", "ModelA",
        "--lambda", "1", "--sigma", "0.5", "--h", "0.2",
        "--set", "law_lower=0.4", "--set", "law_upper=0.6",
    ]


class TestRunCommand:
    """Tests for `run` and `verify-replay`."""

    def test_run_writes_artifacts(self, capsys, config_file, temp_dir):
        """A run prints one JSON object and writes its tables."""
        code, payload = run_cli(capsys, "run", "--config", str(config_file))
        assert code == EXIT_OK
        assert payload["success"] is True
        assert payload["schema_version"] == 1
        assert payload["summary"]["consensus_reached"] is True
        out = temp_dir / "out"
        for name in ("config.json", "summary.json", "trace.csv", "initial.csv"):
            assert (out / name).exists()
        assert not (out / "noise.csv").exists()
        assert (out / "trace.csv").read_text().startswith("# schema_version: 1\nstep,diameter,spread,mean_1,mean_2,")

    def test_run_and_verify(self, capsys, config_file, temp_dir):
        """--verify-replay records noise and checks the replay."""
        code, payload = run_cli(capsys, "run", "--config", str(config_file), "--verify-replay")
        assert code == EXIT_OK
        assert payload["replay"]["passed"] is True
        assert payload["replay"]["max_abs_error"] <= 1e-10
        assert (temp_dir / "out" / "noise.csv").exists()
        assert (temp_dir / "out" / "replay.json").exists()

    def test_standalone_verify(self, capsys, config_file, temp_dir):
        """verify-replay reads a recorded run from its directory."""
        assert main(["run", "--config", str(config_file), "--record-noise"]) == EXIT_OK
        capsys.readouterr()
        code, payload = run_cli(capsys, "verify-replay", "--out", str(temp_dir / "out"))
        assert code == EXIT_OK
        assert payload["passed"] is True
        assert payload["steps"] > 0

    def test_verify_without_noise(self, capsys, config_file, temp_dir):
        """Replaying a run without noise.csv is a usage error with error.json."""
        assert main(["run", "--config", str(config_file)]) == EXIT_OK
        capsys.readouterr()
        code, payload = run_cli(capsys, "verify-replay", "--out", str(temp_dir / "out"))
        assert code == EXIT_USAGE
        assert payload["success"] is False
        assert payload["error_type"] == "usage"
        assert (temp_dir / "out" / "error.json").exists()

    def test_same_seed_same_bytes(self, capsys, config_file, temp_dir):
        """Two runs with the same seed write identical traces."""
        main(["run", "--config", str(config_file), "--out", str(temp_dir / "a")])
        main(["run", "--config", str(config_file), "--out", str(temp_dir / "b")])
        capsys.readouterr()
        assert (temp_dir / "a" / "trace.csv").read_bytes() == (temp_dir / "b" / "trace.csv").read_bytes()

    def test_model_a_warning_in_summary(self, capsys, temp_dir, well_args):
        """An out-of-region ModelA step is run but flagged."""
        code, payload = run_cli(
            capsys, "run", *well_args, "--h", "1.9", "--N", "5", "--max-steps", "5",
            "--out", str(temp_dir / "warn"),
        )
        assert code == EXIT_OK
        assert any("stable region" in w for w in payload["summary"]["warnings"])


class TestErrors:
    """Tests for error reporting."""

    def test_unknown_set_key(self, capsys, temp_dir):
        """Unknown keys exit 2 with a config error record."""
        code, payload = run_cli(capsys, "run", "--set", "betta=3", "--out", str(temp_dir / "x"))
        assert code == EXIT_USAGE
        assert payload["error_type"] == "config"
        assert "Did you mean 'beta'?" in payload["suggestions"]

    def test_invalid_value(self, capsys, temp_dir):
        """Out-of-range values exit 2."""
        code, payload = run_cli(capsys, "run", "--beta", "-1", "--out", str(temp_dir / "x"))
        assert code == EXIT_USAGE
        assert payload["field"] == "beta"

    def test_generic_stability_grid(self, capsys, temp_dir):
        """The stability grid needs a concrete model."""
        code, payload = run_cli(
            capsys, "stability", "--model", "GenericGaussian", "--gamma", "0.5", "--zeta", "0.5",
            "--out", str(temp_dir / "g"),
        )
        assert code == EXIT_USAGE
        assert (temp_dir / "g" / "error.json").exists()

    def test_version(self, capsys):
        """--version prints the package version."""
        from discrete_cbo import __version__

        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert __version__ in capsys.readouterr().out


class TestTasks:
    """Tests for the analysis subcommands."""

    def test_stability(self, capsys, temp_dir):
        """The grid has grid_points^2 rows and a boundary table."""
        from discrete_cbo.artifacts import read_csv

        code, payload = run_cli(
            capsys, "stability", "--model", "ModelA", "--sigma", "1", "--h", "0.5",
            "--set", "grid_points=5", "--out", str(temp_dir / "s"),
        )
        assert code == EXIT_OK
        header, rows = read_csv(temp_dir / "s" / "stability.csv")
        assert len(rows) == 25
        assert header[:3] == ["lambda", "h", "gamma"]
        _, boundary = read_csv(temp_dir / "s" / "boundary.csv")
        assert len(boundary) == 5
        assert payload["summary"]["config_point"]["rate"] == pytest.approx(0.25)

    def test_moments_worker_independent(self, capsys, temp_dir):
        """Moment tables do not depend on the worker count."""
        args = ["moments", "--model", "ModelB", "--lambda", "1", "--sigma", "0.5", "--h", "0.2",
                "--replicas", "50", "--steps", "6", "--seed", "11"]
        assert main(args + ["--workers", "1", "--out", str(temp_dir / "m1")]) == EXIT_OK
        assert main(args + ["--workers", "4", "--out", str(temp_dir / "m4")]) == EXIT_OK
        capsys.readouterr()
        assert (temp_dir / "m1" / "moments.csv").read_bytes() == (temp_dir / "m4" / "moments.csv").read_bytes()
        assert (temp_dir / "m1" / "moments.json").read_bytes() == (temp_dir / "m4" / "moments.json").read_bytes()

    def test_laplace(self, capsys, temp_dir, well_args):
        """One-dimensional box laws get a quadrature column."""
        from discrete_cbo.artifacts import read_csv

        code, payload = run_cli(
            capsys, "laplace", *well_args, "--betas", "10,50", "--samples", "5000",
            "--out", str(temp_dir / "l"),
        )
        assert code == EXIT_OK
        header, rows = read_csv(temp_dir / "l" / "laplace.csv")
        assert len(rows) == 2
        quadrature = rows[0][header.index("quadrature")]
        assert quadrature != ""
        assert float(quadrature) > 1.0

    def test_certify_support(self, capsys, temp_dir, well_args):
        """A single particle on [0.4, 0.6] certifies beta = 100."""
        code, payload = run_cli(
            capsys, "certify", *well_args, "--certificate", "support", "--delta", "0.05",
            "--epsilon", "0.5", "--beta", "100", "--N", "1", "--replicas", "100",
            "--samples", "5000", "--out", str(temp_dir / "c"),
        )
        assert code == EXIT_OK
        summary = payload["summary"]
        assert summary["holds_any"] is True
        assert summary["certificates"][0]["bound_value"] == pytest.approx(0.056931, abs=1e-6)
        assert summary["empirical"]["min_L_at_limit"] <= 1.056931
        assert (temp_dir / "c" / "limits.csv").exists()

    def test_certify_failure_exits_zero(self, capsys, temp_dir, well_args):
        """A certificate that does not hold is a result, not an error."""
        code, payload = run_cli(
            capsys, "certify", *well_args, "--certificate", "laplace", "--beta", "625", "--N", "20",
            "--replicas", "100", "--samples", "5000", "--out", str(temp_dir / "f"),
        )
        assert code == EXIT_OK
        assert payload["summary"]["holds_any"] is False

    def test_sweep(self, capsys, temp_dir, well_args):
        """A sweep writes one directory per point and a manifest."""
        from discrete_cbo.artifacts import read_csv

        code, payload = run_cli(
            capsys, "sweep", *well_args, "--N", "5", "--set", "sweep_beta=1,10",
            "--set", "sweep_task=run", "--out", str(temp_dir / "w"),
        )
        assert code == EXIT_OK
        assert payload["summary"]["failures"] == 0
        header, rows = read_csv(temp_dir / "w" / "manifest.csv")
        assert len(rows) == 2
        assert header[:3] == ["index", "directory", "beta"]
        assert (temp_dir / "w" / "point_0001" / "trace.csv").exists()

    def test_sweep_failed_point(self, capsys, temp_dir, well_args):
        """An invalid point is recorded and the sweep exits 1."""
        code, payload = run_cli(
            capsys, "sweep", *well_args, "--N", "3", "--set", "sweep_h=0.1,-1",
            "--out", str(temp_dir / "bad"),
        )
        assert code == EXIT_FAILURE
        points = payload["summary"]["points"]
        assert points[0]["error"] is None
        assert points[1]["error"]
