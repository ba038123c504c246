"""
Task runners behind the CLI subcommands.

Each task reads an ExperimentConfig, writes its artifacts into config.out and
returns a TaskOutcome. Artifacts contain no timestamps or absolute paths, so the
same config and seed produce the same bytes whatever the worker count.
"""

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from .artifacts import read_json, read_matrix, write_csv, write_json, write_records
from .certificates import (
    check_laplace_certificate,
    check_support_certificate,
    empirical_error,
    laplace_asymptotic,
    laplace_estimate,
    laplace_leading_term,
    laplace_quadrature,
)
from .config import ExperimentConfig
from .dynamics import (
    RunTrace,
    StepRecord,
    cauchy_witness,
    mean_recursion_error,
    replay_check,
    replay_positions,
    run,
)
from .ensemble import Ensemble
from .errors import CBOError, UsageError
from .executor import ReplicaExecutor
from .laws import LawKind, initial_ensemble
from .noise import NoiseKind, make_scheme
from .objectives import validate_metadata
from .stability import (
    check_modelB_unconditional,
    check_stability,
    l2_contraction_factor,
    pairwise_moments,
    stability_boundary_modelA,
)

logger = logging.getLogger(__name__)

REPLAY_TOL = 1e-10


@dataclass
class TaskOutcome:
    """Exit status, headline values and the artifacts written."""
    exit_code: int
    summary: Dict[str, Any] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "success": self.exit_code == 0,
            "exit_code": self.exit_code,
            "summary": self.summary,
            "artifacts": list(self.artifacts),
        }


def _axis_names(prefix: str, dim: int) -> List[str]:
    return [f"{prefix}_{l + 1}" for l in range(dim)]


def run_task(config: ExperimentConfig, executor: Optional[ReplicaExecutor] = None) -> TaskOutcome:
    """
    Run config.task and write its artifacts plus config.json into config.out.

    Raises:
        CBOError: any module failure; the CLI maps it to an exit status
    """
    executor = executor or ReplicaExecutor()
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    logger.info(f"task {config.task} -> {out}")
    write_json(out / "config.json", config.to_dict())
    outcome = TASKS[config.task](config, out, executor)
    outcome.artifacts.insert(0, "config.json")
    return outcome


# =============================================================================
# run / verify-replay
# =============================================================================

def run_experiment(config: ExperimentConfig, out: Path, executor: ReplicaExecutor) -> TaskOutcome:
    objective = config.build_objective()
    run_config = config.run_config()
    initial = initial_ensemble(config.build_law(), config.n_particles, config.seed, replica=0)
    result = run(initial, objective, run_config)
    dim = config.dim

    summary = result.summary(objective)
    summary.update({
        "cauchy_witness": cauchy_witness(result.trace),
        "scheme": run_config.scheme.to_dict(),
        "stability": check_stability(run_config.scheme).to_dict(),
        "warnings": list(config.warnings),
    })
    write_json(out / "summary.json", summary)

    header = ["step", "diameter", "spread"] + _axis_names("mean", dim) + _axis_names("consensus", dim)
    rows = [
        [r.step, r.diameter, r.spread, *r.mean.tolist(), *r.consensus.tolist()]
        for r in result.trace.records
    ]
    write_csv(out / "trace.csv", header, rows)
    write_csv(
        out / "initial.csv",
        ["particle"] + _axis_names("x", dim),
        [[i, *p.tolist()] for i, p in enumerate(initial.positions)],
    )
    artifacts = ["summary.json", "trace.csv", "initial.csv"]
    if config.record_noise:
        write_csv(
            out / "noise.csv",
            ["step"] + _axis_names("eta", dim),
            [[n, *eta.tolist()] for n, eta in enumerate(result.trace.noise)],
        )
        artifacts.append("noise.csv")
    return TaskOutcome(0, summary, artifacts)


@dataclass(frozen=True)
class ReplayReport:
    """Outcome of replaying a recorded run from its artifacts."""
    max_abs_error: float
    relative_error: float
    trajectory_error: float
    mean_recursion_error: float
    steps: int
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "max_abs_error": self.max_abs_error,
            "relative_error": self.relative_error,
            "trajectory_error": self.trajectory_error,
            "mean_recursion_error": self.mean_recursion_error,
            "steps": self.steps,
            "passed": self.passed,
            "tolerance": REPLAY_TOL,
        }


def load_trace(out: Path, dim: int) -> RunTrace:
    """Rebuild a RunTrace from trace.csv and noise.csv."""
    if not (out / "noise.csv").exists():
        raise UsageError(
            f"{out} has no noise.csv",
            suggestions=["Re-run with --record-noise (or record_noise = true)"],
        )
    table = read_matrix(out / "trace.csv")
    noise = read_matrix(out / "noise.csv")
    if table.shape[0] != noise.shape[0] + 1 or table.shape[1] != 2 + 2 * dim:
        raise UsageError(f"trace.csv and noise.csv in {out} do not describe the same run")
    trace = RunTrace(noise_recorded=True)
    for n, row in enumerate(table):
        trace.append(StepRecord(
            step=n,
            consensus=row[2 + dim:],
            mean=row[2: 2 + dim],
            diameter=float(row[0]),
            spread=float(row[1]),
            eta=noise[n] if n < noise.shape[0] else None,
        ))
    return trace


def verify_replay(out: Path) -> ReplayReport:
    """
    Replay a recorded run from its artifact directory.

    max_abs_error is the largest deviation of simulated pairwise differences from
    their product form; relative_error divides it by the initial diameter. The
    replayed means must also reproduce the recorded ones.
    """
    config = ExperimentConfig.from_dict(read_json(out / "config.json"))
    objective = config.build_objective()
    run_config = config.run_config()
    initial = Ensemble(read_matrix(out / "initial.csv"))
    trace = load_trace(out, config.dim)

    error = replay_check(trace, initial, objective, run_config)
    diameter = trace.records[0].diameter
    relative = error / diameter if diameter > 0 else error
    replayed = replay_positions(trace, initial, objective, run_config)
    trajectory = max(
        float(np.max(np.abs(p.mean(axis=0) - r.mean))) for p, r in zip(replayed, trace.records)
    )
    recursion = mean_recursion_error(trace, run_config.scheme)
    scale = max(1.0, diameter)
    report = ReplayReport(
        max_abs_error=error,
        relative_error=relative,
        trajectory_error=trajectory,
        mean_recursion_error=recursion,
        steps=len(trace) - 1,
        passed=relative <= REPLAY_TOL and trajectory <= REPLAY_TOL * scale,
    )
    write_json(out / "replay.json", report.to_dict())
    return report


# =============================================================================
# stability / moments
# =============================================================================

def stability_grid(config: ExperimentConfig, out: Path, executor: ReplicaExecutor) -> TaskOutcome:
    kind = config.model_kind
    if kind is NoiseKind.GENERIC:
        raise UsageError("the stability grid needs model = ModelA, ModelB or ModelC")
    lambdas = np.linspace(config.grid_lambda[0], config.grid_lambda[1], config.grid_points)
    hs = np.linspace(config.grid_h[0], config.grid_h[1], config.grid_points)

    rows = []
    for lam in lambdas:
        for h in hs:
            scheme = make_scheme(kind, float(lam), config.sigma, float(h))
            report = check_stability(scheme)
            rows.append([
                float(lam), float(h), scheme.gamma, scheme.zeta, report.rate,
                report.mean_consensus, report.l2_consensus, report.boundary,
            ])
    write_csv(
        out / "stability.csv",
        ["lambda", "h", "gamma", "zeta", "rate", "mean_consensus", "l2_consensus", "boundary"],
        rows,
    )

    boundary_rows = []
    for lam in lambdas:
        h_max: Optional[float] = None
        if kind is NoiseKind.MODEL_A:
            h_max = stability_boundary_modelA(float(lam), config.sigma)
        boundary_rows.append([float(lam), h_max, check_modelB_unconditional(float(lam), config.sigma)])
    write_csv(out / "boundary.csv", ["lambda", "h_max", "unconditional"], boundary_rows)

    summary = {
        "model": kind.value,
        "sigma": config.sigma,
        "grid_points": config.grid_points,
        "stable_fraction": float(np.mean([r[6] for r in rows])),
        "config_point": check_stability(config.build_scheme()).to_dict(),
    }
    write_json(out / "stability.json", summary)
    return TaskOutcome(0, summary, ["stability.csv", "boundary.csv", "stability.json"])


def moment_table(config: ExperimentConfig, out: Path, executor: ReplicaExecutor) -> TaskOutcome:
    scheme = config.build_scheme()
    table = pairwise_moments(scheme, config.steps, config.replicas, config.seed, executor=executor)
    write_records(out / "moments.csv", table.rows())

    factor = l2_contraction_factor(scheme, config.replicas, config.seed, executor=executor)
    summary = {
        "scheme": scheme.to_dict(),
        "stability": check_stability(scheme).to_dict(),
        "replicas": config.replicas,
        "max_z": table.max_z(),
        "l2_contraction_factor": factor.to_dict(),
        "theory_l2_factor": scheme.l2_factor,
    }
    write_json(out / "moments.json", summary)
    return TaskOutcome(0, summary, ["moments.csv", "moments.json"])


# =============================================================================
# laplace / certify
# =============================================================================

def _optional(compute: Callable[[], float]) -> Optional[float]:
    try:
        return compute()
    except CBOError as e:
        logger.debug(f"skipped optional column: {e.message}")
        return None


def laplace_table(config: ExperimentConfig, out: Path, executor: ReplicaExecutor) -> TaskOutcome:
    objective = config.build_objective()
    law = config.build_law()
    betas = config.betas or (config.beta,)
    quadrature_available = config.dim == 1 and law.kind is LawKind.UNIFORM_BOX

    rows = []
    for beta in betas:
        estimate = laplace_estimate(objective, law, beta, config.samples, config.seed)
        leading = laplace_leading_term(objective, beta)
        quadrature = laplace_quadrature(objective, law, beta) if quadrature_available else None
        reference = quadrature if quadrature is not None else estimate.value
        rows.append({
            "beta": beta,
            "estimate": estimate.value,
            "stderr": estimate.stderr,
            "ess": estimate.ess,
            "quadrature": quadrature,
            "leading_term": leading,
            "residual": reference - leading,
            "scaled_residual": beta * (reference - leading),
            "asymptotic": _optional(lambda: laplace_asymptotic(objective, law, beta)),
        })
    write_records(out / "laplace.csv", rows)

    summary = {
        "objective": objective.metadata_dict(),
        "law": law.to_dict(),
        "samples": config.samples,
        "rows": rows,
        "concentrated": [r["beta"] for r in rows if r["ess"] < 10.0],
    }
    write_json(out / "laplace.json", summary)
    return TaskOutcome(0, summary, ["laplace.csv", "laplace.json"])


def certify(config: ExperimentConfig, out: Path, executor: ReplicaExecutor) -> TaskOutcome:
    objective = config.build_objective()
    law = config.build_law()
    scheme = config.build_scheme()
    validation = validate_metadata(objective, seed=config.seed)

    results = []
    for beta in config.betas or (config.beta,):
        if config.certificate == "laplace":
            result = check_laplace_certificate(
                objective, law, scheme, beta, config.epsilon, config.n_particles,
                config.replicas, config.seed, config.samples, executor,
            )
        else:
            assert config.delta is not None
            variant = "rectangle" if config.certificate == "rectangle" else "well_prepared"
            result = check_support_certificate(
                objective, law, scheme, beta, config.epsilon, config.delta, config.n_particles,
                config.replicas, config.seed, config.samples, variant, executor,
            )
        results.append(result)

    write_csv(
        out / "certificate.csv",
        ["beta", "holds", "lhs", "rhs", "margin", "bound_value", "normalization"],
        [
            [r.details["beta"], r.holds, r.lhs, r.rhs, r.margin, r.bound_value, r.normalization]
            for r in results
        ],
    )

    report = empirical_error(
        objective, law, scheme, config.beta, config.n_particles, config.replicas,
        run_config=config.run_config(), seed=config.seed,
        epsilon=config.epsilon, delta=config.delta, executor=executor,
    )
    write_csv(
        out / "limits.csv",
        ["replica", "objective_at_limit"],
        [[r, v] for r, v in enumerate(report.limit_values)],
    )
    summary = {
        "certificates": [r.to_dict() for r in results],
        "empirical": report.to_dict(),
        "metadata_validation": validation.to_dict(),
        "holds_any": any(r.holds for r in results),
        "warnings": list(config.warnings),
    }
    write_json(out / "certificate.json", summary)
    return TaskOutcome(0, summary, ["certificate.csv", "limits.csv", "certificate.json"])


# =============================================================================
# sweep
# =============================================================================

def _headline(task: str, summary: Dict[str, Any]) -> Dict[str, Any]:
    if task == "run":
        return {
            "consensus_reached": summary.get("consensus_reached"),
            "steps": summary.get("steps"),
            "objective_at_limit": summary.get("objective_at_limit"),
        }
    if task == "certify":
        first = summary["certificates"][0] if summary.get("certificates") else {}
        return {
            "holds": first.get("holds"),
            "margin": first.get("margin"),
            "min_L_at_limit": summary.get("empirical", {}).get("min_L_at_limit"),
        }
    rows = summary.get("rows") or [{}]
    return {"estimate": rows[0].get("estimate"), "stderr": rows[0].get("stderr")}


HEADLINE_KEYS = {
    "run": ["consensus_reached", "steps", "objective_at_limit"],
    "certify": ["holds", "margin", "min_L_at_limit"],
    "laplace": ["estimate", "stderr"],
}


def sweep(config: ExperimentConfig, out: Path, executor: ReplicaExecutor) -> TaskOutcome:
    """One artifact directory per point of the Cartesian product of the sweep_* lists."""
    grid = config.sweep_grid()
    keys = list(grid)
    points = list(itertools.product(*(grid[k] for k in keys)))
    logger.info(f"sweep over {', '.join(keys)}: {len(points)} points")

    entries = []
    failures = 0
    for index, values in enumerate(points):
        directory = f"point_{index:04d}"
        entry: Dict[str, Any] = {"index": index, "directory": directory}
        entry.update(dict(zip(keys, values)))
        try:
            point = config.updated({
                **dict(zip(keys, values)),
                "task": config.sweep_task,
                "out": str(out / directory),
            })
            outcome = run_task(point, executor)
            entry["exit_code"] = outcome.exit_code
            entry.update(_headline(config.sweep_task, outcome.summary))
            entry["error"] = None
        except CBOError as e:
            logger.warning(f"sweep point {index} failed: {e.message}")
            failures += 1
            entry["exit_code"] = 1
            entry.update({k: None for k in HEADLINE_KEYS[config.sweep_task]})
            entry["error"] = e.message
        entries.append(entry)

    write_records(out / "manifest.csv", entries)
    summary = {"axes": {k: list(v) for k, v in grid.items()}, "points": entries, "failures": failures}
    write_json(out / "manifest.json", summary)
    return TaskOutcome(1 if failures else 0, summary, ["manifest.csv", "manifest.json"])


TASKS: Dict[str, Callable[[ExperimentConfig, Path, ReplicaExecutor], TaskOutcome]] = {
    "run": run_experiment,
    "stability": stability_grid,
    "moments": moment_table,
    "laplace": laplace_table,
    "certify": certify,
    "sweep": sweep,
}
