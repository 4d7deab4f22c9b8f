"""Subcommand handlers.

Each handler receives a RunContext, computes its results and writes artifacts
through ``ctx.write_json`` / ``ctx.write_csv`` / ``ctx.write_text`` so that a
failed run can remove exactly what it wrote.
"""

import logging
import platform
import shutil
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np
import pandas as pd

from cli.config_schema import RunConfig
from config.settings import Settings
from problems.base import FiniteList, ProblemSpec
from problems.objective import PopulationObjective, branch_constants, sample_dataset
from problems.polynomial import PolynomialOracle
from services import reports
from services.exceptions import ConfigError, ConvergenceError, MinimaxError
from services.limitdist import (
    draw_solution_limit,
    sample_value_limit,
    sigma_solution,
    sigma_value,
    solution_limit_model,
    value_limit_model,
)
from services.montecarlo import validate
from services.reduction import ReductionConfig, build_reduction, value_dirderiv_formula
from services.rng import mix
from services.solver import SolveStatus, SolverConfig, solve_population, solve_sample, value_dirderiv_fd

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2

QUANTILE_LEVELS = (0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975, 0.99)
PACKAGES = ("numpy", "scipy", "pandas", "pydantic", "pydantic-settings")


@dataclass
class RunContext:
    config: RunConfig
    command: str
    problem: ProblemSpec
    settings: Settings
    out: Path
    threads: int
    written: list[Path] = field(default_factory=list)

    @property
    def solver_config(self) -> SolverConfig:
        return SolverConfig.from_settings(self.settings)

    @property
    def reduction_config(self) -> ReductionConfig:
        return ReductionConfig.from_settings(self.settings)

    def population_objective(self) -> PopulationObjective:
        return PopulationObjective(
            self.problem,
            self.settings.population_fallback_n,
            self.settings.population_fallback_seed,
        )

    def wants_text(self) -> bool:
        return "text" in self.config.formats

    def _record(self, path: Path) -> Path:
        self.written.append(path)
        return path

    def write_json(self, name: str, obj) -> Path:
        return self._record(reports.write_json(self.out / name, obj))

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        return self._record(reports.write_csv(frame, self.out / name))

    def write_text(self, name: str, text: str) -> Path:
        path = self.out / name
        path.write_text(text + "\n", encoding="utf-8")
        return self._record(path)


# =========================================================================
# Handlers
# =========================================================================


def handle_solve(ctx: RunContext) -> None:
    config = ctx.config
    result = {}
    if config.population:
        objective = ctx.population_objective()
        result["population"] = solve_population(ctx.problem, ctx.solver_config, objective).to_dict()
    if config.sample:
        dataset = sample_dataset(ctx.problem, config.N, config.seed)
        result["sample"] = solve_sample(ctx.problem, dataset, ctx.solver_config).to_dict()
        result["sample"]["N"] = config.N
        result["sample"]["seed"] = config.seed
    stalled = [key for key, solved in result.items() if solved["status"] == SolveStatus.MAX_ITER.value]
    if stalled:
        raise ConvergenceError(f"{' and '.join(stalled)} solve ended with status max_iter")
    if config.sample:
        ctx.write_csv("dataset.csv", dataset.to_frame())
    ctx.write_json("solution.json", result)
    if ctx.wants_text():
        text = "\n\n".join(
            reports.format_solution(result[key], key.capitalize()) for key in ("population", "sample") if key in result
        )
        ctx.write_text("solution.txt", text)


def _reduction(ctx: RunContext):
    return build_reduction(
        ctx.problem,
        config=ctx.reduction_config,
        solver_config=ctx.solver_config,
        objective=ctx.population_objective(),
    )


def handle_reduce(ctx: RunContext) -> None:
    reduction = _reduction(ctx)
    data = reduction.to_dict()
    ctx.write_json("reduction.json", data)
    if ctx.wants_text():
        ctx.write_text("certificates.txt", reports.format_certificates(data["certificates"]))


def _quantiles(draws: np.ndarray, names: list[str]) -> dict:
    draws = np.asarray(draws, dtype=float).reshape(len(draws), -1)
    return {
        name: {str(q): float(np.quantile(draws[:, j], q)) for q in QUANTILE_LEVELS}
        for j, name in enumerate(names)
    }


def handle_limit(ctx: RunContext) -> None:
    config = ctx.config
    reduction = _reduction(ctx)
    dataset = sample_dataset(ctx.problem, config.N, config.seed) if config.sigma_source == "plugin" else None
    result = {"solution": None}

    if reduction.index_sets is not None:
        sigma = sigma_solution(
            ctx.problem,
            reduction,
            config.sigma_source,
            dataset,
            response_correction=config.response_correction,
        )
        model = solution_limit_model(reduction, sigma)
        draws = draw_solution_limit(model, config.S, config.limit_seed)
        result["solution"] = model.to_dict()
        result["solution"]["quantiles"] = _quantiles(draws, [f"eta{i + 1}" for i in range(reduction.n)])
        ctx.write_csv("solution-draws.csv", reports.solution_draws_frame(draws))
    else:
        logger.warning("Multipliers are not unique at γ*: only the value limit is sampled")

    cov = sigma_value(ctx.problem, [reduction], config.sigma_source, dataset)
    vmodel = value_limit_model([reduction], cov)
    value_draws = sample_value_limit(vmodel, config.S, mix(config.limit_seed, 1))
    result["value"] = vmodel.to_dict()
    result["value"]["quantiles"] = _quantiles(value_draws, ["value"])
    ctx.write_csv("value-draws.csv", reports.value_draws_frame(value_draws))
    ctx.write_json("limit.json", result)
    if ctx.wants_text() and result["solution"] is not None:
        ctx.write_text("limit.txt", reports.format_limit_model(result["solution"]))


def _eta_oracle(ctx: RunContext):
    eta = ctx.config.eta
    problem = ctx.problem
    if eta is None:
        raise ConfigError("value-deriv needs an 'eta' perturbation", ["/eta"])
    if eta.values is not None:
        if not isinstance(problem.xi_set, FiniteList):
            raise ConfigError("'eta.values' needs a finite Ξ; use 'eta.tables'", ["/eta/values"])
        if len(eta.values) != problem.xi_set.size:
            raise ConfigError(
                f"'eta.values' needs {problem.xi_set.size} entries, got {len(eta.values)}",
                ["/eta/values"],
            )
        return branch_constants(problem.n, eta.values)
    m = 0 if isinstance(problem.xi_set, FiniteList) else problem.m
    try:
        return PolynomialOracle.from_tables(problem.n, m, 0, eta.tables)
    except (MinimaxError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid 'eta.tables': {exc}", ["/eta/tables"]) from exc


def handle_value_deriv(ctx: RunContext) -> None:
    eta = _eta_oracle(ctx)
    t_grid = ctx.config.t_grid or ctx.settings.t_grid
    fd = value_dirderiv_fd(ctx.problem, eta, t_grid, ctx.solver_config).to_dict()
    stalled = [row["t"] for row in fd["table"] if row["status"] != SolveStatus.CONVERGED.value]
    if stalled:
        raise ConvergenceError(f"perturbed solves did not converge at t={stalled}")
    formula = value_dirderiv_formula(
        ctx.problem, None, eta, ctx.reduction_config, ctx.solver_config
    ).to_dict()
    ctx.write_json("value-deriv.json", {"finite_difference": fd, "formula": formula})
    if ctx.wants_text():
        ctx.write_text("value-deriv.txt", reports.format_value_derivative(fd, formula))


def handle_validate(ctx: RunContext) -> None:
    config = ctx.config
    report = validate(
        ctx.problem,
        config.N,
        config.R,
        config.S,
        config.seed,
        config.limit_seed,
        threads=ctx.threads,
        solver_config=ctx.solver_config,
        settings=ctx.settings,
    )
    ctx.write_csv("replications.csv", report.replications.to_frame())
    data = report.to_dict()
    ctx.write_json("report.json", data)
    if ctx.wants_text():
        ctx.write_text("report.txt", reports.format_validation(data))


def handle_report(ctx: RunContext) -> None:
    text = reports.render_directory(ctx.out.parent)
    if not text:
        raise ConfigError(f"no artifacts to report in {ctx.out.parent}", ["/out"])
    ctx.write_text("summary.txt", text)
    print(text)


HANDLERS = {
    "solve": handle_solve,
    "reduce": handle_reduce,
    "limit": handle_limit,
    "value-deriv": handle_value_deriv,
    "validate": handle_validate,
    "report": handle_report,
}


# =========================================================================
# Dispatch
# =========================================================================


def _versions() -> dict:
    versions = {"python": platform.python_version()}
    for package in PACKAGES:
        try:
            versions[package] = version(package)
        except PackageNotFoundError:
            versions[package] = None
    return versions


def _prepare_directory(out: Path, force: bool) -> None:
    if out.exists() and any(out.iterdir()):
        if not force:
            raise ConfigError(f"output directory {out} is not empty (use --force)", ["/out"])
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)


def run_command(
    config: RunConfig,
    command: str | None = None,
    out: str | Path | None = None,
    threads: int | None = None,
    force: bool = False,
) -> int:
    """Run one subcommand; returns the process exit code (0, 1 or 2)."""
    started = datetime.now(timezone.utc)
    try:
        command = command or config.command
        if command is None:
            raise ConfigError("no command given", ["/command"])
        out = out or config.out
        if out is None:
            raise ConfigError("no output directory given", ["/out"])
        config = config.model_copy(update={"command": command, "out": str(out)})
        settings = config.effective_settings()
        base = Path(out)
        # report renders an earlier run and writes into its own subdirectory
        run_dir = base / "report" if command == "report" else base
        if command == "report" and not base.is_dir():
            raise ConfigError(f"no run directory {base}", ["/out"])
        _prepare_directory(run_dir, force or command == "report")
        ctx = RunContext(
            config=config,
            command=command,
            problem=config.resolve(),
            settings=settings,
            out=run_dir,
            threads=threads or settings.threads,
        )
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG

    reports.write_json(run_dir / "effective-config.json", config.materialized())
    runlog = {
        "command": command,
        "problem": ctx.problem.name,
        "seed": config.seed,
        "limit_seed": config.limit_seed,
        "threads": ctx.threads,
        "argv": sys.argv,
        "versions": _versions(),
        "started": started.isoformat(),
    }
    logger.info("Running %s on %s into %s", command, ctx.problem.name, run_dir)
    code = EXIT_NUMERICAL
    try:
        HANDLERS[command](ctx)
        code = EXIT_OK
    except ConfigError as exc:
        logger.error("%s", exc)
        runlog["error"] = str(exc)
        code = EXIT_CONFIG
    except (MinimaxError, np.linalg.LinAlgError) as exc:
        logger.error("%s failed: %s", command, exc)
        runlog["error"] = f"{type(exc).__name__}: {exc}"
    except Exception as exc:
        logger.exception("%s crashed", command)
        runlog["error"] = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        # Any failure, including an unexpected exception, leaves only the logs
        if code != EXIT_OK:
            for path in ctx.written:
                path.unlink(missing_ok=True)
            ctx.written.clear()
        runlog["status"] = "ok" if code == EXIT_OK else "failed"
        runlog["exit_code"] = code
        runlog["artifacts"] = sorted(p.name for p in ctx.written)
        runlog["finished"] = datetime.now(timezone.utc).isoformat()
        reports.write_json(run_dir / "runlog.json", runlog)
    return code
