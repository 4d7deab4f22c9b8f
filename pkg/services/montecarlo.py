"""Replicated sample solves compared against sampled limit laws.

Replication r solves the sample problem on the dataset with seed
mix(master_seed, r); results are gathered in r order, so a ReplicationSet does
not depend on the number of worker threads.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.linalg import null_space

from config.settings import Settings, get_settings
from problems.base import ProblemSpec
from problems.objective import sample_dataset
from services.exceptions import (
    CapabilityError,
    InvalidArgumentError,
    MinimaxError,
    ReplicationFailureError,
)
from services.limitdist import (
    draw_solution_limit,
    sample_value_limit,
    sigma_solution,
    sigma_value,
    solution_limit_model,
    value_limit_model,
)
from services.reduction import build_reduction
from services.rng import mix
from services.solver import SolveStatus, SolverConfig, solve_sample

logger = logging.getLogger(__name__)

FAILED = "failed"


# ---------------------------------------------------------------------------
# Replications
# ---------------------------------------------------------------------------


@dataclass
class ReplicationSet:
    problem_id: str
    N: int
    R: int
    master_seed: int
    gamma_star: np.ndarray
    theta_star: float
    scaled_gamma_errors: np.ndarray  # R×n, NaN rows for failed solves
    scaled_value_errors: np.ndarray  # R
    statuses: list[str]
    exact_recovery_count: int = 0

    @property
    def ok(self) -> np.ndarray:
        return np.array([s == SolveStatus.CONVERGED.value for s in self.statuses], dtype=bool)

    @property
    def failures(self) -> int:
        return int(self.R - self.ok.sum())

    @property
    def gamma_errors(self) -> np.ndarray:
        """Scaled γ errors of converged replications."""
        return self.scaled_gamma_errors[self.ok]

    @property
    def value_errors(self) -> np.ndarray:
        return self.scaled_value_errors[self.ok]

    @property
    def exact_recovery_rate(self) -> float:
        used = int(self.ok.sum())
        return self.exact_recovery_count / used if used else 0.0

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            {
                "r": np.arange(self.R),
                "status": self.statuses,
                "sqrtN_value_err": self.scaled_value_errors,
            }
        )
        for i in range(self.scaled_gamma_errors.shape[1]):
            frame[f"sqrtN_gamma_err_{i + 1}"] = self.scaled_gamma_errors[:, i]
        return frame

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    def summary(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "N": self.N,
            "R": self.R,
            "master_seed": self.master_seed,
            "used": int(self.ok.sum()),
            "failures": self.failures,
            "exact_recovery_count": self.exact_recovery_count,
            "exact_recovery_rate": self.exact_recovery_rate,
        }


def _truth(problem: ProblemSpec, gamma_star, theta_star) -> tuple[np.ndarray, float]:
    truth = problem.ground_truth
    if gamma_star is None:
        if truth is None:
            raise CapabilityError(f"'{problem.name}' has no ground truth; pass gamma_star")
        gamma_star = truth.gamma_star
    if theta_star is None:
        if truth is None:
            raise CapabilityError(f"'{problem.name}' has no ground truth; pass theta_star")
        theta_star = truth.theta_star
    return np.atleast_1d(np.asarray(gamma_star, dtype=float)), float(theta_star)


def run_replications(
    problem: ProblemSpec,
    N: int,
    R: int,
    master_seed: int,
    threads: int | None = None,
    config: SolverConfig | None = None,
    gamma_star=None,
    theta_star: float | None = None,
    max_failure_fraction: float | None = None,
) -> ReplicationSet:
    """R sample solves at size N with √N-scaled errors.

    Raises:
        ReplicationFailureError: If more than ``max_failure_fraction`` of the
            replications fail to converge.
    """
    if R < 1:
        raise InvalidArgumentError("R must be at least 1")
    settings = get_settings()
    threads = threads or settings.threads
    max_failure_fraction = (
        settings.max_failure_fraction if max_failure_fraction is None else max_failure_fraction
    )
    config = config or SolverConfig.from_settings(settings)
    gamma_star, theta_star = _truth(problem, gamma_star, theta_star)
    n = gamma_star.size
    root_n = math.sqrt(N)

    def replicate(r: int):
        dataset = sample_dataset(problem, N, mix(master_seed, r))
        try:
            solution = solve_sample(problem, dataset, config)
        except MinimaxError as exc:
            logger.warning("Replication %d failed: %s", r, exc)
            return FAILED, np.full(n, np.nan), math.nan
        return solution.status.value, solution.gamma_hat, solution.theta_hat

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            results = list(executor.map(replicate, range(R)))
    else:
        results = [replicate(r) for r in range(R)]

    statuses = [status for status, _, _ in results]
    gamma_hat = np.vstack([g for _, g, _ in results])
    theta_hat = np.array([t for _, _, t in results])
    converged = np.array([s == SolveStatus.CONVERGED.value for s in statuses])
    distances = np.linalg.norm(gamma_hat - gamma_star, axis=1)
    exact = int(np.sum(converged & (distances <= 1e-9 * math.sqrt(n))))

    replications = ReplicationSet(
        problem_id=problem.name,
        N=int(N),
        R=int(R),
        master_seed=int(master_seed),
        gamma_star=gamma_star,
        theta_star=theta_star,
        scaled_gamma_errors=root_n * (gamma_hat - gamma_star),
        scaled_value_errors=root_n * (theta_hat - theta_star),
        statuses=statuses,
        exact_recovery_count=exact,
    )
    failures = replications.failures
    logger.info(
        "Replications %s: N=%d R=%d, %d failed, %d exact recoveries",
        problem.name, N, R, failures, exact,
    )
    if failures > max_failure_fraction * R:
        raise ReplicationFailureError(
            f"{failures} of {R} replications failed (limit {max_failure_fraction:.0%})"
        )
    return replications


# ---------------------------------------------------------------------------
# Distribution comparison
# ---------------------------------------------------------------------------


def ks_statistic(a, b) -> float:
    """Exact two-sample Kolmogorov–Smirnov statistic sup|F_a − F_b|."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise InvalidArgumentError("ks_statistic needs two nonempty samples")
    support = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, support, side="right") / a.size
    cdf_b = np.searchsorted(b, support, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


@dataclass
class ComparisonEntry:
    name: str
    ks: float
    empirical_mean: float
    empirical_var: float
    theoretical_mean: float
    theoretical_var: float
    empirical_zero_mass: float
    theoretical_zero_mass: float
    n_empirical: int
    n_theoretical: int
    degenerate: bool
    empirical_rms: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ComparisonReport:
    entries: list[ComparisonEntry]
    thresholds: dict

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def get(self, name: str) -> ComparisonEntry:
        for entry in self.entries:
            if entry.name == name:
                return entry
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "thresholds": self.thresholds,
            "entries": [e.to_dict() for e in self.entries],
        }


def _variance(values: np.ndarray) -> float:
    return float(np.var(values, ddof=1)) if values.size > 1 else 0.0


def compare_distributions(
    empirical,
    theoretical,
    names: list[str] | None = None,
    settings: Settings | None = None,
) -> ComparisonReport:
    """Per-column KS, moments and exact-zero mass of two samples.

    Values with |v| ≤ ``zero_tol`` are snapped to 0 first. A column whose
    theoretical sample is identically 0 is degenerate and passes iff the
    empirical RMS is at most ``degenerate_rms_max``.
    """
    settings = settings or get_settings()
    emp = np.asarray(empirical, dtype=float)
    theo = np.asarray(theoretical, dtype=float)
    emp = emp.reshape(emp.shape[0], -1)
    theo = theo.reshape(theo.shape[0], -1)
    if emp.shape[0] == 0 or theo.shape[0] == 0:
        raise InvalidArgumentError("compare_distributions needs nonempty samples")
    if emp.shape[1] != theo.shape[1]:
        raise InvalidArgumentError(
            f"column mismatch: {emp.shape[1]} empirical vs {theo.shape[1]} theoretical"
        )
    names = names or [f"v{i + 1}" for i in range(emp.shape[1])]
    emp = np.where(np.abs(emp) <= settings.zero_tol, 0.0, emp)
    theo = np.where(np.abs(theo) <= settings.zero_tol, 0.0, theo)

    entries = []
    for j, name in enumerate(names):
        e, t = emp[:, j], theo[:, j]
        ks = ks_statistic(e, t)
        zero_e = float(np.mean(e == 0.0))
        zero_t = float(np.mean(t == 0.0))
        rms = float(np.sqrt(np.mean(e**2)))
        degenerate = bool(np.all(t == 0.0))
        if degenerate:
            passed = rms <= settings.degenerate_rms_max
        else:
            passed = ks <= settings.ks_max and abs(zero_e - zero_t) <= settings.zero_mass_tol
        entries.append(
            ComparisonEntry(
                name=name,
                ks=ks,
                empirical_mean=float(e.mean()),
                empirical_var=_variance(e),
                theoretical_mean=float(t.mean()),
                theoretical_var=_variance(t),
                empirical_zero_mass=zero_e,
                theoretical_zero_mass=zero_t,
                n_empirical=int(e.size),
                n_theoretical=int(t.size),
                degenerate=degenerate,
                empirical_rms=rms,
                passed=bool(passed),
            )
        )
    thresholds = {
        "ks_max": settings.ks_max,
        "zero_tol": settings.zero_tol,
        "zero_mass_tol": settings.zero_mass_tol,
        "degenerate_rms_max": settings.degenerate_rms_max,
    }
    return ComparisonReport(entries, thresholds)


def complement_basis(L_basis: np.ndarray) -> np.ndarray:
    """Orthonormal basis of 𝓛⊥."""
    L_basis = np.asarray(L_basis, dtype=float)
    n, dim = L_basis.shape
    if dim == 0:
        return np.eye(n)
    if dim == n:
        return np.zeros((n, 0))
    return null_space(L_basis.T)


def project_errors(errors, L_basis) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates of scaled γ errors in 𝓛 and in an orthonormal completion."""
    if isinstance(errors, ReplicationSet):
        errors = errors.gamma_errors
    errors = np.atleast_2d(np.asarray(errors, dtype=float))
    L_basis = np.asarray(L_basis, dtype=float).reshape(errors.shape[1], -1)
    return errors @ L_basis, errors @ complement_basis(L_basis)


# ---------------------------------------------------------------------------
# Full validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    problem_id: str
    N: int
    R: int
    S: int
    master_seed: int
    limit_seed: int
    solution_mode: str
    value_mode: str
    solution: ComparisonReport | None
    value: ComparisonReport
    replications: ReplicationSet
    orthogonal: dict = field(default_factory=dict)
    sigma: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.value.passed and (self.solution is None or self.solution.passed)

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "N": self.N,
            "R": self.R,
            "S": self.S,
            "master_seed": self.master_seed,
            "limit_seed": self.limit_seed,
            "passed": self.passed,
            "solution_mode": self.solution_mode,
            "value_mode": self.value_mode,
            "sigma": self.sigma,
            "solution": None if self.solution is None else self.solution.to_dict(),
            "value": self.value.to_dict(),
            "orthogonal_diagnostic": self.orthogonal,
            "replications": self.replications.summary(),
        }


def validate(
    problem: ProblemSpec,
    N: int,
    R: int,
    S: int,
    master_seed: int,
    limit_seed: int,
    threads: int | None = None,
    solver_config: SolverConfig | None = None,
    settings: Settings | None = None,
) -> ValidationReport:
    """Replicate, sample both limit laws and compare them.

    The solution law is tested on the 𝓛-projection of √N(γ̂ − γ*); the
    orthogonal component is reported as a diagnostic only. Σ uses the
    response-corrected gradients.
    """
    settings = settings or get_settings()
    reduction = build_reduction(problem, solver_config=solver_config)
    replications = run_replications(
        problem,
        N,
        R,
        master_seed,
        threads=threads,
        config=solver_config,
        gamma_star=reduction.gamma_star,
        theta_star=reduction.theta_star,
        max_failure_fraction=settings.max_failure_fraction,
    )

    solution_report = None
    solution_mode = "unavailable"
    sigma_info = {}
    # Without a unique λ* only the value law is tested
    L_basis = np.zeros((reduction.n, 0))
    if reduction.index_sets is not None:
        sigma = sigma_solution(problem, reduction, "analytic", response_correction=True)
        model = solution_limit_model(reduction, sigma)
        solution_mode = model.mode
        sigma_info = sigma.to_dict()
        draws = draw_solution_limit(model, S, limit_seed)
        L_basis = reduction.L_basis
        if L_basis.shape[1]:
            names = [f"L{i + 1}" for i in range(L_basis.shape[1])]
            emp_L, _ = project_errors(replications, L_basis)
            solution_report = compare_distributions(emp_L, draws @ L_basis, names, settings)
    _, emp_perp = project_errors(replications, L_basis)
    orthogonal = {
        "dim": int(emp_perp.shape[1]),
        "mean": emp_perp.mean(axis=0).tolist() if emp_perp.size else [],
        "rms": float(np.sqrt(np.mean(emp_perp**2))) if emp_perp.size else 0.0,
    }

    cov = sigma_value(problem, [reduction], "analytic")
    vmodel = value_limit_model([reduction], cov)
    value_draws = sample_value_limit(vmodel, S, mix(limit_seed, 1))
    value_report = compare_distributions(replications.value_errors, value_draws, ["value"], settings)

    report = ValidationReport(
        problem_id=problem.name,
        N=int(N),
        R=int(R),
        S=int(S),
        master_seed=int(master_seed),
        limit_seed=int(limit_seed),
        solution_mode=solution_mode,
        value_mode=vmodel.mode,
        solution=solution_report,
        value=value_report,
        replications=replications,
        orthogonal=orthogonal,
        sigma={"solution": sigma_info, "value": cov.to_dict()},
    )
    logger.info("Validation %s: %s", problem.name, "passed" if report.passed else "failed")
    return report
