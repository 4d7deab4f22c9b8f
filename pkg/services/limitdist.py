"""Limiting laws of √N(γ̂_N − γ*) and √N(θ̂_N − θ*).

Solution limit: η̃(ℨ), the solution of the cone QP

    min η ᵀ(Σ λ_i ℨ_i) + ½ ηᵀHη  s.t.  ηᵀ∇φ_i = 0 (I₊),  ηᵀ∇φ_i ≤ 0 (I₀)

with ℨ ~ N(0, Σ) the stacked γ-gradients of F at (γ*, ξ_i*). Closed forms:
- k = 1: N(0, H⁻¹ΣH⁻¹)
- strict complementarity: Gaussian from the block system [[H, A], [Aᵀ, 0]]
- 𝓛 = {0}: a point mass at 0

Value limit: min over γ* of Σλ_i 𝓕(γ*, ξ_i) (max over Λ* vertices when λ is not
unique), 𝓕 Gaussian with covariance covF; a single γ* with unique λ gives
N(0, λᵀ covF λ).
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from problems.base import Box, FiniteList, ProblemSpec
from problems.objective import Dataset, EmpiricalObjective, Objective, PopulationObjective
from services.exceptions import (
    AssumptionViolationError,
    CapabilityError,
    InvalidArgumentError,
    RadiusTooSmallError,
)
from services.qp import ConeQP
from services.reduction import ReductionData
from services.rng import stream_normals
from services.solver import SolveStatus, SolverConfig, outer_minimize

logger = logging.getLogger(__name__)

NEGATIVE_EIGEN_TOL = 1e-8
BLOCK_CONDITION_MAX = 1e12
ORACLE_KKT_TOL = 1e-12

SOLUTION_MODES = ("sandwich_k1", "degenerate_zero", "gaussian_strict_complementarity", "qp_sampler")
VALUE_MODES = ("gaussian_scalar", "min_sup_mixture")


# ---------------------------------------------------------------------------
# Gaussian sampling
# ---------------------------------------------------------------------------


def psd_factor(cov: np.ndarray, name: str = "covariance") -> np.ndarray:
    """F with F Fᵀ = cov after clipping small negative eigenvalues.

    Raises:
        AssumptionViolationError: If an eigenvalue is below −1e-8.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    cov = 0.5 * (cov + cov.T)
    values, vectors = np.linalg.eigh(cov)
    if values.size and values.min() < -NEGATIVE_EIGEN_TOL:
        raise AssumptionViolationError(
            f"{name} has eigenvalue {values.min():.3e} below -{NEGATIVE_EIGEN_TOL:g}",
            assumption="psd_covariance",
        )
    if values.size and values.min() < -1e-12:
        logger.warning("Clipping eigenvalue %.3e of %s to 0", values.min(), name)
    return vectors * np.sqrt(np.clip(values, 0.0, None))


def clip_psd(cov: np.ndarray, name: str = "covariance") -> np.ndarray:
    factor = psd_factor(cov, name)
    return factor @ factor.T


def gaussian_draws(cov: np.ndarray, S: int, seed: int) -> np.ndarray:
    """S draws of N(0, cov); draw s uses stream mix(seed, s)."""
    factor = psd_factor(cov)
    return stream_normals(seed, int(S), factor.shape[0]) @ factor.T


# ---------------------------------------------------------------------------
# Covariances Σ and covF
# ---------------------------------------------------------------------------


def _affine_covariance(rows_to_values, problem: ProblemSpec) -> np.ndarray:
    """Exact Cov of an affine function of X = mean + scale ⊙ Z."""
    sampler = problem.x_sampler
    base = rows_to_values(sampler.mean[None, :])
    shifted = sampler.mean[None, :] + np.diag(sampler.scale)
    jacobian = rows_to_values(shifted) - base
    return jacobian.T @ jacobian


def _plugin_covariance(rows_to_values, dataset: Dataset) -> np.ndarray:
    if dataset.N < 2:
        raise InvalidArgumentError("a plug-in covariance needs N ≥ 2")
    values = rows_to_values(dataset.draws)
    return np.atleast_2d(np.cov(values, rowvar=False, ddof=1))


@dataclass
class CovarianceEstimate:
    matrix: np.ndarray
    source: str  # "analytic" | "plugin" | "ground_truth"
    plug_in_point: bool = False
    response_correction: bool = False
    N: int | None = None

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "source": self.source,
            "plug_in_point": self.plug_in_point,
            "response_correction": self.response_correction,
            "N": self.N,
        }


def _response_maps(objective: Objective, gamma, points) -> list:
    """∇²γξf (∇²ξξf)⁻¹ for interior points, None for isolated ones."""
    maps = []
    for p in points:
        if p.flag != "interior":
            maps.append(None)
            continue
        _, h_gx, h_xx = objective.hessian(gamma, p.xi)
        maps.append(np.linalg.solve(h_xx.T, h_gx.T).T)
    return maps


def sigma_solution(
    problem: ProblemSpec,
    reduction: ReductionData,
    source: str = "analytic",
    dataset: Dataset | None = None,
    response_correction: bool = False,
    gamma=None,
    points=None,
) -> CovarianceEstimate:
    """Σ: covariance of the stacked ∇γF(X, γ*, ξ_i*), i = 1..k.

    ``analytic`` is exact for F affine in X (otherwise the ground truth is
    used); ``plugin`` is the sample covariance over ``dataset``. With
    ``response_correction`` interior points use ∇γF − ∇²γξf(∇²ξξf)⁻¹∇ξF.
    Passing ``gamma``/``points`` (a sample solution) flags a plug-in point.

    Raises:
        CapabilityError: If no analytic route exists or plugin lacks a dataset.
    """
    plug_in_point = gamma is not None
    gamma = reduction.gamma_star if gamma is None else np.atleast_1d(np.asarray(gamma, dtype=float))
    points = reduction.active_points if points is None else points
    oracle = problem.oracle

    if source == "plugin":
        if dataset is None:
            raise CapabilityError("plug-in Σ needs a dataset")
        objective = EmpiricalObjective(problem, dataset)
    elif source == "analytic":
        objective = PopulationObjective(problem)
    else:
        raise InvalidArgumentError(f"unknown Σ source {source!r}")
    maps = _response_maps(objective, gamma, points) if response_correction else [None] * len(points)

    def stacked(rows):
        blocks = []
        for p, response in zip(points, maps):
            g_gamma, g_xi = oracle.gradient(rows, gamma, p.xi)
            if response is not None:
                g_gamma = g_gamma - g_xi @ response.T
            blocks.append(g_gamma)
        return np.hstack(blocks)

    if source == "plugin":
        matrix = _plugin_covariance(stacked, dataset)
        return CovarianceEstimate(
            clip_psd(matrix, "Σ"), "plugin", plug_in_point, response_correction, dataset.N
        )
    if oracle.affine_in_x:
        return CovarianceEstimate(
            clip_psd(_affine_covariance(stacked, problem), "Σ"), "analytic", plug_in_point, response_correction
        )
    truth = problem.ground_truth
    matrix = None
    if truth is not None:
        matrix = truth.sigma_response if response_correction else truth.sigma_gradient
    if matrix is None:
        raise CapabilityError(f"no analytic Σ for '{problem.name}'; use source='plugin'")
    return CovarianceEstimate(np.asarray(matrix, dtype=float), "ground_truth", False, response_correction)


@dataclass
class ValueCovariance:
    covF: np.ndarray
    pairs: list[tuple[int, int]]  # (minimizer index, active point index)
    source: str
    sigma2: float | None = None

    def to_dict(self) -> dict:
        return {
            "covF": self.covF.tolist(),
            "pairs": [list(p) for p in self.pairs],
            "source": self.source,
            "sigma2": self.sigma2,
        }


def sigma_value(
    problem: ProblemSpec,
    reductions: list[ReductionData],
    source: str = "analytic",
    dataset: Dataset | None = None,
) -> ValueCovariance:
    """covF over every (γ*, ξ_i*) pair; σ² = λᵀ covF λ for one γ* with unique λ."""
    if not reductions:
        raise InvalidArgumentError("sigma_value needs at least one minimizer")
    pairs = [(r, i) for r, red in enumerate(reductions) for i in range(red.k)]
    oracle = problem.oracle

    def stacked(rows):
        columns = [
            oracle.value(rows, reductions[r].gamma_star, reductions[r].active_points[i].xi)
            for r, i in pairs
        ]
        return np.column_stack(columns)

    if source == "plugin":
        if dataset is None:
            raise CapabilityError("plug-in covF needs a dataset")
        cov = _plugin_covariance(stacked, dataset)
    elif source == "analytic":
        if oracle.affine_in_x:
            cov = _affine_covariance(stacked, problem)
        elif problem.ground_truth is not None and problem.ground_truth.cov_value is not None and len(reductions) == 1:
            cov = np.asarray(problem.ground_truth.cov_value, dtype=float)
        else:
            raise CapabilityError(f"no analytic covF for '{problem.name}'; use source='plugin'")
    else:
        raise InvalidArgumentError(f"unknown covF source {source!r}")
    cov = clip_psd(cov, "covF")
    sigma2 = None
    if len(reductions) == 1 and reductions[0].lambda_star is not None:
        lam = reductions[0].lambda_star
        sigma2 = float(lam @ cov @ lam)
    return ValueCovariance(cov, pairs, source, sigma2)


# ---------------------------------------------------------------------------
# Solution limit
# ---------------------------------------------------------------------------


class QPMap:
    """z ↦ η̃(z) for one reduction; z stacks k gradient perturbations of size n."""

    def __init__(self, reduction: ReductionData):
        if reduction.index_sets is None:
            raise CapabilityError("the limiting QP needs a unique multiplier vector")
        sets = reduction.index_sets
        self.n = reduction.n
        self.k = reduction.k
        self.lambda_star = reduction.lambda_star
        self.qp = ConeQP(
            reduction.H,
            equalities=reduction.grad_phi[:, sets.index_plus].T,
            inequalities=reduction.grad_phi[:, sets.index_zero].T,
        )

    def linear_term(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float)).reshape(-1, self.k, self.n)
        return np.einsum("i,sin->sn", self.lambda_star, z)

    def solve(self, z: np.ndarray, draw_offset: int = 0) -> np.ndarray:
        return self.qp.solve(self.linear_term(z), draw_offset)

    def __call__(self, z) -> np.ndarray:
        return self.solve(np.asarray(z, dtype=float).reshape(1, -1))[0]


def qp_eta(reduction: ReductionData, z) -> np.ndarray:
    """η̃(z) by exhaustive active-set enumeration (|I₀| ≤ 20)."""
    return QPMap(reduction)(z)


def gaussian_solution_limit(reduction: ReductionData, Sigma: np.ndarray) -> np.ndarray:
    """n×n covariance of the Gaussian solution limit.

    Raises:
        CapabilityError: Without strict complementarity (k ≥ 2).
        AssumptionViolationError: If the block matrix is singular.
    """
    n, k = reduction.n, reduction.k
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    if reduction.H is None:
        raise CapabilityError("the Gaussian limit needs a unique multiplier vector")
    H = reduction.H
    if k == 1:
        h_inv = np.linalg.inv(H)
        return h_inv @ Sigma @ h_inv
    sets = reduction.index_sets
    if sets.index_zero:
        raise CapabilityError("the Gaussian limit needs strict complementarity (I₀ empty)")
    if sets.L_basis.shape[1] == 0:
        return np.zeros((n, n))
    A = reduction.A
    block = np.zeros((n + k - 1, n + k - 1))
    block[:n, :n] = H
    block[:n, n:] = A
    block[n:, :n] = A.T
    condition = np.linalg.cond(block)
    if not math.isfinite(condition) or condition > BLOCK_CONDITION_MAX:
        raise AssumptionViolationError(
            f"block matrix [[H, A], [Aᵀ, 0]] is singular (condition {condition:.3e})",
            assumption="affine_independence+second_order",
        )
    weights = np.kron(reduction.lambda_star[None, :], np.eye(n))
    cov_y = weights @ Sigma @ weights.T
    upper = np.linalg.inv(block)[:n, :n]
    limit = upper @ cov_y @ upper.T
    return 0.5 * (limit + limit.T)


@dataclass
class SolutionLimitModel:
    reduction: ReductionData
    Sigma: np.ndarray
    mode: str
    limit_covariance: np.ndarray | None = None
    sigma_provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "Sigma": self.Sigma.tolist(),
            "sigma_provenance": self.sigma_provenance,
            "limit_covariance": None if self.limit_covariance is None else self.limit_covariance.tolist(),
            "lambda_star": self.reduction.lambda_star.tolist(),
            "index_plus": self.reduction.index_sets.index_plus,
            "index_zero": self.reduction.index_sets.index_zero,
        }


def solution_limit_model(
    reduction: ReductionData, sigma: CovarianceEstimate | np.ndarray
) -> SolutionLimitModel:
    """Pick the mode from the certificates and precompute the Gaussian covariance."""
    if reduction.index_sets is None:
        raise CapabilityError("the solution limit needs a unique multiplier vector")
    provenance = sigma.to_dict() if isinstance(sigma, CovarianceEstimate) else {"source": "given"}
    matrix = sigma.matrix if isinstance(sigma, CovarianceEstimate) else np.atleast_2d(sigma)
    provenance.pop("matrix", None)
    expected = reduction.n * reduction.k
    if matrix.shape != (expected, expected):
        raise InvalidArgumentError(f"Σ must be {expected}×{expected}, got {matrix.shape}")
    matrix = clip_psd(matrix, "Σ")
    sets = reduction.index_sets
    if reduction.k == 1:
        mode = "sandwich_k1"
    elif sets.index_zero:
        mode = "qp_sampler"
    elif sets.L_basis.shape[1] == 0:
        mode = "degenerate_zero"
    else:
        mode = "gaussian_strict_complementarity"
    limit = None if mode == "qp_sampler" else gaussian_solution_limit(reduction, matrix)
    logger.info("Solution limit for %s: mode %s", reduction.problem_id, mode)
    return SolutionLimitModel(reduction, matrix, mode, limit, provenance)


def sample_solution_limit(model: SolutionLimitModel, S: int, seed: int) -> np.ndarray:
    """S×n draws of η̃(ℨ), ℨ ~ N(0, Σ); valid in every mode."""
    z = gaussian_draws(model.Sigma, S, seed)
    return QPMap(model.reduction).solve(z)


def draw_solution_limit(model: SolutionLimitModel, S: int, seed: int) -> np.ndarray:
    """Limit draws, using the closed form when the mode has one."""
    if model.mode == "qp_sampler":
        return sample_solution_limit(model, S, seed)
    if model.mode == "degenerate_zero":
        return np.zeros((int(S), model.reduction.n))
    return gaussian_draws(model.limit_covariance, S, seed)


# ---------------------------------------------------------------------------
# Quadratic model
# ---------------------------------------------------------------------------


class QuadraticModelObjective(Objective):
    """ψ_i(δ) = δᵀ(∇φ_i + z_i) + ½δᵀ∇²φ_iδ as a finite-Ξ objective in δ."""

    def __init__(self, reduction: ReductionData, z: np.ndarray):
        n, k = reduction.n, reduction.k
        self.n = n
        self.linear = reduction.grad_phi.T + np.asarray(z, dtype=float).reshape(k, n)
        self.quadratic = reduction.hess_phi
        self.xi_set = FiniteList(tuple(f"piece{i + 1}" for i in range(k)))

    def value(self, gamma, xi):
        return float(gamma @ self.linear[xi] + 0.5 * gamma @ self.quadratic[xi] @ gamma)

    def gradient(self, gamma, xi):
        return self.linear[xi] + self.quadratic[xi] @ gamma, np.zeros(0)

    def hessian(self, gamma, xi):
        return self.quadratic[xi], np.zeros((self.n, 0)), np.zeros((0, 0))

    def describe(self) -> dict:
        return {"kind": "quadratic_model"}


def solve_quadratic_model(
    reduction: ReductionData, z, radius: float, solver_config: SolverConfig | None = None
) -> np.ndarray:
    """Minimize max_i ψ_i(δ) over ‖δ‖∞ ≤ radius; returns δ = γ̄ − γ*.

    Raises:
        RadiusTooSmallError: If the minimizer lies on the radius.
    """
    if radius <= 0:
        raise InvalidArgumentError("radius must be positive")
    n = reduction.n
    box = Box(np.full(n, -radius), np.full(n, radius))
    solution = outer_minimize(QuadraticModelObjective(reduction, z), box, solver_config)
    if solution.status == SolveStatus.BOUNDARY_HIT:
        raise RadiusTooSmallError(f"quadratic-model minimizer on the radius {radius:g}")
    return solution.gamma_hat


def quadratic_model_direction(
    reduction: ReductionData, z, t: float, radius: float, solver_config: SolverConfig | None = None
) -> np.ndarray:
    """Estimate lim δ(tz)/t from the scales t, t/2 and t/4.

    The quotients D(s) = δ(sz)/s are combined as (8D(t/4) − 6D(t/2) + D(t))/3,
    which cancels the O(t) and O(t²) terms. Each solve runs with a KKT
    tolerance of at most ``ORACLE_KKT_TOL``; the combination divides solver
    error by t.
    """
    if t <= 0:
        raise InvalidArgumentError("t must be positive")
    config = solver_config or SolverConfig.from_settings()
    config = replace(config, kkt_tol=min(config.kkt_tol, ORACLE_KKT_TOL))
    z = np.asarray(z, dtype=float)
    quotients = [
        solve_quadratic_model(reduction, s * z, radius, config) / s for s in (t, 0.5 * t, 0.25 * t)
    ]
    return (quotients[0] - 6.0 * quotients[1] + 8.0 * quotients[2]) / 3.0


# ---------------------------------------------------------------------------
# Value limit
# ---------------------------------------------------------------------------


@dataclass
class ValueLimitModel:
    minimizers: list[dict]  # per γ*: gamma_star, columns into covF, weights (rows = vertices)
    covF: np.ndarray
    mode: str

    @property
    def sigma2(self) -> float | None:
        if self.mode != "gaussian_scalar":
            return None
        lam = self.minimizers[0]["weights"][0]
        return float(lam @ self.covF @ lam)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "covF": self.covF.tolist(),
            "sigma2": self.sigma2,
            "minimizers": [
                {
                    "gamma_star": m["gamma_star"].tolist(),
                    "columns": m["columns"],
                    "weights": m["weights"].tolist(),
                }
                for m in self.minimizers
            ],
        }


def value_limit_model(reductions: list[ReductionData], cov: ValueCovariance) -> ValueLimitModel:
    """Value-limit model over a finite minimizer list."""
    if not reductions:
        raise CapabilityError("the value limit needs a finite, nonempty minimizer list")
    entries = []
    for r, red in enumerate(reductions):
        columns = [c for c, (owner, _) in enumerate(cov.pairs) if owner == r]
        if red.lambda_star is not None:
            weights = red.lambda_star[None, :]
        elif red.vertices:
            weights = np.stack(red.vertices)
        else:
            raise CapabilityError(f"no multiplier vertices at γ*={red.gamma_star.tolist()}")
        entries.append({"gamma_star": red.gamma_star, "columns": columns, "weights": weights})
    single = len(entries) == 1 and entries[0]["weights"].shape[0] == 1
    mode = "gaussian_scalar" if single else "min_sup_mixture"
    return ValueLimitModel(entries, cov.covF, mode)


def sample_value_limit(model: ValueLimitModel, S: int, seed: int) -> np.ndarray:
    """S draws of the scalar value limit."""
    if model.mode == "gaussian_scalar":
        return math.sqrt(model.sigma2) * stream_normals(seed, int(S), 1)[:, 0]
    field_draws = gaussian_draws(model.covF, S, seed)
    per_minimizer = [
        np.max(field_draws[:, m["columns"]] @ m["weights"].T, axis=1) for m in model.minimizers
    ]
    return np.min(np.column_stack(per_minimizer), axis=1)
