"""Finite-minimax reduction of sup_ξ f(γ, ξ) at a minimizer γ*.

Near γ* the max over Ξ is the max of finitely many smooth pieces
φ_i(γ) = max of f(γ, ·) near ξ_i*. This module builds:

- the active points ξ_i* (isolated list points or interior box maximizers)
- ∇φ_i = ∇γf(γ*, ξ_i*) and ∇²φ_i (∇²γγf, or its Schur complement for
  interior points)
- the multipliers {λ ≥ 0, Σλ = 1, Σλ_i∇φ_i = 0}, unique or as polytope vertices
- I₊ / I₀, the subspace 𝓛, the critical cone and checkable certificates
- the closed-form directional-derivative formulas of the optimal value

Usage:
    reduction = build_reduction(builtin("ridge2d"))
    reduction.certificates.passed("strict_complementarity")
"""

import logging
import math
from dataclasses import dataclass, field, fields
from itertools import combinations

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog

from config.settings import Settings, get_settings
from problems.base import ObjectiveOracle, ProblemSpec, XiPoint, xi_to_json
from problems.objective import Dataset, EmpiricalObjective, Objective, PopulationObjective, eta_value
from services.exceptions import (
    AssumptionViolationError,
    BoundaryError,
    CapabilityError,
    FirstOrderConditionError,
    MinimaxError,
    StationarityError,
)
from services.qp import ConeQP
from services.rng import stream_normals
from services.solver import SolverConfig, inner_maximize, solve_population

logger = logging.getLogger(__name__)

STATIONARITY_TOL = 1e-7
RESIDUAL_TOL = 1e-8
NEGATIVE_TOL = 1e-10
VERTEX_TOL = 1e-9
MAX_VERTEX_POINTS = 6


@dataclass(frozen=True)
class ReductionConfig:
    """Thresholds of the reduction (defaults from Settings)."""

    activity_rel_tol: float = 1e-5
    boundary_tol: float = 1e-7
    multiplier_tol: float = 1e-8
    rank_tol: float = 1e-8
    cone_rays: int = 1000
    certificate_seed: int = 20240601

    @classmethod
    def from_settings(cls, settings: Settings | None = None) -> "ReductionConfig":
        settings = settings or get_settings()
        return cls(**{f.name: getattr(settings, f.name) for f in fields(cls)})


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ActivePoint:
    xi: XiPoint
    flag: str  # "isolated" | "interior"
    value: float


@dataclass(frozen=True)
class LambdaPolytope:
    """{λ ≥ 0 : a_eq λ = b_eq}, the stacked system [∇φ; 1ᵀ] λ = [0; 1]."""

    a_eq: np.ndarray
    b_eq: np.ndarray

    @property
    def k(self) -> int:
        return self.a_eq.shape[1]


@dataclass
class Multipliers:
    unique: bool
    polytope: LambdaPolytope
    lambda_star: np.ndarray | None = None
    min_singular_value: float | None = None


@dataclass(frozen=True)
class CriticalCone:
    """{h : hᵀe = 0 for rows e of equalities, hᵀd ≤ 0 for rows d of inequalities}."""

    equalities: np.ndarray
    inequalities: np.ndarray

    def contains(self, h, tol: float = 1e-9) -> bool:
        h = np.asarray(h, dtype=float)
        return bool(
            np.all(np.abs(self.equalities @ h) <= tol) and np.all(self.inequalities @ h <= tol)
        )

    def sample_rays(self, count: int, seed: int) -> np.ndarray:
        """Unit rays of the cone: Gaussian directions projected onto it.

        Rays projecting to 0 are dropped; an empty result means the cone is {0}.
        """
        n = self.equalities.shape[1]
        directions = stream_normals(seed, count, n)
        projector = ConeQP(np.eye(n), self.equalities, self.inequalities)
        rays = projector.solve(-directions)
        norms = np.linalg.norm(rays, axis=1)
        keep = norms > 1e-12
        return rays[keep] / norms[keep, None]

    def to_dict(self) -> dict:
        return {"equalities": self.equalities.tolist(), "inequalities": self.inequalities.tolist()}


@dataclass
class IndexSets:
    index_plus: list[int]
    index_zero: list[int]
    L_basis: np.ndarray
    cone: CriticalCone


@dataclass
class Certificate:
    name: str
    passed: bool
    witness: float | None = None
    detail: str = ""

    def to_dict(self) -> dict:
        witness = self.witness
        if witness is not None and not math.isfinite(witness):
            witness = None
        return {"name": self.name, "passed": self.passed, "witness": witness, "detail": self.detail}


@dataclass
class CertificateReport:
    certificates: list[Certificate]
    flags: dict = field(default_factory=dict)

    def get(self, name: str) -> Certificate:
        for cert in self.certificates:
            if cert.name == name:
                return cert
        raise KeyError(name)

    def passed(self, name: str) -> bool:
        return self.get(name).passed

    def to_dict(self) -> dict:
        return {"certificates": [c.to_dict() for c in self.certificates], "flags": self.flags}


@dataclass
class ReductionData:
    """Everything the limit laws need about the reduction at γ*."""

    problem_id: str
    gamma_star: np.ndarray
    theta_star: float
    active_points: list[ActivePoint]
    grad_phi: np.ndarray  # (n, k), column i is ∇φ_i
    hess_phi: np.ndarray  # (k, n, n)
    multipliers: Multipliers
    vertices: list[np.ndarray]
    index_sets: IndexSets | None
    H: np.ndarray | None
    neighborhood_radius: float | None
    certificates: CertificateReport | None = None
    xi_set: object = None

    @property
    def n(self) -> int:
        return self.gamma_star.size

    @property
    def k(self) -> int:
        return len(self.active_points)

    @property
    def lambda_star(self) -> np.ndarray | None:
        return self.multipliers.lambda_star

    @property
    def A(self) -> np.ndarray:
        return self.grad_phi[:, : self.k - 1]

    @property
    def L_basis(self) -> np.ndarray:
        if self.index_sets is None:
            raise CapabilityError("𝓛 needs a unique multiplier vector")
        return self.index_sets.L_basis

    def to_dict(self) -> dict:
        def matrix(a):
            a = np.asarray(a)
            return {"dims": list(a.shape), "data": a.tolist()}

        radius = self.neighborhood_radius
        return {
            "problem": self.problem_id,
            "n": self.n,
            "k": self.k,
            "gamma_star": self.gamma_star.tolist(),
            "theta_star": self.theta_star,
            "active_points": [
                {
                    "xi": xi_to_json(self.xi_set, p.xi) if self.xi_set is not None else p.xi,
                    "flag": p.flag,
                    "value": p.value,
                }
                for p in self.active_points
            ],
            "grad_phi": matrix(self.grad_phi),
            "hess_phi": matrix(self.hess_phi),
            "lambda_star": None if self.lambda_star is None else self.lambda_star.tolist(),
            "lambda_vertices": [v.tolist() for v in self.vertices],
            "index_plus": None if self.index_sets is None else self.index_sets.index_plus,
            "index_zero": None if self.index_sets is None else self.index_sets.index_zero,
            "L_basis": None if self.index_sets is None else matrix(self.index_sets.L_basis),
            "critical_cone": None if self.index_sets is None else self.index_sets.cone.to_dict(),
            "H": None if self.H is None else matrix(self.H),
            "A": matrix(self.A),
            "neighborhood_radius": radius if radius is None or math.isfinite(radius) else "inf",
            "certificates": None if self.certificates is None else self.certificates.to_dict(),
        }


# ---------------------------------------------------------------------------
# Active set and piece derivatives
# ---------------------------------------------------------------------------


def detect_active_set(
    problem: ProblemSpec,
    gamma_star,
    tau_act: float | None = None,
    objective: Objective | None = None,
    solver_config: SolverConfig | None = None,
    config: ReductionConfig | None = None,
) -> list[ActivePoint]:
    """Maximizers of f(γ*, ·) within ``tau_act`` of the maximum.

    Raises:
        BoundaryError: If an active point of a box Ξ lies on ∂Ξ.
    """
    config = config or ReductionConfig.from_settings()
    objective = objective or PopulationObjective(problem)
    gamma_star = problem.check_gamma(gamma_star)
    inner = inner_maximize(objective, gamma_star, solver_config)
    if tau_act is None:
        tau_act = config.activity_rel_tol * (1.0 + abs(inner.value))
    flag = "isolated" if problem.finite_xi else "interior"
    points = [ActivePoint(xi, flag, float(v)) for xi, v in inner.active(tau_act)]
    if not points:
        raise MinimaxError("empty active set at a solved γ*")
    if not problem.finite_xi:
        for p in points:
            if problem.xi_set.boundary_distance(p.xi) <= config.boundary_tol:
                raise BoundaryError(
                    f"active point ξ={np.asarray(p.xi).tolist()} lies on the boundary of Ξ"
                )
    return points


def phi_derivatives(
    problem: ProblemSpec,
    gamma_star,
    point: ActivePoint,
    objective: Objective | None = None,
    config: ReductionConfig | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(∇φ_i, ∇²φ_i) at γ* for one active point.

    Raises:
        StationarityError: If ∇ξf ≠ 0 at an interior point.
        AssumptionViolationError: If ∇²ξξf is singular at an interior point.
    """
    config = config or ReductionConfig.from_settings()
    objective = objective or PopulationObjective(problem)
    gamma_star = np.atleast_1d(np.asarray(gamma_star, dtype=float))
    g_gamma, g_xi = objective.gradient(gamma_star, point.xi)
    h_gg, h_gx, h_xx = objective.hessian(gamma_star, point.xi)
    if point.flag == "isolated":
        return g_gamma, 0.5 * (h_gg + h_gg.T)

    if np.linalg.norm(g_xi) > STATIONARITY_TOL:
        raise StationarityError(
            f"∇ξf = {g_xi.tolist()} at interior point ξ={np.asarray(point.xi).tolist()}",
            assumption="interior_stationarity",
        )
    smallest = float(np.linalg.svd(h_xx, compute_uv=False).min())
    if smallest < config.rank_tol:
        raise AssumptionViolationError(
            f"∇²ξξf is singular at ξ={np.asarray(point.xi).tolist()} (σ_min={smallest:.3e})",
            assumption="nonsingular_xi_hessian",
        )
    hess = h_gg - h_gx @ np.linalg.solve(h_xx, h_gx.T)
    asymmetry = float(np.abs(hess - hess.T).max())
    if asymmetry > RESIDUAL_TOL:
        logger.warning("∇²φ asymmetry %.3e at ξ=%s", asymmetry, point.xi)
    return g_gamma, 0.5 * (hess + hess.T)


# ---------------------------------------------------------------------------
# Multipliers
# ---------------------------------------------------------------------------


def lagrange_multipliers(grad_phi, config: ReductionConfig | None = None) -> Multipliers:
    """Solve {λ ≥ 0, Σλ = 1, Σλ_i∇φ_i = 0}.

    ``grad_phi`` is n×k (columns ∇φ_i) or a list of k vectors. With affinely
    independent gradients the solution is unique; otherwise the polytope is
    returned for vertex enumeration.

    Raises:
        FirstOrderConditionError: If no multiplier exists.
    """
    config = config or ReductionConfig.from_settings()
    grads = _as_columns(grad_phi)
    n, k = grads.shape
    polytope = LambdaPolytope(np.vstack([grads, np.ones((1, k))]), np.append(np.zeros(n), 1.0))

    if k == 1:
        sigma_min = math.inf
    elif k - 1 > n:
        sigma_min = 0.0
    else:
        diffs = grads[:, :-1] - grads[:, -1:]
        sigma_min = float(np.linalg.svd(diffs, compute_uv=False).min())

    if sigma_min >= config.rank_tol:
        lam = np.linalg.lstsq(polytope.a_eq, polytope.b_eq, rcond=None)[0]
        residual = float(np.linalg.norm(polytope.a_eq @ lam - polytope.b_eq))
        if residual > RESIDUAL_TOL or lam.min() < -NEGATIVE_TOL:
            raise FirstOrderConditionError(
                f"no Lagrange multiplier: residual {residual:.3e}, min λ {lam.min():.3e}",
                assumption="first_order",
            )
        lam = np.clip(lam, 0.0, None)
        return Multipliers(True, polytope, lam / lam.sum(), sigma_min)

    feasible = linprog(
        np.zeros(k), A_eq=polytope.a_eq, b_eq=polytope.b_eq, bounds=[(0, None)] * k, method="highs"
    )
    if feasible.status != 0:
        raise FirstOrderConditionError(
            "no Lagrange multiplier: the multiplier polytope is empty", assumption="first_order"
        )
    vertices = lambda_polytope_vertices(polytope) if k <= MAX_VERTEX_POINTS else []
    if len(vertices) == 1:
        return Multipliers(True, polytope, vertices[0], sigma_min)
    return Multipliers(False, polytope, None, sigma_min)


def lambda_polytope_vertices(polytope: LambdaPolytope | Multipliers) -> list[np.ndarray]:
    """Vertices (basic feasible solutions) of the multiplier polytope.

    Raises:
        CapabilityError: If more than six active points are involved.
    """
    if isinstance(polytope, Multipliers):
        if polytope.lambda_star is not None and polytope.unique:
            return [polytope.lambda_star.copy()]
        polytope = polytope.polytope
    k = polytope.k
    if k > MAX_VERTEX_POINTS:
        raise CapabilityError(f"vertex enumeration supports at most {MAX_VERTEX_POINTS} active points, got {k}")
    a, b = polytope.a_eq, polytope.b_eq
    rank = np.linalg.matrix_rank(a, tol=RESIDUAL_TOL)
    vertices: list[np.ndarray] = []
    for basis in combinations(range(k), rank):
        columns = a[:, list(basis)]
        if np.linalg.matrix_rank(columns, tol=RESIDUAL_TOL) < rank:
            continue
        lam = np.zeros(k)
        lam[list(basis)] = np.linalg.lstsq(columns, b, rcond=None)[0]
        if np.linalg.norm(a @ lam - b) > VERTEX_TOL or lam.min() < -NEGATIVE_TOL:
            continue
        lam = np.clip(lam, 0.0, None)
        if all(np.abs(lam - v).max() > VERTEX_TOL for v in vertices):
            vertices.append(lam)
    return vertices


def _as_columns(grad_phi) -> np.ndarray:
    if isinstance(grad_phi, np.ndarray) and grad_phi.ndim == 2:
        return grad_phi.astype(float)
    return np.column_stack([np.atleast_1d(np.asarray(g, dtype=float)) for g in grad_phi])


# ---------------------------------------------------------------------------
# Index sets, 𝓛 and the critical cone
# ---------------------------------------------------------------------------


def _orient(basis: np.ndarray) -> np.ndarray:
    """Flip columns so the first clearly nonzero entry is positive."""
    basis = basis.copy()
    for j in range(basis.shape[1]):
        column = basis[:, j]
        lead = np.flatnonzero(np.abs(column) > 1e-12)
        if lead.size and column[lead[0]] < 0:
            basis[:, j] = -column
    return basis


def index_sets_and_cones(
    grad_phi, lambda_star: np.ndarray, tau_lambda: float | None = None, rank_tol: float | None = None
) -> IndexSets:
    """I₊ = {λ_i > τ_λ}, I₀ its complement, 𝓛 = null space of ∇φ_i over I₊."""
    config = ReductionConfig.from_settings()
    tau_lambda = config.multiplier_tol if tau_lambda is None else tau_lambda
    rank_tol = config.rank_tol if rank_tol is None else rank_tol
    grads = _as_columns(grad_phi)
    n = grads.shape[0]
    plus = [i for i, lam in enumerate(lambda_star) if lam > tau_lambda]
    zero = [i for i, lam in enumerate(lambda_star) if lam <= tau_lambda]
    equalities = grads[:, plus].T
    if plus and np.any(equalities):
        basis = _orient(null_space(equalities, rcond=rank_tol))
    else:
        basis = np.eye(n)
    cone = CriticalCone(equalities=equalities.reshape(-1, n), inequalities=grads[:, zero].T.reshape(-1, n))
    return IndexSets(plus, zero, basis, cone)


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------


def check_assumptions(
    reduction: ReductionData, config: ReductionConfig | None = None, local_minimizer: bool | None = None
) -> CertificateReport:
    """Pass/fail certificates with numeric witnesses (report only, never raises)."""
    config = config or ReductionConfig.from_settings()
    mult = reduction.multipliers
    n, k = reduction.n, reduction.k
    certs = []

    sigma_min = mult.min_singular_value
    certs.append(
        Certificate(
            "affine_independence",
            sigma_min is None or sigma_min >= config.rank_tol,
            sigma_min,
            "min singular value of ∇φ_i − ∇φ_k",
        )
    )
    certs.append(
        Certificate(
            "unique_multipliers",
            mult.unique,
            float(len(reduction.vertices)),
            "number of multiplier-polytope vertices",
        )
    )

    sets = reduction.index_sets
    if sets is None:
        certs.append(Certificate("strict_complementarity", False, None, "multipliers not unique"))
        certs.append(Certificate("second_order_strict", False, None, "multipliers not unique"))
        certs.append(Certificate("second_order_cone", False, None, "multipliers not unique"))
    else:
        lam = reduction.lambda_star
        certs.append(
            Certificate(
                "strict_complementarity",
                not sets.index_zero,
                float(lam.min()),
                f"I₀ = {sets.index_zero}",
            )
        )
        basis = sets.L_basis
        if basis.shape[1] == 0:
            certs.append(Certificate("second_order_strict", True, None, "𝓛 = {0}, vacuous"))
        else:
            reduced = basis.T @ reduction.H @ basis
            min_eig = float(np.linalg.eigvalsh(0.5 * (reduced + reduced.T)).min())
            certs.append(
                Certificate(
                    "second_order_strict", min_eig > config.rank_tol, min_eig, "min eigenvalue of BᵀHB on 𝓛"
                )
            )
        rays = sets.cone.sample_rays(config.cone_rays, config.certificate_seed)
        if rays.shape[0] == 0:
            certs.append(Certificate("second_order_cone", True, None, "critical cone is {0}, vacuous"))
        else:
            curvature = float(np.einsum("ri,ij,rj->r", rays, reduction.H, rays).min())
            certs.append(
                Certificate(
                    "second_order_cone",
                    curvature > config.rank_tol,
                    curvature,
                    f"min hᵀHh over {rays.shape[0]} sampled unit rays",
                )
            )

    flags = {
        "k": k,
        "n": n,
        "k_equals_n_plus_1": k == n + 1,
        "caratheodory_ok": k <= n + 1,
        "L_dim": None if sets is None else int(sets.L_basis.shape[1]),
    }
    if local_minimizer is not None:
        flags["local_minimizer"] = bool(local_minimizer)
    return CertificateReport(certs, flags)


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------


def _neighborhood_radius(problem: ProblemSpec, points: list[ActivePoint]) -> float | None:
    if problem.finite_xi:
        return None
    if len(points) < 2:
        return math.inf
    distances = [
        float(np.linalg.norm(np.asarray(a.xi) - np.asarray(b.xi)))
        for a, b in combinations(points, 2)
    ]
    return 0.5 * min(distances)


def build_reduction(
    problem: ProblemSpec,
    gamma_star=None,
    config: ReductionConfig | None = None,
    solver_config: SolverConfig | None = None,
    objective: Objective | None = None,
) -> ReductionData:
    """Reduction at γ* (ground truth, else the population solve)."""
    config = config or ReductionConfig.from_settings()
    objective = objective or PopulationObjective(problem)
    if gamma_star is None:
        if problem.ground_truth is not None:
            gamma_star = problem.ground_truth.gamma_star
        else:
            gamma_star = solve_population(problem, solver_config, objective).gamma_hat
    gamma_star = problem.check_gamma(gamma_star)

    points = detect_active_set(problem, gamma_star, None, objective, solver_config, config)
    derivs = [phi_derivatives(problem, gamma_star, p, objective, config) for p in points]
    grads = np.column_stack([g for g, _ in derivs])
    hessians = np.stack([h for _, h in derivs])
    multipliers = lagrange_multipliers(grads, config)
    k = len(points)
    vertices = lambda_polytope_vertices(multipliers) if k <= MAX_VERTEX_POINTS or multipliers.unique else []

    index_sets = None
    H = None
    if multipliers.unique:
        lam = multipliers.lambda_star
        H = np.einsum("i,ijk->jk", lam, hessians)
        H = 0.5 * (H + H.T)
        index_sets = index_sets_and_cones(grads, lam, config.multiplier_tol, config.rank_tol)

    reduction = ReductionData(
        problem_id=problem.name,
        gamma_star=gamma_star,
        theta_star=max(p.value for p in points),
        active_points=points,
        grad_phi=grads,
        hess_phi=hessians,
        multipliers=multipliers,
        vertices=vertices,
        index_sets=index_sets,
        H=H,
        neighborhood_radius=_neighborhood_radius(problem, points),
        xi_set=problem.xi_set,
    )
    truth = problem.ground_truth
    reduction.certificates = check_assumptions(
        reduction, config, None if truth is None else truth.local_minimizer
    )
    logger.info(
        "Reduction %s at γ*=%s: k=%d, λ*=%s",
        problem.name, gamma_star, k, None if H is None else multipliers.lambda_star,
    )
    return reduction


# ---------------------------------------------------------------------------
# Directional-derivative formulas
# ---------------------------------------------------------------------------


@dataclass
class FormulaDerivative:
    """Closed-form value derivatives along η over a finite minimizer list.

    minsup: min over γ* of max over active ξ of η.
    weighted: min over γ* of Σλ_i η(γ*, ξ_i); None unless every λ is unique.
    lambda_sup: min over γ* of the max over Λ* vertices of Σλ_i η(γ*, ξ_i).
    """

    minsup: float
    weighted: float | None
    lambda_sup: float
    per_minimizer: list[dict]
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "minsup": self.minsup,
            "weighted": self.weighted,
            "lambda_sup": self.lambda_sup,
            "per_minimizer": self.per_minimizer,
            "notes": self.notes,
        }


def _minimizer_reductions(problem, minimizers, config, solver_config, objective):
    if minimizers is None:
        if problem.ground_truth is None:
            minimizers = [solve_population(problem, solver_config, objective).gamma_hat]
        else:
            minimizers = [problem.ground_truth.gamma_star]
    return [
        build_reduction(problem, g, config, solver_config, objective) for g in minimizers
    ]


def value_dirderiv_formula(
    problem: ProblemSpec,
    minimizers: list | None,
    eta: ObjectiveOracle,
    config: ReductionConfig | None = None,
    solver_config: SolverConfig | None = None,
) -> FormulaDerivative:
    """Min-sup, multiplier-weighted and Λ*-sup derivative formulas along η."""
    objective = PopulationObjective(problem)
    reductions = _minimizer_reductions(problem, minimizers, config, solver_config, objective)
    rows = []
    for red in reductions:
        etas = np.array([eta_value(eta, red.gamma_star, p.xi) for p in red.active_points])
        vertex_values = [float(v @ etas) for v in red.vertices]
        rows.append(
            {
                "gamma_star": red.gamma_star.tolist(),
                "eta": etas.tolist(),
                "minsup": float(etas.max()),
                "weighted": None if red.lambda_star is None else float(red.lambda_star @ etas),
                "lambda_sup": max(vertex_values) if vertex_values else math.nan,
            }
        )
    weighted = [r["weighted"] for r in rows]
    notes = []
    truth = problem.ground_truth
    if truth is not None and truth.local_minimizer:
        notes.append("every f(·, ξ_i*) is locally minimized at γ*: minsup is the derivative")
    if any(w is None for w in weighted):
        notes.append("multipliers not unique at some γ*: weighted formula absent")
    return FormulaDerivative(
        minsup=min(r["minsup"] for r in rows),
        weighted=None if any(w is None for w in weighted) else min(weighted),
        lambda_sup=min(r["lambda_sup"] for r in rows),
        per_minimizer=rows,
        notes=notes,
    )


def value_first_order(
    problem: ProblemSpec,
    dataset: Dataset,
    minimizers: list | None = None,
    config: ReductionConfig | None = None,
    solver_config: SolverConfig | None = None,
) -> float:
    """First-order expansion of θ̂_N: min over γ* of max over Λ* vertices of Σλ_i f̂_N(γ*, ξ_i*)."""
    reductions = _minimizer_reductions(
        problem, minimizers, config, solver_config, PopulationObjective(problem)
    )
    empirical = EmpiricalObjective(problem, dataset)
    values = []
    for red in reductions:
        if not red.vertices:
            raise CapabilityError("multiplier vertices unavailable for the first-order expansion")
        sample = np.array([empirical.value(red.gamma_star, p.xi) for p in red.active_points])
        values.append(max(float(v @ sample) for v in red.vertices))
    return min(values)
