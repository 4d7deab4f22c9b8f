"""Inner maximization, outer minimax solves and the value directional derivative.

Inner problem sup over ξ of f(γ, ξ):
- finite Ξ: exact enumeration, sorted by value (ties by list index)
- box Ξ: multi-start projected Newton ascent, clustered within merge_radius

Outer problem min over γ of φ(γ) = sup_ξ f(γ, ξ), two phases:
1. Grid search over Γ, then normalized subgradient descent (step c/√t,
   c = diameter/10) from the best few grid points. On a box Ξ the inner
   maximizers are tracked by warm-started ascent between full multistarts.
2. Damped Newton on the KKT system of the epigraph program
   min θ s.t. φ_i(γ) ≤ θ over the active pieces, adding pieces that become
   active and dropping pieces whose multiplier turns negative.

Usage:
    solution = solve_population(builtin("vee_value"))
    solution.gamma_hat, solution.theta_hat, solution.status
"""

import logging
import math
from dataclasses import dataclass, field, fields
from enum import Enum

import numpy as np
from scipy.optimize import nnls

from config.settings import Settings, get_settings
from problems.base import Box, FiniteList, ObjectiveOracle, ProblemSpec, XiPoint, XiSet, xi_key, xi_to_json
from problems.gradcheck import central_gradient
from problems.objective import (
    Dataset,
    EmpiricalObjective,
    Objective,
    PerturbedObjective,
    PopulationObjective,
)
from services.exceptions import CapabilityError, InvalidArgumentError

logger = logging.getLogger(__name__)

# Armijo constant for line searches
_ARMIJO = 1e-4
_MIN_STEP = 2.0**-30
_POLISH_STEPS = 3


class SolveStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    BOUNDARY_HIT = "boundary_hit"


@dataclass(frozen=True)
class SolverConfig:
    """Numerical knobs of inner and outer solves (defaults from Settings)."""

    inner_points_per_axis: int = 5
    inner_start_cap: int = 243
    inner_grad_tol: float = 1e-10
    inner_max_iter: int = 200
    merge_radius: float = 1e-6
    outer_points_per_axis: int = 9
    outer_start_cap: int = 729
    subgradient_steps: int = 500
    refine_starts: int = 3
    rediscover_every: int = 50
    activity_rel_tol: float = 1e-5
    kkt_tol: float = 1e-9
    newton_max_iter: int = 60
    boundary_tol: float = 1e-7

    @classmethod
    def from_settings(cls, settings: Settings | None = None) -> "SolverConfig":
        settings = settings or get_settings()
        return cls(**{f.name: getattr(settings, f.name) for f in fields(cls)})

    def activity_tol(self, value: float) -> float:
        return self.activity_rel_tol * (1.0 + abs(value))


# ---------------------------------------------------------------------------
# Result types
# ---------------------------------------------------------------------------


@dataclass
class InnerResult:
    """Inner maximizers (ξ, value), global maximum first."""

    maximizers: list[tuple[XiPoint, float]]
    status: SolveStatus = SolveStatus.CONVERGED

    @property
    def value(self) -> float:
        return self.maximizers[0][1]

    @property
    def best(self) -> XiPoint:
        return self.maximizers[0][0]

    def active(self, tol: float) -> list[tuple[XiPoint, float]]:
        """Maximizers whose value is within ``tol`` of the maximum."""
        return [(xi, v) for xi, v in self.maximizers if v >= self.value - tol]


@dataclass
class MinimaxSolution:
    """Solution of a population or sample minimax problem."""

    gamma_hat: np.ndarray
    theta_hat: float
    inner_maximizers: list[tuple[XiPoint, float]]
    iterations: int
    status: SolveStatus
    source: dict
    kkt_residual: float = math.nan
    multipliers: list[tuple[XiPoint, float]] = field(default_factory=list)
    approximate: bool = False
    xi_set: XiSet | None = None

    @property
    def converged(self) -> bool:
        return self.status == SolveStatus.CONVERGED

    def _xi_json(self, xi):
        if self.xi_set is None:
            return xi if isinstance(xi, (int, np.integer)) else np.asarray(xi).tolist()
        return xi_to_json(self.xi_set, xi)

    def to_dict(self) -> dict:
        return {
            "gamma_hat": self.gamma_hat.tolist(),
            "theta_hat": self.theta_hat,
            "inner_maximizers": [
                {"xi": self._xi_json(xi), "value": v} for xi, v in self.inner_maximizers
            ],
            "multipliers": [
                {"xi": self._xi_json(xi), "lambda": lam} for xi, lam in self.multipliers
            ],
            "iterations": self.iterations,
            "status": self.status.value,
            "kkt_residual": self.kkt_residual,
            "approximate": self.approximate,
            "source": self.source,
        }


# ---------------------------------------------------------------------------
# Inner maximization
# ---------------------------------------------------------------------------


def _sort_maximizers(pairs):
    return sorted(pairs, key=lambda p: (-p[1], xi_key(p[0])))


def _cluster(pairs, radius: float):
    reps = []
    for xi, value in _sort_maximizers(pairs):
        if all(np.linalg.norm(xi - r) > radius for r, _ in reps):
            reps.append((xi, value))
    return reps


def _ascend(objective: Objective, gamma, start, region: Box, config: SolverConfig):
    """Projected Newton ascent of f(γ, ·) on ``region`` from ``start``.

    Returns (ξ, value, converged).
    """
    xi = region.project(start)
    value = objective.value(gamma, xi)
    use_hessian = True
    for _ in range(config.inner_max_iter):
        _, g = objective.gradient(gamma, xi)
        if np.linalg.norm(region.project(xi + g) - xi) <= config.inner_grad_tol:
            return xi, value, True
        blocked = ((xi <= region.lower) & (g < 0)) | ((xi >= region.upper) & (g > 0))
        free = ~blocked
        direction = np.zeros_like(xi)
        direction[free] = g[free]
        if use_hessian:
            try:
                h = -objective.hessian(gamma, xi)[2][np.ix_(free, free)]
                np.linalg.cholesky(h)
                direction[free] = np.linalg.solve(h, g[free])
            except CapabilityError:
                use_hessian = False
            except np.linalg.LinAlgError:
                pass
        step = 1.0
        noise = 1e-15 * (1.0 + abs(value))
        while step >= _MIN_STEP:
            trial = region.project(xi + step * direction)
            trial_value = objective.value(gamma, trial)
            if trial_value >= value + _ARMIJO * float(g @ (trial - xi)) - noise:
                break
            step *= 0.5
        else:
            return xi, value, False
        xi, value = trial, trial_value
    return xi, value, False


def inner_maximize(
    objective: Objective,
    gamma,
    config: SolverConfig | None = None,
    region: Box | None = None,
    starts=None,
) -> InnerResult:
    """Maximize f(γ, ·) over Ξ (or a sub-box ``region``).

    Finite Ξ is enumerated exactly. On a box every start is run to a projected
    gradient of ``inner_grad_tol``; converged end points are clustered and all
    cluster representatives are returned. If no start converges the best
    iterate is returned with status max_iter.
    """
    config = config or SolverConfig.from_settings()
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    xi_set = objective.xi_set
    if isinstance(xi_set, FiniteList):
        pairs = [(i, objective.value(gamma, i)) for i in range(xi_set.size)]
        return InnerResult(_sort_maximizers(pairs))

    region = region or xi_set
    if starts is None:
        starts = np.unique(
            np.vstack(
                [region.grid(config.inner_points_per_axis, config.inner_start_cap), region.corners()]
            ),
            axis=0,
        )
    runs = [_ascend(objective, gamma, s, region, config) for s in np.atleast_2d(starts)]
    converged = [(xi, v) for xi, v, ok in runs if ok]
    if converged:
        return InnerResult(_cluster(converged, config.merge_radius))
    logger.warning("Inner maximization did not converge from any of %d starts at γ=%s", len(runs), gamma)
    return InnerResult(_sort_maximizers([(xi, v) for xi, v, _ in runs])[:1], SolveStatus.MAX_ITER)


def phi_value(objective: Objective, gamma, config: SolverConfig | None = None) -> float:
    """φ(γ) = sup_ξ f(γ, ξ)."""
    return inner_maximize(objective, gamma, config).value


# ---------------------------------------------------------------------------
# Pieces φ_i of the max function
# ---------------------------------------------------------------------------


class _Pieces:
    """Evaluates the pieces φ_i(γ) = f(γ, ξ_i(γ)) of φ near tracked maximizers."""

    def __init__(self, objective: Objective, config: SolverConfig):
        self.objective = objective
        self.config = config
        self.finite = isinstance(objective.xi_set, FiniteList)
        self.match_radius = 10.0 * config.merge_radius

    def discover(self, gamma) -> InnerResult:
        return inner_maximize(self.objective, gamma, self.config)

    def track(self, gamma, points: list) -> list[tuple[XiPoint, float]]:
        """Re-locate each piece's maximizer at ``gamma``, keeping the order."""
        if self.finite:
            return [(i, self.objective.value(gamma, i)) for i in points]
        region = self.objective.xi_set
        out = []
        for xi in points:
            new_xi, value, _ = _ascend(self.objective, gamma, xi, region, self.config)
            out.append((new_xi, value))
        return out

    def same(self, a, b) -> bool:
        if self.finite:
            return int(a) == int(b)
        return float(np.linalg.norm(np.asarray(a) - np.asarray(b))) <= self.match_radius

    def gradient(self, gamma, xi) -> np.ndarray:
        return self.objective.gradient(gamma, xi)[0]

    def hessian(self, gamma, xi) -> np.ndarray:
        """∇²φ_i: ∇²γγf on finite Ξ; Schur complement over free ξ coordinates on a box."""
        try:
            h_gg, h_gx, h_xx = self.objective.hessian(gamma, xi)
        except CapabilityError:
            return self._fd_hessian(gamma, xi)
        if self.finite:
            return h_gg
        region = self.objective.xi_set
        tol = self.config.boundary_tol
        free = (xi > region.lower + tol) & (xi < region.upper - tol)
        if not np.any(free):
            return h_gg
        cross = h_gx[:, free]
        return h_gg - cross @ np.linalg.solve(h_xx[np.ix_(free, free)], cross.T)

    def _fd_hessian(self, gamma, xi) -> np.ndarray:
        def envelope_gradient(g):
            if self.finite:
                return self.gradient(g, xi)
            tracked = self.track(g, [xi])[0][0]
            return self.gradient(g, tracked)

        h = central_gradient(envelope_gradient, gamma, get_settings().fd_rel_step)
        return 0.5 * (h + h.T)


# ---------------------------------------------------------------------------
# Outer minimization
# ---------------------------------------------------------------------------


@dataclass
class _Candidate:
    gamma: np.ndarray
    value: float
    steps: int
    step_size: float


def _subgradient_descent(
    pieces: _Pieces, gamma_set: Box, start: np.ndarray, inner: InnerResult, config: SolverConfig
) -> _Candidate:
    c = gamma_set.diameter / 10.0
    gamma = start.copy()
    current = inner.maximizers
    best = _Candidate(gamma.copy(), inner.value, 0, c)
    step = c
    steps = 0
    for t in range(1, config.subgradient_steps + 1):
        g = pieces.gradient(gamma, current[0][0])
        norm = float(np.linalg.norm(g))
        if norm == 0.0:
            break
        step = c / math.sqrt(t)
        gamma = gamma_set.project(gamma - step * g / norm)
        steps = t
        if pieces.finite:
            current = _sort_maximizers(pieces.track(gamma, range(pieces.objective.xi_set.size)))
        elif t % config.rediscover_every == 0:
            current = pieces.discover(gamma).maximizers
        else:
            tracked = pieces.track(gamma, [xi for xi, _ in current])
            current = _cluster(tracked, config.merge_radius)
        if current[0][1] < best.value:
            best = _Candidate(gamma.copy(), current[0][1], t, step)
    best.steps = steps
    best.step_size = step
    return best


def _phase1(pieces: _Pieces, gamma_set: Box, config: SolverConfig) -> list[_Candidate]:
    grid = gamma_set.grid(config.outer_points_per_axis, config.outer_start_cap)
    scored = []
    for index, gamma in enumerate(grid):
        inner = pieces.discover(gamma)
        scored.append((inner.value, index, gamma, inner))
    scored.sort(key=lambda s: (s[0], s[1]))
    candidates = [
        _subgradient_descent(pieces, gamma_set, gamma, inner, config)
        for _, _, gamma, inner in scored[: max(1, config.refine_starts)]
    ]
    candidates.sort(key=lambda c: c.value)
    return candidates


def _simplex_weights(grads: np.ndarray) -> np.ndarray:
    """Nonnegative weights summing to one that make Σλᵢ∇φᵢ small."""
    count = grads.shape[1]
    if count == 1:
        return np.ones(1)
    weight = 1e3 * (1.0 + float(np.abs(grads).max()))
    system = np.vstack([grads, np.full((1, count), weight)])
    rhs = np.zeros(system.shape[0])
    rhs[-1] = weight
    lam, _ = nnls(system, rhs)
    total = lam.sum()
    return lam / total if total > 0 else np.full(count, 1.0 / count)


@dataclass
class _Phase2Result:
    gamma: np.ndarray
    residual: float
    iterations: int
    converged: bool
    active: list
    multipliers: np.ndarray


def _kkt_parts(pieces: _Pieces, gamma, active, lam, theta):
    tracked = pieces.track(gamma, active)
    points = [xi for xi, _ in tracked]
    values = np.array([v for _, v in tracked])
    grads = np.column_stack([pieces.gradient(gamma, xi) for xi in points])
    residual = np.concatenate([grads @ lam, [1.0 - lam.sum()], values - theta])
    return points, values, grads, residual


def _active_set_newton(
    pieces: _Pieces, gamma_set: Box, candidate: _Candidate, config: SolverConfig
) -> _Phase2Result:
    n = gamma_set.dim
    gamma = candidate.gamma.copy()
    inner = pieces.discover(gamma)
    # Phase 1 stops within one step of the kink, so pieces within that reach may be active
    slope = max(float(np.linalg.norm(pieces.gradient(gamma, xi))) for xi, _ in inner.maximizers)
    reach = config.activity_tol(inner.value) + 2.0 * candidate.step_size * slope
    active = [xi for xi, _ in inner.active(reach)]
    theta = inner.value
    grads = np.column_stack([pieces.gradient(gamma, xi) for xi in active])
    lam = _simplex_weights(grads)

    residual_norm = math.inf
    polish = 0
    converged = False
    iteration = 0
    for iteration in range(1, config.newton_max_iter + 1):
        active, values, grads, residual = _kkt_parts(pieces, gamma, active, lam, theta)
        residual_norm = float(np.max(np.abs(residual)))

        # Pieces rising above the active ones join the active set
        top = max(values)
        joined = False
        for xi, v in pieces.discover(gamma).maximizers:
            if v > top + config.kkt_tol and not any(pieces.same(xi, a) for a in active):
                active.append(xi)
                lam = np.append(lam, 0.0)
                joined = True
        if joined:
            polish = 0
            converged = False
            continue

        logger.debug(
            "Newton %d: γ=%s θ=%.12g |active|=%d residual=%.3e",
            iteration, gamma, theta, len(active), residual_norm,
        )
        if converged:
            polish += 1
            if polish > _POLISH_STEPS:
                break
        elif residual_norm <= config.kkt_tol and lam.min() >= -config.kkt_tol:
            converged = True

        a = len(active)
        weight = sum(l * pieces.hessian(gamma, xi) for l, xi in zip(lam, active))
        kkt = np.zeros((n + 1 + a, n + 1 + a))
        kkt[:n, :n] = weight
        kkt[:n, n + 1 :] = grads
        kkt[n + 1 :, :n] = grads.T
        kkt[n + 1 :, n] = -1.0
        kkt[n, n + 1 :] = -1.0
        delta = np.linalg.lstsq(kkt, -residual, rcond=None)[0]

        accepted = False
        step = 1.0
        while step >= _MIN_STEP:
            trial_gamma = gamma_set.project(gamma + step * delta[:n])
            trial_theta = theta + step * delta[n]
            trial_lam = lam + step * delta[n + 1 :]
            _, _, _, trial_res = _kkt_parts(pieces, trial_gamma, active, trial_lam, trial_theta)
            if np.linalg.norm(trial_res) <= (1.0 - _ARMIJO * step) * np.linalg.norm(residual):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if converged:
                break
            logger.debug("Newton line search failed at γ=%s", gamma)
            break
        gamma, theta, lam = trial_gamma, trial_theta, trial_lam

        # Pieces with negative multipliers leave the active set
        if len(active) > 1 and lam.min() < -config.kkt_tol:
            drop = int(np.argmin(lam))
            del active[drop]
            lam = np.delete(lam, drop)
            lam = np.clip(lam, 0.0, None)
            lam = lam / lam.sum() if lam.sum() > 0 else np.full(len(lam), 1.0 / len(lam))
            converged = False
            polish = 0

    active, values, grads, residual = _kkt_parts(pieces, gamma, active, lam, theta)
    final = float(np.max(np.abs(residual)))
    if final <= residual_norm:
        residual_norm = final
    converged = converged or (residual_norm <= config.kkt_tol and lam.min() >= -config.kkt_tol)
    return _Phase2Result(gamma, residual_norm, iteration, converged, active, lam)


def outer_minimize(
    objective: Objective, gamma_set: Box, config: SolverConfig | None = None
) -> MinimaxSolution:
    """Minimize φ(γ) = sup_ξ f(γ, ξ) over Γ.

    Status is converged only when the epigraph KKT residual reaches ``kkt_tol``
    with γ̂ at least ``boundary_tol`` inside Γ; boundary_hit when γ̂ is within
    ``boundary_tol`` of ∂Γ; max_iter otherwise.
    """
    config = config or SolverConfig.from_settings()
    pieces = _Pieces(objective, config)
    candidates = _phase1(pieces, gamma_set, config)

    chosen = None
    for candidate in candidates:
        result = _active_set_newton(pieces, gamma_set, candidate, config)
        if chosen is None or (result.converged and not chosen[1].converged):
            chosen = (candidate, result)
        if result.converged:
            break
    candidate, result = chosen

    final = pieces.discover(result.gamma)
    theta_hat = final.value
    maximizers = final.active(config.activity_tol(theta_hat))
    if gamma_set.boundary_distance(result.gamma) <= config.boundary_tol:
        status = SolveStatus.BOUNDARY_HIT
    elif result.converged and final.status == SolveStatus.CONVERGED:
        status = SolveStatus.CONVERGED
    else:
        status = SolveStatus.MAX_ITER
    if status != SolveStatus.CONVERGED:
        logger.warning(
            "Outer solve ended with %s at γ=%s (KKT residual %.3e)",
            status.value, result.gamma, result.residual,
        )

    return MinimaxSolution(
        gamma_hat=result.gamma,
        theta_hat=float(theta_hat),
        inner_maximizers=maximizers,
        iterations=candidate.steps + result.iterations,
        status=status,
        source=objective.describe(),
        kkt_residual=result.residual,
        multipliers=[(xi, float(l)) for xi, l in zip(result.active, result.multipliers)],
        approximate=objective.approximate,
        xi_set=objective.xi_set,
    )


def solve_population(
    problem: ProblemSpec, config: SolverConfig | None = None, objective: Objective | None = None
) -> MinimaxSolution:
    """Solve min_γ sup_ξ f(γ, ξ) with the population objective."""
    objective = objective or PopulationObjective(problem)
    solution = outer_minimize(objective, problem.gamma_set, config)
    logger.info(
        "Population solve %s: γ=%s θ=%.10g (%s)",
        problem.name, solution.gamma_hat, solution.theta_hat, solution.status.value,
    )
    return solution


def solve_sample(
    problem: ProblemSpec, dataset: Dataset, config: SolverConfig | None = None
) -> MinimaxSolution:
    """Solve the empirical minimax problem over ``dataset``."""
    solution = outer_minimize(EmpiricalObjective(problem, dataset), problem.gamma_set, config)
    logger.debug(
        "Sample solve %s (N=%d, seed=%d): γ=%s θ=%.10g (%s)",
        problem.name, dataset.N, dataset.seed, solution.gamma_hat, solution.theta_hat,
        solution.status.value,
    )
    return solution


# ---------------------------------------------------------------------------
# Finite-difference value derivative
# ---------------------------------------------------------------------------


@dataclass
class DirectionalDerivative:
    """[V(f+tη) − V(f)]/t over a decreasing t-grid."""

    estimate: float
    table: list[tuple[float, float]]
    base_value: float
    statuses: list[str]

    @property
    def monotone(self) -> bool:
        q = np.array([row[1] for row in self.table])
        d = np.diff(q)
        return bool(np.all(d >= -1e-12) or np.all(d <= 1e-12))

    @property
    def spread(self) -> float:
        q = [row[1] for row in self.table]
        return float(max(q) - min(q)) if q else 0.0

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "base_value": self.base_value,
            "table": [{"t": t, "quotient": q, "status": s} for (t, q), s in zip(self.table, self.statuses)],
            "monotone": self.monotone,
            "spread": self.spread,
        }


def richardson(t1: float, q1: float, t2: float, q2: float) -> float:
    """Linear extrapolation to t = 0 of quotients q1 at t1 and q2 at t2."""
    return (t1 * q2 - t2 * q1) / (t1 - t2)


def value_dirderiv_fd(
    problem: ProblemSpec,
    eta: ObjectiveOracle,
    t_grid=None,
    config: SolverConfig | None = None,
) -> DirectionalDerivative:
    """Difference quotients of the optimal value along an X-free perturbation η.

    Each t re-solves the perturbed population minimax in full. The estimate is
    the Richardson extrapolation of the last two quotients.
    """
    t_grid = tuple(float(t) for t in (t_grid or get_settings().t_grid))
    if not t_grid or any(t <= 0 for t in t_grid) or any(b >= a for a, b in zip(t_grid, t_grid[1:])):
        raise InvalidArgumentError(f"t_grid must be decreasing positive reals, got {t_grid}")
    config = config or SolverConfig.from_settings()
    base_objective = PopulationObjective(problem)
    base = outer_minimize(base_objective, problem.gamma_set, config)

    table = []
    statuses = []
    for t in t_grid:
        perturbed = outer_minimize(PerturbedObjective(base_objective, eta, t), problem.gamma_set, config)
        if not perturbed.converged:
            logger.warning("Perturbed solve at t=%g ended with %s", t, perturbed.status.value)
        table.append((t, (perturbed.theta_hat - base.theta_hat) / t))
        statuses.append(perturbed.status.value)

    if len(table) >= 2:
        (t1, q1), (t2, q2) = table[-2], table[-1]
        estimate = richardson(t1, q1, t2, q2)
    else:
        estimate = table[-1][1]
    logger.info("Value derivative of %s: estimate %.10g over t=%s", problem.name, estimate, t_grid)
    return DirectionalDerivative(
        estimate=float(estimate), table=table, base_value=base.theta_hat, statuses=statuses
    )
