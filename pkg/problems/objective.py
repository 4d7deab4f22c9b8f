"""Datasets and the objectives the solvers work on.

- Dataset: N IID draws of X, reproducible from (problem, N, seed)
- EmpiricalObjective: f̂_N(γ,ξ), the mean of F(X_j,γ,ξ) over the dataset
- PopulationObjective: f(γ,ξ) from the analytic oracle, or a documented
  Monte Carlo fallback flagged as approximate
- PerturbedObjective: f + tη for directional-derivative experiments

Means use numpy's pairwise summation along a contiguous axis in index order,
so results do not depend on thread count.

Usage:
    dataset = sample_dataset(problem, N=1000, seed=7)
    objective = EmpiricalObjective(problem, dataset)
    objective.value(np.array([0.1]), 1)
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from config.settings import get_settings
from problems.base import ObjectiveOracle, ProblemSpec, XiPoint, XiSet
from problems.polynomial import Monomial, PolynomialOracle
from services.exceptions import CapabilityError, InvalidArgumentError

logger = logging.getLogger(__name__)

ORDERS = ("value", "gradient", "hessian")


def pairwise_mean(values: np.ndarray) -> np.ndarray:
    """Mean over axis 0 with index-ascending pairwise summation."""
    values = np.asarray(values, dtype=float)
    rows = values.shape[0]
    moved = np.ascontiguousarray(np.moveaxis(values, 0, -1))
    return moved.sum(axis=-1) / rows


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """N draws of X for one problem; row j is x_sampler(seed, j)."""

    problem_id: str
    N: int
    seed: int
    draws: np.ndarray

    @property
    def d(self) -> int:
        return self.draws.shape[1]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.draws, columns=[f"x{i + 1}" for i in range(self.d)])
        frame.insert(0, "j", np.arange(self.N))
        return frame

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


def sample_dataset(problem: ProblemSpec, N: int, seed: int) -> Dataset:
    """Draw N IID rows of X for ``problem`` from stream ``seed``.

    Raises:
        InvalidArgumentError: If N < 1.
    """
    if int(N) < 1:
        raise InvalidArgumentError(f"N must be at least 1, got {N}")
    draws = problem.x_sampler.draw_rows(int(seed), 0, int(N))
    draws.setflags(write=False)
    return Dataset(problem_id=problem.name, N=int(N), seed=int(seed), draws=draws)


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------


class Objective(ABC):
    """f(γ, ξ) with derivatives; what inner/outer solvers consume."""

    n: int
    xi_set: XiSet
    approximate: bool = False

    @abstractmethod
    def value(self, gamma: np.ndarray, xi: XiPoint) -> float:
        """Objective value at (γ, ξ)."""

    @abstractmethod
    def gradient(self, gamma: np.ndarray, xi: XiPoint) -> tuple[np.ndarray, np.ndarray]:
        """(∇γf, ∇ξf) at (γ, ξ)."""

    @abstractmethod
    def hessian(
        self, gamma: np.ndarray, xi: XiPoint
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(∇²γγf, ∇²γξf, ∇²ξξf) at (γ, ξ)."""

    def describe(self) -> dict:
        return {"kind": type(self).__name__, "approximate": self.approximate}


class OracleMeanObjective(Objective):
    """Mean of an oracle over fixed rows of x."""

    def __init__(self, oracle: ObjectiveOracle, rows: np.ndarray, xi_set: XiSet):
        self._oracle = oracle
        self._rows = np.atleast_2d(np.asarray(rows, dtype=float))
        # Affine F: the mean of F over rows is F at the mean row
        if oracle.affine_in_x and self._rows.shape[0] > 1:
            self._rows = pairwise_mean(self._rows).reshape(1, -1)
        self.n = oracle.n
        self.xi_set = xi_set

    def value(self, gamma, xi):
        return float(pairwise_mean(self._oracle.value(self._rows, gamma, xi)))

    def gradient(self, gamma, xi):
        g_gamma, g_xi = self._oracle.gradient(self._rows, gamma, xi)
        return pairwise_mean(g_gamma), pairwise_mean(g_xi)

    def hessian(self, gamma, xi):
        h_gg, h_gx, h_xx = self._oracle.hessian(self._rows, gamma, xi)
        return pairwise_mean(h_gg), pairwise_mean(h_gx), pairwise_mean(h_xx)


class EmpiricalObjective(OracleMeanObjective):
    """f̂_N(γ,ξ) = (1/N) Σ_j F(X_j, γ, ξ) over a dataset of the problem."""

    def __init__(self, problem: ProblemSpec, dataset: Dataset):
        if dataset.problem_id != problem.name:
            raise InvalidArgumentError(
                f"dataset belongs to '{dataset.problem_id}', not '{problem.name}'"
            )
        super().__init__(problem.oracle, dataset.draws, problem.xi_set)
        self.problem = problem
        self.dataset = dataset

    def describe(self) -> dict:
        return {"kind": "sample", "N": self.dataset.N, "seed": self.dataset.seed}


class PopulationObjective(OracleMeanObjective):
    """f(γ,ξ) = E[F(X,γ,ξ)].

    Uses the analytic population oracle when the problem has one; otherwise a
    Monte Carlo mean over ``fallback_n`` draws with ``fallback_seed``, flagged
    approximate.

    Raises:
        CapabilityError: If neither path is available.
    """

    def __init__(
        self,
        problem: ProblemSpec,
        fallback_n: int | None = None,
        fallback_seed: int | None = None,
    ):
        self.problem = problem
        self.fallback = None
        if problem.population is not None:
            super().__init__(problem.population, np.zeros((1, 0)), problem.xi_set)
            return
        if fallback_n is None:
            settings = get_settings()
            fallback_n = settings.population_fallback_n
            fallback_seed = settings.population_fallback_seed if fallback_seed is None else fallback_seed
        if not fallback_n:
            raise CapabilityError(
                f"problem '{problem.name}' has no population oracle and no fallback N_pop"
            )
        seed = 0 if fallback_seed is None else int(fallback_seed)
        dataset = sample_dataset(problem, int(fallback_n), seed)
        logger.warning(
            "No population oracle for %s; using Monte Carlo mean with N_pop=%d, seed=%d",
            problem.name, dataset.N, seed,
        )
        super().__init__(problem.oracle, dataset.draws, problem.xi_set)
        self.fallback = {"N_pop": dataset.N, "seed": seed}
        self.approximate = True

    def describe(self) -> dict:
        out = {"kind": "population", "approximate": self.approximate}
        if self.fallback:
            out.update(self.fallback)
        return out


class PerturbedObjective(Objective):
    """base + t·η, where η is an X-free oracle on Γ×Ξ."""

    def __init__(self, base: Objective, eta: ObjectiveOracle, t: float):
        if eta.x_dim != 0:
            raise InvalidArgumentError("a perturbation η must not depend on X")
        self._base = base
        self._eta = eta
        self._empty = np.zeros((1, 0))
        self.t = float(t)
        self.n = base.n
        self.xi_set = base.xi_set
        self.approximate = base.approximate

    def value(self, gamma, xi):
        return self._base.value(gamma, xi) + self.t * float(self._eta.value(self._empty, gamma, xi)[0])

    def gradient(self, gamma, xi):
        g_gamma, g_xi = self._base.gradient(gamma, xi)
        e_gamma, e_xi = self._eta.gradient(self._empty, gamma, xi)
        return g_gamma + self.t * e_gamma[0], g_xi + self.t * e_xi[0]

    def hessian(self, gamma, xi):
        h = self._base.hessian(gamma, xi)
        e = self._eta.hessian(self._empty, gamma, xi)
        return tuple(hb + self.t * he[0] for hb, he in zip(h, e))

    def describe(self) -> dict:
        return {"kind": "perturbed", "t": self.t, "base": self._base.describe()}


def eta_value(eta: ObjectiveOracle, gamma, xi) -> float:
    """η(γ, ξ) for an X-free perturbation oracle."""
    return float(eta.value(np.zeros((1, 0)), gamma, xi)[0])


def branch_constants(n: int, values) -> PolynomialOracle:
    """η(γ, ξᵢ) ≡ values[i] on a finite Ξ."""
    return PolynomialOracle(
        n=n, m=0, x_dim=0, tables=[[Monomial(float(v), (0,) * n)] for v in values]
    )


# ---------------------------------------------------------------------------
# Point evaluations
# ---------------------------------------------------------------------------


def _evaluate(objective: Objective, problem: ProblemSpec, gamma, xi, order: str):
    if order not in ORDERS:
        raise InvalidArgumentError(f"order must be one of {ORDERS}, got {order!r}")
    gamma = problem.check_gamma(gamma)
    xi = problem.check_xi(xi)
    if order == "value":
        return objective.value(gamma, xi)
    if order == "gradient":
        g_gamma, g_xi = objective.gradient(gamma, xi)
        return np.concatenate([g_gamma, g_xi])
    h_gg, h_gx, h_xx = objective.hessian(gamma, xi)
    return np.block([[h_gg, h_gx], [h_gx.T, h_xx]])


def empirical_eval(obj: EmpiricalObjective, gamma, xi, order: str = "value"):
    """f̂_N or its (γ,ξ)-gradient / Hessian at a point of Γ×Ξ.

    Raises:
        PointOutsideSetError: If γ ∉ Γ or ξ ∉ Ξ.
        CapabilityError: If a Hessian is requested from an oracle without one.
    """
    return _evaluate(obj, obj.problem, gamma, xi, order)


def population_eval(problem: ProblemSpec, gamma, xi, order: str = "value", objective=None):
    """f or its derivatives; see PopulationObjective for the fallback rules."""
    objective = objective or PopulationObjective(problem)
    return _evaluate(objective, problem, gamma, xi, order)
