"""Core types of a stochastic minimax problem.

A problem is min over γ ∈ Γ of sup over ξ ∈ Ξ of f(γ,ξ) = E[F(X,γ,ξ)].
Subclasses of ObjectiveOracle implement F and its derivatives:
- value(x, γ, ξ) → one value per row of x
- gradient(x, γ, ξ) → per-row ∇γF and ∇ξF
- hessian(x, γ, ξ) → per-row ∇²γγF, ∇²γξF, ∇²ξξF

For a FiniteList Ξ the ξ argument is the branch index; for a Box it is a
point in ℝᵐ.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np

from services.exceptions import CapabilityError, InvalidArgumentError, PointOutsideSetError
from services.rng import stream_normals

XiPoint = Union[int, np.ndarray]


# ---------------------------------------------------------------------------
# Feasible sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with finite bounds, lower < upper componentwise."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise InvalidArgumentError("Box bounds must be vectors of equal length")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise InvalidArgumentError("Box bounds must be finite")
        if np.any(lower >= upper):
            raise InvalidArgumentError("Box requires lower < upper componentwise")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def contains(self, point, tol: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        return p.shape == self.lower.shape and bool(
            np.all(p >= self.lower - tol) and np.all(p <= self.upper + tol)
        )

    def project(self, point) -> np.ndarray:
        return np.clip(np.asarray(point, dtype=float), self.lower, self.upper)

    def boundary_distance(self, point) -> float:
        p = np.asarray(point, dtype=float)
        return float(min(np.min(p - self.lower), np.min(self.upper - p)))

    def grid(self, points_per_axis: int, cap: int, include_bounds: bool = True) -> np.ndarray:
        """Uniform tensor grid, shrinking the per-axis count to respect ``cap``."""
        p = max(1, points_per_axis)
        while p > 1 and p**self.dim > cap:
            p -= 1
        if include_bounds and p > 1:
            axes = [np.linspace(lo, hi, p) for lo, hi in zip(self.lower, self.upper)]
        else:
            frac = (np.arange(p) + 1.0) / (p + 1.0)
            axes = [lo + frac * (hi - lo) for lo, hi in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def corners(self) -> np.ndarray:
        mesh = np.meshgrid(*[[lo, hi] for lo, hi in zip(self.lower, self.upper)], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def to_dict(self) -> dict:
        return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True)
class FiniteList:
    """Ordered list of labeled points; the oracle receives the list index.

    ``points`` (K×m) is optional; with m=0 the labels are abstract.
    """

    labels: tuple[str, ...]
    points: np.ndarray | None = None

    def __post_init__(self):
        labels = tuple(self.labels)
        if len(labels) < 1:
            raise InvalidArgumentError("FiniteList needs at least one point")
        if len(set(labels)) != len(labels):
            raise InvalidArgumentError("FiniteList labels must be distinct")
        object.__setattr__(self, "labels", labels)
        if self.points is not None:
            pts = np.asarray(self.points, dtype=float).reshape(len(labels), -1)
            if pts.shape[1] > 0 and len({tuple(r) for r in pts}) != len(labels):
                raise InvalidArgumentError("FiniteList points must be distinct")
            object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return 0 if self.points is None else self.points.shape[1]

    def contains(self, xi, tol: float = 0.0) -> bool:
        return isinstance(xi, (int, np.integer)) and 0 <= int(xi) < self.size

    def label(self, xi: int) -> str:
        return self.labels[int(xi)]

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": "finite", "labels": list(self.labels)}
        if self.points is not None:
            out["points"] = self.points.tolist()
        return out


XiSet = Union[FiniteList, Box]


def xi_to_json(xi_set: XiSet, xi: XiPoint):
    """Serializable form of a ξ point: the label for lists, coordinates for boxes."""
    if isinstance(xi_set, FiniteList):
        return xi_set.label(xi)
    return np.asarray(xi, dtype=float).tolist()


def xi_key(xi: XiPoint) -> tuple:
    """Sort key giving list order first, then lexicographic coordinates."""
    if isinstance(xi, (int, np.integer)):
        return (int(xi),)
    return tuple(np.asarray(xi, dtype=float).tolist())


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


class ObjectiveOracle(ABC):
    """Base class for F(x, γ, ξ) evaluators, vectorized over rows of x."""

    # Dimensions of γ, of ξ as seen by the oracle (0 for finite lists), and of X
    n: int = 1
    m: int = 0
    x_dim: int = 0
    # F affine in x lets empirical means be taken on the mean row
    affine_in_x: bool = False
    has_hessian: bool = True

    @abstractmethod
    def value(self, x: np.ndarray, gamma: np.ndarray, xi: XiPoint) -> np.ndarray:
        """Return F for each row of ``x`` (shape (rows,))."""

    @abstractmethod
    def gradient(
        self, x: np.ndarray, gamma: np.ndarray, xi: XiPoint
    ) -> tuple[np.ndarray, np.ndarray]:
        """Return per-row (∇γF, ∇ξF) with shapes (rows, n) and (rows, m)."""

    def hessian(
        self, x: np.ndarray, gamma: np.ndarray, xi: XiPoint
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return per-row (∇²γγF, ∇²γξF, ∇²ξξF)."""
        raise CapabilityError(f"{type(self).__name__} provides no second derivatives")

    def to_dict(self) -> dict:
        raise CapabilityError(f"{type(self).__name__} is not serializable")


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianSampler:
    """X = mean + scale ⊙ Z with Z standard normal from stream mix(seed, index).

    With ``scale`` all zero the sampler is deterministic.
    """

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=float)))
        object.__setattr__(self, "scale", np.atleast_1d(np.asarray(self.scale, dtype=float)))

    @classmethod
    def standard(cls, d: int) -> "GaussianSampler":
        return cls(mean=np.zeros(d), scale=np.ones(d))

    @classmethod
    def constant(cls, d: int) -> "GaussianSampler":
        return cls(mean=np.zeros(d), scale=np.zeros(d))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def deterministic(self) -> bool:
        return not np.any(self.scale)

    def draw_rows(self, seed: int, start: int, count: int) -> np.ndarray:
        z = stream_normals(seed, count, self.dim, start=start)
        return self.mean + self.scale * z

    def __call__(self, seed: int, index: int) -> np.ndarray:
        return self.draw_rows(seed, index, 1)[0]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}


# ---------------------------------------------------------------------------
# Problem specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroundTruth:
    """Known population quantities of a built-in problem (literal numbers)."""

    gamma_star: np.ndarray
    theta_star: float
    active: tuple = ()
    lambda_star: np.ndarray | None = None
    sigma_gradient: np.ndarray | None = None
    sigma_response: np.ndarray | None = None
    cov_value: np.ndarray | None = None
    sigma2: float | None = None
    hessian: np.ndarray | None = None
    limit_covariance: np.ndarray | None = None
    limit_law: str = ""
    local_minimizer: bool | None = None
    notes: str = ""

    def to_dict(self) -> dict:
        out = {}
        for key, value in self.__dict__.items():
            if isinstance(value, np.ndarray):
                out[key] = value.tolist()
            elif isinstance(value, tuple):
                out[key] = [v.tolist() if isinstance(v, np.ndarray) else v for v in value]
            else:
                out[key] = value
        return out


@dataclass(frozen=True)
class ProblemSpec:
    """A stochastic minimax problem: sets, F-oracle, X-sampler, truths."""

    name: str
    gamma_set: Box
    xi_set: XiSet
    oracle: ObjectiveOracle
    x_sampler: GaussianSampler
    population: ObjectiveOracle | None = None
    ground_truth: GroundTruth | None = None
    description: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.oracle.n != self.gamma_set.dim:
            raise InvalidArgumentError("oracle γ-dimension does not match Γ")
        expected_m = 0 if isinstance(self.xi_set, FiniteList) else self.xi_set.dim
        if self.oracle.m != expected_m:
            raise InvalidArgumentError("oracle ξ-dimension does not match Ξ")
        if self.oracle.x_dim != self.x_sampler.dim:
            raise InvalidArgumentError("oracle X-dimension does not match the sampler")
        if self.population is not None and self.population.x_dim != 0:
            raise InvalidArgumentError("population oracle must not depend on X")

    @property
    def n(self) -> int:
        return self.gamma_set.dim

    @property
    def m(self) -> int:
        return self.xi_set.dim

    @property
    def d(self) -> int:
        return self.x_sampler.dim

    @property
    def finite_xi(self) -> bool:
        return isinstance(self.xi_set, FiniteList)

    @property
    def deterministic(self) -> bool:
        return self.x_sampler.deterministic

    def check_gamma(self, gamma) -> np.ndarray:
        g = np.atleast_1d(np.asarray(gamma, dtype=float))
        if not self.gamma_set.contains(g, tol=1e-12):
            raise PointOutsideSetError(f"γ={g.tolist()} is outside Γ")
        return g

    def check_xi(self, xi) -> XiPoint:
        if isinstance(self.xi_set, FiniteList):
            if not self.xi_set.contains(xi):
                raise PointOutsideSetError(f"ξ={xi!r} is not a listed point")
            return int(xi)
        p = np.atleast_1d(np.asarray(xi, dtype=float))
        if not self.xi_set.contains(p, tol=1e-12):
            raise PointOutsideSetError(f"ξ={p.tolist()} is outside Ξ")
        return p

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "m": self.m,
            "gamma_set": self.gamma_set.to_dict(),
            "xi_set": self.xi_set.to_dict(),
            "x_sampler": self.x_sampler.to_dict(),
            "oracle": self.oracle.to_dict(),
        }
