"""Load problems from JSON documents or registry names.

Inline problem document:

    {
      "name": "my_problem",
      "gamma_set": {"lower": [-2], "upper": [2]},
      "xi_set": {"kind": "finite", "labels": ["xi1", "xi2"]}
                | {"kind": "box", "lower": [...], "upper": [...]},
      "x_sampler": {"mean": [0, 0], "scale": [1, 1]},
      "tables": [[{"coef": -1.0, "gamma": [1]}, {"coef": 1.0, "gamma": [0], "x": 0}], ...]
    }

One term table per listed ξ for a finite Ξ, a single table for a box Ξ. The
population oracle is E[F] taken exactly (F is affine in X).
"""

import json
import logging
from pathlib import Path

from problems.base import Box, FiniteList, GaussianSampler, ProblemSpec
from problems.builtin import builtin
from problems.polynomial import PolynomialOracle
from services.exceptions import InvalidArgumentError

logger = logging.getLogger(__name__)


def _xi_set(data: dict):
    kind = data.get("kind", "finite")
    if kind == "finite":
        return FiniteList(tuple(data["labels"]), data.get("points"))
    if kind == "box":
        return Box(data["lower"], data["upper"])
    raise InvalidArgumentError(f"unknown xi_set kind {kind!r}")


def load_problem(data: dict) -> ProblemSpec:
    """Build a ProblemSpec from an inline polynomial problem document."""
    try:
        gamma_set = Box(data["gamma_set"]["lower"], data["gamma_set"]["upper"])
        xi_set = _xi_set(data["xi_set"])
        sampler = GaussianSampler(data["x_sampler"]["mean"], data["x_sampler"]["scale"])
        m = 0 if isinstance(xi_set, FiniteList) else xi_set.dim
        oracle = PolynomialOracle.from_tables(
            n=gamma_set.dim, m=m, x_dim=sampler.dim, tables=data["tables"]
        )
    except KeyError as e:
        raise InvalidArgumentError(f"inline problem is missing {e}") from e
    if isinstance(xi_set, FiniteList) and oracle.branch_count != xi_set.size:
        raise InvalidArgumentError(
            f"{oracle.branch_count} term tables for {xi_set.size} listed ξ points"
        )
    name = data.get("name", "inline")
    logger.debug("Loaded inline problem %s (n=%d, m=%d)", name, gamma_set.dim, m)
    return ProblemSpec(
        name=name,
        gamma_set=gamma_set,
        xi_set=xi_set,
        oracle=oracle,
        x_sampler=sampler,
        population=oracle.expectation(sampler.mean),
        description=data.get("description", "inline polynomial problem"),
    )


def resolve_problem(ref: str | dict) -> ProblemSpec:
    """Registry name → built-in; dict → inline problem."""
    if isinstance(ref, str):
        return builtin(ref)
    return load_problem(ref)


def load_problem_file(path: str | Path) -> ProblemSpec:
    with open(path, encoding="utf-8") as f:
        return load_problem(json.load(f))


def problem_document(problem: ProblemSpec) -> dict:
    """Inverse of load_problem for polynomial problems."""
    oracle = problem.oracle.to_dict()
    return {
        "name": problem.name,
        "gamma_set": {
            "lower": problem.gamma_set.lower.tolist(),
            "upper": problem.gamma_set.upper.tolist(),
        },
        "xi_set": problem.xi_set.to_dict(),
        "x_sampler": problem.x_sampler.to_dict(),
        "tables": oracle["tables"],
    }
