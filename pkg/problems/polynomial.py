"""Polynomial F-oracles with linear X-coupling.

F(x, γ, ξ) = Σ_terms coef · Π γ_a^{p_a} · Π ξ_b^{q_b} · (x_j or 1)

Each term carries at most one X coordinate, so F is affine in X and the
derivatives in (γ, ξ) are exact. For a finite Ξ there is one term table per
listed point (branch) and the oracle takes the branch index; for a box Ξ there
is a single table over (γ, ξ).

JSON form of a term: {"coef": 0.5, "gamma": [2], "xi": [0], "x": null}.

Usage:
    oracle = PolynomialOracle.from_tables(n=1, m=1, x_dim=2, tables=[[...]])
    oracle.value(x_rows, np.array([0.3]), np.array([0.1]))
"""

from dataclasses import dataclass

import numpy as np

from problems.base import ObjectiveOracle, XiPoint
from services.exceptions import InvalidArgumentError


@dataclass(frozen=True)
class Monomial:
    """coef · γ^gamma_powers · ξ^xi_powers · x[x_index]."""

    coef: float
    gamma_powers: tuple[int, ...]
    xi_powers: tuple[int, ...] = ()
    x_index: int | None = None

    @classmethod
    def from_dict(cls, data: dict, n: int, m: int) -> "Monomial":
        gamma = tuple(int(p) for p in data.get("gamma", [])) or (0,) * n
        xi = tuple(int(p) for p in data.get("xi", [])) or (0,) * m
        if len(gamma) != n or len(xi) != m:
            raise InvalidArgumentError(
                f"term exponents need {n} γ-powers and {m} ξ-powers, got {data}"
            )
        if any(p < 0 for p in gamma + xi):
            raise InvalidArgumentError(f"negative exponent in term {data}")
        x = data.get("x")
        return cls(float(data["coef"]), gamma, xi, None if x is None else int(x))

    def to_dict(self) -> dict:
        return {
            "coef": self.coef,
            "gamma": list(self.gamma_powers),
            "xi": list(self.xi_powers),
            "x": self.x_index,
        }


@dataclass(frozen=True)
class _CompiledTable:
    """Exponent and factor arrays of one table, for evaluation without Python loops."""

    powers: np.ndarray  # (T, D)
    coef: np.ndarray  # (T,)
    x_index: np.ndarray  # (T,), -1 for no X factor
    grad_fac: np.ndarray  # (D, T)
    grad_exp: np.ndarray  # (D, T, D)
    hess_fac: np.ndarray  # (D, D, T)
    hess_exp: np.ndarray  # (D, D, T, D)

    @classmethod
    def build(cls, table: list[Monomial], dim: int) -> "_CompiledTable":
        powers = np.array(
            [t.gamma_powers + t.xi_powers for t in table], dtype=float
        ).reshape(-1, dim)
        eye = np.eye(dim)
        # ∂/∂z_i: factor p_i, exponents p - e_i
        grad_exp = np.maximum(powers[None, :, :] - eye[:, None, :], 0.0)
        # ∂²/∂z_i∂z_j: factor p_i (p_j - δ_ij), exponents p - e_i - e_j
        hess_fac = powers.T[:, None, :] * (powers.T[None, :, :] - eye[:, :, None])
        hess_exp = np.maximum(
            powers[None, None, :, :] - eye[:, None, None, :] - eye[None, :, None, :], 0.0
        )
        return cls(
            powers=powers,
            coef=np.array([t.coef for t in table], dtype=float),
            x_index=np.array([-1 if t.x_index is None else t.x_index for t in table], dtype=int),
            grad_fac=powers.T.copy(),
            grad_exp=grad_exp,
            hess_fac=hess_fac,
            hess_exp=hess_exp,
        )

    def weights(self, x: np.ndarray) -> np.ndarray:
        """Per-row term weights coef · (x_j or 1), shape (rows, T)."""
        coupled = self.x_index >= 0
        factors = np.ones((x.shape[0], self.coef.size))
        if np.any(coupled):
            factors[:, coupled] = x[:, self.x_index[coupled]]
        return factors * self.coef


class PolynomialOracle(ObjectiveOracle):
    """F as term tables; one table per finite branch, or one table for a box Ξ."""

    affine_in_x = True
    has_hessian = True

    def __init__(self, n: int, m: int, x_dim: int, tables: list[list[Monomial]]):
        if not tables:
            raise InvalidArgumentError("PolynomialOracle needs at least one term table")
        if m > 0 and len(tables) != 1:
            raise InvalidArgumentError("a box Ξ takes exactly one term table")
        for table in tables:
            for term in table:
                if len(term.gamma_powers) != n or len(term.xi_powers) != m:
                    raise InvalidArgumentError(f"term {term} does not match n={n}, m={m}")
                if term.x_index is not None and not 0 <= term.x_index < x_dim:
                    raise InvalidArgumentError(f"term {term} references x outside 0..{x_dim - 1}")
        self.n = n
        self.m = m
        self.x_dim = x_dim
        self.tables = [list(t) for t in tables]
        self._compiled = [_CompiledTable.build(t, n + m) for t in self.tables]

    @classmethod
    def from_tables(cls, n: int, m: int, x_dim: int, tables: list[list[dict]]) -> "PolynomialOracle":
        return cls(n, m, x_dim, [[Monomial.from_dict(t, n, m) for t in table] for table in tables])

    @property
    def branch_count(self) -> int:
        return len(self.tables)

    def expectation(self, mean) -> "PolynomialOracle":
        """Oracle of E[F] for X with the given mean (exact: F is affine in X)."""
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        tables = []
        for table in self.tables:
            folded = []
            for t in table:
                coef = t.coef if t.x_index is None else t.coef * float(mean[t.x_index])
                folded.append(Monomial(coef, t.gamma_powers, t.xi_powers, None))
            tables.append(folded)
        return PolynomialOracle(self.n, self.m, 0, tables)

    # ------------------------------------------------------------------
    # Evaluation
    # ------------------------------------------------------------------

    def _split(self, gamma, xi: XiPoint):
        gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
        if self.m == 0:
            branch = 0 if xi is None else int(xi)
            if not 0 <= branch < self.branch_count:
                raise InvalidArgumentError(f"branch {xi} outside 0..{self.branch_count - 1}")
            return branch, gamma
        return 0, np.concatenate([gamma, np.atleast_1d(np.asarray(xi, dtype=float))])

    def _prepare(self, x, gamma, xi: XiPoint):
        index, z = self._split(gamma, xi)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        compiled = self._compiled[index]
        return compiled, z, compiled.weights(x)

    def value(self, x, gamma, xi):
        c, z, w = self._prepare(x, gamma, xi)
        return w @ np.prod(z**c.powers, axis=-1)

    def gradient(self, x, gamma, xi):
        c, z, w = self._prepare(x, gamma, xi)
        terms = c.grad_fac * np.prod(z**c.grad_exp, axis=-1)
        grad = w @ terms.T
        return grad[:, : self.n], grad[:, self.n :]

    def hessian(self, x, gamma, xi):
        c, z, w = self._prepare(x, gamma, xi)
        terms = c.hess_fac * np.prod(z**c.hess_exp, axis=-1)
        hess = np.einsum("rt,ijt->rij", w, terms)
        n = self.n
        return hess[:, :n, :n], hess[:, :n, n:], hess[:, n:, n:]

    def to_dict(self) -> dict:
        return {
            "kind": "polynomial",
            "n": self.n,
            "m": self.m,
            "x_dim": self.x_dim,
            "tables": [[t.to_dict() for t in table] for table in self.tables],
        }
