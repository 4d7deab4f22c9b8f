"""Small dense cone QPs solved by exhaustive active-set enumeration.

    minimize   ηᵀc + ½ ηᵀHη
    subject to ηᵀe_i = 0  (equality rows)
               ηᵀd_j ≤ 0  (inequality rows)

The equality rows are replaced by an orthonormal basis of their span. For each
subset S of inequality rows (by size, then lexicographically) whose constraint
matrix has full row rank and on whose null space H is positive definite, the
KKT solution is a linear map of c; it is precomputed once and applied to every
right-hand side at once. A draw accepts the first subset of least objective
among those that are primal and dual feasible.
"""

import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.linalg import null_space, orth

from services.exceptions import CapabilityError, QPInfeasibleError

logger = logging.getLogger(__name__)

MAX_INEQUALITIES = 20


@dataclass(frozen=True)
class _SubsetMap:
    subset: tuple[int, ...]
    eta_map: np.ndarray  # (n, n): η = eta_map @ c
    dual_map: np.ndarray  # (|S|, n): inequality multipliers = dual_map @ c


class ConeQP:
    """Precomputed active-set maps for one (H, equalities, inequalities) triple."""

    def __init__(
        self,
        hessian: np.ndarray,
        equalities: np.ndarray | None = None,
        inequalities: np.ndarray | None = None,
        feas_tol: float = 1e-9,
        rank_tol: float = 1e-8,
    ):
        self.hessian = np.asarray(hessian, dtype=float)
        n = self.hessian.shape[0]
        self.n = n
        eq = np.zeros((0, n)) if equalities is None else np.asarray(equalities, dtype=float).reshape(-1, n)
        ineq = np.zeros((0, n)) if inequalities is None else np.asarray(inequalities, dtype=float).reshape(-1, n)
        if ineq.shape[0] > MAX_INEQUALITIES:
            raise CapabilityError(
                f"{ineq.shape[0]} inequality constraints exceed the enumeration limit {MAX_INEQUALITIES}"
            )
        self.equalities = eq
        self.inequalities = ineq
        self.feas_tol = feas_tol
        self.rank_tol = rank_tol
        self.eq_basis = orth(eq.T, rcond=rank_tol).T if eq.size and np.any(eq) else np.zeros((0, n))
        self.maps = self._enumerate()
        if not self.maps:
            raise QPInfeasibleError("no active subset gives a positive definite reduced Hessian")

    def _enumerate(self) -> list[_SubsetMap]:
        n = self.n
        free_dims = n - self.eq_basis.shape[0]
        maps = []
        for size in range(0, min(free_dims, self.inequalities.shape[0]) + 1):
            for subset in combinations(range(self.inequalities.shape[0]), size):
                constraint = np.vstack([self.eq_basis, self.inequalities[list(subset)]])
                rows = constraint.shape[0]
                if rows and np.linalg.matrix_rank(constraint, tol=self.rank_tol) < rows:
                    continue
                basis = null_space(constraint, rcond=self.rank_tol) if rows else np.eye(n)
                if basis.shape[1]:
                    reduced = basis.T @ self.hessian @ basis
                    if np.linalg.eigvalsh(0.5 * (reduced + reduced.T)).min() <= self.rank_tol:
                        continue
                kkt = np.zeros((n + rows, n + rows))
                kkt[:n, :n] = self.hessian
                kkt[:n, n:] = constraint.T
                kkt[n:, :n] = constraint
                # [η; μ] = K⁻¹ [-c; 0]
                solution_map = -np.linalg.inv(kkt)[:, :n]
                maps.append(
                    _SubsetMap(
                        subset=subset,
                        eta_map=solution_map[:n],
                        dual_map=solution_map[n + self.eq_basis.shape[0] :],
                    )
                )
        logger.debug("Cone QP: %d admissible active subsets", len(maps))
        return maps

    def solve(self, c: np.ndarray, draw_offset: int = 0) -> np.ndarray:
        """Solutions η for each row of ``c`` (shape (draws, n))."""
        c = np.atleast_2d(np.asarray(c, dtype=float))
        draws = c.shape[0]
        scale = np.maximum(1.0, np.abs(c).max(axis=1))
        best_obj = np.full(draws, np.inf)
        best_eta = np.zeros((draws, self.n))
        for subset_map in self.maps:
            eta = c @ subset_map.eta_map.T
            ok = np.ones(draws, dtype=bool)
            if self.inequalities.shape[0]:
                ok &= np.all(eta @ self.inequalities.T <= self.feas_tol * scale[:, None], axis=1)
            if subset_map.subset:
                dual = c @ subset_map.dual_map.T
                ok &= np.all(dual >= -self.feas_tol * scale[:, None], axis=1)
            objective = np.einsum("si,si->s", eta, c) + 0.5 * np.einsum(
                "si,ij,sj->s", eta, self.hessian, eta
            )
            # Earlier subsets win ties: smaller |S|, then lexicographic S
            tie = 1e-12 * scale**2
            better = ok & (objective < best_obj - tie)
            best_obj[better] = objective[better]
            best_eta[better] = eta[better]
        missing = np.flatnonzero(~np.isfinite(best_obj))
        if missing.size:
            index = int(missing[0]) + draw_offset
            raise QPInfeasibleError(f"no active subset accepted for draw {index}", draw_index=index)
        return best_eta

    def solve_one(self, c) -> np.ndarray:
        return self.solve(np.asarray(c, dtype=float).reshape(1, -1))[0]
