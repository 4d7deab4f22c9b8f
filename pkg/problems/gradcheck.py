"""Finite-difference checks of F-oracle derivatives.

Central differences with step h = fd_rel_step·(1+|coordinate|) are compared
against the oracle's gradient (from values) and Hessian (from gradients) at
random interior points of Γ×Ξ, one X draw per point. Errors are taken relative
to 1 + |reference|.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from config.settings import get_settings
from problems.base import Box, ProblemSpec
from services.rng import mix, stream_uniforms

logger = logging.getLogger(__name__)

# Random points stay this fraction of the width away from each face
_INTERIOR_MARGIN = 0.05


@dataclass
class GradientCheckReport:
    """Worst relative derivative errors over the sampled points."""

    problem: str
    points: int
    tolerance: float
    max_gradient_error: float = 0.0
    max_hessian_error: float = 0.0
    hessian_checked: bool = True
    worst: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return max(self.max_gradient_error, self.max_hessian_error) <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "points": self.points,
            "tolerance": self.tolerance,
            "max_gradient_error": self.max_gradient_error,
            "max_hessian_error": self.max_hessian_error,
            "hessian_checked": self.hessian_checked,
            "passed": self.passed,
            "worst": self.worst,
        }


def central_gradient(func, z: np.ndarray, rel_step: float) -> np.ndarray:
    """Central-difference gradient of a scalar (or vector) function of z."""
    z = np.asarray(z, dtype=float)
    columns = []
    for i in range(z.size):
        h = rel_step * (1.0 + abs(z[i]))
        up, down = z.copy(), z.copy()
        up[i] += h
        down[i] -= h
        columns.append((np.asarray(func(up)) - np.asarray(func(down))) / (2.0 * h))
    return np.stack(columns, axis=-1)


def _interior_points(box: Box, count: int, seed: int) -> np.ndarray:
    u = stream_uniforms(seed, count, box.dim)
    width = box.upper - box.lower
    lo = box.lower + _INTERIOR_MARGIN * width
    return lo + u * (1.0 - 2.0 * _INTERIOR_MARGIN) * width


def check_gradients(problem: ProblemSpec, num_points: int = 50, seed: int = 0) -> GradientCheckReport:
    """Compare oracle derivatives with central finite differences.

    For a finite Ξ every branch is checked at each sampled γ. Passes iff all
    relative errors are at most ``gradcheck_tol``.
    """
    settings = get_settings()
    oracle = problem.oracle
    n = problem.n
    step = settings.fd_rel_step
    report = GradientCheckReport(
        problem=problem.name,
        points=int(num_points),
        tolerance=settings.gradcheck_tol,
        hessian_checked=oracle.has_hessian,
    )

    gammas = _interior_points(problem.gamma_set, num_points, mix(seed, 0))
    if problem.finite_xi:
        xi_choices = [list(range(problem.xi_set.size))] * num_points
    else:
        xis = _interior_points(problem.xi_set, num_points, mix(seed, 1))
        xi_choices = [[xi] for xi in xis]
    rows = problem.x_sampler.draw_rows(mix(seed, 2), 0, num_points)

    for p in range(num_points):
        x = rows[p : p + 1]
        for xi in xi_choices[p]:
            if problem.finite_xi:
                z0 = gammas[p]

                def split(z, xi=xi):
                    return z, xi

            else:
                z0 = np.concatenate([gammas[p], xi])

                def split(z):
                    return z[:n], z[n:]

            def value(z):
                g, q = split(z)
                return oracle.value(x, g, q)[0]

            def gradient(z):
                g, q = split(z)
                g_gamma, g_xi = oracle.gradient(x, g, q)
                return np.concatenate([g_gamma[0], g_xi[0]])

            grad = gradient(z0)
            grad_err = float(
                np.max(np.abs(grad - central_gradient(value, z0, step)) / (1.0 + abs(value(z0))))
            )
            if grad_err > report.max_gradient_error:
                report.max_gradient_error = grad_err
                report.worst = {"point": p, "z": z0.tolist(), "kind": "gradient"}

            if oracle.has_hessian:
                g, q = split(z0)
                h_gg, h_gx, h_xx = oracle.hessian(x, g, q)
                hess = np.block([[h_gg[0], h_gx[0]], [h_gx[0].T, h_xx[0]]])
                fd = central_gradient(gradient, z0, step)
                hess_err = float(np.max(np.abs(hess - fd) / (1.0 + np.max(np.abs(grad)))))
                if hess_err > report.max_hessian_error:
                    report.max_hessian_error = hess_err
                    if hess_err > report.max_gradient_error:
                        report.worst = {"point": p, "z": z0.tolist(), "kind": "hessian"}

    logger.info(
        "Gradient check %s: grad %.2e, hess %.2e over %d points (%s)",
        problem.name,
        report.max_gradient_error,
        report.max_hessian_error,
        num_points,
        "pass" if report.passed else "fail",
    )
    return report
