"""Registry of built-in analytic test problems with known ground truth.

All X components are independent standard normals unless noted. Ground-truth
entries are literal numbers worked out by hand from the closed-form F; the
comment above each problem gives the derivation so tests never have to trust
the code under test.

Usage:
    from problems.builtin import builtin
    problem = builtin("smooth_saddle(1)")
"""

import re

import numpy as np

from problems.base import Box, FiniteList, GaussianSampler, GroundTruth, ProblemSpec
from problems.polynomial import Monomial, PolynomialOracle
from services.exceptions import UnknownProblemError

_NAME_PATTERN = re.compile(r"^\s*([a-z0-9_]+)\s*(?:\(\s*([^)]*)\s*\))?\s*$")


def _term(coef: float, gamma: tuple, xi: tuple = (), x: int | None = None) -> Monomial:
    return Monomial(float(coef), tuple(gamma), tuple(xi), x)


def _assemble(
    name: str,
    gamma_set: Box,
    xi_set,
    oracle: PolynomialOracle,
    sampler: GaussianSampler,
    truth: GroundTruth,
    description: str,
) -> ProblemSpec:
    return ProblemSpec(
        name=name,
        gamma_set=gamma_set,
        xi_set=xi_set,
        oracle=oracle,
        x_sampler=sampler,
        population=oracle.expectation(sampler.mean),
        ground_truth=truth,
        description=description,
    )


# ---------------------------------------------------------------------------
# Problems
# ---------------------------------------------------------------------------


def paper_example() -> ProblemSpec:
    # f(γ,ξ1) = -γ, f(γ,ξ2) = γ on Γ=[-1,1]: V = min max{-γ,γ} = 0 at γ*=0,
    # both points active, -λ1 + λ2 = 0 → λ* = (1/2, 1/2). f(·,ξ1) is not
    # minimized at 0, so the min-sup derivative formula does not apply.
    oracle = PolynomialOracle(
        n=1, m=0, x_dim=1, tables=[[_term(-1.0, (1,))], [_term(1.0, (1,))]]
    )
    truth = GroundTruth(
        gamma_star=np.array([0.0]),
        theta_star=0.0,
        active=(0, 1),
        lambda_star=np.array([0.5, 0.5]),
        sigma_gradient=np.zeros((2, 2)),
        cov_value=np.zeros((2, 2)),
        sigma2=0.0,
        hessian=np.array([[0.0]]),
        limit_covariance=np.array([[0.0]]),
        limit_law="degenerate_zero",
        local_minimizer=False,
        notes="deterministic; V'(η) = 1/2 for η = (1 on ξ1, 0 on ξ2) while min-sup gives 1",
    )
    return _assemble(
        "paper_example",
        Box([-1.0], [1.0]),
        FiniteList(("xi1", "xi2")),
        oracle,
        GaussianSampler.constant(1),
        truth,
        "two-point Ξ with f = ∓γ; directional-derivative gap example",
    )


def smooth_saddle(b: float = 1.0) -> ProblemSpec:
    # F = γ²/2 + bγξ - ξ²/2 + X1 γ + X2 ξ on Γ = Ξ = [-2,2].
    # Inner max ξ = bγ, φ(γ) = (1+b²)γ²/2 → γ* = ξ* = 0, θ* = 0, λ* = (1).
    # ∇²φ = 1 - b(-1)⁻¹b = 1+b². ∇γF(X,0,0) = X1 → Σ = [1]; F(X,0,0) = 0 → σ² = 0.
    # Sample: ξ̂ = bγ + X̄2 and γ̂ = -(X̄1 + bX̄2)/(1+b²), so √N γ̂ → N(0, 1/(1+b²)),
    # which the response-corrected Σ = Var[X1 + bX2] = 1+b² reproduces.
    b = float(b)
    oracle = PolynomialOracle(
        n=1,
        m=1,
        x_dim=2,
        tables=[
            [
                _term(0.5, (2,), (0,)),
                _term(b, (1,), (1,)),
                _term(-0.5, (0,), (2,)),
                _term(1.0, (1,), (0,), x=0),
                _term(1.0, (0,), (1,), x=1),
            ]
        ],
    )
    h = 1.0 + b * b
    truth = GroundTruth(
        gamma_star=np.array([0.0]),
        theta_star=0.0,
        active=(np.array([0.0]),),
        lambda_star=np.array([1.0]),
        sigma_gradient=np.array([[1.0]]),
        sigma_response=np.array([[h]]),
        cov_value=np.array([[0.0]]),
        sigma2=0.0,
        hessian=np.array([[h]]),
        limit_covariance=np.array([[1.0 / h]]),
        limit_law="gaussian",
        local_minimizer=True,
        notes="gradient-form sandwich H⁻¹ΣH⁻¹ with Σ=[1] is 1/(1+b²)²",
    )
    return _assemble(
        f"smooth_saddle({b:g})",
        Box([-2.0], [2.0]),
        Box([-2.0], [2.0]),
        oracle,
        GaussianSampler.standard(2),
        truth,
        "convex-concave quadratic saddle; single interior maximizer (k=1)",
    )


def vee_value() -> ProblemSpec:
    # F1 = -γ + γ²/2 + X1, F2 = γ + γ²/2 + X2. φ = |γ| + γ²/2 → γ* = 0, θ* = 0.
    # ∇φ = (-1, 1) → λ* = (1/2, 1/2); k = 2 = n+1, 𝓛 = {0}.
    # F(X,0,ξi) = Xi → covF = I, σ² = λ*ᵀ I λ* = 1/2. ∇γF has no X → Σ = 0.
    oracle = PolynomialOracle(
        n=1,
        m=0,
        x_dim=2,
        tables=[
            [_term(-1.0, (1,)), _term(0.5, (2,)), _term(1.0, (0,), x=0)],
            [_term(1.0, (1,)), _term(0.5, (2,)), _term(1.0, (0,), x=1)],
        ],
    )
    truth = GroundTruth(
        gamma_star=np.array([0.0]),
        theta_star=0.0,
        active=(0, 1),
        lambda_star=np.array([0.5, 0.5]),
        sigma_gradient=np.zeros((2, 2)),
        cov_value=np.eye(2),
        sigma2=0.5,
        hessian=np.array([[1.0]]),
        limit_covariance=np.array([[0.0]]),
        limit_law="degenerate_zero",
        local_minimizer=False,
        notes="γ̂ = (X̄1 - X̄2)/2 at the kink; branch offsets are outside the QP law",
    )
    return _assemble(
        "vee_value",
        Box([-2.0], [2.0]),
        FiniteList(("xi1", "xi2")),
        oracle,
        GaussianSampler.standard(2),
        truth,
        "kinked value with additive branch noise; value CLT and k=n+1",
    )


def cone_qp() -> ProblemSpec:
    # F1 = γ²/2 + γX1, F2 = γ + γ² + γX2. φ = max(γ²/2, γ+γ²) → γ* = 0, θ* = 0.
    # ∇φ = (0, 1) → λ* = (1, 0), I₊ = {1}, I₀ = {2}, H = 1, 𝓛 = ℝ.
    # QP: min η z1 + η²/2 s.t. η ≤ 0 → η̃ = -max(z1, 0). Σ = Cov(X1, X2) = I.
    oracle = PolynomialOracle(
        n=1,
        m=0,
        x_dim=2,
        tables=[
            [_term(0.5, (2,)), _term(1.0, (1,), x=0)],
            [_term(1.0, (1,)), _term(1.0, (2,)), _term(1.0, (1,), x=1)],
        ],
    )
    truth = GroundTruth(
        gamma_star=np.array([0.0]),
        theta_star=0.0,
        active=(0, 1),
        lambda_star=np.array([1.0, 0.0]),
        sigma_gradient=np.eye(2),
        cov_value=np.zeros((2, 2)),
        sigma2=0.0,
        hessian=np.array([[1.0]]),
        limit_law="negative_part",
        local_minimizer=False,
        notes="limit law -max(Z,0), Z ~ N(0,1): half the mass at exactly 0",
    )
    return _assemble(
        "cone_qp",
        Box([-2.0], [2.0]),
        FiniteList(("xi1", "xi2")),
        oracle,
        GaussianSampler.standard(2),
        truth,
        "zero multiplier on an active branch; non-Gaussian QP limit",
    )


def ridge2d() -> ProblemSpec:
    # F1 = -γ1 + ‖γ‖²/2 + γᵀX⁽¹⁾, F2 = γ1 + ‖γ‖²/2 + γᵀX⁽²⁾, X = (X⁽¹⁾, X⁽²⁾) ∈ ℝ⁴.
    # φ = |γ1| + ‖γ‖²/2 → γ* = 0, θ* = 0; ∇φ = (∓1, 0) → λ* = (1/2, 1/2), H = I,
    # 𝓛 = span{(0,1)}. Σ = I₄, Cov[Y] = I/2 → limit covariance diag(0, 1/2).
    oracle = PolynomialOracle(
        n=2,
        m=0,
        x_dim=4,
        tables=[
            [
                _term(-1.0, (1, 0)),
                _term(0.5, (2, 0)),
                _term(0.5, (0, 2)),
                _term(1.0, (1, 0), x=0),
                _term(1.0, (0, 1), x=1),
            ],
            [
                _term(1.0, (1, 0)),
                _term(0.5, (2, 0)),
                _term(0.5, (0, 2)),
                _term(1.0, (1, 0), x=2),
                _term(1.0, (0, 1), x=3),
            ],
        ],
    )
    truth = GroundTruth(
        gamma_star=np.array([0.0, 0.0]),
        theta_star=0.0,
        active=(0, 1),
        lambda_star=np.array([0.5, 0.5]),
        sigma_gradient=np.eye(4),
        cov_value=np.zeros((2, 2)),
        sigma2=0.0,
        hessian=np.eye(2),
        limit_covariance=np.diag([0.0, 0.5]),
        limit_law="gaussian_on_L",
        local_minimizer=False,
        notes="strict complementarity with 𝓛 = span{(0,1)}",
    )
    return _assemble(
        "ridge2d",
        Box([-2.0, -2.0], [2.0, 2.0]),
        FiniteList(("xi1", "xi2")),
        oracle,
        GaussianSampler.standard(4),
        truth,
        "two branches in ℝ²; Gaussian limit on a line",
    )


# ---------------------------------------------------------------------------
# Lookup
# ---------------------------------------------------------------------------

REGISTRY = {
    "paper_example": paper_example,
    "smooth_saddle": smooth_saddle,
    "vee_value": vee_value,
    "cone_qp": cone_qp,
    "ridge2d": ridge2d,
}


def builtin(name: str) -> ProblemSpec:
    """Return a built-in problem by name, e.g. "ridge2d" or "smooth_saddle(0.5)".

    Raises:
        UnknownProblemError: If the name is not registered.
    """
    match = _NAME_PATTERN.match(name or "")
    if match is None or match.group(1) not in REGISTRY:
        raise UnknownProblemError(
            f"Unknown problem '{name}'. Registry: {', '.join(sorted(REGISTRY))}"
        )
    key, arg = match.group(1), match.group(2)
    factory = REGISTRY[key]
    if arg:
        if key != "smooth_saddle":
            raise UnknownProblemError(f"Problem '{key}' takes no parameter")
        try:
            return factory(float(arg))
        except ValueError as e:
            raise UnknownProblemError(f"Bad parameter for {key}: {arg!r}") from e
    return factory()
