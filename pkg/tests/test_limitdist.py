"""Tests for covariance estimation and the solution/value limit laws.

Run:
    pytest tests/test_limitdist.py -v
"""

import numpy as np
import pytest

from problems.objective import sample_dataset
from services.exceptions import AssumptionViolationError, CapabilityError, InvalidArgumentError
from services.limitdist import (
    QPMap,
    ValueCovariance,
    draw_solution_limit,
    gaussian_draws,
    gaussian_solution_limit,
    qp_eta,
    quadratic_model_direction,
    sample_solution_limit,
    sample_value_limit,
    sigma_solution,
    sigma_value,
    solution_limit_model,
    solve_quadratic_model,
    value_limit_model,
)
from services.reduction import (
    ActivePoint,
    ReductionData,
    build_reduction,
    index_sets_and_cones,
    lagrange_multipliers,
)


@pytest.fixture
def saddle_reduction(smooth_saddle):
    return build_reduction(smooth_saddle)


@pytest.fixture
def cone_reduction(cone_qp):
    return build_reduction(cone_qp)


@pytest.fixture
def ridge_reduction(ridge2d):
    return build_reduction(ridge2d)


@pytest.fixture
def vee_reduction(vee_value):
    return build_reduction(vee_value)


# =========================================================================
# Gaussian draws
# =========================================================================


class TestGaussianDraws:

    def test_covariance(self):
        cov = np.array([[2.0, 0.5], [0.5, 1.0]])
        draws = gaussian_draws(cov, 50000, 3)
        np.testing.assert_allclose(np.cov(draws, rowvar=False), cov, atol=0.05)

    def test_deterministic(self):
        a = gaussian_draws(np.eye(2), 100, 9)
        b = gaussian_draws(np.eye(2), 100, 9)
        assert a.tobytes() == b.tobytes()

    def test_indefinite_rejected(self):
        with pytest.raises(AssumptionViolationError):
            gaussian_draws(np.diag([1.0, -1.0]), 10, 0)

    def test_rank_deficient_direction_is_exactly_zero(self):
        draws = gaussian_draws(np.diag([0.0, 1.0]), 100, 2)
        assert np.all(draws[:, 0] == 0.0)


# =========================================================================
# sigma_solution / sigma_value
# =========================================================================


class TestSigmaSolution:

    def test_saddle_gradient_form(self, smooth_saddle, saddle_reduction):
        estimate = sigma_solution(smooth_saddle, saddle_reduction)
        np.testing.assert_allclose(estimate.matrix, [[1.0]], atol=1e-12)
        assert estimate.source == "analytic"

    def test_saddle_response_corrected(self, smooth_saddle, saddle_reduction):
        estimate = sigma_solution(smooth_saddle, saddle_reduction, response_correction=True)
        np.testing.assert_allclose(estimate.matrix, [[2.0]], atol=1e-12)
        assert estimate.response_correction

    @pytest.mark.parametrize("fixture", ["cone_qp", "ridge2d"])
    def test_analytic_matches_ground_truth(self, fixture, request):
        problem = request.getfixturevalue(fixture)
        estimate = sigma_solution(problem, build_reduction(problem))
        np.testing.assert_allclose(estimate.matrix, problem.ground_truth.sigma_gradient, atol=1e-12)

    def test_plugin_is_close(self, ridge2d, ridge_reduction):
        dataset = sample_dataset(ridge2d, 20000, 5)
        estimate = sigma_solution(ridge2d, ridge_reduction, source="plugin", dataset=dataset)
        np.testing.assert_allclose(estimate.matrix, np.eye(4), atol=0.05)
        assert estimate.N == 20000

    def test_plugin_needs_dataset(self, ridge2d, ridge_reduction):
        with pytest.raises(CapabilityError):
            sigma_solution(ridge2d, ridge_reduction, source="plugin")

    def test_unknown_source(self, ridge2d, ridge_reduction):
        with pytest.raises(InvalidArgumentError):
            sigma_solution(ridge2d, ridge_reduction, source="bootstrap")

    def test_plugin_needs_two_draws(self, ridge2d, ridge_reduction):
        dataset = sample_dataset(ridge2d, 1, 5)
        with pytest.raises(InvalidArgumentError):
            sigma_solution(ridge2d, ridge_reduction, source="plugin", dataset=dataset)


class TestSigmaValue:

    def test_vee(self, vee_value, vee_reduction):
        cov = sigma_value(vee_value, [vee_reduction])
        np.testing.assert_allclose(cov.covF, np.eye(2), atol=1e-12)
        assert cov.sigma2 == pytest.approx(0.5)
        assert cov.pairs == [(0, 0), (0, 1)]

    def test_deterministic_problem(self, paper_example):
        cov = sigma_value(paper_example, [build_reduction(paper_example)])
        np.testing.assert_allclose(cov.covF, np.zeros((2, 2)), atol=1e-12)
        assert cov.sigma2 == pytest.approx(0.0, abs=1e-12)

    def test_needs_a_minimizer(self, vee_value):
        with pytest.raises(InvalidArgumentError):
            sigma_value(vee_value, [])


# =========================================================================
# qp_eta
# =========================================================================


class TestQpEta:

    def test_cone_positive(self, cone_reduction):
        assert qp_eta(cone_reduction, [1.0, 0.0])[0] == pytest.approx(-1.0)

    def test_cone_negative(self, cone_reduction):
        assert qp_eta(cone_reduction, [-0.5, 0.0])[0] == 0.0

    def test_ridge(self, ridge_reduction):
        # ½(z₁ + z₂) = (0.1, 0.3)
        eta = qp_eta(ridge_reduction, [0.2, 0.6, 0.0, 0.0])
        np.testing.assert_allclose(eta, [0.0, -0.3], atol=1e-12)

    def test_cone_negative_part(self, cone_reduction, rng):
        z = rng.normal(size=(1000, 2))
        eta = QPMap(cone_reduction).solve(z)
        np.testing.assert_allclose(eta[:, 0], -np.maximum(z[:, 0], 0.0), atol=1e-12)

    def test_positive_homogeneity(self, ridge_reduction, rng):
        qp = QPMap(ridge_reduction)
        for z in rng.normal(size=(20, 4)):
            np.testing.assert_allclose(qp(3.0 * z), 3.0 * qp(z), atol=1e-10)

    def test_needs_unique_multipliers(self, ridge_reduction):
        ridge_reduction.index_sets = None
        with pytest.raises(CapabilityError):
            QPMap(ridge_reduction)


# =========================================================================
# gaussian_solution_limit / solution_limit_model
# =========================================================================


class TestGaussianSolutionLimit:

    def test_saddle_sandwich(self, saddle_reduction):
        np.testing.assert_allclose(gaussian_solution_limit(saddle_reduction, [[1.0]]), [[0.25]])

    def test_ridge(self, ridge_reduction):
        limit = gaussian_solution_limit(ridge_reduction, np.eye(4))
        np.testing.assert_allclose(limit, np.diag([0.0, 0.5]), atol=1e-12)

    def test_vee_is_zero(self, vee_reduction):
        np.testing.assert_allclose(gaussian_solution_limit(vee_reduction, np.eye(2)), [[0.0]])

    def test_cone_needs_strict_complementarity(self, cone_reduction):
        with pytest.raises(CapabilityError):
            gaussian_solution_limit(cone_reduction, np.eye(2))


class TestSolutionLimitModel:

    @pytest.mark.parametrize(
        "fixture, sigma, mode",
        [
            ("saddle_reduction", np.eye(1), "sandwich_k1"),
            ("vee_reduction", np.eye(2), "degenerate_zero"),
            ("cone_reduction", np.eye(2), "qp_sampler"),
            ("ridge_reduction", np.eye(4), "gaussian_strict_complementarity"),
        ],
    )
    def test_mode(self, fixture, sigma, mode, request):
        model = solution_limit_model(request.getfixturevalue(fixture), sigma)
        assert model.mode == mode
        assert (model.limit_covariance is None) == (mode == "qp_sampler")

    def test_shape_checked(self, ridge_reduction):
        with pytest.raises(InvalidArgumentError):
            solution_limit_model(ridge_reduction, np.eye(2))

    def test_provenance_from_estimate(self, ridge2d, ridge_reduction):
        model = solution_limit_model(ridge_reduction, sigma_solution(ridge2d, ridge_reduction))
        assert model.sigma_provenance["source"] == "analytic"
        assert "matrix" not in model.sigma_provenance
        assert model.to_dict()["mode"] == "gaussian_strict_complementarity"

    def test_cone_zero_mass(self, cone_reduction):
        draws = draw_solution_limit(solution_limit_model(cone_reduction, np.eye(2)), 100000, 7)
        assert np.mean(draws[:, 0] == 0.0) == pytest.approx(0.5, abs=0.01)
        assert np.all(draws[:, 0] <= 1e-12)

    def test_zero_sigma_gives_zero_draws(self, cone_reduction):
        draws = draw_solution_limit(solution_limit_model(cone_reduction, np.zeros((2, 2))), 1000, 7)
        assert np.all(draws == 0.0)

    def test_ridge_draws_stay_on_subspace(self, ridge_reduction):
        model = solution_limit_model(ridge_reduction, np.eye(4))
        for draws in (draw_solution_limit(model, 2000, 1), sample_solution_limit(model, 2000, 1)):
            assert np.abs(draws[:, 0]).max() <= 1e-12

    def test_closed_form_agrees_with_qp_sampling(self, ridge_reduction):
        model = solution_limit_model(ridge_reduction, np.eye(4))
        closed = np.cov(draw_solution_limit(model, 100000, 3), rowvar=False)
        sampled = np.cov(sample_solution_limit(model, 100000, 4), rowvar=False)
        np.testing.assert_allclose(closed, sampled, atol=0.01)


# =========================================================================
# Quadratic model
# =========================================================================


class TestQuadraticModel:

    def test_ridge_zero_perturbation(self, ridge_reduction):
        np.testing.assert_allclose(solve_quadratic_model(ridge_reduction, np.zeros(4), 1.0), [0.0, 0.0], atol=1e-8)

    def test_cone_small_perturbation(self, cone_reduction):
        delta = solve_quadratic_model(cone_reduction, [1e-3, 0.0], 1.0)
        assert delta[0] == pytest.approx(-1e-3, abs=1e-7)

    def test_vee_zero_perturbation(self, vee_reduction):
        assert solve_quadratic_model(vee_reduction, np.zeros(2), 1.0)[0] == pytest.approx(0.0, abs=1e-8)

    def test_radius_must_be_positive(self, vee_reduction):
        with pytest.raises(InvalidArgumentError):
            solve_quadratic_model(vee_reduction, np.zeros(2), 0.0)

    @pytest.mark.parametrize("fixture, size", [("ridge_reduction", 4), ("cone_reduction", 2)])
    def test_direction_matches_qp(self, fixture, size, request, rng):
        reduction = request.getfixturevalue(fixture)
        for z in rng.normal(size=(5, size)):
            direction = quadratic_model_direction(reduction, z, 1e-3, 1.0)
            np.testing.assert_allclose(direction, qp_eta(reduction, z), atol=1e-4)


# =========================================================================
# Value limit
# =========================================================================


class TestValueLimit:

    def test_vee_variance(self, vee_value, vee_reduction):
        model = value_limit_model([vee_reduction], sigma_value(vee_value, [vee_reduction]))
        assert model.mode == "gaussian_scalar"
        assert model.sigma2 == pytest.approx(0.5)
        draws = sample_value_limit(model, 100000, 5)
        assert 0.48 <= draws.var() <= 0.52

    def test_zero_covariance(self, vee_reduction):
        cov = ValueCovariance(np.zeros((2, 2)), [(0, 0), (0, 1)], "given")
        draws = sample_value_limit(value_limit_model([vee_reduction], cov), 1000, 5)
        assert np.all(draws == 0.0)

    def test_repeated_minimizer(self, vee_value, vee_reduction):
        reductions = [vee_reduction, vee_reduction]
        model = value_limit_model(reductions, sigma_value(vee_value, reductions))
        assert model.mode == "min_sup_mixture"
        assert model.sigma2 is None
        draws = sample_value_limit(model, 100000, 5)
        assert 0.48 <= draws.var() <= 0.52

    def test_empty_minimizer_list(self, vee_value, vee_reduction):
        with pytest.raises(CapabilityError):
            value_limit_model([], sigma_value(vee_value, [vee_reduction]))


# =========================================================================
# QP oracle equivalence on random reductions
# =========================================================================


def _random_reduction(rng, kind: str) -> ReductionData:
    """Small random reduction with SPD piece Hessians and a unique λ*.

    n = 2: one piece, two balanced pieces or a zero-multiplier piece.
    n = 3, k = 3: three pieces with positive multipliers ("triangle") or two
    balanced pieces plus a zero-multiplier piece ("mixed").
    """
    n = 3 if kind in ("triangle", "mixed") else 2
    v = rng.normal(size=n)
    if kind == "single":
        grads = [np.zeros(n)]
    elif kind == "balanced":
        grads = [v, -rng.uniform(0.5, 2.0) * v]
    elif kind == "zero_multiplier":
        grads = [np.zeros(n), v]
    elif kind == "triangle":
        u = rng.normal(size=n)
        w = rng.uniform(0.3, 1.0, size=3)
        grads = [v, u, -(w[0] * v + w[1] * u) / w[2]]
    else:
        grads = [v, -rng.uniform(0.5, 2.0) * v, rng.normal(size=n)]
    k = len(grads)
    hessians = []
    for _ in range(k):
        root = rng.normal(size=(n, n))
        hessians.append(root @ root.T + 0.5 * np.eye(n))
    grad_phi = np.column_stack(grads)
    hess_phi = np.stack(hessians)
    multipliers = lagrange_multipliers(grad_phi)
    lam = multipliers.lambda_star
    H = np.einsum("i,ijk->jk", lam, hess_phi)
    return ReductionData(
        problem_id=f"random_{kind}",
        gamma_star=np.zeros(n),
        theta_star=0.0,
        active_points=[ActivePoint(i, "isolated", 0.0) for i in range(k)],
        grad_phi=grad_phi,
        hess_phi=hess_phi,
        multipliers=multipliers,
        vertices=[lam],
        index_sets=index_sets_and_cones(grad_phi, lam),
        H=0.5 * (H + H.T),
        neighborhood_radius=None,
    )


class TestOracleEquivalence:

    @pytest.mark.parametrize("count", [15, pytest.param(200, marks=pytest.mark.slow)])
    def test_qp_matches_quadratic_model(self, count):
        rng = np.random.default_rng(count)
        kinds = ("single", "balanced", "zero_multiplier", "triangle", "mixed")
        for i in range(count):
            reduction = _random_reduction(rng, kinds[i % len(kinds)])
            z = rng.normal(size=reduction.n * reduction.k)
            expected = qp_eta(reduction, z)
            direction = quadratic_model_direction(reduction, z, 1e-3, 1.0)
            scale = max(1.0, float(np.linalg.norm(expected)))
            assert np.linalg.norm(direction - expected) <= 1e-6 * scale, reduction.problem_id

    def test_homogeneity_on_random_reductions(self):
        rng = np.random.default_rng(11)
        for kind in ("single", "balanced", "zero_multiplier", "triangle", "mixed"):
            qp = QPMap(_random_reduction(rng, kind))
            z = rng.normal(size=(50, qp.n * qp.k))
            np.testing.assert_allclose(qp.solve(2.5 * z), 2.5 * qp.solve(z), atol=1e-9)

    def test_single_piece_direction_is_exact(self):
        reduction = _random_reduction(np.random.default_rng(3), "single")
        z = np.array([0.4, -1.2])
        expected = -np.linalg.solve(reduction.H, z)
        direction = quadratic_model_direction(reduction, z, 1e-3, 1.0)
        np.testing.assert_allclose(direction, expected, atol=1e-7)

    def test_rejects_nonpositive_scale(self):
        reduction = _random_reduction(np.random.default_rng(3), "single")
        with pytest.raises(InvalidArgumentError):
            quadratic_model_direction(reduction, np.ones(2), 0.0, 1.0)
