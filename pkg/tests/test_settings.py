"""Tests for numerical defaults and their environment overrides.

Run:
    pytest tests/test_settings.py -v
"""

from config.settings import Settings, get_settings
from services.reduction import ReductionConfig
from services.solver import SolverConfig


class TestSettings:

    def test_defaults(self):
        settings = Settings(_env_file=None)
        assert settings.inner_points_per_axis == 5
        assert settings.inner_start_cap == 243
        assert settings.outer_points_per_axis == 9
        assert settings.outer_start_cap == 729
        assert settings.kkt_tol == 1e-9
        assert settings.boundary_tol == 1e-7
        assert settings.multiplier_tol == 1e-8
        assert settings.ks_max == 0.06
        assert settings.t_grid == (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)

    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv("MINIMAX_KS_MAX", "0.08")
        monkeypatch.setenv("MINIMAX_SUBGRADIENT_STEPS", "123")
        settings = Settings(_env_file=None)
        assert settings.ks_max == 0.08
        assert settings.subgradient_steps == 123

    def test_get_settings_is_cached(self):
        assert get_settings() is get_settings()


class TestConfigObjects:

    def test_solver_config_from_settings(self):
        settings = Settings(_env_file=None, kkt_tol=1e-11, refine_starts=5)
        config = SolverConfig.from_settings(settings)
        assert config.kkt_tol == 1e-11
        assert config.refine_starts == 5

    def test_reduction_config_from_settings(self):
        settings = Settings(_env_file=None, cone_rays=17)
        assert ReductionConfig.from_settings(settings).cone_rays == 17

    def test_activity_tolerance_is_relative(self):
        config = SolverConfig.from_settings(Settings(_env_file=None))
        assert config.activity_tol(0.0) == config.activity_rel_tol
        assert config.activity_tol(-9.0) == 10 * config.activity_rel_tol
