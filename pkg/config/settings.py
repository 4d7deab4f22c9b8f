"""Numerical defaults loaded from environment variables.

Every tolerance, grid size and sampling default used by the services lives
here. Values can be overridden with ``MINIMAX_<FIELD>`` variables or a ``.env``
file; a run config passed to the CLI overrides them again per run.
"""

from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """All configuration for minimax-infer."""

    # Inner maximization over a box
    inner_points_per_axis: int = Field(default=5, description="Grid starts per ξ axis")
    inner_start_cap: int = Field(default=243, description="Maximum number of grid starts")
    inner_grad_tol: float = Field(default=1e-10, description="Projected-gradient stop")
    inner_max_iter: int = Field(default=200, description="Newton iterations per start")
    merge_radius: float = Field(default=1e-6, description="Cluster radius for maximizers")

    # Outer minimization
    outer_points_per_axis: int = Field(default=9, description="Grid starts per γ axis")
    outer_start_cap: int = Field(default=729, description="Maximum number of grid starts")
    subgradient_steps: int = Field(default=500, description="Phase-1 subgradient steps")
    refine_starts: int = Field(default=3, description="Best grid points refined in phase 1")
    rediscover_every: int = Field(
        default=50, description="Phase-1 steps between full inner multistarts on a box Ξ"
    )
    activity_rel_tol: float = Field(default=1e-5, description="τ_act relative to 1+|φ|")
    kkt_tol: float = Field(default=1e-9, description="Epigraph KKT residual target")
    newton_max_iter: int = Field(default=60, description="Phase-2 Newton iterations")
    boundary_tol: float = Field(default=1e-7, description="Distance counted as on ∂Γ / ∂Ξ")

    # Reduction
    multiplier_tol: float = Field(default=1e-8, description="τ_λ for I₊ / I₀")
    rank_tol: float = Field(default=1e-8, description="Singular-value rank threshold")
    cone_rays: int = Field(default=1000, description="Sampled rays for the cone certificate")
    certificate_seed: int = Field(default=20240601, description="Seed for sampled rays")

    # Finite differences
    fd_rel_step: float = Field(default=1e-4, description="Central-difference relative step")
    gradcheck_tol: float = Field(default=1e-5, description="Pass threshold of check_gradients")

    # Population fallback when no analytic oracle exists
    population_fallback_n: int = Field(default=100_000, description="Monte Carlo N_pop")
    population_fallback_seed: int = Field(default=12345, description="Seed of the N_pop sample")

    # Value directional derivative
    t_grid: tuple[float, ...] = Field(
        default=(1e-1, 3e-2, 1e-2, 3e-3, 1e-3), description="Perturbation sizes"
    )

    # Monte Carlo comparison
    ks_max: float = Field(default=0.06, description="KS pass threshold")
    zero_tol: float = Field(default=1e-9, description="|v| counted as an exact zero")
    zero_mass_tol: float = Field(default=0.05, description="Allowed zero-mass difference")
    degenerate_rms_max: float = Field(default=0.1, description="RMS bound vs a point mass at 0")
    max_failure_fraction: float = Field(default=0.05, description="Abort above this share")
    threads: int = Field(default=1, description="Worker threads for replications")

    model_config = SettingsConfigDict(
        env_prefix="MINIMAX_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Load and return settings (cached for the process)."""
    return Settings()
