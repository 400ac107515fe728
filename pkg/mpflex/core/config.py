# mpflex/core/config.py
from pydantic_settings import BaseSettings, SettingsConfigDict

class Settings(BaseSettings):
    # Simplex
    LP_FEASIBILITY_TOL: float = 1e-9
    LP_OPTIMALITY_TOL: float = 1e-9
    LP_MAX_ITERATIONS: int = 20000
    # Consecutive degenerate pivots tolerated before switching to Bland's rule.
    LP_DEGENERATE_SWITCH: int = 1

    # Active-set QP
    QP_TOL: float = 1e-10
    QP_MAX_ITERATIONS: int = 5000

    # Polyhedra
    POLYTOPE_TOL: float = 1e-7
    REDUNDANCY_TOL: float = 1e-9
    REGION_RADIUS_TOL: float = 1e-9

    # Parametric analysis
    PIECE_TOL: float = 1e-7
    ACTIVE_DUAL_TOL: float = 1e-9
    DEFAULT_SEGMENTS: int = 6
    DEFAULT_EPSILON: float = 1e-4
    AVG_MAX_ITERATIONS: int = 50

    # Market
    DEFAULT_TAU: float = 1.0
    BEST_RESPONSE_TOL: float = 1e-4
    BEST_RESPONSE_MAX_ITER: int = 200

    WORKERS: int = 4

    model_config = SettingsConfigDict(env_file=".env", env_prefix="MPFLEX_", extra="ignore")

settings = Settings()
