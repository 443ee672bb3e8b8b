"""
Runtime Settings

Process-wide defaults read from the environment (prefix KNMF_).
Command-line flags override these per invocation.
"""

from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Environment-backed defaults for solver runs and logging."""

    model_config = SettingsConfigDict(env_prefix="KNMF_", extra="ignore")

    log_level: str = Field("INFO", description="Root log level")
    log_json: bool = Field(True, description="Render logs as JSON lines")
    threads: int = Field(1, ge=1, description="Worker threads; 1 is the bit-exact reference")
    iterations: int = Field(200, ge=1, description="Default solver iterations")
    epsilon_guard: float = Field(1e-12, gt=0, description="Multiplicative denominator guard")
    probe_budget: int = Field(10_000, ge=1, description="Default nonconvexity probe samples")


@lru_cache
def get_settings() -> Settings:
    """Get the cached settings instance."""
    return Settings()
