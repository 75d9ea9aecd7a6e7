"""
Application configuration loaded from environment variables.

Uses Pydantic Settings for type-safe configuration management. Everything
here is process-wide tuning (logging, thread pool, chunk sizes); the model and
the run itself are described by the JSON run document (see src.models.run).
"""

from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from the environment or a .env file."""

    # Application
    APP_NAME: str = "HOMP Toolkit"
    VERSION: str = "0.1.0"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # Monte-Carlo execution
    MAX_WORKERS: int = 4
    PATH_CHUNK_SIZE: int = 512

    # Output
    DEFAULT_OUT_DIR: str = "out"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="HOMP_",
        case_sensitive=True,
    )


@lru_cache
def get_settings() -> Settings:
    """
    Get cached application settings.

    Returns:
        Settings: Application configuration instance.
    """
    return Settings()
