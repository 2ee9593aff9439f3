"""
Core configuration for the DTRformer forecasting engine.

Uses Pydantic settings for environment variable management and validation.
Experiment hyperparameters live in ``app.models.config.TrainConfig``; this
module only holds process-level knobs.
"""

import os
from typing import Union

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Process settings with environment variable support.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    SERVER_NAME: str = "DTRformer Traffic Forecasting Engine"
    DEBUG: Union[bool, str] = True

    @field_validator("DEBUG", mode="before")
    @classmethod
    def parse_debug(cls, v: Union[str, bool]) -> bool:
        """Parse DEBUG environment variable to boolean."""
        if isinstance(v, bool):
            return v
        if isinstance(v, str):
            return v.lower() in ('true', '1', 'yes', 'on')
        return False

    # Worker cap for evaluation replicas and the batch prefetcher
    DTR_THREADS: int = max(os.cpu_count() or 1, 1)

    @field_validator("DTR_THREADS", mode="after")
    @classmethod
    def clamp_threads(cls, v: int) -> int:
        """At least one worker is always available."""
        return max(int(v), 1)

    # Bounded queue depth for background batch prefetch (0 disables)
    DTR_PREFETCH: int = 2

    # Logging Configuration
    LOG_LEVEL: str = "INFO"


# Create global settings instance
settings = Settings()
