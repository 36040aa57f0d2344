from pydantic_settings import BaseSettings
from typing import List


class Settings(BaseSettings):
    # App
    APP_NAME: str = "MEC Offloading Simulator"
    VERSION: str = "1.0.0"
    ENVIRONMENT: str = "development"
    DEBUG: bool = True

    # Experiment outputs
    OUTPUT_DIR: str = "./runs"
    CHECKPOINT_DIR: str = "./runs/checkpoints"
    DEFAULT_SEED: int = 0

    # HTTP surface
    CORS_ORIGINS: List[str] = [
        "http://localhost:3000",
        "http://localhost:8000",
    ]
    API_MAX_SLOTS: int = 500  # evaluation requests are capped at this many slots

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FILE: str = ""

    class Config:
        env_file = ".env"
        case_sensitive = True


settings = Settings()
