from pydantic_settings import BaseSettings
from functools import lru_cache


class Settings(BaseSettings):
    # Parallelism (0 = serial)
    threads: int = 0
    torch_threads: int = 1

    # Logging
    log_level: str = "INFO"

    # Output
    output_dir: str = "./runs"

    # Default seed when neither config nor --seed gives one
    default_seed: int = 42

    class Config:
        env_prefix = "RXP_"
        env_file = ".env"
        env_file_encoding = "utf-8"


@lru_cache()
def get_settings() -> Settings:
    return Settings()
