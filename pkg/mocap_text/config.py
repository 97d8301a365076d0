from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_prefix="MOCAP_TEXT_")

    log_level: str = "INFO"
    log_file: Optional[str] = None
    seed: int = 0
    max_decode_length: int = 30
    beam_length_penalty: float = 0.7
    transparency_factor: float = 100.0
    theta_steps: int = 21
    show_progress: bool = False


settings = Settings()
