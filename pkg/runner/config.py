from __future__ import annotations

from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Runner configuration.

    You can override any setting via environment variables using UQBENCH_ prefix.
    Example: UQBENCH_WEIGHTS_DIR=/mnt/weights
    """

    model_config = SettingsConfigDict(env_prefix="UQBENCH_", env_file=".env", extra="ignore")

    # Storage
    project_root: Path = Path(__file__).resolve().parents[1]
    data_dir: Path = project_root / "data"
    results_dir: Path = project_root / "results"
    cache_dir: Path = project_root / ".cache" / "probs"

    # Pretrained weights (torch hub layout below this directory)
    weights_dir: Path = project_root / "weights"

    label_catalog: Path = data_dir / "imagenet_classes.tsv"

    # Inference
    device: str = "cpu"
    workers: int = 1
    default_seed: int = 0

    log_level: str = "INFO"


settings = Settings()
