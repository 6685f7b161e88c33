"""
Application configuration management.

Two layers: process-level ``Settings`` read from the environment (prefix
``CORRIDOR_``) and the ``PipelineConfig`` file, a ``key = value`` file whose dotted
keys address nested sections.
"""

from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import dotenv_values
from pydantic import ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.exceptions import ConfigParseError, IoFailureError
from app.models.pipeline import PipelineConfig


class Settings(BaseSettings):
    """Process settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="CORRIDOR_", env_file=".env", case_sensitive=False, extra="ignore"
    )

    app_name: str = "corridor-obstacle-detection"
    app_version: str = "1.0.0"
    debug: bool = False
    log_level: str = "INFO"

    # File logging is off by default; the CLI is often run inside dataset dirs
    log_to_file: bool = False
    log_dir: Path = Path("logs")

    # Default pipeline config file (CORRIDOR_CONFIG_PATH)
    config_path: Optional[Path] = None

    # Worker count when --jobs is not given
    jobs: int = 1

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"Log level must be one of {valid_levels}")
        return v.upper()

    @field_validator("jobs")
    @classmethod
    def validate_jobs(cls, v: int) -> int:
        if v < 1:
            raise ValueError("jobs must be >= 1")
        return v


# Global settings instance
settings = Settings()


def nest_keys(flat: Dict[str, Optional[str]]) -> Dict[str, Any]:
    """Turn ``{"camera.focal_length": "2000"}`` into ``{"camera": {...}}``."""
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        if value is None:
            raise ConfigParseError(f"Key without value: {key}", {"key": key})
        parts = key.strip().split(".")
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigParseError(
                    f"Key {key} conflicts with scalar {part}", {"key": key}
                )
            node = child
        if isinstance(node.get(parts[-1]), dict):
            raise ConfigParseError(f"Key {key} conflicts with a section", {"key": key})
        node[parts[-1]] = value.strip()
    return nested


def parse_pipeline_config(data: Dict[str, Any]) -> PipelineConfig:
    """Validate a nested mapping into a ``PipelineConfig``."""
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigParseError(
            "Invalid pipeline configuration",
            {"errors": [f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors()]},
        ) from e


def load_pipeline_config(path: Optional[Union[str, Path]] = None) -> PipelineConfig:
    """
    Load the pipeline configuration.

    Resolution order: explicit ``path``, then ``settings.config_path``; without
    either the defaults are returned.
    """
    config_path = Path(path) if path is not None else settings.config_path
    if config_path is None:
        return PipelineConfig()

    if not config_path.is_file():
        raise IoFailureError(
            f"Config file not found: {config_path}", {"path": str(config_path)}
        )

    try:
        flat = dotenv_values(config_path, interpolate=False)
    except (OSError, UnicodeDecodeError) as e:
        raise IoFailureError(f"Cannot read config file: {e}", {"path": str(config_path)}) from e

    return parse_pipeline_config(nest_keys(dict(flat)))


def flatten_keys(data: Dict[str, Any], prefix: str = "") -> Dict[str, str]:
    """Inverse of ``nest_keys``; lists become comma-separated, ``None`` is dropped."""
    flat: Dict[str, str] = {}
    for key, value in data.items():
        name = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            flat.update(flatten_keys(value, name))
        elif isinstance(value, (list, tuple)):
            flat[name] = ",".join(str(v) for v in value)
        elif value is not None:
            flat[name] = str(value).lower() if isinstance(value, bool) else str(value)
    return flat


def dump_pipeline_config(config: PipelineConfig) -> str:
    """Render a config back into the ``key = value`` format (one key per line)."""
    flat = flatten_keys(config.model_dump(mode="json"))
    return "".join(f"{key} = {value}\n" for key, value in flat.items())
