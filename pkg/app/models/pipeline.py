"""
Pipeline-level models: configuration sections, manifest entries, latency records.
"""

from pathlib import Path
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator

from app.models.camera import CameraModel
from app.models.corridor import PostprocessParams
from app.models.fusion import FusionConfig
from app.models.segmentation import OracleConfig


def _split_csv(v: object) -> object:
    """Parse comma-separated values from a config string."""
    if isinstance(v, str):
        return [item.strip() for item in v.split(",") if item.strip()]
    return v


class ProtocolConfig(BaseModel):
    """Synthetic test-track protocol."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    distance_bins: List[float] = Field(default_factory=lambda: [25.0, 50.0, 100.0, 200.0, 300.0])
    sprites_per_bin: int = Field(28, ge=0)
    variants_per_sprite: int = Field(3, ge=0)
    clean_runs: int = Field(12, ge=0)
    frames_per_run: int = Field(200, ge=0)
    master_seed: int = Field(0, ge=0)
    lane_width: float = Field(3.5, gt=0.0)
    max_corridor_range: float = Field(500.0, gt=0.0)
    size_jitter: float = Field(0.2, ge=0.0, lt=1.0)
    rotation_range: float = Field(15.0, ge=0.0, le=90.0, description="degrees")
    feather_radius: int = Field(2, ge=0)
    sprite_dir: Optional[Path] = None

    @field_validator("distance_bins", mode="before")
    @classmethod
    def assemble_bins(cls, v: object) -> object:
        return _split_csv(v)

    @field_validator("distance_bins")
    @classmethod
    def check_bins(cls, v: List[float]) -> List[float]:
        if any(d <= 0 for d in v):
            raise ValueError("distance bins must be positive")
        return v

    @classmethod
    def preset(cls, name: str, **overrides: object) -> "ProtocolConfig":
        """``full`` is the reference protocol; ``smoke`` a tiny one for checks."""
        if name == "full":
            return cls(**overrides)  # type: ignore[arg-type]
        if name == "smoke":
            values: Dict[str, object] = {
                "sprites_per_bin": 4,
                "variants_per_sprite": 1,
                "clean_runs": 2,
                "frames_per_run": 5,
            }
            values.update(overrides)
            return cls(**values)  # type: ignore[arg-type]
        raise ValueError(f"Unknown protocol preset: {name}")


class EvaluationParams(BaseModel):
    """Verdict tolerance and false-positive range."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    tolerance: float = Field(0.10, gt=0.0, lt=1.0, description="relative")
    fp_min_range: float = Field(150.0, gt=0.0, description="meters")
    lane_coverage: float = Field(0.5, gt=0.0, le=1.0)


class PipelineConfig(BaseModel):
    """Everything a pipeline run needs, loaded from the config file."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    camera: CameraModel = Field(default_factory=CameraModel)
    postprocess: PostprocessParams = Field(default_factory=PostprocessParams)
    fusion: FusionConfig = Field(default_factory=FusionConfig)
    evaluation: EvaluationParams = Field(default_factory=EvaluationParams)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    protocol: ProtocolConfig = Field(default_factory=ProtocolConfig)
    jobs: int = Field(1, ge=1)
    enable_postprocess: bool = True
    enable_fusion: bool = False


class ManifestEntry(BaseModel):
    """One dataset record; ``path`` is relative to the dataset root."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    scene_id: str
    kind: Literal["obstacle", "clean"]
    path: str
    seed: int
    bin_m: Optional[float] = None
    sprite_id: Optional[str] = None
    variant: Optional[int] = None
    run_id: Optional[str] = None
    frame: Optional[int] = None


class LatencyRecord(BaseModel):
    """Per-frame wall time per stage."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    frame_id: str
    stages_ms: Dict[str, float]

    @field_validator("stages_ms")
    @classmethod
    def check_non_negative(cls, v: Dict[str, float]) -> Dict[str, float]:
        if any(ms < 0 for ms in v.values()):
            raise ValueError("stage latencies must be non-negative")
        return v

    @computed_field  # type: ignore[misc]
    @property
    def total_ms(self) -> float:
        return float(sum(self.stages_ms.values()))
