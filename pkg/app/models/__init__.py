"""Data models and schemas."""

from .camera import CameraModel
from .corridor import EdgeResult, PostprocessParams, WidthProfile
from .evaluation import (
    DetectionRateRow,
    DetectionVerdict,
    EvalReport,
    FalsePositiveRun,
)
from .fusion import FusionConfig, FusionReport, OutlierBlob
from .pipeline import (
    EvaluationParams,
    LatencyRecord,
    ManifestEntry,
    PipelineConfig,
    ProtocolConfig,
)
from .scene import (
    ObstaclePlacement,
    ResolvedPlacement,
    ScenarioSpec,
    SceneMeta,
    SceneRecord,
    Sprite,
)
from .segmentation import CorruptionConfig, CorruptionMode, OracleConfig

__all__ = [
    "CameraModel",
    "CorruptionConfig",
    "CorruptionMode",
    "DetectionRateRow",
    "DetectionVerdict",
    "EdgeResult",
    "EvalReport",
    "EvaluationParams",
    "FalsePositiveRun",
    "FusionConfig",
    "FusionReport",
    "LatencyRecord",
    "ManifestEntry",
    "ObstaclePlacement",
    "OracleConfig",
    "OutlierBlob",
    "PipelineConfig",
    "PostprocessParams",
    "ProtocolConfig",
    "ResolvedPlacement",
    "ScenarioSpec",
    "SceneMeta",
    "SceneRecord",
    "Sprite",
    "WidthProfile",
]
