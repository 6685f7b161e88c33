"""
Oracle segmenter configuration models.
"""

from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

CorruptionKind = Literal["clean", "wrap", "miss_near", "holes", "edge_jitter", "far_noise"]


class CorruptionMode(BaseModel):
    """One corruption step; unused parameters stay ``None``."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: CorruptionKind = "clean"
    d_threshold: Optional[float] = Field(None, ge=0.0, description="miss_near (m)")
    p: Optional[float] = Field(None, ge=0.0, le=1.0, description="holes probability")
    sigma: Optional[float] = Field(None, ge=0.0, description="edge_jitter (px)")
    density: Optional[float] = Field(None, ge=0.0, le=1.0, description="far_noise")
    min_distance: Optional[float] = Field(None, gt=0.0, description="far_noise (m)")

    @model_validator(mode="after")
    def check_parameters(self) -> "CorruptionMode":
        required = {
            "miss_near": "d_threshold",
            "holes": "p",
            "edge_jitter": "sigma",
            "far_noise": "density",
        }
        field = required.get(self.kind)
        if field is not None and getattr(self, field) is None:
            raise ValueError(f"{self.kind} requires {field}")
        return self

    @classmethod
    def parse(cls, text: str) -> "CorruptionMode":
        """
        Parse the CLI form: ``clean``, ``wrap``, ``miss_near:60``, ``holes:0.005``,
        ``edge_jitter:1.5``, ``far_noise:0.0005`` or ``far_noise:0.0005:150``.
        """
        kind, _, rest = text.strip().partition(":")
        args = [a for a in rest.split(":") if a] if rest else []
        if kind in ("clean", "wrap"):
            if args:
                raise ValueError(f"{kind} takes no parameters")
            return cls(kind=kind)
        if not args:
            raise ValueError(f"{kind} requires a parameter")
        if kind == "miss_near":
            return cls(kind=kind, d_threshold=float(args[0]))
        if kind == "holes":
            return cls(kind=kind, p=float(args[0]))
        if kind == "edge_jitter":
            return cls(kind=kind, sigma=float(args[0]))
        if kind == "far_noise":
            min_distance = float(args[1]) if len(args) > 1 else 150.0
            return cls(kind=kind, density=float(args[0]), min_distance=min_distance)
        raise ValueError(f"Unknown corruption mode: {kind}")

    def label(self) -> str:
        """Inverse of ``parse``."""
        if self.kind == "miss_near":
            return f"miss_near:{self.d_threshold:g}"
        if self.kind == "holes":
            return f"holes:{self.p:g}"
        if self.kind == "edge_jitter":
            return f"edge_jitter:{self.sigma:g}"
        if self.kind == "far_noise":
            return f"far_noise:{self.density:g}:{self.min_distance or 150.0:g}"
        return self.kind


class CorruptionConfig(BaseModel):
    """Ordered list of corruption modes applied to the ground truth."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    modes: List[CorruptionMode] = Field(default_factory=lambda: [CorruptionMode()])
    rng_seed: int = Field(0, ge=0)
    # Ribbon width beside a wrapped obstacle, as a fraction of the local lane width
    wrap_ribbon: float = Field(0.1, gt=0.0, lt=0.5)
    # far_noise patch side length in pixels
    noise_patch_px: int = Field(4, ge=1)

    @field_validator("modes", mode="before")
    @classmethod
    def parse_modes(cls, v: object) -> object:
        """Accept ``"wrap,holes:0.01"`` strings as well as lists."""
        if isinstance(v, str):
            return [CorruptionMode.parse(part) for part in v.split(",") if part.strip()]
        if isinstance(v, list):
            return [CorruptionMode.parse(m) if isinstance(m, str) else m for m in v]
        return v

    def label(self) -> str:
        return "+".join(m.label() for m in self.modes) or "clean"


class OracleConfig(BaseModel):
    """Logit construction of the oracle segmenter."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    num_classes: int = Field(19, ge=2, description="K")
    inlier_margin: float = Field(10.0, gt=0.0, description="True-class logit")
    outlier_logsumexp: float = Field(0.0, description="log-sum-exp at obstacle pixels")
    energy_gap: float = Field(4.0, gt=0.0, description="Required gap to scene median")
    road_class: int = Field(0, ge=0)
    sky_class: int = Field(10, ge=0)

    @model_validator(mode="after")
    def check_gap(self) -> "OracleConfig":
        # Inlier log-sum-exp is at least the margin; obstacle pixels must sit
        # energy_gap below it.
        if self.inlier_margin - self.outlier_logsumexp < self.energy_gap:
            raise ValueError("inlier_margin - outlier_logsumexp must be >= energy_gap")
        if self.road_class >= self.num_classes:
            raise ValueError("road_class must be < num_classes")
        return self

    @property
    def sky_channel(self) -> int:
        return min(self.sky_class, self.num_classes - 1)
