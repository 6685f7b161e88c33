"""
Evaluation models: verdicts, detection-rate rows and false-positive runs.
"""

from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

FailureMode = Literal["none", "over_segmentation", "under_segmentation", "no_edge"]


class DetectionVerdict(BaseModel):
    """Correctness judgment of one obstacle scene."""

    model_config = ConfigDict(frozen=True)

    scene_id: str
    method: str = "corridor"
    distance_bin: float
    correct: bool
    estimated_edge_distance: Optional[float] = None
    error: Optional[float] = Field(None, description="estimate - truth (m)")
    failure_mode: FailureMode = "none"

    @model_validator(mode="after")
    def check_trichotomy(self) -> "DetectionVerdict":
        if self.correct != (self.failure_mode == "none"):
            raise ValueError("correct iff failure_mode == 'none'")
        return self


class DetectionRateRow(BaseModel):
    """One (method, distance bin) cell of the report."""

    model_config = ConfigDict(frozen=True)

    method: str
    bin_m: float
    correct: int = Field(..., ge=0)
    total: int = Field(..., ge=1)

    @model_validator(mode="after")
    def check_counts(self) -> "DetectionRateRow":
        if self.correct > self.total:
            raise ValueError("correct > total")
        return self

    @property
    def pct_tenths(self) -> int:
        """
        Percentage in tenths: rounded half-up to hundredths, then truncated.

        Integer arithmetic only, so 11/84 gives 131 (13.1 %) and 76/84 gives 904.
        """
        hundredths = (20000 * self.correct + self.total) // (2 * self.total)
        return hundredths // 10

    @property
    def pct_truncated(self) -> str:
        tenths = self.pct_tenths
        return f"{tenths // 10}.{tenths % 10}"

    @property
    def cell(self) -> str:
        """Table cell text, e.g. ``80 (95.2 %)``."""
        return f"{self.correct} ({self.pct_truncated} %)"


class FalsePositiveRun(BaseModel):
    """False cuts in one obstacle-free sequence."""

    model_config = ConfigDict(frozen=True)

    run_id: str
    method: str = "corridor"
    frames: int = Field(..., ge=0)
    fp_count: int = Field(..., ge=0)
    fp_frames: List[int] = Field(default_factory=list)


class EvalReport(BaseModel):
    """Aggregated detection rates plus the false-positive section."""

    model_config = ConfigDict(frozen=True)

    rows: List[DetectionRateRow] = Field(default_factory=list)
    false_positives: List[FalsePositiveRun] = Field(default_factory=list)

    @property
    def methods(self) -> List[str]:
        seen: List[str] = []
        for row in self.rows:
            if row.method not in seen:
                seen.append(row.method)
        return seen

    @property
    def bins(self) -> List[float]:
        return sorted({row.bin_m for row in self.rows})
